#include "fetalsyn/gan/layers.hpp"

#include <algorithm>
#include <cmath>

#include "fetalsyn/volume.hpp"

namespace fetalsyn::gan {

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

void fill_normal(Tensor& t, std::mt19937_64& rng, double std) {
  std::normal_distribution<double> normal(0.0, std);
  for (auto& v : t.values) v = normal(rng);
}

void require_image(const Tensor& t, const char* what) {
  if (t.shape.size() != 3) throw ArgumentError(std::string(what) + ": expected a (C, H, W) tensor");
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& name, int in, int out, int s)
    : weight(name + ".weight", {out, in, 3, 3}), bias(name + ".bias", {out}), stride(s) {
  if (s != 1 && s != 2) throw ArgumentError("conv stride must be 1 or 2");
}

void Conv2d::init(std::mt19937_64& rng, double gain) {
  fill_normal(weight.value, rng, gain / std::sqrt(9.0 * in_channels()));
  bias.value.zero();
}

int conv_out_extent(int in, int stride) { return (in - 1) / stride + 1; }

Tensor conv2d_forward(const Conv2d& conv, const Tensor& x) {
  require_image(x, "conv2d");
  const int cin = conv.in_channels(), cout = conv.out_channels(), s = conv.stride;
  if (x.channels() != cin) {
    throw ArgumentError(conv.weight.name + ": input has " + std::to_string(x.channels()) +
                        " channels, expected " + std::to_string(cin));
  }
  const int h = x.height(), w = x.width();
  const int oh = conv_out_extent(h, s), ow = conv_out_extent(w, s);
  Tensor y = Tensor::image(cout, oh, ow);
  const double* wt = conv.weight.value.values.data();
  for (int o = 0; o < cout; ++o) {
    double* yo = y.channel(o);
    std::fill(yo, yo + y.plane(), conv.bias.value.values[static_cast<std::size_t>(o)]);
    for (int c = 0; c < cin; ++c) {
      const double* xc = x.channel(c);
      for (int ki = 0; ki < 3; ++ki) {
        for (int kj = 0; kj < 3; ++kj) {
          const double wv = wt[((static_cast<std::size_t>(o) * cin + c) * 3 + ki) * 3 + kj];
          for (int i = 0; i < oh; ++i) {
            const int yi = i * s + ki - 1;
            if (yi < 0 || yi >= h) continue;
            const double* xrow = xc + static_cast<std::size_t>(yi) * w;
            double* yrow = yo + static_cast<std::size_t>(i) * ow;
            for (int j = 0; j < ow; ++j) {
              const int xj = j * s + kj - 1;
              if (xj < 0 || xj >= w) continue;
              yrow[j] += wv * xrow[xj];
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor conv2d_backward(Conv2d& conv, const Tensor& x, const Tensor& dy) {
  const int cin = conv.in_channels(), cout = conv.out_channels(), s = conv.stride;
  const int h = x.height(), w = x.width();
  const int oh = dy.height(), ow = dy.width();
  Tensor dx = Tensor::image(cin, h, w);
  const double* wt = conv.weight.value.values.data();
  double* dwt = conv.weight.grad.values.data();
  for (int o = 0; o < cout; ++o) {
    const double* dyo = dy.channel(o);
    double bsum = 0.0;
    for (std::size_t k = 0; k < dy.plane(); ++k) bsum += dyo[k];
    conv.bias.grad.values[static_cast<std::size_t>(o)] += bsum;
    for (int c = 0; c < cin; ++c) {
      const double* xc = x.channel(c);
      double* dxc = dx.channel(c);
      for (int ki = 0; ki < 3; ++ki) {
        for (int kj = 0; kj < 3; ++kj) {
          const std::size_t widx = ((static_cast<std::size_t>(o) * cin + c) * 3 + ki) * 3 + kj;
          const double wv = wt[widx];
          double gsum = 0.0;
          for (int i = 0; i < oh; ++i) {
            const int yi = i * s + ki - 1;
            if (yi < 0 || yi >= h) continue;
            const double* xrow = xc + static_cast<std::size_t>(yi) * w;
            double* dxrow = dxc + static_cast<std::size_t>(yi) * w;
            const double* dyrow = dyo + static_cast<std::size_t>(i) * ow;
            for (int j = 0; j < ow; ++j) {
              const int xj = j * s + kj - 1;
              if (xj < 0 || xj >= w) continue;
              gsum += dyrow[j] * xrow[xj];
              dxrow[xj] += wv * dyrow[j];
            }
          }
          dwt[widx] += gsum;
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(const std::string& name, int in, int out)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {}

void Linear::init(std::mt19937_64& rng, double gain) {
  fill_normal(weight.value, rng, gain / std::sqrt(static_cast<double>(weight.value.shape[1])));
  bias.value.zero();
}

Tensor linear_forward(const Linear& lin, const Tensor& x) {
  const int out = lin.weight.value.shape[0], in = lin.weight.value.shape[1];
  if (static_cast<int>(x.size()) != in) {
    throw ArgumentError(lin.weight.name + ": input size " + std::to_string(x.size()) + ", expected " +
                        std::to_string(in));
  }
  Tensor y({out});
  for (int o = 0; o < out; ++o) {
    double s = lin.bias.value.values[static_cast<std::size_t>(o)];
    const double* row = lin.weight.value.values.data() + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) s += row[i] * x.values[static_cast<std::size_t>(i)];
    y.values[static_cast<std::size_t>(o)] = s;
  }
  return y;
}

Tensor linear_backward(Linear& lin, const Tensor& x, const Tensor& dy) {
  const int out = lin.weight.value.shape[0], in = lin.weight.value.shape[1];
  Tensor dx({in});
  for (int o = 0; o < out; ++o) {
    const double g = dy.values[static_cast<std::size_t>(o)];
    lin.bias.grad.values[static_cast<std::size_t>(o)] += g;
    const double* row = lin.weight.value.values.data() + static_cast<std::size_t>(o) * in;
    double* grow = lin.weight.grad.values.data() + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      grow[i] += g * x.values[static_cast<std::size_t>(i)];
      dx.values[static_cast<std::size_t>(i)] += g * row[i];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pointwise and reshaping ops

Tensor upsample2x_forward(const Tensor& x) {
  require_image(x, "upsample2x");
  Tensor y = Tensor::image(x.channels(), 2 * x.height(), 2 * x.width());
  for (int c = 0; c < y.channels(); ++c)
    for (int i = 0; i < y.height(); ++i)
      for (int j = 0; j < y.width(); ++j) y.at(c, i, j) = x.at(c, i / 2, j / 2);
  return y;
}

Tensor upsample2x_backward(const Tensor& dy) {
  Tensor dx = Tensor::image(dy.channels(), dy.height() / 2, dy.width() / 2);
  for (int c = 0; c < dy.channels(); ++c)
    for (int i = 0; i < dy.height(); ++i)
      for (int j = 0; j < dy.width(); ++j) dx.at(c, i / 2, j / 2) += dy.at(c, i, j);
  return dx;
}

Tensor leaky_relu_forward(const Tensor& x, double slope) {
  Tensor y = x;
  for (auto& v : y.values) v = v > 0 ? v : slope * v;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& dy, double slope) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.values[i] *= x.values[i] > 0 ? 1.0 : slope;
  return dx;
}

Tensor sigmoid_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values) v = sigmoid(v);
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.values[i] *= y.values[i] * (1.0 - y.values[i]);
  return dx;
}

Tensor global_avg_pool_forward(const Tensor& x) {
  require_image(x, "global_avg_pool");
  Tensor y({x.channels()});
  const double inv = 1.0 / static_cast<double>(x.plane());
  for (int c = 0; c < x.channels(); ++c) {
    const double* xc = x.channel(c);
    double s = 0.0;
    for (std::size_t k = 0; k < x.plane(); ++k) s += xc[k];
    y.values[static_cast<std::size_t>(c)] = s * inv;
  }
  return y;
}

Tensor global_avg_pool_backward(const std::vector<int>& in_shape, const Tensor& dy) {
  Tensor dx(in_shape);
  const double inv = 1.0 / static_cast<double>(dx.plane());
  for (int c = 0; c < dx.channels(); ++c) {
    double* d = dx.channel(c);
    std::fill(d, d + dx.plane(), dy.values[static_cast<std::size_t>(c)] * inv);
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_image(a, "concat");
  require_image(b, "concat");
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ArgumentError("concat: spatial dims differ " + shape_string(a.shape) + " vs " + shape_string(b.shape));
  }
  Tensor y = Tensor::image(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.values.begin(), a.values.end(), y.values.begin());
  std::copy(b.values.begin(), b.values.end(), y.values.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return y;
}

// ---------------------------------------------------------------------------
// Normalization

Tensor instance_norm_forward(const Tensor& x, double eps, NormTape* tape) {
  require_image(x, "instance_norm");
  Tensor n = Tensor::image(x.channels(), x.height(), x.width());
  std::vector<double> inv_std(static_cast<std::size_t>(x.channels()));
  const double count = static_cast<double>(x.plane());
  for (int c = 0; c < x.channels(); ++c) {
    const double* xc = x.channel(c);
    double mean = 0.0;
    for (std::size_t k = 0; k < x.plane(); ++k) mean += xc[k];
    mean /= count;
    double var = 0.0;
    for (std::size_t k = 0; k < x.plane(); ++k) var += (xc[k] - mean) * (xc[k] - mean);
    var /= count;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(c)] = inv;
    double* nc = n.channel(c);
    for (std::size_t k = 0; k < x.plane(); ++k) nc[k] = (xc[k] - mean) * inv;
  }
  if (tape != nullptr) {
    tape->normalized = n;
    tape->inv_std = std::move(inv_std);
  }
  return n;
}

Tensor instance_norm_backward(const NormTape& tape, const Tensor& dn) {
  const Tensor& n = tape.normalized;
  Tensor dx = Tensor::image(n.channels(), n.height(), n.width());
  const double count = static_cast<double>(n.plane());
  for (int c = 0; c < n.channels(); ++c) {
    const double* nc = n.channel(c);
    const double* g = dn.channel(c);
    double sg = 0.0, sgn = 0.0;
    for (std::size_t k = 0; k < n.plane(); ++k) {
      sg += g[k];
      sgn += g[k] * nc[k];
    }
    const double scale = tape.inv_std[static_cast<std::size_t>(c)] / count;
    double* d = dx.channel(c);
    for (std::size_t k = 0; k < n.plane(); ++k) d[k] = scale * (count * g[k] - sg - nc[k] * sgn);
  }
  return dx;
}

Tensor one_hot(const Plane<std::uint8_t>& labels) {
  Tensor t = Tensor::image(kNumClasses, labels.h, labels.w);
  for (int v = 0; v < labels.h; ++v) {
    for (int u = 0; u < labels.w; ++u) {
      const int l = labels.at(u, v);
      if (l >= kNumClasses) throw DataError("label " + std::to_string(l) + " outside [0, 7]");
      t.at(l, v, u) = 1.0;
    }
  }
  return t;
}

Tensor resample_nearest(const Tensor& x, int h, int w) {
  require_image(x, "resample_nearest");
  if (x.height() == h && x.width() == w) return x;
  Tensor y = Tensor::image(x.channels(), h, w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < h; ++i) {
      const int si = static_cast<int>(static_cast<long>(i) * x.height() / h);
      for (int j = 0; j < w; ++j) {
        const int sj = static_cast<int>(static_cast<long>(j) * x.width() / w);
        y.at(c, i, j) = x.at(c, si, sj);
      }
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// SPADE

SpadeBlock::SpadeBlock(const std::string& name, int label_channels, int hidden, int feature_channels)
    : shared(name + ".shared", label_channels, hidden, 1),
      gamma(name + ".gamma", hidden, feature_channels, 1),
      beta(name + ".beta", hidden, feature_channels, 1) {}

void SpadeBlock::init(std::mt19937_64& rng) {
  shared.init(rng, std::sqrt(2.0));
  gamma.init(rng, 0.5);
  beta.init(rng, 0.5);
}

Tensor spade_forward(const SpadeBlock& block, const Tensor& x, const Tensor& onehot, SpadeTape* tape) {
  require_image(x, "spade");
  const Tensor seg = resample_nearest(onehot, x.height(), x.width());
  if (seg.height() != x.height() || seg.width() != x.width()) {
    throw ArgumentError("spade: label map does not match feature map after resampling");
  }
  NormTape nt;
  const Tensor n = instance_norm_forward(x, block.eps, &nt);
  const Tensor hpre = conv2d_forward(block.shared, seg);
  Tensor hid = hpre;
  for (auto& v : hid.values) v = v > 0 ? v : 0.0;
  const Tensor g = conv2d_forward(block.gamma, hid);
  const Tensor b = conv2d_forward(block.beta, hid);
  if (g.channels() != x.channels()) {
    throw ArgumentError("spade: modulation has " + std::to_string(g.channels()) + " channels, features have " +
                        std::to_string(x.channels()));
  }
  Tensor y = n;
  for (std::size_t i = 0; i < y.size(); ++i) y.values[i] = n.values[i] * (1.0 + g.values[i]) + b.values[i];
  if (tape != nullptr) {
    tape->seg = seg;
    tape->hidden_pre = hpre;
    tape->hidden = std::move(hid);
    tape->norm = std::move(nt);
    tape->gamma = g;
    tape->beta = b;
  }
  return y;
}

Tensor spade_backward(SpadeBlock& block, const SpadeTape& tape, const Tensor& dy) {
  const Tensor& n = tape.norm.normalized;
  Tensor dn = dy, dg = dy;
  for (std::size_t i = 0; i < dy.size(); ++i) {
    dn.values[i] = dy.values[i] * (1.0 + tape.gamma.values[i]);
    dg.values[i] = dy.values[i] * n.values[i];
  }
  Tensor dh = conv2d_backward(block.gamma, tape.hidden, dg);
  const Tensor dhb = conv2d_backward(block.beta, tape.hidden, dy);
  for (std::size_t i = 0; i < dh.size(); ++i) {
    dh.values[i] = tape.hidden_pre.values[i] > 0 ? dh.values[i] + dhb.values[i] : 0.0;
  }
  conv2d_backward(block.shared, tape.seg, dh);
  return instance_norm_backward(tape.norm, dn);
}

}  // namespace fetalsyn::gan
