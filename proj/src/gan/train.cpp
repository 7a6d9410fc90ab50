#include "fetalsyn/gan/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace fetalsyn::gan {

GLossMode parse_g_loss(const std::string& s) {
  if (s == "minimax") return GLossMode::Minimax;
  if (s == "nonsat" || s == "nonsaturating") return GLossMode::NonSaturating;
  throw ArgumentError("unknown generator loss '" + s + "' (expected minimax or nonsat)");
}

const char* g_loss_name(GLossMode m) { return m == GLossMode::Minimax ? "minimax" : "nonsat"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ArgumentError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

namespace {

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }
inline bool clamped(double p) { return p < kProbClamp || p > 1.0 - kProbClamp; }

double mean_log(std::span<const double> p, bool complement) {
  if (p.empty()) throw ArgumentError("empty probability batch");
  double s = 0.0;
  for (double v : p) s += std::log(complement ? 1.0 - clamp_prob(v) : clamp_prob(v));
  return s / static_cast<double>(p.size());
}

}  // namespace

double adversarial_value(std::span<const double> d_real, std::span<const double> d_fake) {
  return mean_log(d_real, false) + mean_log(d_fake, true);
}

double loss_d(std::span<const double> d_real, std::span<const double> d_fake) {
  return -adversarial_value(d_real, d_fake);
}

double loss_g(std::span<const double> d_fake, GLossMode mode) {
  return mode == GLossMode::Minimax ? mean_log(d_fake, true) : -mean_log(d_fake, false);
}

LossDGrad loss_d_grad(std::span<const double> d_real, std::span<const double> d_fake) {
  LossDGrad g;
  const double nr = static_cast<double>(d_real.size()), nf = static_cast<double>(d_fake.size());
  for (double p : d_real) g.d_real.push_back(clamped(p) ? 0.0 : -1.0 / (p * nr));
  for (double p : d_fake) g.d_fake.push_back(clamped(p) ? 0.0 : 1.0 / ((1.0 - p) * nf));
  return g;
}

std::vector<double> loss_g_grad(std::span<const double> d_fake, GLossMode mode) {
  std::vector<double> g;
  const double n = static_cast<double>(d_fake.size());
  for (double p : d_fake) {
    if (clamped(p)) {
      g.push_back(0.0);
    } else if (mode == GLossMode::Minimax) {
      g.push_back(-1.0 / ((1.0 - p) * n));
    } else {
      g.push_back(-1.0 / (p * n));
    }
  }
  return g;
}

void TrainConfig::validate() const {
  if (niter < 1) throw ArgumentError("niter must be >= 1");
  if (niter_decay < 0) throw ArgumentError("niter_decay must be >= 0");
  if (!(lr > 0.0)) throw ArgumentError("learning rate must be positive");
  if (batch < 1) throw ArgumentError("batch size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ArgumentError("Adam betas must lie in [0, 1)");
  }
  arch.validate();
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 1 || epoch > cfg.epochs()) {
    throw ArgumentError("epoch " + std::to_string(epoch) + " outside [1, " + std::to_string(cfg.epochs()) + "]");
  }
  if (epoch <= cfg.niter) return cfg.lr;
  return cfg.lr * (1.0 - static_cast<double>(epoch - cfg.niter) / static_cast<double>(cfg.niter_decay + 1));
}

Tensor image_tensor(const Plane<float>& p) {
  Tensor t = Tensor::image(1, p.h, p.w);
  for (int v = 0; v < p.h; ++v)
    for (int u = 0; u < p.w; ++u) t.at(0, v, u) = p.at(u, v);
  return t;
}

Plane<float> image_plane(const Tensor& t) {
  Plane<float> p(t.width(), t.height());
  for (int v = 0; v < p.h; ++v)
    for (int u = 0; u < p.w; ++u) p.at(u, v) = static_cast<float>(t.at(0, v, u));
  return p;
}

namespace {

// SGD, or Adam with bias-corrected moments.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const std::vector<Param*>& params) : cfg_(cfg), params_(params) {
    if (cfg.optimizer == OptimizerKind::Adam) {
      for (Param* p : params) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
      }
    }
  }

  void step(double lr) {
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (Param* p : params_) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value.values[i] -= lr * p->grad.values[i];
      }
      return;
    }
    ++t_;
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param* p = params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad.values[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        p->value.values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
      }
    }
  }

 private:
  static constexpr double kAdamEps = 1e-8;
  const TrainConfig& cfg_;
  std::vector<Param*> params_;
  std::vector<std::vector<double>> m_, v_;
  int t_ = 0;
};

// Independent streams derived from one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

TrainResult train(const std::vector<TrainingPair>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw ArgumentError("training dataset is empty");
  struct Sample {
    Tensor onehot;
    Tensor image;
  };
  std::vector<Sample> samples;
  samples.reserve(dataset.size());
  for (const auto& pair : dataset) {
    if (pair.labels.w != cfg.arch.canvas.w || pair.labels.h != cfg.arch.canvas.h || pair.image.w != pair.labels.w ||
        pair.image.h != pair.labels.h) {
      throw DataError("training slice " + std::to_string(pair.labels.w) + "x" + std::to_string(pair.labels.h) +
                      " does not match canvas " + std::to_string(cfg.arch.canvas.w) + "x" +
                      std::to_string(cfg.arch.canvas.h));
    }
    samples.push_back({one_hot(pair.labels), image_tensor(pair.image)});
  }

  TrainResult r{Generator(cfg.arch), Discriminator(cfg.arch), {}};
  r.generator.init(derive_seed(cfg.seed, 1));
  r.discriminator.init(derive_seed(cfg.seed, 2));
  std::mt19937_64 rng(derive_seed(cfg.seed, 3));
  const auto gparams = r.generator.params();
  const auto dparams = r.discriminator.params();
  Optimizer gopt(cfg, gparams), dopt(cfg, dparams);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs(); ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    int batches = 0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const std::size_t b = end - start;
      std::vector<Tensor> zs;
      for (std::size_t i = 0; i < b; ++i) zs.push_back(sample_latent(cfg.arch, rng));

      // Discriminator step.
      zero_grads(dparams);
      std::vector<DiscriminatorTape> real_t(b), fake_t(b);
      std::vector<double> dr(b), df(b);
      for (std::size_t i = 0; i < b; ++i) {
        const Sample& s = samples[order[start + i]];
        const Tensor fake = generator_forward(r.generator, zs[i], s.onehot);
        dr[i] = discriminator_forward(r.discriminator, s.image, s.onehot, &real_t[i]);
        df[i] = discriminator_forward(r.discriminator, fake, s.onehot, &fake_t[i]);
      }
      const double ld = loss_d(dr, df);
      const LossDGrad gd = loss_d_grad(dr, df);
      for (std::size_t i = 0; i < b; ++i) {
        discriminator_backward(r.discriminator, real_t[i], gd.d_real[i] * dr[i] * (1.0 - dr[i]));
        discriminator_backward(r.discriminator, fake_t[i], gd.d_fake[i] * df[i] * (1.0 - df[i]));
      }
      dopt.step(lr);

      // Generator step on the same latents against the updated discriminator.
      zero_grads(gparams);
      std::vector<GeneratorTape> g_t(b);
      std::vector<DiscriminatorTape> gd_t(b);
      std::vector<double> dg(b);
      for (std::size_t i = 0; i < b; ++i) {
        const Sample& s = samples[order[start + i]];
        const Tensor fake = generator_forward(r.generator, zs[i], s.onehot, &g_t[i]);
        dg[i] = discriminator_forward(r.discriminator, fake, s.onehot, &gd_t[i]);
      }
      const double lg = loss_g(dg, cfg.g_loss);
      const auto gg = loss_g_grad(dg, cfg.g_loss);
      for (std::size_t i = 0; i < b; ++i) {
        const Tensor dimg = discriminator_backward(r.discriminator, gd_t[i], gg[i] * dg[i] * (1.0 - dg[i]));
        generator_backward(r.generator, g_t[i], dimg);
      }
      gopt.step(lr);

      st.loss_d += ld;
      st.loss_g += lg;
      for (std::size_t i = 0; i < b; ++i) {
        st.d_real += dr[i];
        st.d_fake += df[i];
      }
      ++batches;
      seen += b;
    }
    st.loss_d /= batches;
    st.loss_g /= batches;
    st.d_real /= static_cast<double>(seen);
    st.d_fake /= static_cast<double>(seen);
    r.curves.push_back(st);
  }
  return r;
}

std::vector<TrainingPair> slices_for_training(const Volume& volume, const LabelVolume& labels, Axis axis,
                                              Canvas canvas, int max_slices) {
  require_same_dims(volume.dims(), labels.dims(), "slices_for_training");
  const auto img = extract_slices(volume, axis, canvas);
  const auto lab = extract_slices(labels, axis, canvas);
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < lab.slices.size(); ++k) {
    const auto& v = lab.slices[k].values;
    if (std::any_of(v.begin(), v.end(), [](std::uint8_t l) { return l != 0; })) keep.push_back(k);
  }
  if (max_slices > 0 && keep.size() > static_cast<std::size_t>(max_slices)) {
    std::vector<std::size_t> picked;
    const auto n = keep.size(), m = static_cast<std::size_t>(max_slices);
    // evenly spaced, centered picks
    for (std::size_t i = 0; i < m; ++i) picked.push_back(keep[(2 * i + 1) * n / (2 * m)]);
    keep = std::move(picked);
  }
  std::vector<TrainingPair> out;
  for (auto k : keep) out.push_back({lab.slices[k], img.slices[k]});
  return out;
}

OrientedTriplet synthesize_volume(const std::array<const Generator*, 3>& generators, const LabelVolume& labels,
                                  std::uint64_t z_seed) {
  std::array<Volume, 3> out;
  for (int a = 0; a < 3; ++a) {
    const Generator* g = generators[static_cast<std::size_t>(a)];
    if (g == nullptr) throw ArgumentError("synthesize_volume: missing generator");
    const Axis axis = static_cast<Axis>(a);
    const Canvas canvas = g->arch().canvas;
    const Canvas native = plane_size(labels.dims(), axis);
    if (native.w > canvas.w || native.h > canvas.h) {
      throw DataError(std::string("label plane ") + std::to_string(native.w) + "x" + std::to_string(native.h) +
                      " along " + axis_name(axis) + " exceeds the model canvas " + std::to_string(canvas.w) + "x" +
                      std::to_string(canvas.h));
    }
    const auto lab = extract_slices(labels, axis, canvas);
    std::mt19937_64 rng(derive_seed(z_seed, static_cast<std::uint32_t>(a)));
    std::vector<Tensor> zs;
    for (std::size_t k = 0; k < lab.slices.size(); ++k) zs.push_back(sample_latent(g->arch(), rng));
    SliceStack<float> stack;
    stack.axis = axis;
    stack.canvas = canvas;
    stack.slices.resize(lab.slices.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(lab.slices.size()); ++k) {
      const auto ku = static_cast<std::size_t>(k);
      stack.slices[ku] = image_plane(generator_forward(*g, zs[ku], one_hot(lab.slices[ku])));
    }
    out[static_cast<std::size_t>(a)] = restack(stack, axis, labels.dims()).volume;
  }
  return OrientedTriplet{std::move(out[0]), std::move(out[1]), std::move(out[2])};
}

// ---------------------------------------------------------------------------
// Parameter files

namespace {

constexpr char kMagic[4] = {'F', 'S', 'G', 'N'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& what) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated model file reading " + what);
  return v;
}

std::array<std::int32_t, 8> arch_fields(const GanArch& a) {
  return {a.canvas.w, a.canvas.h, a.z_dim, a.stages, a.coarse_channels, a.stage_channels, a.spade_hidden, a.d_channels};
}

}  // namespace

void save_model(const std::filesystem::path& path, const Generator& g, const Discriminator& d) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kModelFileVersion);
  for (auto f : arch_fields(g.arch())) put<std::int32_t>(os, f);
  std::vector<const Param*> all = g.params();
  for (const Param* p : d.params()) all.push_back(p);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(all.size()));
  for (const Param* p : all) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p->value.shape.size()));
    for (int e : p->value.shape) put<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  }
  for (const Param* p : all) {
    for (double v : p->value.values) put<float>(os, static_cast<float>(v));
  }
  if (!os) throw DataError("write failed: " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open model file " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path.string() + ": not a model file (bad magic)");
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kModelFileVersion) {
    throw DataError(path.string() + ": unsupported model file version " + std::to_string(version));
  }
  std::array<std::int32_t, 8> f{};
  for (auto& v : f) v = get<std::int32_t>(is, "architecture");
  GanArch arch;
  arch.canvas = {f[0], f[1]};
  arch.z_dim = f[2];
  arch.stages = f[3];
  arch.coarse_channels = f[4];
  arch.stage_channels = f[5];
  arch.spade_hidden = f[6];
  arch.d_channels = f[7];
  try {
    arch.validate();
  } catch (const ArgumentError& e) {
    throw DataError(path.string() + ": invalid architecture: " + e.what());
  }
  LoadedModel m{Generator(arch), Discriminator(arch)};
  std::vector<Param*> all = m.generator.params();
  for (Param* p : m.discriminator.params()) all.push_back(p);

  const auto count = get<std::uint32_t>(is, "tensor count");
  if (count != all.size()) {
    throw DataError(path.string() + ": " + std::to_string(count) + " tensors, architecture needs " +
                    std::to_string(all.size()));
  }
  for (Param* p : all) {
    const auto len = get<std::uint32_t>(is, "name length");
    if (len > 4096) throw DataError(path.string() + ": corrupt tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError("truncated model file reading tensor name");
    if (name != p->name) throw DataError(path.string() + ": expected tensor " + p->name + ", found " + name);
    const auto rank = get<std::uint32_t>(is, "rank");
    std::vector<int> shape;
    for (std::uint32_t i = 0; i < rank && i < 8; ++i) shape.push_back(static_cast<int>(get<std::uint32_t>(is, "extent")));
    if (shape != p->value.shape) {
      throw DataError(path.string() + ": tensor " + name + " has shape " + shape_string(shape) + ", expected " +
                      shape_string(p->value.shape));
    }
  }
  for (Param* p : all) {
    for (auto& v : p->value.values) v = get<float>(is, "payload");
  }
  return m;
}

}  // namespace fetalsyn::gan
