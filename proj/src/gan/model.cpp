#include "fetalsyn/gan/model.hpp"

#include <cmath>

#include "fetalsyn/volume.hpp"

namespace fetalsyn::gan {

void GanArch::validate() const {
  if (stages < 1 || stages > 4) throw ArgumentError("generator stages must be in [1, 4]");
  const int f = 1 << stages;
  if (canvas.w < f || canvas.h < f || canvas.w % f != 0 || canvas.h % f != 0) {
    throw ArgumentError("canvas " + std::to_string(canvas.w) + "x" + std::to_string(canvas.h) +
                        " not divisible by 2^" + std::to_string(stages));
  }
  if (canvas.w < 8 || canvas.h < 8) throw ArgumentError("canvas must be at least 8x8");
  if (z_dim < 1 || coarse_channels < 1 || stage_channels < 1 || spade_hidden < 1 || d_channels < 1) {
    throw ArgumentError("network widths must be positive");
  }
}

Generator::Generator(const GanArch& arch) : arch_(arch) {
  arch.validate();
  project = Linear("g.project", arch.z_dim, arch.coarse_channels * arch.coarse_h() * arch.coarse_w());
  int cin = arch.coarse_channels;
  for (int s = 0; s < arch.stages; ++s) {
    const std::string name = "g.stage" + std::to_string(s);
    convs.emplace_back(name + ".conv", cin, arch.stage_channels, 1);
    spades.emplace_back(name + ".spade", kNumClasses, arch.spade_hidden, arch.stage_channels);
    cin = arch.stage_channels;
  }
  out = Conv2d("g.out", cin, 1, 1);
}

void Generator::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  project.init(rng, 1.0);
  for (std::size_t s = 0; s < convs.size(); ++s) {
    convs[s].init(rng, std::sqrt(2.0));
    spades[s].init(rng);
  }
  out.init(rng, 1.0);
}

std::vector<Param*> Generator::params() {
  std::vector<Param*> p{&project.weight, &project.bias};
  for (std::size_t s = 0; s < convs.size(); ++s) {
    for (Conv2d* c : {&convs[s], &spades[s].shared, &spades[s].gamma, &spades[s].beta}) {
      p.push_back(&c->weight);
      p.push_back(&c->bias);
    }
  }
  p.push_back(&out.weight);
  p.push_back(&out.bias);
  return p;
}

std::vector<const Param*> Generator::params() const {
  auto mut = const_cast<Generator*>(this)->params();
  return {mut.begin(), mut.end()};
}

Tensor sample_latent(const GanArch& arch, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z({arch.z_dim});
  for (auto& v : z.values) v = normal(rng);
  return z;
}

Tensor generator_forward(const Generator& g, const Tensor& z, const Tensor& onehot, GeneratorTape* tape) {
  const GanArch& a = g.arch();
  require_shape(onehot, {kNumClasses, a.canvas.h, a.canvas.w}, "generator labels");
  require_shape(z, {a.z_dim}, "generator latent");
  Tensor x = linear_forward(g.project, z);
  x.shape = {a.coarse_channels, a.coarse_h(), a.coarse_w()};
  if (tape != nullptr) {
    tape->z = z;
    tape->projected = x;
    tape->stages.assign(static_cast<std::size_t>(a.stages), {});
  }
  for (int s = 0; s < a.stages; ++s) {
    const auto si = static_cast<std::size_t>(s);
    Tensor up = upsample2x_forward(x);
    Tensor c = conv2d_forward(g.convs[si], up);
    GeneratorStageTape* st = tape != nullptr ? &tape->stages[si] : nullptr;
    Tensor m = spade_forward(g.spades[si], c, onehot, st != nullptr ? &st->spade : nullptr);
    x = leaky_relu_forward(m);
    if (st != nullptr) {
      st->upsampled = std::move(up);
      st->conv = std::move(c);
      st->modulated = std::move(m);
    }
  }
  Tensor y = sigmoid_forward(conv2d_forward(g.out, x));
  if (tape != nullptr) {
    tape->activated = std::move(x);
    tape->output = y;
  }
  return y;
}

Tensor generator_backward(Generator& g, const GeneratorTape& tape, const Tensor& d_output) {
  Tensor d = sigmoid_backward(tape.output, d_output);
  d = conv2d_backward(g.out, tape.activated, d);
  for (int s = g.arch().stages - 1; s >= 0; --s) {
    const auto si = static_cast<std::size_t>(s);
    const GeneratorStageTape& st = tape.stages[si];
    d = leaky_relu_backward(st.modulated, d);
    d = spade_backward(g.spades[si], st.spade, d);
    d = conv2d_backward(g.convs[si], st.upsampled, d);
    d = upsample2x_backward(d);
  }
  Tensor flat = d;
  flat.shape = {static_cast<int>(d.size())};
  return linear_backward(g.project, tape.z, flat);
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(const GanArch& arch) {
  arch.validate();
  const int c = arch.d_channels;
  convs = {Conv2d("d.conv0", 1 + kNumClasses, c, 2), Conv2d("d.conv1", c, 2 * c, 2),
           Conv2d("d.conv2", 2 * c, 2 * c, 2)};
  head = Linear("d.head", 2 * c, 1);
}

void Discriminator::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& c : convs) c.init(rng, std::sqrt(2.0));
  head.init(rng, 1.0);
}

std::vector<Param*> Discriminator::params() {
  std::vector<Param*> p;
  for (auto& c : convs) {
    p.push_back(&c.weight);
    p.push_back(&c.bias);
  }
  p.push_back(&head.weight);
  p.push_back(&head.bias);
  return p;
}

std::vector<const Param*> Discriminator::params() const {
  auto mut = const_cast<Discriminator*>(this)->params();
  return {mut.begin(), mut.end()};
}

double discriminator_forward(const Discriminator& d, const Tensor& image, const Tensor& onehot,
                             DiscriminatorTape* tape) {
  if (image.shape.size() != 3 || image.channels() != 1) {
    throw ArgumentError("discriminator image must be (1, H, W), got " + shape_string(image.shape));
  }
  require_shape(onehot, {kNumClasses, image.height(), image.width()}, "discriminator labels");
  Tensor x = concat_channels(image, onehot);
  DiscriminatorTape local;
  DiscriminatorTape& t = tape != nullptr ? *tape : local;
  t.input = x;
  for (std::size_t i = 0; i < 3; ++i) {
    t.pre[i] = conv2d_forward(d.convs[i], i == 0 ? t.input : t.act[i - 1]);
    t.act[i] = leaky_relu_forward(t.pre[i]);
  }
  t.pooled = global_avg_pool_forward(t.act[2]);
  t.logit = linear_forward(d.head, t.pooled).values[0];
  t.prob = sigmoid(t.logit);
  return t.prob;
}

Tensor discriminator_backward(Discriminator& d, const DiscriminatorTape& tape, double d_logit) {
  Tensor dy({1}, d_logit);
  Tensor dpool = linear_backward(d.head, tape.pooled, dy);
  Tensor g = global_avg_pool_backward(tape.act[2].shape, dpool);
  for (int i = 2; i >= 0; --i) {
    const auto ii = static_cast<std::size_t>(i);
    g = leaky_relu_backward(tape.pre[ii], g);
    g = conv2d_backward(d.convs[ii], ii == 0 ? tape.input : tape.act[ii - 1], g);
  }
  // first channel is the image; the rest are labels
  Tensor dimage = Tensor::image(1, g.height(), g.width());
  std::copy(g.channel(0), g.channel(0) + g.plane(), dimage.values.begin());
  return dimage;
}

void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

}  // namespace fetalsyn::gan
