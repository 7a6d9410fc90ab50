#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "fetalsyn/errors.hpp"
#include "fetalsyn/gan/train.hpp"
#include "fetalsyn/phantom.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace fetalsyn;
using namespace fetalsyn::gan;
using namespace gradcheck;

namespace {

GanArch tiny_arch() {
  GanArch a;
  a.canvas = {8, 8};
  a.z_dim = 4;
  a.stages = 2;
  a.coarse_channels = 4;
  a.stage_channels = 3;
  a.spade_hidden = 3;
  a.d_channels = 3;
  return a;
}

// Phantom slices on a 16x16 canvas for quick training runs.
std::vector<TrainingPair> small_dataset(int n_slices) {
  PhantomSpec s;
  s.dims = {16, 16, 16};
  const Phantom p = make_phantom(s);
  return slices_for_training(p.volume, p.labels, Axis::Z, {16, 16}, n_slices);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.arch = tiny_arch();
  cfg.arch.canvas = {16, 16};
  cfg.niter = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_SUITE("gan_core") {
  TEST_CASE("conv2d gradients, stride 1 and 2") {
    std::mt19937_64 rng(1);
    for (int stride : {1, 2}) {
      Conv2d conv("c", 2, 3, stride);
      conv.init(rng, 1.0);
      fill_random(conv.bias.value, rng);
      Tensor x = Tensor::image(2, 5, 6);
      fill_random(x, rng);
      const Tensor y = conv2d_forward(conv, x);
      CHECK(y.height() == conv_out_extent(5, stride));
      CHECK(y.width() == conv_out_extent(6, stride));
      Tensor w(y.shape);
      fill_random(w, rng);
      conv.weight.zero_grad();
      conv.bias.zero_grad();
      const Tensor dx = conv2d_backward(conv, x, w);
      const auto loss = [&] { return dot(conv2d_forward(conv, x), w); };
      CHECK(grad_rel_error(x.values, dx.values, loss) < kTolerance);
      CHECK(grad_rel_error(conv.weight.value.values, conv.weight.grad.values, loss) < kTolerance);
      CHECK(grad_rel_error(conv.bias.value.values, conv.bias.grad.values, loss) < kTolerance);
    }
  }

  TEST_CASE("linear gradients") {
    std::mt19937_64 rng(2);
    Linear lin("l", 5, 3);
    lin.init(rng, 1.0);
    Tensor x({5});
    fill_random(x, rng);
    Tensor w({3});
    fill_random(w, rng);
    lin.weight.zero_grad();
    lin.bias.zero_grad();
    const Tensor dx = linear_backward(lin, x, w);
    const auto loss = [&] { return dot(linear_forward(lin, x), w); };
    CHECK(grad_rel_error(x.values, dx.values, loss) < kTolerance);
    CHECK(grad_rel_error(lin.weight.value.values, lin.weight.grad.values, loss) < kTolerance);
    CHECK(grad_rel_error(lin.bias.value.values, lin.bias.grad.values, loss) < kTolerance);
  }

  TEST_CASE("parameter-free layer gradients") {
    std::mt19937_64 rng(3);
    Tensor x = Tensor::image(2, 4, 3);
    fill_random(x, rng);

    Tensor wu = Tensor::image(2, 8, 6);
    fill_random(wu, rng);
    CHECK(grad_rel_error(x.values, upsample2x_backward(wu).values,
                         [&] { return dot(upsample2x_forward(x), wu); }) < kTolerance);

    Tensor w(x.shape);
    fill_random(w, rng);
    CHECK(grad_rel_error(x.values, leaky_relu_backward(x, w).values,
                         [&] { return dot(leaky_relu_forward(x), w); }) < kTolerance);
    CHECK(grad_rel_error(x.values, sigmoid_backward(sigmoid_forward(x), w).values,
                         [&] { return dot(sigmoid_forward(x), w); }) < kTolerance);

    Tensor wp({2});
    fill_random(wp, rng);
    CHECK(grad_rel_error(x.values, global_avg_pool_backward(x.shape, wp).values,
                         [&] { return dot(global_avg_pool_forward(x), wp); }) < kTolerance);

    NormTape tape;
    instance_norm_forward(x, 1e-5, &tape);
    CHECK(grad_rel_error(x.values, instance_norm_backward(tape, w).values,
                         [&] { return dot(instance_norm_forward(x, 1e-5, nullptr), w); }) < kTolerance);
  }

  TEST_CASE("sigmoid range and leaky slope") {
    Tensor x({5});
    x.values = {-800.0, -3.0, 0.0, 3.0, 800.0};
    const Tensor y = sigmoid_forward(x);
    for (std::size_t i = 1; i < 4; ++i) {
      CHECK(y.values[i] > 0.0);
      CHECK(y.values[i] < 1.0);
    }
    CHECK(y.values[2] == 0.5);
    CHECK(std::isfinite(y.values[0]));
    CHECK(leaky_relu_forward(x).values[1] == doctest::Approx(-0.6));
  }

  TEST_CASE("spade gradients on a 4x4, 2-channel instance") {
    std::mt19937_64 rng(4);
    SpadeBlock block("s", kNumClasses, 3, 2);
    block.init(rng);
    Tensor x = Tensor::image(2, 4, 4);
    fill_random(x, rng);
    const Tensor onehot = one_hot(label_plane(4, 4, 9));
    SpadeTape tape;
    const Tensor y = spade_forward(block, x, onehot, &tape);
    Tensor w(y.shape);
    fill_random(w, rng);
    for (Conv2d* c : {&block.shared, &block.gamma, &block.beta}) {
      c->weight.zero_grad();
      c->bias.zero_grad();
    }
    const Tensor dx = spade_backward(block, tape, w);
    const auto loss = [&] { return dot(spade_forward(block, x, onehot, nullptr), w); };
    CHECK(grad_rel_error(x.values, dx.values, loss) < kTolerance);
    for (Conv2d* c : {&block.shared, &block.gamma, &block.beta}) {
      CHECK(grad_rel_error(c->weight.value.values, c->weight.grad.values, loss) < kTolerance);
      CHECK(grad_rel_error(c->bias.value.values, c->bias.grad.values, loss) < kTolerance);
    }
  }

  TEST_CASE("spade with zero heads returns the normalized features") {
    std::mt19937_64 rng(5);
    SpadeBlock block("s", kNumClasses, 4, 3);
    block.init(rng);
    block.gamma.weight.value.zero();
    block.gamma.bias.value.zero();
    block.beta.weight.value.zero();
    block.beta.bias.value.zero();
    Tensor x = Tensor::image(3, 6, 5);
    fill_random(x, rng, 3.0);
    for (auto& v : x.values) v += 2.0;
    const Tensor y = spade_forward(block, x, one_hot(label_plane(5, 6, 1)), nullptr);
    for (int c = 0; c < 3; ++c) {
      double m = 0, m2 = 0;
      for (std::size_t i = 0; i < y.plane(); ++i) m += y.channel(c)[i];
      m /= static_cast<double>(y.plane());
      for (std::size_t i = 0; i < y.plane(); ++i) m2 += std::pow(y.channel(c)[i] - m, 2);
      m2 /= static_cast<double>(y.plane());
      CHECK(std::abs(m) < 1e-5);
      CHECK(std::abs(m2 - 1.0) < 1e-4);
    }
  }

  TEST_CASE("spade on a constant feature map outputs beta") {
    std::mt19937_64 rng(6);
    SpadeBlock block("s", kNumClasses, 4, 2);
    block.init(rng);
    const Tensor x = Tensor::image(2, 4, 4, 0.7);
    SpadeTape tape;
    const Tensor y = spade_forward(block, x, one_hot(label_plane(4, 4, 2)), &tape);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.values[i] == doctest::Approx(tape.beta.values[i]).epsilon(1e-12));
  }

  TEST_CASE("spade label locality: modulation reacts only within two pixels of a label edit") {
    std::mt19937_64 rng(7);
    SpadeBlock block("s", kNumClasses, 4, 2);
    block.init(rng);
    Tensor x = Tensor::image(2, 12, 12);
    fill_random(x, rng);
    Plane<std::uint8_t> a(12, 12, 2), b = a;
    for (int v = 5; v <= 6; ++v)
      for (int u = 5; u <= 6; ++u) b.at(u, v) = 5;
    const Tensor ya = spade_forward(block, x, one_hot(a), nullptr);
    const Tensor yb = spade_forward(block, x, one_hot(b), nullptr);
    bool changed_inside = false;
    for (int c = 0; c < 2; ++c)
      for (int v = 0; v < 12; ++v)
        for (int u = 0; u < 12; ++u) {
          const bool near = u >= 3 && u <= 8 && v >= 3 && v <= 8;
          const double d = std::abs(ya.at(c, v, u) - yb.at(c, v, u));
          if (!near) CHECK(d == 0.0);
          if (near && d > 0) changed_inside = true;
        }
    CHECK(changed_inside);
  }

  TEST_CASE("one-hot and nearest resampling") {
    Plane<std::uint8_t> p(4, 2);
    p.at(3, 1) = 7;
    const Tensor t = one_hot(p);
    CHECK(t.channels() == kNumClasses);
    CHECK(t.at(7, 1, 3) == 1.0);
    CHECK(t.at(0, 1, 3) == 0.0);
    CHECK(t.at(0, 0, 0) == 1.0);
    const Tensor r = resample_nearest(t, 1, 2);
    CHECK(r.height() == 1);
    CHECK(r.width() == 2);
    CHECK(r.at(0, 0, 0) == 1.0);
  }

  TEST_CASE("generator: shape, range, determinism and full gradient check") {
    const GanArch arch = tiny_arch();
    Generator g(arch);
    g.init(11);
    std::mt19937_64 rng(12);
    Tensor z = sample_latent(arch, rng);
    const Tensor onehot = one_hot(label_plane(8, 8, 3));
    GeneratorTape tape;
    const Tensor y = generator_forward(g, z, onehot, &tape);
    CHECK(y.shape == std::vector<int>{1, 8, 8});
    for (double v : y.values) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    Generator g2(arch);
    g2.init(11);
    CHECK(generator_forward(g2, z, onehot).values == y.values);

    Tensor w(y.shape);
    fill_random(w, rng);
    zero_grads(g.params());
    const Tensor dz = generator_backward(g, tape, w);
    const auto loss = [&] { return dot(generator_forward(g, z, onehot), w); };
    CHECK(grad_rel_error(z.values, dz.values, loss) < kTolerance);
    for (Param* p : g.params()) CHECK_MESSAGE(grad_rel_error(p->value.values, p->grad.values, loss) < kTolerance, p->name);
  }

  TEST_CASE("generator: a label edit changes the output mostly near the edit") {
    GanArch arch = tiny_arch();
    arch.canvas = {16, 16};
    Generator g(arch);
    g.init(21);
    std::mt19937_64 rng(22);
    const Tensor z = sample_latent(arch, rng);
    Plane<std::uint8_t> a(16, 16, 3), b = a;
    b.at(2, 2) = 5;
    b.at(3, 2) = 5;
    const Tensor ya = generator_forward(g, z, one_hot(a)), yb = generator_forward(g, z, one_hot(b));
    double near = 0, far = 0;
    int n_near = 0, n_far = 0;
    for (int v = 0; v < 16; ++v)
      for (int u = 0; u < 16; ++u) {
        const double d = std::abs(ya.at(0, v, u) - yb.at(0, v, u));
        if (u <= 7 && v <= 7) {
          near += d;
          ++n_near;
        } else {
          far += d;
          ++n_far;
        }
      }
    CHECK(near / n_near > 0.0);
    CHECK(far / n_far < 0.5 * near / n_near);
  }

  TEST_CASE("discriminator: range, zero weights, gradient check") {
    const GanArch arch = tiny_arch();
    Discriminator d(arch);
    d.init(31);
    std::mt19937_64 rng(32);
    Tensor img = Tensor::image(1, 8, 8);
    fill_random(img, rng);
    const Tensor onehot = one_hot(label_plane(8, 8, 4));
    DiscriminatorTape tape;
    const double p = discriminator_forward(d, img, onehot, &tape);
    CHECK(p > 0.0);
    CHECK(p < 1.0);

    zero_grads(d.params());
    const Tensor dimg = discriminator_backward(d, tape, 0.7);
    const auto loss = [&] {
      DiscriminatorTape t;
      discriminator_forward(d, img, onehot, &t);
      return 0.7 * t.logit;
    };
    CHECK(grad_rel_error(img.values, dimg.values, loss) < kTolerance);
    for (Param* q : d.params()) CHECK_MESSAGE(grad_rel_error(q->value.values, q->grad.values, loss) < kTolerance, q->name);

    for (Param* q : d.params()) q->value.zero();
    const double half = discriminator_forward(d, img, onehot);
    CHECK(half == 0.5);
    const std::vector<double> r{half}, f{half};
    CHECK(loss_d(r, f) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
  }

  TEST_CASE("adversarial losses") {
    const std::vector<double> half{0.5, 0.5};
    CHECK(loss_d(half, half) == doctest::Approx(1.3862943611198906).epsilon(1e-12));
    CHECK(loss_g(half, GLossMode::Minimax) == doctest::Approx(-0.6931471805599453).epsilon(1e-12));
    CHECK(loss_g(half, GLossMode::NonSaturating) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    const std::vector<double> one{1.0}, zero{0.0};
    CHECK(loss_d(one, zero) < 1e-6);
    CHECK(loss_d(one, zero) > 0.0);
    CHECK(loss_g(one, GLossMode::Minimax) == doctest::Approx(std::log(1e-7)).epsilon(1e-9));

    const std::vector<double> r{0.9, 0.6, 0.3}, f{0.2, 0.5, 0.8};
    CHECK(-loss_d(r, f) == doctest::Approx(adversarial_value(r, f)).epsilon(1e-12));
    double mean_log_real = 0;
    for (double v : r) mean_log_real += std::log(v) / 3.0;
    CHECK(std::abs(adversarial_value(r, f) - loss_g(f, GLossMode::Minimax) - mean_log_real) < 1e-9);

    const LossDGrad gd = loss_d_grad(r, f);
    for (double g : gd.d_fake) CHECK(g > 0.0);
    for (double g : gd.d_real) CHECK(g < 0.0);
    const auto gm = loss_g_grad(f, GLossMode::Minimax), gn = loss_g_grad(f, GLossMode::NonSaturating);
    for (std::size_t i = 0; i < f.size(); ++i) {
      CHECK(gm[i] < 0.0);
      CHECK(gn[i] < 0.0);
    }

    std::vector<double> rv = r, fv = f;
    CHECK(grad_rel_error(rv, gd.d_real, [&] { return loss_d(rv, fv); }) < kTolerance);
    CHECK(grad_rel_error(fv, gd.d_fake, [&] { return loss_d(rv, fv); }) < kTolerance);
    CHECK(grad_rel_error(fv, gm, [&] { return loss_g(fv, GLossMode::Minimax); }) < kTolerance);
    CHECK(grad_rel_error(fv, gn, [&] { return loss_g(fv, GLossMode::NonSaturating); }) < kTolerance);
    CHECK(loss_g_grad(one, GLossMode::Minimax)[0] == 0.0);
  }

  TEST_CASE("learning-rate schedule") {
    TrainConfig cfg;
    cfg.niter = 25;
    cfg.niter_decay = 25;
    cfg.lr = 2e-4;
    CHECK(lr_at_epoch(cfg, 25) == 2e-4);
    CHECK(lr_at_epoch(cfg, 50) == doctest::Approx(2e-4 * (1.0 - 25.0 / 26.0)).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 26) < lr_at_epoch(cfg, 25));
    CHECK_THROWS_AS(lr_at_epoch(cfg, 0), ArgumentError);
    CHECK_THROWS_AS(lr_at_epoch(cfg, 51), ArgumentError);
    cfg.niter_decay = 0;
    cfg.niter = 10;
    for (int e = 1; e <= 10; ++e) CHECK(lr_at_epoch(cfg, e) == 2e-4);
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.niter = 0;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = TrainConfig{};
    cfg.lr = 0;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = TrainConfig{};
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = TrainConfig{};
    cfg.arch.canvas = {30, 32};
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    CHECK(parse_g_loss("nonsat") == GLossMode::NonSaturating);
    CHECK_THROWS_AS(parse_g_loss("hinge"), ArgumentError);
    CHECK(parse_optimizer("sgd") == OptimizerKind::Sgd);
    CHECK_THROWS_AS(train({}, TrainConfig{}), ArgumentError);
  }

  TEST_CASE("one epoch on one sample updates the parameters, for both optimizers") {
    const auto data = small_dataset(1);
    REQUIRE(data.size() == 1);
    for (OptimizerKind k : {OptimizerKind::Adam, OptimizerKind::Sgd}) {
      TrainConfig cfg = small_config();
      cfg.niter = 1;
      cfg.optimizer = k;
      cfg.lr = 1e-2;
      const TrainResult r = train(data, cfg);
      REQUIRE(r.curves.size() == 1);
      double update = 0.0;
      // A vanishing step size leaves the initial weights in place.
      TrainConfig c0 = cfg;
      c0.lr = 1e-300;
      const TrainResult still = train(data, c0);
      const auto a = r.generator.params(), b = still.generator.params();
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i]->value.size(); ++j) update += std::pow(a[i]->value.values[j] - b[i]->value.values[j], 2);
      CHECK(update > 0.0);
    }
  }

  TEST_CASE("seeded training is reproducible") {
    const auto data = small_dataset(3);
    TrainConfig cfg = small_config();
    cfg.niter_decay = 1;
    cfg.batch = 2;
    const TrainResult a = train(data, cfg), b = train(data, cfg);
    REQUIRE(a.curves.size() == 3);
    for (std::size_t i = 0; i < a.curves.size(); ++i) {
      CHECK(a.curves[i].loss_d == b.curves[i].loss_d);
      CHECK(a.curves[i].loss_g == b.curves[i].loss_g);
      CHECK(a.curves[i].d_real == b.curves[i].d_real);
      CHECK(a.curves[i].d_fake == b.curves[i].d_fake);
      CHECK(a.curves[i].lr == lr_at_epoch(cfg, static_cast<int>(i) + 1));
    }
    cfg.seed = 6;
    CHECK(train(data, cfg).curves.back().loss_d != a.curves.back().loss_d);
  }

  TEST_CASE("training slices skip background and respect the cap") {
    PhantomSpec s;
    s.dims = {16, 16, 16};
    const Phantom p = make_phantom(s);
    const auto all = slices_for_training(p.volume, p.labels, Axis::Z, {16, 16});
    CHECK(all.size() <= 16);
    for (const auto& pair : all) {
      bool any = false;
      for (auto v : pair.labels.values) any = any || v != 0;
      CHECK(any);
    }
    CHECK(slices_for_training(p.volume, p.labels, Axis::Z, {16, 16}, 4).size() == 4);
  }

  TEST_CASE("volume synthesis") {
    const auto data = small_dataset(2);
    const TrainResult r = train(data, small_config());
    PhantomSpec s;
    s.dims = {12, 14, 16};
    const LabelVolume labels = make_phantom(s).labels;
    const std::array<const Generator*, 3> gens{&r.generator, &r.generator, &r.generator};
    const OrientedTriplet t = synthesize_volume(gens, labels, 3);
    CHECK(t.x.dims() == labels.dims());
    CHECK(t.y.dims() == labels.dims());
    CHECK(t.z.dims() == labels.dims());
    const OrientedTriplet t2 = synthesize_volume(gens, labels, 3);
    CHECK(t.x == t2.x);
    CHECK(t.z == t2.z);
    CHECK_FALSE(synthesize_volume(gens, labels, 4).x == t.x);
    const LabelVolume too_big(Dims{20, 20, 20});
    CHECK_THROWS_AS(synthesize_volume(gens, too_big, 3), DataError);
  }

  TEST_CASE("parameter files round trip") {
    testing::TempDir dir("model");
    const GanArch arch = tiny_arch();
    Generator g(arch);
    g.init(41);
    Discriminator d(arch);
    d.init(42);
    save_model(dir / "m.fsgn", g, d);
    const LoadedModel m = load_model(dir / "m.fsgn");
    CHECK(m.generator.arch() == arch);
    const auto a = g.params();
    const auto b = m.generator.params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i]->name == b[i]->name);
      for (std::size_t j = 0; j < a[i]->value.size(); ++j)
        CHECK(b[i]->value.values[j] == static_cast<double>(static_cast<float>(a[i]->value.values[j])));
    }
    CHECK(m.discriminator.params().size() == d.params().size());

    {
      std::ofstream os(dir / "bad.fsgn", std::ios::binary);
      os << "NOPE";
    }
    CHECK_THROWS_AS(load_model(dir / "bad.fsgn"), DataError);
    std::ifstream is(dir / "m.fsgn", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 8);
    std::ofstream(dir / "cut.fsgn", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(load_model(dir / "cut.fsgn"), DataError);
  }
}

TEST_CASE("every layer kind passes the shared gradient report" * doctest::test_suite("gan_core")) {
  for (const auto& [name, err] : layer_gradient_report(77)) CHECK_MESSAGE(err < kTolerance, name << " " << err);
}
