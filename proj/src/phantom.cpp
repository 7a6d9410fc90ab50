#include "fetalsyn/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace fetalsyn {

std::array<ClassIntensity, kNumClasses> default_class_intensities() {
  constexpr double kStd = 0.03;
  return {{{0.02, 0.01},
           {0.85, kStd},
           {0.45, kStd},
           {0.65, kStd},
           {0.50, kStd},
           {0.90, kStd},
           {0.55, kStd},
           {0.40, kStd}}};
}

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims.extent(a) < kMinPhantomExtent) {
      throw ArgumentError("phantom dims " + to_string(dims) + " too small to fit 7 shells (min " +
                          std::to_string(kMinPhantomExtent) + " per axis)");
    }
  }
  if (!(ga_factor >= 0.0 && ga_factor <= 1.0)) {
    throw ArgumentError("ga_factor must lie in [0, 1], got " + std::to_string(ga_factor));
  }
  if (noise_smoothness < 0) throw ArgumentError("noise_smoothness must be >= 0");
  for (int i = 0; i < kNumClasses; ++i) {
    if (!(class_intensity[i].std >= 0.0)) {
      throw ArgumentError(std::string("negative intensity std for class ") + tissue_name(i));
    }
    for (int j = i + 1; j < kNumClasses; ++j) {
      // 1e-12 absorbs decimal round-off (0.50 - 0.45 < 0.05 in binary)
      if (std::abs(class_intensity[i].mean - class_intensity[j].mean) < 0.05 - 1e-12) {
        throw ArgumentError(std::string("class means of ") + tissue_name(i) + " and " + tissue_name(j) +
                            " closer than 0.05");
      }
    }
  }
}

namespace {

struct Ellipsoid {
  double cu, cv, cw;  // center, brain-normalized coordinates
  double ru, rv, rw;
  bool contains(double u, double v, double w) const {
    const double a = (u - cu) / ru, b = (v - cv) / rv, c = (w - cw) / rw;
    return a * a + b * b + c * c <= 1.0;
  }
};

}  // namespace

LabelVolume phantom_labels(const Dims& dims, double ga_factor) {
  LabelVolume lv(dims, 0);
  const double scale = 0.36 + 0.08 * ga_factor;
  const double ax = scale * dims.nx, ay = scale * dims.ny, az = scale * dims.nz;
  const double cx = 0.5 * (dims.nx - 1), cy = 0.5 * (dims.ny - 1), cz = 0.5 * (dims.nz - 1);

  const double vr = 0.12 + 0.14 * ga_factor;
  const Ellipsoid vent_l{-0.15, 0.0, 0.05, 0.8 * vr, 1.3 * vr, 0.9 * vr};
  const Ellipsoid vent_r{0.15, 0.0, 0.05, 0.8 * vr, 1.3 * vr, 0.9 * vr};
  const Ellipsoid cerebellum{0.0, -0.45, -0.45, 0.40, 0.24, 0.24};
  const Ellipsoid brainstem{0.0, -0.10, -0.55, 0.13, 0.13, 0.32};

  for (int z = 0; z < dims.nz; ++z) {
    const double w = (z - cz) / az;
    for (int y = 0; y < dims.ny; ++y) {
      const double v = (y - cy) / ay;
      for (int x = 0; x < dims.nx; ++x) {
        const double u = (x - cx) / ax;
        const double r = std::sqrt(u * u + v * v + w * w);
        Tissue t = Tissue::Background;
        if (r <= 1.0) t = Tissue::ExternalFluid;
        if (r <= 0.86) t = Tissue::GrayMatter;
        if (r <= 0.72) t = Tissue::WhiteMatter;
        if (r <= 0.42) t = Tissue::DeepGrayMatter;
        if (r <= 0.86 && cerebellum.contains(u, v, w)) t = Tissue::Cerebellum;
        if (r <= 0.86 && brainstem.contains(u, v, w)) t = Tissue::Brainstem;
        if (vent_l.contains(u, v, w) || vent_r.contains(u, v, w)) t = Tissue::Ventricles;
        lv.at(x, y, z) = static_cast<std::uint8_t>(t);
      }
    }
  }
  return lv;
}

namespace {

// One box-blur pass along `axis` with clamp-to-edge borders.
void box_pass(std::vector<double>& data, const Dims& d, int axis, int radius) {
  const int n = d.extent(axis);
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(d.nx)
                                                        : static_cast<std::size_t>(d.nx) * d.ny);
  const int o1 = axis == 0 ? d.ny : d.nx;
  const int o2 = axis == 2 ? d.ny : d.nz;
  std::vector<double> line(static_cast<std::size_t>(n));
  const double inv = 1.0 / (2 * radius + 1);
  for (int b = 0; b < o2; ++b) {
    for (int a = 0; a < o1; ++a) {
      std::size_t base;
      if (axis == 0) base = static_cast<std::size_t>(d.nx) * (a + static_cast<std::size_t>(d.ny) * b);
      else if (axis == 1) base = a + static_cast<std::size_t>(d.nx) * d.ny * b;
      else base = a + static_cast<std::size_t>(d.nx) * b;
      for (int i = 0; i < n; ++i) line[i] = data[base + stride * i];
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) s += line[std::clamp(i + k, 0, n - 1)];
        data[base + stride * i] = s * inv;
      }
    }
  }
}

}  // namespace

Grid3<float> smooth_noise(const Dims& dims, std::uint64_t seed, int radius) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> field(dims.count());
  for (auto& f : field) f = normal(rng);
  if (radius > 0) {
    for (int axis = 0; axis < 3; ++axis) box_pass(field, dims, axis, radius);
    const double gain = std::pow(2.0 * radius + 1.0, 1.5);
    for (auto& f : field) f *= gain;
  }
  std::vector<float> out(field.begin(), field.end());
  return Grid3<float>(dims, std::move(out));
}

Phantom make_phantom(const PhantomSpec& spec) {
  spec.validate();
  Phantom p{Volume(spec.dims), phantom_labels(spec.dims, spec.ga_factor)};
  const auto noise = smooth_noise(spec.dims, spec.seed, spec.noise_smoothness);
  for (std::size_t i = 0; i < p.volume.size(); ++i) {
    const auto& ci = spec.class_intensity[p.labels[i]];
    const double value = ci.mean + ci.std * static_cast<double>(noise[i]);
    p.volume[i] = static_cast<float>(std::clamp(value, 0.0, 1.0));
  }
  return p;
}

OrientedTriplet make_noisy_triplet(const Volume& v, std::uint64_t seed, double sigma) {
  if (!(sigma >= 0.0)) throw ArgumentError("noise sigma must be >= 0");
  auto noisy = [&](std::uint64_t stream) {
    Volume out = v;
    if (sigma == 0.0) return out;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, sigma);
    for (auto& x : out.data()) x = static_cast<float>(std::clamp(x + normal(rng), 0.0, 1.0));
    return out;
  };
  return OrientedTriplet{noisy(0), noisy(1), noisy(2)};
}

}  // namespace fetalsyn
