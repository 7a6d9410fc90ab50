#include "fetalsyn/label_morph.hpp"

#include <array>
#include <cmath>
#include <random>
#include <vector>

namespace fetalsyn {

void StructElem::validate() const {
  switch (connectivity) {
    case 4: case 6: case 8: case 18: case 26: return;
    default:
      throw ArgumentError("connectivity must be one of 4, 8, 6, 18, 26; got " + std::to_string(connectivity));
  }
}

namespace {

// 3-voxel line dilation along one axis (0 = x, 1 = y, 2 = z).
Mask line_dilate(const Mask& in, int axis) {
  const Dims d = in.dims();
  Mask out(d, 0);
  const std::ptrdiff_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : static_cast<std::ptrdiff_t>(d.nx) * d.ny;
  const int extent = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
  const std::uint8_t* src = &in[0];
  std::uint8_t* dst = &out[0];
#pragma omp parallel for schedule(static)
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      const std::ptrdiff_t row = (static_cast<std::ptrdiff_t>(z) * d.ny + y) * d.nx;
      const std::uint8_t* c = src + row;
      std::uint8_t* o = dst + row;
      if (axis == 0) {
        for (int x = 0; x < d.nx; ++x) {
          std::uint8_t v = c[x];
          if (x > 0) v |= c[x - 1];
          if (x + 1 < d.nx) v |= c[x + 1];
          o[x] = v;
        }
        continue;
      }
      const int pos = axis == 1 ? y : z;
      const std::uint8_t* lo = pos > 0 ? c - stride : c;
      const std::uint8_t* hi = pos + 1 < extent ? c + stride : c;
      for (int x = 0; x < d.nx; ++x) o[x] = c[x] | lo[x] | hi[x];
    }
  }
  return out;
}

void merge(Mask& acc, const Mask& m) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(acc.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) acc[i] |= m[i];
}

// One iteration, written as unions and compositions of line dilations.
Mask dilate_once(const Mask& m, int connectivity) {
  switch (connectivity) {
    case 4: {
      Mask r = line_dilate(m, 0);
      merge(r, line_dilate(m, 1));
      return r;
    }
    case 8: return line_dilate(line_dilate(m, 0), 1);
    case 6: {
      Mask r = line_dilate(m, 0);
      merge(r, line_dilate(m, 1));
      merge(r, line_dilate(m, 2));
      return r;
    }
    case 18: {
      const Mask lx = line_dilate(m, 0);
      Mask r = line_dilate(lx, 1);
      merge(r, line_dilate(lx, 2));
      merge(r, line_dilate(line_dilate(m, 1), 2));
      return r;
    }
    default: return line_dilate(line_dilate(line_dilate(m, 0), 1), 2);
  }
}

}  // namespace

Mask binary_dilate(const Mask& mask, const StructElem& elem, int iterations) {
  elem.validate();
  if (iterations < 0) throw ArgumentError("dilation iterations must be >= 0");
  Mask cur = mask;
  for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = cur[i] != 0 ? 1 : 0;
  for (int it = 0; it < iterations; ++it) cur = dilate_once(cur, elem.connectivity);
  return cur;
}

std::set<std::uint8_t> HydroSpec::effective_consumable() const {
  if (!consumable.empty()) return consumable;
  std::set<std::uint8_t> all;
  for (int c = 1; c <= kMaxLabel; ++c) {
    if (c != target_class) all.insert(static_cast<std::uint8_t>(c));
  }
  return all;
}

void HydroSpec::validate() const {
  elem.validate();
  if (target_class > kMaxLabel) throw ArgumentError("target class must be in [0, 7]");
  if (grade < 0) throw ArgumentError("grade must be >= 0");
  for (auto c : consumable) {
    if (c > kMaxLabel) throw ArgumentError("consumable label " + std::to_string(c) + " outside [0, 7]");
    if (c == target_class) throw ArgumentError("target class cannot be consumable");
  }
}

LabelVolume apply_hydrocephalus(const LabelVolume& lv, const HydroSpec& spec) {
  spec.validate();
  Mask target(lv.dims(), 0);
  bool present = false;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    if (lv[i] == spec.target_class) {
      target[i] = 1;
      present = true;
    }
  }
  if (!present) {
    throw DataError(std::string("target class ") + std::to_string(spec.target_class) + " (" +
                    tissue_name(spec.target_class) + ") absent from label volume");
  }
  const Mask grown = binary_dilate(target, spec.elem, spec.grade);
  std::array<bool, kNumClasses> eats{};
  for (auto c : spec.effective_consumable()) eats[c] = true;
  LabelVolume out = lv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (grown[i] != 0 && target[i] == 0 && eats[out[i]]) out[i] = spec.target_class;
  }
  return out;
}

Volume mirror_intensity_transform(const Volume& v, const LabelVolume& before, const LabelVolume& after,
                                  std::uint8_t target_class, std::uint64_t seed) {
  require_same_dims(v.dims(), before.dims(), "mirror_intensity_transform volume/before");
  require_same_dims(v.dims(), after.dims(), "mirror_intensity_transform volume/after");
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (before[i] != target_class) continue;
    sum += v[i];
    ++n;
  }
  if (n == 0) {
    throw DataError(std::string("class ") + tissue_name(target_class) + " empty in the original labels");
  }
  const double mean = sum / static_cast<double>(n);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (before[i] != target_class) continue;
    const double d = v[i] - mean;
    sq += d * d;
  }
  const double sd = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;

  Volume out = v;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (after[i] == target_class && before[i] != target_class) {
      out[i] = static_cast<float>(mean + sd * normal(rng));
    }
  }
  return out;
}

}  // namespace fetalsyn
