#include <cmath>
#include <random>

#include "doctest.h"
#include "fetalsyn/errors.hpp"
#include "fetalsyn/label_morph.hpp"
#include "fetalsyn/phantom.hpp"
#include "reference/reference.hpp"

using namespace fetalsyn;

namespace {

std::size_t popcount(const Mask& m) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) n += m[i] != 0;
  return n;
}

Mask center_voxel(int n) {
  Mask m(Dims{n, n, n});
  m.at(n / 2, n / 2, n / 2) = 1;
  return m;
}

constexpr auto kVentricles = static_cast<std::uint8_t>(Tissue::Ventricles);
constexpr auto kWhite = static_cast<std::uint8_t>(Tissue::WhiteMatter);

}  // namespace

TEST_SUITE("label_morph") {
  TEST_CASE("unit balls") {
    CHECK(popcount(binary_dilate(center_voxel(5), {6}, 1)) == 7);
    CHECK(popcount(binary_dilate(center_voxel(5), {18}, 1)) == 19);
    CHECK(popcount(binary_dilate(center_voxel(5), {26}, 1)) == 27);
    CHECK(popcount(binary_dilate(center_voxel(5), {4}, 1)) == 5);
    CHECK(popcount(binary_dilate(center_voxel(5), {8}, 1)) == 9);
    CHECK(binary_dilate(center_voxel(5), {26}, 0) == center_voxel(5));
    CHECK(popcount(binary_dilate(center_voxel(9), {6}, 2)) == 25);
  }

  TEST_CASE("matches brute-force expansion on random 8^3 grids") {
    std::mt19937_64 rng(1);
    std::bernoulli_distribution coin(0.04);
    for (int trial = 0; trial < 5; ++trial) {
      Mask m(Dims{8, 8, 8});
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = coin(rng);
      for (int conn : {4, 8, 6, 18, 26})
        for (int it = 0; it <= 3; ++it)
          CHECK(binary_dilate(m, {conn}, it) == reference::binary_dilate(m, conn, it));
    }
  }

  TEST_CASE("structuring element validation") {
    CHECK_THROWS_AS(binary_dilate(center_voxel(3), {5}, 1), ArgumentError);
    CHECK_THROWS_AS(binary_dilate(center_voxel(3), {6}, -1), ArgumentError);
  }

  TEST_CASE("hydrocephalus grading") {
    const LabelVolume lv = phantom_labels({40, 40, 40}, 0.5);
    HydroSpec h;
    CHECK(apply_hydrocephalus(lv, h) == lv);

    std::size_t prev = lv.class_counts()[kVentricles];
    LabelVolume prev_lv = lv;
    for (int g = 1; g <= 3; ++g) {
      h.grade = g;
      const LabelVolume out = apply_hydrocephalus(lv, h);
      const auto c = out.class_counts();
      CHECK(c[kVentricles] > prev);
      CHECK(c[0] == lv.class_counts()[0]);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (prev_lv[i] == kVentricles) CHECK(out[i] == kVentricles);
        if (out[i] != lv[i]) CHECK(out[i] == kVentricles);
      }
      prev = c[kVentricles];
      prev_lv = out;
    }
  }

  TEST_CASE("consuming only white matter trades voxel for voxel") {
    const LabelVolume lv = phantom_labels({40, 40, 40}, 0.6);
    HydroSpec h;
    h.grade = 2;
    h.consumable = {kWhite};
    const auto before = lv.class_counts();
    const auto after = apply_hydrocephalus(lv, h).class_counts();
    CHECK(after[kVentricles] - before[kVentricles] == before[kWhite] - after[kWhite]);
    for (int k = 0; k < kNumClasses; ++k)
      if (k != kVentricles && k != kWhite) CHECK(after[static_cast<std::size_t>(k)] == before[static_cast<std::size_t>(k)]);
  }

  TEST_CASE("spec validation") {
    const LabelVolume lv = phantom_labels({16, 16, 16}, 0.5);
    HydroSpec h;
    h.consumable = {kVentricles};
    CHECK_THROWS_AS(apply_hydrocephalus(lv, h), ArgumentError);
    h = HydroSpec{};
    h.grade = -1;
    CHECK_THROWS_AS(apply_hydrocephalus(lv, h), ArgumentError);
    h = HydroSpec{};
    LabelVolume empty(Dims{4, 4, 4});
    CHECK_THROWS_AS(apply_hydrocephalus(empty, h), DataError);
    h = HydroSpec{};
    CHECK(h.effective_consumable().count(0) == 0);
    CHECK(h.effective_consumable().count(kVentricles) == 0);
    CHECK(h.effective_consumable().size() == 6);
  }

  TEST_CASE("mirror intensity transform") {
    PhantomSpec s;
    s.dims = {40, 40, 40};
    const Phantom p = make_phantom(s);
    CHECK(mirror_intensity_transform(p.volume, p.labels, p.labels, kVentricles, 1) == p.volume);

    HydroSpec h;
    h.grade = 2;
    const LabelVolume after = apply_hydrocephalus(p.labels, h);
    const Volume out = mirror_intensity_transform(p.volume, p.labels, after, kVentricles, 1);
    CHECK(out == mirror_intensity_transform(p.volume, p.labels, after, kVentricles, 1));

    double sum = 0, sum2 = 0, changed = 0, csum = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (p.labels[i] == kVentricles) {
        sum += p.volume[i];
        sum2 += static_cast<double>(p.volume[i]) * p.volume[i];
        csum += 1;
      }
      if (after[i] != p.labels[i]) continue;
      CHECK(out[i] == p.volume[i]);
    }
    const double cls_mean = sum / csum;
    const double cls_std = std::sqrt((sum2 - csum * cls_mean * cls_mean) / (csum - 1));
    double region = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (after[i] != p.labels[i]) {
        region += out[i];
        changed += 1;
      }
    REQUIRE(changed > 0);
    CHECK(std::abs(region / changed - cls_mean) <= 2 * cls_std / std::sqrt(changed));

    LabelVolume no_vent = p.labels;
    for (std::size_t i = 0; i < no_vent.size(); ++i)
      if (no_vent[i] == kVentricles) no_vent[i] = kWhite;
    CHECK_THROWS_AS(mirror_intensity_transform(p.volume, no_vent, after, kVentricles, 1), DataError);
  }
}
