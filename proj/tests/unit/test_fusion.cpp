#include <algorithm>
#include <array>
#include <random>

#include "doctest.h"
#include "fetalsyn/errors.hpp"
#include "fetalsyn/fusion.hpp"
#include "reference/reference.hpp"
#include "support.hpp"

using namespace fetalsyn;

namespace {

OrientedTriplet single(double a, double b, double c) {
  OrientedTriplet t{Volume(Dims{1, 1, 1}), Volume(Dims{1, 1, 1}), Volume(Dims{1, 1, 1})};
  t.x[0] = static_cast<float>(a);
  t.y[0] = static_cast<float>(b);
  t.z[0] = static_cast<float>(c);
  return t;
}

OrientedTriplet random_triplet(Dims d, std::uint64_t seed) {
  return {testing::random_volume(d, seed), testing::random_volume(d, seed + 1), testing::random_volume(d, seed + 2)};
}

}  // namespace

TEST_SUITE("fusion") {
  TEST_CASE("mean") {
    CHECK(fuse_mean(single(0, 0.3, 0.6))[0] == doctest::Approx(0.3).epsilon(1e-7));
    const Volume v = testing::random_volume({4, 5, 6}, 1);
    CHECK(fuse_mean({v, v, v}) == v);
  }

  TEST_CASE("average of the two closest values") {
    CHECK(fuse_avg2closest(single(1, 2, 10))[0] == 1.5f);
    CHECK(fuse_avg2closest(single(0, 1, 2))[0] == 0.5f);
    CHECK(fuse_avg2closest(single(0.25, 0.25, 0.25))[0] == 0.25f);
    CHECK(fuse_avg2closest(single(5, 0, 4.5))[0] == 4.75f);
    CHECK(fuse_avg2closest(single(0, 3, 2))[0] == 2.5f);
    const OrientedTriplet t = random_triplet({6, 6, 6}, 2);
    CHECK(fuse_avg2closest(t) == reference::fuse_avg2closest(t));
  }

  TEST_CASE("outlier rejection, hand-traced triple") {
    const Volume out = fuse_reject_outliers(single(0, 0, 10), {FusionMethod::RejectOutliers, 2.0, 1e-4});
    CHECK(out[0] == 0.0f);
    const auto ref = reference::reject_outliers_stack({{0.0, 0.0, 10.0}}, 2.0, 1e-4);
    CHECK(ref[0] == 0.0);
    CHECK(fuse_reject_outliers(single(0.4, 0.4, 0.4), {FusionMethod::RejectOutliers, 0.1, 1e-4})[0] == 0.4f);
  }

  TEST_CASE("outlier rejection matches the transcription and reduces to the mean for huge m") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const OrientedTriplet t = random_triplet({4, 4, 4}, 100 + 3 * seed);
      for (double m : {0.5, 2.0}) {
        const Volume fast = fuse_reject_outliers(t, {FusionMethod::RejectOutliers, m, 1e-4});
        const Volume ref = reference::fuse_reject_outliers(t, m, 1e-4);
        for (std::size_t i = 0; i < fast.size(); ++i) CHECK(std::abs(fast[i] - ref[i]) <= 1e-6);
      }
      CHECK(fuse_reject_outliers(t, {FusionMethod::RejectOutliers, 1e9, 1e-4}) == fuse_mean(t));
    }
  }

  TEST_CASE("boundary s == m is replaced") {
    // med 1, deviations (1, 0, 1) -> mdev = 1 + eps; choose m equal to s of the outer values.
    const double eps = 1e-4;
    const double s = 1.0 / (1.0 + eps);
    const Volume out = fuse_reject_outliers(single(0, 1, 2), {FusionMethod::RejectOutliers, s, eps});
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-7));
  }

  TEST_CASE("outputs stay within the per-voxel range for every method") {
    const OrientedTriplet t = random_triplet({5, 5, 5}, 7);
    for (FusionParams p : {FusionParams{FusionMethod::Mean}, FusionParams{FusionMethod::Avg2Closest},
                           FusionParams{FusionMethod::RejectOutliers, 0.5}, FusionParams{FusionMethod::RejectOutliers, 2.0}}) {
      const Volume f = fuse(t, p);
      for (std::size_t i = 0; i < f.size(); ++i) {
        const float lo = std::min({t.x[i], t.y[i], t.z[i]});
        const float hi = std::max({t.x[i], t.y[i], t.z[i]});
        CHECK(f[i] >= lo - 1e-6f);
        CHECK(f[i] <= hi + 1e-6f);
      }
      const Volume v = t.x;
      CHECK(fuse({v, v, v}, p) == v);
    }
  }

  TEST_CASE("mean and outlier rejection are invariant under permuting orientations") {
    const OrientedTriplet t = random_triplet({4, 4, 4}, 9);
    const OrientedTriplet p{t.z, t.x, t.y};
    for (std::size_t i = 0; i < t.x.size(); ++i) CHECK(fuse_mean(t)[i] == doctest::Approx(fuse_mean(p)[i]).epsilon(1e-7));
    const FusionParams r{FusionMethod::RejectOutliers, 2.0, 1e-4};
    const Volume a = fuse_reject_outliers(t, r), b = fuse_reject_outliers(p, r);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-7));
  }

  TEST_CASE("dispatch and validation") {
    const OrientedTriplet t = random_triplet({3, 3, 3}, 11);
    CHECK(fuse(t, {FusionMethod::Mean}) == fuse_mean(t));
    CHECK(fuse(t, {FusionMethod::Avg2Closest}) == fuse_avg2closest(t));
    CHECK(fuse(t, {FusionMethod::RejectOutliers, 0.5}) == fuse_reject_outliers(t, {FusionMethod::RejectOutliers, 0.5}));
    CHECK_THROWS_AS(fuse(t, {FusionMethod::RejectOutliers, 0.0}), ArgumentError);
    CHECK_THROWS_AS(fuse(t, {FusionMethod::RejectOutliers, 1.0, 0.0}), ArgumentError);
    CHECK_THROWS_AS(reference::reject_outliers_stack({{1, 2, 3}}, -1.0), ArgumentError);
    OrientedTriplet bad = t;
    bad.z = testing::random_volume({3, 3, 2}, 1);
    CHECK_THROWS_AS(fuse_mean(bad), DataError);
    CHECK(parse_method("avg2") == FusionMethod::Avg2Closest);
    CHECK_THROWS_AS(parse_method("median"), ArgumentError);
  }
}
