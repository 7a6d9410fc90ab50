/**
 * @file phantom.hpp
 * @brief Procedural seven-class brain phantoms and noisy orientation triplets.
 *
 * Phantoms stand in for clinical data in every desk-scale experiment. Shapes
 * are nested ellipsoids, not anatomy; intensities are configuration.
 */
#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "fetalsyn/fusion.hpp"
#include "fetalsyn/volume.hpp"

namespace fetalsyn {

struct ClassIntensity {
  double mean = 0.0;
  double std = 0.0;
};

/// Background, external fluid, gray matter, white matter, deep gray matter,
/// ventricles, cerebellum, brainstem (T2-like: fluid bright).
std::array<ClassIntensity, kNumClasses> default_class_intensities();

struct PhantomSpec {
  Dims dims{64, 64, 64};
  std::uint64_t seed = 0;
  /// Structure scale in [0, 1]; a stand-in for gestational age 20-35 weeks.
  double ga_factor = 0.5;
  std::array<ClassIntensity, kNumClasses> class_intensity = default_class_intensities();
  /// Box-blur radius (voxels) of the correlated noise field; 0 gives white noise.
  int noise_smoothness = 2;

  /// Throws ArgumentError if means are closer than 0.05 or any std is negative.
  void validate() const;
};

struct Phantom {
  Volume volume;
  LabelVolume labels;
};

/// Smallest extent (per axis) that fits all seven shells.
inline constexpr int kMinPhantomExtent = 8;

Phantom make_phantom(const PhantomSpec& spec);

/// Label geometry only (no intensities, no RNG).
LabelVolume phantom_labels(const Dims& dims, double ga_factor);

/// Unit-variance smooth Gaussian field: white noise box-blurred with the
/// given radius and rescaled by (2r+1)^(3/2).
Grid3<float> smooth_noise(const Dims& dims, std::uint64_t seed, int radius);

/// Three copies of `v` with independent additive N(0, sigma^2) noise, clamped to [0, 1].
OrientedTriplet make_noisy_triplet(const Volume& v, std::uint64_t seed, double sigma);

}  // namespace fetalsyn
