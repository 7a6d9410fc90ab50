/**
 * @file label_morph.hpp
 * @brief Label-map morphology: graded ventricle dilation (synthetic
 *        hydrocephalus) and the matching intensity-volume edit.
 */
#pragma once

#include <cstdint>
#include <set>

#include "fetalsyn/volume.hpp"

namespace fetalsyn {

/// Neighborhood: 6/18/26 in 3D, or 4/8 within each z plane.
struct StructElem {
  int connectivity = 6;

  void validate() const;
  bool planar() const { return connectivity == 4 || connectivity == 8; }
};

/// Composed from 3-voxel line passes, each parallel over z planes. Output is 0/1.
Mask binary_dilate(const Mask& mask, const StructElem& elem, int iterations);

struct HydroSpec {
  std::uint8_t target_class = static_cast<std::uint8_t>(Tissue::Ventricles);
  int grade = 0;
  /// Labels the growing target may overwrite. Empty means "every tissue
  /// except background and the target".
  std::set<std::uint8_t> consumable;
  StructElem elem;

  std::set<std::uint8_t> effective_consumable() const;
  void validate() const;
};

/// Dilates the target mask `grade` times and relabels newly covered voxels
/// whose current label is consumable. Other voxels are untouched.
LabelVolume apply_hydrocephalus(const LabelVolume& lv, const HydroSpec& spec);

/// Voxels whose label changed to `target_class` between `before` and `after`
/// are redrawn from N(mean, std) of the target class intensities of `v`
/// (measured on `before`); everything else is copied bit-for-bit.
Volume mirror_intensity_transform(const Volume& v, const LabelVolume& before, const LabelVolume& after,
                                  std::uint8_t target_class, std::uint64_t seed);

}  // namespace fetalsyn
