/**
 * @file volume.hpp
 * @brief Dense 3D grids: intensity volumes, label volumes and masks.
 *
 * All grids use one linear voxel order: x fastest, then y, then z, i.e.
 * index = x + nx * (y + ny * z). Every module relies on this.
 */
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fetalsyn/errors.hpp"

namespace fetalsyn {

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  int extent(int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  bool positive() const { return nx > 0 && ny > 0 && nz > 0; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

/// Voxel spacing in millimeters.
struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

template <class T>
class Grid3 {
 public:
  using value_type = T;

  Grid3() = default;
  explicit Grid3(Dims dims, T fill = T{}) : dims_(dims), data_(dims.count(), fill) {
    if (!dims.positive()) {
      throw ArgumentError("grid dims must be positive, got " + to_string(dims));
    }
  }
  Grid3(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    if (!dims.positive()) {
      throw ArgumentError("grid dims must be positive, got " + to_string(dims));
    }
    if (data_.size() != dims.count()) {
      throw ArgumentError("voxel count " + std::to_string(data_.size()) +
                          " does not match dims " + to_string(dims));
    }
  }

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.nx) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_.ny) * static_cast<std::size_t>(z));
  }

  T& at(int x, int y, int z) { return data_[index(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data_[index(x, y, z)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

/// Scalar intensity volume. Intensities are finite after load.
class Volume : public Grid3<float> {
 public:
  using Grid3<float>::Grid3;
  Volume() = default;
  explicit Volume(Grid3<float> g) : Grid3<float>(std::move(g)) {}

  std::optional<Spacing> spacing;

  friend bool operator==(const Volume& a, const Volume& b) {
    return static_cast<const Grid3<float>&>(a) == static_cast<const Grid3<float>&>(b) &&
           a.spacing == b.spacing;
  }
};

/// Tissue classes in fixed order; 0 is background.
enum class Tissue : std::uint8_t {
  Background = 0,
  ExternalFluid = 1,
  GrayMatter = 2,
  WhiteMatter = 3,
  DeepGrayMatter = 4,
  Ventricles = 5,
  Cerebellum = 6,
  Brainstem = 7,
};

inline constexpr int kNumClasses = 8;  // background + 7 tissues
inline constexpr std::uint8_t kMaxLabel = 7;

const char* tissue_name(int label);

/// Per-voxel class ids in [0, 7].
class LabelVolume : public Grid3<std::uint8_t> {
 public:
  LabelVolume() = default;
  explicit LabelVolume(Dims dims, std::uint8_t fill = 0);
  LabelVolume(Dims dims, std::vector<std::uint8_t> labels);

  /// Throws DataError naming the first voxel outside [0, 7].
  void validate() const;
  std::array<std::size_t, kNumClasses> class_counts() const;
};

/// Boolean grid stored as 0/1 bytes.
using Mask = Grid3<std::uint8_t>;

Mask brain_mask(const LabelVolume& labels);

void require_same_dims(const Dims& a, const Dims& b, const char* what);

}  // namespace fetalsyn
