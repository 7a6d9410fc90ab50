/**
 * @file volume_io.hpp
 * @brief NIfTI-1 / raw volume files and orientation-wise slicing.
 *
 * Supported NIfTI-1 subset: single-file uncompressed `.nii`, little-endian,
 * scalar datatypes uint8, int16 and float32. The affine is written from the
 * voxel spacing but never interpreted on read.
 *
 * The raw format is little-endian voxel data plus a sidecar `<path>.hdr`:
 *
 *     dims: nx ny nz
 *     dtype: f32
 *     order: x-fastest
 */
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fetalsyn/volume.hpp"

namespace fetalsyn {

enum class FileFormat { Nifti1, Raw };

/// `.nii` selects NIfTI-1, `.raw` selects raw; anything else is an ArgumentError.
FileFormat format_from_path(const std::filesystem::path& path);

Volume read_volume(const std::filesystem::path& path, FileFormat format);
Volume read_volume(const std::filesystem::path& path);

/// Writes float32 data (NIfTI-1 with slope 1, intercept 0).
void write_volume(const Volume& v, const std::filesystem::path& path, FileFormat format);
void write_volume(const Volume& v, const std::filesystem::path& path);

/// Labels are read through the scalar path and must be integers in [0, 7].
LabelVolume read_labels(const std::filesystem::path& path, FileFormat format);
LabelVolume read_labels(const std::filesystem::path& path);

/// Written as uint8 for NIfTI-1, float32 for raw.
void write_labels(const LabelVolume& lv, const std::filesystem::path& path, FileFormat format);
void write_labels(const LabelVolume& lv, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Slicing

enum class Axis { X = 0, Y = 1, Z = 2 };  // sagittal, coronal, axial

const char* axis_name(Axis a);    // "x" / "y" / "z"
Axis parse_axis(const std::string& s);

struct Canvas {
  int w = 256;
  int h = 256;
  friend bool operator==(const Canvas&, const Canvas&) = default;
};

template <class T>
struct Plane {
  int w = 0;
  int h = 0;
  std::vector<T> values;  // u fastest

  Plane() = default;
  Plane(int w_, int h_, T fill = T{}) : w(w_), h(h_), values(static_cast<std::size_t>(w_) * h_, fill) {}
  T& at(int u, int v) { return values[static_cast<std::size_t>(u) + static_cast<std::size_t>(w) * v]; }
  const T& at(int u, int v) const {
    return values[static_cast<std::size_t>(u) + static_cast<std::size_t>(w) * v];
  }
  friend bool operator==(const Plane&, const Plane&) = default;
};

/// In-plane coordinates per axis: X -> (y, z), Y -> (x, z), Z -> (x, y).
template <class T>
struct SliceStack {
  Axis axis = Axis::Z;
  Canvas canvas;
  std::vector<Plane<T>> slices;
};

/// Native in-plane size (w, h) of `dims` when sliced along `axis`.
Canvas plane_size(const Dims& dims, Axis axis);

SliceStack<float> extract_slices(const Volume& v, Axis axis, Canvas canvas);
SliceStack<std::uint8_t> extract_slices(const LabelVolume& lv, Axis axis, Canvas canvas);

template <class G>
struct Restacked {
  G volume;
  /// Voxels of the target grid that no slice covered (cropped away); zero-filled.
  std::size_t uncovered_voxels = 0;
};

Restacked<Volume> restack(const SliceStack<float>& s, Axis axis, Dims target);
Restacked<LabelVolume> restack(const SliceStack<std::uint8_t>& s, Axis axis, Dims target);

}  // namespace fetalsyn
