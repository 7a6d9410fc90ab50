/**
 * @file fusion.hpp
 * @brief Voxelwise fusion of three per-orientation syntheses into one volume.
 *
 * All kernels are pure voxelwise maps parallelized with OpenMP; outputs do
 * not depend on the thread count.
 */
#pragma once

#include <string>

#include "fetalsyn/volume.hpp"

namespace fetalsyn {

/// Sagittal (x), coronal (y) and axial (z) syntheses on one voxel grid.
struct OrientedTriplet {
  Volume x;
  Volume y;
  Volume z;

  /// Throws DataError unless all three dims are equal.
  void validate() const;
  const Dims& dims() const { return x.dims(); }
};

enum class FusionMethod { Mean, Avg2Closest, RejectOutliers };

const char* method_name(FusionMethod m);  // "mean" / "avg2" / "reject"
FusionMethod parse_method(const std::string& s);

struct FusionParams {
  FusionMethod method = FusionMethod::Mean;
  double m = 2.0;           ///< outlier threshold; larger keeps more values
  double epsilon = 1e-4;    ///< added to the median deviation

  void validate() const;
};

Volume fuse_mean(const OrientedTriplet& t);

/// Mean of the closest pair. Pairs are tried in order (x,y), (y,z), (x,z);
/// the first minimal pair wins ties.
Volume fuse_avg2closest(const OrientedTriplet& t);

/// Median-deviation outlier rejection over the three values at each voxel:
/// values whose distance to the median is at least m times the median
/// distance (plus epsilon) are replaced by the median, then averaged.
Volume fuse_reject_outliers(const OrientedTriplet& t, const FusionParams& p);

Volume fuse(const OrientedTriplet& t, const FusionParams& p);

// Single-voxel rules shared by the kernels and the benchmarks.
namespace voxel {

inline double median3(double a, double b, double c) {
  const double lo = a < b ? a : b;
  const double hi = a < b ? b : a;
  const double m = hi < c ? hi : c;
  return lo > m ? lo : m;
}

inline double mean3(double a, double b, double c) { return (a + b + c) / 3.0; }

inline double avg2closest(double a, double b, double c) {
  const double dxy = a > b ? a - b : b - a;
  const double dyz = b > c ? b - c : c - b;
  const double dxz = a > c ? a - c : c - a;
  const double mxy = 0.5 * (a + b);
  const double myz = 0.5 * (b + c);
  const double mxz = 0.5 * (a + c);
  const double alt = dyz <= dxz ? myz : mxz;
  return (dxy <= dyz && dxy <= dxz) ? mxy : alt;
}

inline double reject_outliers(double a, double b, double c, double m, double eps) {
  const double med = median3(a, b, c);
  const double da = a > med ? a - med : med - a;
  const double db = b > med ? b - med : med - b;
  const double dc = c > med ? c - med : med - c;
  const double mdev = median3(da, db, dc) + eps;
  const double ka = da / mdev < m ? a : med;
  const double kb = db / mdev < m ? b : med;
  const double kc = dc / mdev < m ? c : med;
  return mean3(ka, kb, kc);
}

}  // namespace voxel

}  // namespace fetalsyn
