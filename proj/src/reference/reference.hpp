// Serial reference implementations. These are deliberately direct (no
// separable filtering, no shared voxel helpers) and are only linked into
// tests and benchmarks.
#pragma once

#include <array>
#include <vector>

#include "fetalsyn/fusion.hpp"
#include "fetalsyn/label_morph.hpp"
#include "fetalsyn/metrics.hpp"

namespace fetalsyn::reference {

/// Full-window SSIM: every window position evaluated with the dense 2D/3D
/// weight array.
double ssim_direct(const Volume& a, const Volume& b, const SsimParams& p, const Mask* mask = nullptr);

double mse(const Volume& a, const Volume& b);
double pearson(const Volume& a, const Volume& b);
double mutual_information(const Volume& a, const Volume& b, int bins);

Volume fuse_mean(const OrientedTriplet& t);
Volume fuse_avg2closest(const OrientedTriplet& t);

/// Line-by-line transcription of the numpy outlier-rejection routine on an
/// (N, 3) stack: median, |data - median|, median deviation + epsilon,
/// ratio, where(ratio < m, data, median), mean.
std::vector<double> reject_outliers_stack(const std::vector<std::array<double, 3>>& data, double m,
                                          double epsilon = 1e-4);
Volume fuse_reject_outliers(const OrientedTriplet& t, double m, double epsilon = 1e-4);

/// Forward expansion: every set voxel switches on each of its neighbors.
Mask binary_dilate(const Mask& mask, int connectivity, int iterations);

}  // namespace fetalsyn::reference
