/**
 * @file metrics.hpp
 * @brief Similarity metrics between an original and a synthesized volume,
 *        plus the Frechet distance between feature distributions.
 *
 * Reductions are split into fixed-size chunks whose partial sums are added in
 * chunk order, so results are bit-identical for any OpenMP thread count.
 */
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <vector>

#include "fetalsyn/volume.hpp"

namespace fetalsyn {

/// Min-max rescale to [0, 1]; a constant volume maps to all zeros.
Volume normalize_intensity(const Volume& v);

// Every pairwise metric accepts an optional mask (nonzero = include). With a
// mask, SSIM averages only window positions whose center voxel is inside.

double mse(const Volume& a, const Volume& b, const Mask* mask = nullptr);

enum class WindowKind { Gaussian, Uniform };

struct SsimParams {
  int window = 7;
  WindowKind kind = WindowKind::Gaussian;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
  bool volumetric = true;  ///< 3D window; otherwise a 2D window per axial (z) slice

  /// 11x11 Gaussian, sigma 1.5, per z slice.
  static SsimParams planar();
  /// 7x7x7 Gaussian, sigma 1.5.
  static SsimParams volumetric3d();

  void validate() const;
};

/// Mean SSIM over all window positions that fit entirely inside the grid.
double ssim(const Volume& a, const Volume& b, const SsimParams& p, const Mask* mask = nullptr);

/// Normalized window weights (length `window`, or window^2 / window^3 flattened
/// x-fastest when `dims` is 2 or 3). Shared with the reference implementation.
std::vector<double> ssim_window(const SsimParams& p, int dims);

struct PearsonResult {
  double value = 0.0;
  /// Set when either input has zero variance; value is then 0.
  bool degenerate = false;
};

PearsonResult pearson_detail(const Volume& a, const Volume& b, const Mask* mask = nullptr);
double pearson(const Volume& a, const Volume& b, const Mask* mask = nullptr);

/// Shannon entropy (nats) of `bins` equal-width bins over [0, 1].
double entropy(const Volume& a, int bins, const Mask* mask = nullptr);

/// Mutual information (nats) from the joint histogram with `bins` equal-width
/// bins per axis over [0, 1]. Values outside [0, 1] fall into the edge bins.
double mutual_information(const Volume& a, const Volume& b, int bins, const Mask* mask = nullptr);

inline int histogram_bin(double v, int bins) {
  if (!(v > 0.0)) return 0;
  const int b = static_cast<int>(v * bins);
  return b >= bins ? bins - 1 : b;
}

double self_defined_score(double ssim, double corr);

struct ScoreSet {
  double mse = 0.0;
  double ssim = 0.0;
  double corr = 0.0;
  double mi = 0.0;
  double self_defined = 0.0;
  bool corr_degenerate = false;
};

struct ScoreParams {
  SsimParams ssim = SsimParams::volumetric3d();
  int bins = 64;
};

/// All five metrics on the min-max normalized inputs.
ScoreSet score_pair(const Volume& a, const Volume& b, const ScoreParams& p = {},
                    const Mask* mask = nullptr);

// ---------------------------------------------------------------------------
// Frechet distance

struct FeatureStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::size_t n = 0;
};

/// Column means and (n-1)-normalized covariance of an n x d sample matrix.
FeatureStats gaussian_stats(const Eigen::MatrixXd& features);

/// Symmetric PSD square root by eigendecomposition. Eigenvalues in
/// [-1e-8 ||s||, 0) are clamped to zero; anything lower is a NumericError.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& s);

/// ||mu_p - mu_q||^2 + tr(S_p + S_q - 2 (S_p^1/2 S_q S_p^1/2)^1/2).
double frechet_distance(const FeatureStats& p, const FeatureStats& q);

/// Block-average features: each volume is averaged over a g x g x g grid of
/// blocks (g^3 = d) and flattened x-fastest. One row per volume.
Eigen::MatrixXd feature_extract(const std::vector<Volume>& volumes, int d);

}  // namespace fetalsyn
