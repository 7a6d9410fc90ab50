#include "fetalsyn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace fetalsyn {
namespace {

constexpr std::size_t kChunk = 4096;

// Sum of term(i) over [0, n) with a fixed chunk decomposition.
template <class Term>
double chunked_sum(std::size_t n, Term term) {
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
    const std::size_t hi = std::min(n, lo + kChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    partial[static_cast<std::size_t>(c)] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

void check_pair(const Volume& a, const Volume& b, const Mask* mask, const char* what) {
  require_same_dims(a.dims(), b.dims(), what);
  if (mask != nullptr) require_same_dims(a.dims(), mask->dims(), what);
}

std::size_t mask_count(const Mask* mask, std::size_t n) {
  if (mask == nullptr) return n;
  std::size_t c = 0;
  for (auto m : mask->data()) c += m != 0 ? 1 : 0;
  return c;
}

std::size_t require_nonempty(const Mask* mask, std::size_t n, const char* what) {
  const std::size_t c = mask_count(mask, n);
  if (c == 0) throw DataError(std::string(what) + ": mask selects no voxels");
  return c;
}

}  // namespace

Volume normalize_intensity(const Volume& v) {
  const auto [lo_it, hi_it] = std::minmax_element(v.data().begin(), v.data().end());
  const double lo = *lo_it, hi = *hi_it;
  Volume out(v.dims(), 0.0f);
  out.spacing = v.spacing;
  if (!(hi > lo)) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(v[i]) - lo) / range);
  }
  return out;
}

double mse(const Volume& a, const Volume& b, const Mask* mask) {
  check_pair(a, b, mask, "mse");
  const std::size_t n = require_nonempty(mask, a.size(), "mse");
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  const std::uint8_t* pm = mask != nullptr ? mask->data().data() : nullptr;
  const double s = chunked_sum(a.size(), [&](std::size_t i) {
    if (pm != nullptr && pm[i] == 0) return 0.0;
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    return d * d;
  });
  return s / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// SSIM

SsimParams SsimParams::planar() {
  SsimParams p;
  p.window = 11;
  p.volumetric = false;
  return p;
}

SsimParams SsimParams::volumetric3d() { return SsimParams{}; }

void SsimParams::validate() const {
  if (window < 3 || window % 2 == 0) {
    throw ArgumentError("SSIM window must be odd and >= 3, got " + std::to_string(window));
  }
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw ArgumentError("SSIM k1, k2 must be positive");
  if (!(data_range > 0.0)) throw ArgumentError("SSIM data range must be positive");
  if (kind == WindowKind::Gaussian && !(sigma > 0.0)) throw ArgumentError("SSIM sigma must be positive");
}

namespace {

std::vector<double> window_1d(const SsimParams& p) {
  std::vector<double> g(static_cast<std::size_t>(p.window), 1.0);
  if (p.kind == WindowKind::Gaussian) {
    const double c = 0.5 * (p.window - 1);
    for (int i = 0; i < p.window; ++i) {
      const double t = i - c;
      g[static_cast<std::size_t>(i)] = std::exp(-t * t / (2.0 * p.sigma * p.sigma));
    }
  }
  double s = 0.0;
  for (double v : g) s += v;
  for (double& v : g) v /= s;
  return g;
}

struct Moments {
  double ma, mb, aa, bb, ab;
};

inline double ssim_index(const Moments& m, double c1, double c2) {
  const double va = m.aa - m.ma * m.ma;
  const double vb = m.bb - m.mb * m.mb;
  const double cov = m.ab - m.ma * m.mb;
  return ((2.0 * m.ma * m.mb + c1) * (2.0 * cov + c2)) /
         ((m.ma * m.ma + m.mb * m.mb + c1) * (va + vb + c2));
}

// Valid-mode separable 2D filtering of the five moment maps of one z plane.
// Output planes are ox*oy, x fastest.
void filter_plane(const float* a, const float* b, int nx, int ny, const std::vector<double>& g,
                  std::array<std::vector<double>, 5>& out) {
  const int w = static_cast<int>(g.size());
  const int ox = nx - w + 1, oy = ny - w + 1;
  std::array<std::vector<double>, 5> rows;
  for (auto& r : rows) r.assign(static_cast<std::size_t>(ox) * ny, 0.0);
  for (int y = 0; y < ny; ++y) {
    const float* ra = a + static_cast<std::size_t>(y) * nx;
    const float* rb = b + static_cast<std::size_t>(y) * nx;
    for (int x = 0; x < ox; ++x) {
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0;
      for (int k = 0; k < w; ++k) {
        const double va = ra[x + k], vb = rb[x + k], gk = g[static_cast<std::size_t>(k)];
        s0 += gk * va;
        s1 += gk * vb;
        s2 += gk * (va * va);
        s3 += gk * (vb * vb);
        s4 += gk * (va * vb);
      }
      const std::size_t o = static_cast<std::size_t>(x) + static_cast<std::size_t>(ox) * y;
      rows[0][o] = s0;
      rows[1][o] = s1;
      rows[2][o] = s2;
      rows[3][o] = s3;
      rows[4][o] = s4;
    }
  }
  for (int m = 0; m < 5; ++m) {
    auto& dst = out[static_cast<std::size_t>(m)];
    dst.assign(static_cast<std::size_t>(ox) * oy, 0.0);
    const auto& src = rows[static_cast<std::size_t>(m)];
    for (int y = 0; y < oy; ++y) {
      for (int x = 0; x < ox; ++x) {
        double s = 0.0;
        for (int k = 0; k < w; ++k) {
          s += g[static_cast<std::size_t>(k)] * src[static_cast<std::size_t>(x) + static_cast<std::size_t>(ox) * (y + k)];
        }
        dst[static_cast<std::size_t>(x) + static_cast<std::size_t>(ox) * y] = s;
      }
    }
  }
}

}  // namespace

std::vector<double> ssim_window(const SsimParams& p, int dims) {
  const auto g = window_1d(p);
  if (dims == 1) return g;
  const std::size_t w = g.size();
  std::vector<double> out;
  if (dims == 2) {
    out.resize(w * w);
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t i = 0; i < w; ++i) out[i + w * j] = g[i] * g[j];
  } else {
    out.resize(w * w * w);
    for (std::size_t k = 0; k < w; ++k)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t i = 0; i < w; ++i) out[i + w * (j + w * k)] = g[i] * g[j] * g[k];
  }
  return out;
}

double ssim(const Volume& a, const Volume& b, const SsimParams& p, const Mask* mask) {
  p.validate();
  check_pair(a, b, mask, "ssim");
  const Dims d = a.dims();
  const int w = p.window, h = w / 2;
  const int evaluated = p.volumetric ? 3 : 2;
  for (int ax = 0; ax < evaluated; ++ax) {
    if (d.extent(ax) < w) {
      throw DataError("ssim: dims " + to_string(d) + " smaller than window " + std::to_string(w));
    }
  }
  const auto g = window_1d(p);
  const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
  const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
  const int ox = d.nx - w + 1, oy = d.ny - w + 1;
  const std::size_t plane = static_cast<std::size_t>(d.nx) * d.ny;
  const auto inside = [&](int x, int y, int z) { return mask == nullptr || mask->at(x, y, z) != 0; };

  // Each output plane contributes one partial sum; planes are added in order.
  const int nplanes = p.volumetric ? d.nz - w + 1 : d.nz;
  std::vector<double> sums(static_cast<std::size_t>(nplanes), 0.0);
  std::vector<std::size_t> counts(static_cast<std::size_t>(nplanes), 0);

  if (!p.volumetric) {
#pragma omp parallel for schedule(static)
    for (int z = 0; z < d.nz; ++z) {
      std::array<std::vector<double>, 5> f;
      filter_plane(a.data().data() + plane * z, b.data().data() + plane * z, d.nx, d.ny, g, f);
      double s = 0.0;
      std::size_t c = 0;
      for (int y = 0; y < oy; ++y) {
        for (int x = 0; x < ox; ++x) {
          if (!inside(x + h, y + h, z)) continue;
          const std::size_t o = static_cast<std::size_t>(x) + static_cast<std::size_t>(ox) * y;
          s += ssim_index({f[0][o], f[1][o], f[2][o], f[3][o], f[4][o]}, c1, c2);
          ++c;
        }
      }
      sums[static_cast<std::size_t>(z)] = s;
      counts[static_cast<std::size_t>(z)] = c;
    }
  } else {
    // xy-filtered moment planes for every z, then the z pass per output plane.
    std::vector<std::array<std::vector<double>, 5>> xy(static_cast<std::size_t>(d.nz));
#pragma omp parallel for schedule(static)
    for (int z = 0; z < d.nz; ++z) {
      filter_plane(a.data().data() + plane * z, b.data().data() + plane * z, d.nx, d.ny, g,
                   xy[static_cast<std::size_t>(z)]);
    }
#pragma omp parallel for schedule(static)
    for (int z0 = 0; z0 < nplanes; ++z0) {
      double s = 0.0;
      std::size_t c = 0;
      for (int y = 0; y < oy; ++y) {
        for (int x = 0; x < ox; ++x) {
          if (!inside(x + h, y + h, z0 + h)) continue;
          const std::size_t o = static_cast<std::size_t>(x) + static_cast<std::size_t>(ox) * y;
          double m[5] = {0, 0, 0, 0, 0};
          for (int k = 0; k < w; ++k) {
            const double gk = g[static_cast<std::size_t>(k)];
            const auto& f = xy[static_cast<std::size_t>(z0 + k)];
            for (int q = 0; q < 5; ++q) m[q] += gk * f[static_cast<std::size_t>(q)][o];
          }
          s += ssim_index({m[0], m[1], m[2], m[3], m[4]}, c1, c2);
          ++c;
        }
      }
      sums[static_cast<std::size_t>(z0)] = s;
      counts[static_cast<std::size_t>(z0)] = c;
    }
  }

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    total += sums[i];
    count += counts[i];
  }
  if (count == 0) throw DataError("ssim: mask selects no window centers");
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

PearsonResult pearson_detail(const Volume& a, const Volume& b, const Mask* mask) {
  check_pair(a, b, mask, "pearson");
  const double n = static_cast<double>(require_nonempty(mask, a.size(), "pearson"));
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  const std::uint8_t* pm = mask != nullptr ? mask->data().data() : nullptr;
  const auto in = [pm](std::size_t i) { return pm == nullptr || pm[i] != 0; };
  const double ma = chunked_sum(a.size(), [&](std::size_t i) { return in(i) ? double(pa[i]) : 0.0; }) / n;
  const double mb = chunked_sum(a.size(), [&](std::size_t i) { return in(i) ? double(pb[i]) : 0.0; }) / n;
  const double saa = chunked_sum(a.size(), [&](std::size_t i) {
    const double da = pa[i] - ma;
    return in(i) ? da * da : 0.0;
  });
  const double sbb = chunked_sum(a.size(), [&](std::size_t i) {
    const double db = pb[i] - mb;
    return in(i) ? db * db : 0.0;
  });
  const double sab = chunked_sum(a.size(), [&](std::size_t i) {
    return in(i) ? (pa[i] - ma) * (pb[i] - mb) : 0.0;
  });
  if (!(saa > 0.0) || !(sbb > 0.0)) return {0.0, true};
  const double r = sab / std::sqrt(saa * sbb);
  return {std::clamp(r, -1.0, 1.0), false};
}

double pearson(const Volume& a, const Volume& b, const Mask* mask) {
  return pearson_detail(a, b, mask).value;
}

double entropy(const Volume& a, int bins, const Mask* mask) {
  if (bins < 2) throw ArgumentError("histogram bins must be >= 2");
  if (mask != nullptr) require_same_dims(a.dims(), mask->dims(), "entropy");
  const double n = static_cast<double>(require_nonempty(mask, a.size(), "entropy"));
  std::vector<std::size_t> hist(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (mask != nullptr && (*mask)[i] == 0) continue;
    ++hist[static_cast<std::size_t>(histogram_bin(a[i], bins))];
  }
  double h = 0.0;
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double mutual_information(const Volume& a, const Volume& b, int bins, const Mask* mask) {
  if (bins < 2) throw ArgumentError("histogram bins must be >= 2");
  check_pair(a, b, mask, "mutual_information");
  const double n = static_cast<double>(require_nonempty(mask, a.size(), "mutual_information"));
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<std::size_t> joint(nb * nb, 0), ha(nb, 0), hb(nb, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (mask != nullptr && (*mask)[i] == 0) continue;
    const auto ia = static_cast<std::size_t>(histogram_bin(a[i], bins));
    const auto ib = static_cast<std::size_t>(histogram_bin(b[i], bins));
    ++joint[ia * nb + ib];
    ++ha[ia];
    ++hb[ib];
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const auto c = joint[i * nb + j];
      if (c == 0) continue;
      // p_ij ln(p_ij / (p_i p_j)) = p_ij ln(c n / (c_i c_j))
      const double pij = static_cast<double>(c) / n;
      mi += pij * std::log(static_cast<double>(c) * n /
                           (static_cast<double>(ha[i]) * static_cast<double>(hb[j])));
    }
  }
  return std::max(mi, 0.0);
}

double self_defined_score(double ssim_value, double corr) { return (2.0 * ssim_value + corr) / 3.0; }

ScoreSet score_pair(const Volume& a, const Volume& b, const ScoreParams& p, const Mask* mask) {
  require_same_dims(a.dims(), b.dims(), "score_pair");
  const Volume na = normalize_intensity(a);
  const Volume nb = normalize_intensity(b);
  ScoreSet s;
  s.mse = mse(na, nb, mask);
  s.ssim = ssim(na, nb, p.ssim, mask);
  const auto r = pearson_detail(na, nb, mask);
  s.corr = r.value;
  s.corr_degenerate = r.degenerate;
  s.mi = mutual_information(na, nb, p.bins, mask);
  s.self_defined = self_defined_score(s.ssim, s.corr);
  return s;
}

// ---------------------------------------------------------------------------
// Frechet distance

FeatureStats gaussian_stats(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  if (n < 2) throw ArgumentError("gaussian_stats needs at least 2 samples, got " + std::to_string(n));
  FeatureStats st;
  st.n = static_cast<std::size_t>(n);
  st.mu = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - st.mu.transpose();
  st.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
  st.sigma = 0.5 * (st.sigma + st.sigma.transpose());
  return st;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols()) throw ArgumentError("sqrtm_psd: matrix is not square");
  if (s.size() == 0) return s;
  const double norm = s.norm();
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * std::max(1.0, norm)) {
    throw NumericError("sqrtm_psd: matrix not symmetric (max asymmetry " + std::to_string(asym) + ")");
  }
  const Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericError("sqrtm_psd: eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double floor = -1e-8 * norm;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < floor) {
      throw NumericError("sqrtm_psd: indefinite matrix (eigenvalue " + std::to_string(lambda[i]) + ")");
    }
    lambda[i] = std::sqrt(std::max(lambda[i], 0.0));
  }
  const Eigen::MatrixXd& v = eig.eigenvectors();
  Eigen::MatrixXd r = v * lambda.asDiagonal() * v.transpose();
  return 0.5 * (r + r.transpose());
}

double frechet_distance(const FeatureStats& p, const FeatureStats& q) {
  if (p.mu.size() != q.mu.size() || p.sigma.rows() != q.sigma.rows() || p.sigma.rows() != p.mu.size()) {
    throw ArgumentError("frechet_distance: feature dimension mismatch (" + std::to_string(p.mu.size()) +
                        " vs " + std::to_string(q.mu.size()) + ")");
  }
  const double mean_term = (p.mu - q.mu).squaredNorm();
  // tr((Sp^1/2 Sq Sp^1/2)^1/2) is the nuclear norm of Sq^1/2 Sp^1/2.
  const Eigen::MatrixXd prod = sqrtm_psd(q.sigma) * sqrtm_psd(p.sigma);
  const double cross = Eigen::JacobiSVD<Eigen::MatrixXd>(prod).singularValues().sum();
  const double fid = mean_term + p.sigma.trace() + q.sigma.trace() - 2.0 * cross;
  if (fid < 0.0) {
    if (fid >= -1e-10 * (1.0 + p.sigma.trace() + q.sigma.trace())) return 0.0;
    throw NumericError("frechet_distance: negative result " + std::to_string(fid));
  }
  return fid;
}

Eigen::MatrixXd feature_extract(const std::vector<Volume>& volumes, int d) {
  int g = static_cast<int>(std::lround(std::cbrt(static_cast<double>(d))));
  if (d < 1 || g * g * g != d) {
    throw ArgumentError("feature dimension must be a perfect cube, got " + std::to_string(d));
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(volumes.size()), d);
  for (std::size_t r = 0; r < volumes.size(); ++r) {
    const Volume& v = volumes[r];
    const Dims vd = v.dims();
    if (vd.nx < g || vd.ny < g || vd.nz < g) {
      throw DataError("feature_extract: volume " + to_string(vd) + " smaller than the " + std::to_string(g) +
                      "^3 block grid");
    }
    std::vector<double> sum(static_cast<std::size_t>(d), 0.0);
    std::vector<std::size_t> cnt(static_cast<std::size_t>(d), 0);
    for (int z = 0; z < vd.nz; ++z) {
      const int bz = static_cast<int>(static_cast<long>(z) * g / vd.nz);
      for (int y = 0; y < vd.ny; ++y) {
        const int by = static_cast<int>(static_cast<long>(y) * g / vd.ny);
        for (int x = 0; x < vd.nx; ++x) {
          const int bx = static_cast<int>(static_cast<long>(x) * g / vd.nx);
          const auto k = static_cast<std::size_t>(bx + g * (by + g * bz));
          sum[k] += v.at(x, y, z);
          ++cnt[k];
        }
      }
    }
    for (int k = 0; k < d; ++k) {
      out(static_cast<Eigen::Index>(r), k) = sum[static_cast<std::size_t>(k)] / static_cast<double>(cnt[static_cast<std::size_t>(k)]);
    }
  }
  return out;
}

}  // namespace fetalsyn
