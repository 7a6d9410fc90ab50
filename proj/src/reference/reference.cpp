#include "reference/reference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace fetalsyn::reference {

double ssim_direct(const Volume& a, const Volume& b, const SsimParams& p, const Mask* mask) {
  p.validate();
  require_same_dims(a.dims(), b.dims(), "reference ssim");
  const Dims d = a.dims();
  const int w = p.window;
  const int wz = p.volumetric ? w : 1;
  const auto weights = ssim_window(p, p.volumetric ? 3 : 2);
  const double c1 = std::pow(p.k1 * p.data_range, 2), c2 = std::pow(p.k2 * p.data_range, 2);
  double total = 0.0;
  std::size_t count = 0;
  for (int z0 = 0; z0 + wz <= d.nz; ++z0) {
    for (int y0 = 0; y0 + w <= d.ny; ++y0) {
      for (int x0 = 0; x0 + w <= d.nx; ++x0) {
        const int cz = p.volumetric ? z0 + w / 2 : z0;
        if (mask != nullptr && mask->at(x0 + w / 2, y0 + w / 2, cz) == 0) continue;
        double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        std::size_t k = 0;
        for (int dz = 0; dz < wz; ++dz) {
          for (int dy = 0; dy < w; ++dy) {
            for (int dx = 0; dx < w; ++dx, ++k) {
              const double va = a.at(x0 + dx, y0 + dy, z0 + dz);
              const double vb = b.at(x0 + dx, y0 + dy, z0 + dz);
              ma += weights[k] * va;
              mb += weights[k] * vb;
              aa += weights[k] * va * va;
              bb += weights[k] * vb * vb;
              ab += weights[k] * va * vb;
            }
          }
        }
        const double va = aa - ma * ma, vb = bb - mb * mb, cov = ab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

double mse(const Volume& a, const Volume& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double pearson(const Volume& a, const Volume& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double mutual_information(const Volume& a, const Volume& b, int bins) {
  const auto bin = [bins](double v) { return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1); };
  std::vector<double> joint(static_cast<std::size_t>(bins * bins), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) joint[static_cast<std::size_t>(bin(a[i]) * bins + bin(b[i]))] += 1.0;
  const double n = static_cast<double>(a.size());
  std::vector<double> pa(static_cast<std::size_t>(bins), 0.0), pb(static_cast<std::size_t>(bins), 0.0);
  for (auto& v : joint) v /= n;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      pa[static_cast<std::size_t>(i)] += joint[static_cast<std::size_t>(i * bins + j)];
      pb[static_cast<std::size_t>(j)] += joint[static_cast<std::size_t>(i * bins + j)];
    }
  double mi = 0.0;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      const double p = joint[static_cast<std::size_t>(i * bins + j)];
      if (p > 0) mi += p * std::log(p / (pa[static_cast<std::size_t>(i)] * pb[static_cast<std::size_t>(j)]));
    }
  return mi;
}

Volume fuse_mean(const OrientedTriplet& t) {
  Volume out(t.dims());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(t.x[i]) + t.y[i] + t.z[i]) / 3.0);
  }
  return out;
}

Volume fuse_avg2closest(const OrientedTriplet& t) {
  Volume out(t.dims());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v[3] = {t.x[i], t.y[i], t.z[i]};
    const int pairs[3][2] = {{0, 1}, {1, 2}, {0, 2}};
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (std::abs(v[pairs[k][0]] - v[pairs[k][1]]) < std::abs(v[pairs[best][0]] - v[pairs[best][1]])) best = k;
    }
    out[i] = static_cast<float>(0.5 * (v[pairs[best][0]] + v[pairs[best][1]]));
  }
  return out;
}

namespace {

// np.median over an axis of length 3: middle element after sorting.
double np_median3(std::array<double, 3> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

}  // namespace

std::vector<double> reject_outliers_stack(const std::vector<std::array<double, 3>>& data, double m,
                                          double epsilon) {
  if (!(m > 0)) throw ArgumentError("Pick a positive number for the comb_mode parameter.");
  const std::size_t n = data.size();
  std::vector<double> median(n);
  for (std::size_t i = 0; i < n; ++i) median[i] = np_median3(data[i]);
  std::vector<std::array<double, 3>> median3(n);
  for (std::size_t i = 0; i < n; ++i) median3[i] = {median[i], median[i], median[i]};
  std::vector<std::array<double, 3>> d(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) d[i][k] = std::abs(data[i][k] - median3[i][k]);
  std::vector<double> mdev(n);
  for (std::size_t i = 0; i < n; ++i) mdev[i] = np_median3(d[i]) + epsilon;
  std::vector<std::array<double, 3>> mdev3(n);
  for (std::size_t i = 0; i < n; ++i) mdev3[i] = {mdev[i], mdev[i], mdev[i]};
  std::vector<std::array<double, 3>> s(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) s[i][k] = d[i][k] / mdev3[i][k];
  std::vector<std::array<double, 3>> new_data(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) new_data[i][k] = s[i][k] < m ? data[i][k] : median3[i][k];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (new_data[i][0] + new_data[i][1] + new_data[i][2]) / 3.0;
  return out;
}

Volume fuse_reject_outliers(const OrientedTriplet& t, double m, double epsilon) {
  std::vector<std::array<double, 3>> data(t.x.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = {t.x[i], t.y[i], t.z[i]};
  const auto fused = reject_outliers_stack(data, m, epsilon);
  Volume out(t.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(fused[i]);
  return out;
}

Mask binary_dilate(const Mask& mask, int connectivity, int iterations) {
  const Dims d = mask.dims();
  const bool planar = connectivity == 4 || connectivity == 8;
  Mask cur = mask;
  for (int it = 0; it < iterations; ++it) {
    Mask next = cur;
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          if (cur.at(x, y, z) == 0) continue;
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (planar && dz != 0) continue;
                bool ok = false;
                if (connectivity == 4 || connectivity == 6) ok = manhattan == 1;
                else if (connectivity == 18) ok = manhattan >= 1 && manhattan <= 2;
                else ok = manhattan >= 1;
                if (!ok) continue;
                const int xx = x + dx, yy = y + dy, zz = z + dz;
                if (xx < 0 || yy < 0 || zz < 0 || xx >= d.nx || yy >= d.ny || zz >= d.nz) continue;
                next.at(xx, yy, zz) = 1;
              }
        }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace fetalsyn::reference
