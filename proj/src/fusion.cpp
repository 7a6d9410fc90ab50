#include "fetalsyn/fusion.hpp"

#include <cstdint>

namespace fetalsyn {

void OrientedTriplet::validate() const {
  require_same_dims(x.dims(), y.dims(), "triplet x/y");
  require_same_dims(x.dims(), z.dims(), "triplet x/z");
}

const char* method_name(FusionMethod m) {
  switch (m) {
    case FusionMethod::Mean: return "mean";
    case FusionMethod::Avg2Closest: return "avg2";
    default: return "reject";
  }
}

FusionMethod parse_method(const std::string& s) {
  if (s == "mean") return FusionMethod::Mean;
  if (s == "avg2" || s == "avg2closest") return FusionMethod::Avg2Closest;
  if (s == "reject" || s == "reject_outliers") return FusionMethod::RejectOutliers;
  throw ArgumentError("unknown fusion method '" + s + "' (expected mean, avg2 or reject)");
}

void FusionParams::validate() const {
  if (!(m > 0.0)) throw ArgumentError("fusion m must be positive, got " + std::to_string(m));
  if (!(epsilon > 0.0)) throw ArgumentError("fusion epsilon must be positive, got " + std::to_string(epsilon));
}

namespace {

template <class Rule>
Volume map3(const OrientedTriplet& t, Rule rule) {
  t.validate();
  Volume out(t.dims());
  out.spacing = t.x.spacing;
  const float* px = t.x.data().data();
  const float* py = t.y.data().data();
  const float* pz = t.z.data().data();
  float* po = out.data().data();
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    po[i] = static_cast<float>(rule(px[i], py[i], pz[i]));
  }
  return out;
}

}  // namespace

Volume fuse_mean(const OrientedTriplet& t) {
  return map3(t, [](double a, double b, double c) { return voxel::mean3(a, b, c); });
}

Volume fuse_avg2closest(const OrientedTriplet& t) {
  return map3(t, [](double a, double b, double c) { return voxel::avg2closest(a, b, c); });
}

Volume fuse_reject_outliers(const OrientedTriplet& t, const FusionParams& p) {
  p.validate();
  const double m = p.m, eps = p.epsilon;
  return map3(t, [m, eps](double a, double b, double c) { return voxel::reject_outliers(a, b, c, m, eps); });
}

Volume fuse(const OrientedTriplet& t, const FusionParams& p) {
  switch (p.method) {
    case FusionMethod::Mean: return fuse_mean(t);
    case FusionMethod::Avg2Closest: return fuse_avg2closest(t);
    default: return fuse_reject_outliers(t, p);
  }
}

}  // namespace fetalsyn
