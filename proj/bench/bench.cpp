// OpenMP kernels against the serial reference implementations.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <map>

#include "fetalsyn/fusion.hpp"
#include "fetalsyn/label_morph.hpp"
#include "fetalsyn/metrics.hpp"
#include "fetalsyn/phantom.hpp"
#include "reference/reference.hpp"

using namespace fetalsyn;

namespace {

Volume noisy(const Volume& v, std::uint64_t seed) { return make_noisy_triplet(v, seed, 0.05).x; }

const Phantom& phantom(int n) {
  static std::map<int, Phantom> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    PhantomSpec s;
    s.dims = {n, n, n};
    it = cache.emplace(n, make_phantom(s)).first;
  }
  return it->second;
}

void BM_ssim_parallel(benchmark::State& st) {
  const Volume& a = phantom(static_cast<int>(st.range(0))).volume;
  const Volume b = noisy(a, 1);
  for (auto _ : st) benchmark::DoNotOptimize(ssim(a, b, SsimParams::volumetric3d()));
  st.counters["threads"] = omp_get_max_threads();
}

void BM_ssim_reference(benchmark::State& st) {
  const Volume& a = phantom(static_cast<int>(st.range(0))).volume;
  const Volume b = noisy(a, 1);
  for (auto _ : st) benchmark::DoNotOptimize(reference::ssim_direct(a, b, SsimParams::volumetric3d(), nullptr));
}

void BM_reject_parallel(benchmark::State& st) {
  const OrientedTriplet t = make_noisy_triplet(phantom(static_cast<int>(st.range(0))).volume, 2, 0.05);
  for (auto _ : st) benchmark::DoNotOptimize(fuse_reject_outliers(t, {FusionMethod::RejectOutliers, 2.0, 1e-4}));
}

void BM_reject_reference(benchmark::State& st) {
  const OrientedTriplet t = make_noisy_triplet(phantom(static_cast<int>(st.range(0))).volume, 2, 0.05);
  for (auto _ : st) benchmark::DoNotOptimize(reference::fuse_reject_outliers(t, 2.0, 1e-4));
}

Mask ventricles(int n) {
  const LabelVolume& lv = phantom(n).labels;
  Mask m(lv.dims());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = lv[i] == static_cast<std::uint8_t>(Tissue::Ventricles);
  return m;
}

void BM_dilate_parallel(benchmark::State& st) {
  const Mask m = ventricles(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(binary_dilate(m, {26}, 3));
}

void BM_dilate_reference(benchmark::State& st) {
  const Mask m = ventricles(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::binary_dilate(m, 26, 3));
}

}  // namespace

BENCHMARK(BM_ssim_parallel)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ssim_reference)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_reject_parallel)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_reject_reference)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_dilate_parallel)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_dilate_reference)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
