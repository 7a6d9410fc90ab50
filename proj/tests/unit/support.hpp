#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>
#include <cstdio>

#include "fetalsyn/phantom.hpp"
#include "fetalsyn/volume.hpp"
#include "fetalsyn/volume_io.hpp"
#include <fstream>

namespace testing {

inline fetalsyn::Volume random_volume(fetalsyn::Dims d, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  fetalsyn::Volume v(d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(u(rng));
  return v;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("fetalsyn_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// caseNNN_{orig,labels,synth_x,synth_y,synth_z}.nii plus caseNNN.tag files.
inline void write_phantom_dataset(const std::filesystem::path& dir, int n_cases, int extent,
                                  const std::vector<std::string>& tags = {}, double synth_noise = 0.03) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < n_cases; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "case%03d", i);
    fetalsyn::PhantomSpec s;
    s.dims = {extent, extent, extent};
    s.ga_factor = n_cases > 1 ? 0.2 + 0.6 * i / (n_cases - 1) : 0.5;
    s.seed = 100 + static_cast<std::uint64_t>(i);
    const fetalsyn::Phantom p = fetalsyn::make_phantom(s);
    const std::string base = (dir / id).string();
    fetalsyn::write_volume(p.volume, base + "_orig.nii");
    fetalsyn::write_labels(p.labels, base + "_labels.nii");
    const fetalsyn::OrientedTriplet t = fetalsyn::make_noisy_triplet(p.volume, s.seed, synth_noise);
    fetalsyn::write_volume(t.x, base + "_synth_x.nii");
    fetalsyn::write_volume(t.y, base + "_synth_y.nii");
    fetalsyn::write_volume(t.z, base + "_synth_z.nii");
    if (!tags.empty()) std::ofstream(base + ".tag") << tags[static_cast<std::size_t>(i) % tags.size()] << "\n";
  }
}

}  // namespace testing
