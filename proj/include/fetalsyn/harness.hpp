/**
 * @file harness.hpp
 * @brief Dataset campaigns: scoring existing syntheses, epoch/learning-rate
 *        sweeps and per-tag reconstruction comparisons.
 *
 * Dataset layout (one directory, flat):
 *   <case>_orig.nii          ground-truth intensity volume
 *   <case>_synth_<axis>.nii  synthesis along axis x, y or z (scores only)
 *   <case>_labels.nii        label volume
 *   <case>.tag               optional one-word tag (e.g. irtk, mial)
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fetalsyn/fusion.hpp"
#include "fetalsyn/gan/train.hpp"
#include "fetalsyn/metrics.hpp"
#include "fetalsyn/report.hpp"

namespace fetalsyn {

struct PairingRule {
  std::string orig_suffix = "_orig";
  std::string synth_infix = "_synth_";
  std::string labels_suffix = "_labels";
  std::string extension = ".nii";
  std::string tag_extension = ".tag";
};

struct CaseFiles {
  std::string id;
  std::filesystem::path orig;
  std::optional<std::filesystem::path> labels;
  std::array<std::optional<std::filesystem::path>, 3> synth;  ///< x, y, z
  std::optional<std::string> tag;
};

/// Every `<case>_orig` file defines a case; sorted by case id.
std::vector<CaseFiles> discover_cases(const std::filesystem::path& root, const PairingRule& rule = {});

struct EpochConfig {
  int niter = 50;
  int niter_decay = 0;
};

struct SweepCell {
  EpochConfig epochs;
  double lr = 2e-4;
  std::string name() const;  ///< e.g. "e25+25_lr5e-05"
};

struct CampaignSpec {
  std::filesystem::path root;
  PairingRule pairing;
  ScoreParams metric;
  bool masked = false;  ///< restrict metrics to the brain mask of the case labels
  std::vector<FusionParams> fusions = default_fusions();
  std::vector<EpochConfig> epochs = {{25, 25}, {50, 0}, {100, 0}};
  std::vector<double> lrs = {5e-5, 1e-4, 5e-4, 1e-3, 2e-4};
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
  double train_fraction = 0.5;
  int slices_per_case = 4;
  gan::TrainConfig train;  ///< niter, niter_decay and lr are overridden per cell

  static std::vector<FusionParams> default_fusions();

  /// Throws ArgumentError for bad parameters, DataError for missing paths.
  void validate(bool sweeping) const;
  std::vector<SweepCell> cells() const;
};

/// Row tag of a fusion setting: "mean", "avg2", "reject(m=0.5)".
std::string fusion_tag(const FusionParams& f);

/// Orientation rows x, y, z followed by one row per fusion setting, for
/// every case that has all three syntheses. Cases with mismatched grids
/// are skipped and noted.
ScoreReport run_scores(const CampaignSpec& spec);

struct DataSplit {
  std::vector<CaseFiles> train;
  std::vector<CaseFiles> held_out;
};

/// Seeded shuffle, then the first ceil(fraction * n) cases train.
DataSplit split_cases(std::vector<CaseFiles> cases, double train_fraction, std::uint64_t seed);

/// The three orientation models trained on `cases`.
struct OrientationModels {
  std::array<gan::Generator, 3> generators;
  std::array<std::vector<gan::EpochStats>, 3> curves;
};

OrientationModels train_orientations(const std::vector<CaseFiles>& cases, const gan::TrainConfig& cfg,
                                     int slices_per_case, int jobs);

/// Synthesizes every case in `cases` with `models` and scores orientation
/// and fusion rows against the case's original volume.
std::vector<ScoreRow> score_synthesis(const OrientationModels& models, const std::vector<CaseFiles>& cases,
                                      const CampaignSpec& spec, const std::vector<FusionParams>& fusions,
                                      bool orientation_rows, std::vector<std::string>& notes);

/// One section per (epochs, lr) cell on a shared seeded split.
ScoreReport run_sweep(const CampaignSpec& spec);

/// The split is stratified by tag. Partitions "all" plus one per tag; each partition's model (trained on the
/// partition's share of the training split) is applied to the full held-out
/// set and scored with the first fusion setting.
ScoreReport run_recon_compare(const CampaignSpec& spec);

}  // namespace fetalsyn
