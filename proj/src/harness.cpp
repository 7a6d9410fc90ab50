#include "fetalsyn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

#include "fetalsyn/errors.hpp"
#include "fetalsyn/volume_io.hpp"

namespace fetalsyn {

namespace fs = std::filesystem;

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string read_tag(const fs::path& p) {
  std::ifstream is(p);
  std::string tag;
  if (!is || !(is >> tag)) throw DataError("empty or unreadable tag file " + p.string());
  return tag;
}

// Runs body(i) for i in [0, n) on up to `jobs` threads. Data errors are
// collected per index; any other exception is rethrown after the loop.
template <class F>
std::vector<std::string> parallel_cases(std::size_t n, int jobs, F body) {
  std::vector<std::string> errors(n);
  std::vector<std::exception_ptr> fatal(n);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (const DataError& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    } catch (...) {
      fatal[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& f : fatal)
    if (f) std::rethrow_exception(f);
  return errors;
}

const fs::path& require_labels(const CaseFiles& c) {
  if (!c.labels) throw DataError("case " + c.id + " has no label volume");
  return *c.labels;
}

void add_skip_notes(const std::vector<CaseFiles>& cases, const std::vector<std::string>& errors,
                    std::vector<std::string>& notes) {
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (errors[i].empty()) continue;
    const std::string note = "case " + cases[i].id + " skipped: " + errors[i];
    std::cerr << note << '\n';
    notes.push_back(note);
  }
}

std::vector<ScoreRow> flatten(std::vector<std::vector<ScoreRow>>&& per_case) {
  std::vector<ScoreRow> rows;
  for (auto& v : per_case)
    for (auto& r : v) rows.push_back(std::move(r));
  return rows;
}

}  // namespace

std::vector<CaseFiles> discover_cases(const fs::path& root, const PairingRule& rule) {
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
  const std::string orig_end = rule.orig_suffix + rule.extension;
  std::vector<CaseFiles> cases;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (!ends_with(name, orig_end) || name.size() == orig_end.size()) continue;
    CaseFiles c;
    c.id = name.substr(0, name.size() - orig_end.size());
    c.orig = entry.path();
    const fs::path labels = root / (c.id + rule.labels_suffix + rule.extension);
    if (fs::is_regular_file(labels)) c.labels = labels;
    for (int a = 0; a < 3; ++a) {
      const fs::path s = root / (c.id + rule.synth_infix + axis_name(static_cast<Axis>(a)) + rule.extension);
      if (fs::is_regular_file(s)) c.synth[static_cast<std::size_t>(a)] = s;
    }
    const fs::path tag = root / (c.id + rule.tag_extension);
    if (fs::is_regular_file(tag)) c.tag = read_tag(tag);
    cases.push_back(std::move(c));
  }
  std::sort(cases.begin(), cases.end(), [](const CaseFiles& a, const CaseFiles& b) { return a.id < b.id; });
  return cases;
}

std::string SweepCell::name() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "e%d+%d_lr%g", epochs.niter, epochs.niter_decay, lr);
  return buf;
}

std::vector<FusionParams> CampaignSpec::default_fusions() {
  return {FusionParams{FusionMethod::Mean}, FusionParams{FusionMethod::Avg2Closest},
          FusionParams{FusionMethod::RejectOutliers, 0.5}, FusionParams{FusionMethod::RejectOutliers, 2.0}};
}

void CampaignSpec::validate(bool sweeping) const {
  if (jobs < 1) throw ArgumentError("--jobs must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ArgumentError("train fraction must be in (0, 1)");
  if (slices_per_case < 1) throw ArgumentError("slices per case must be >= 1");
  if (metric.bins < 2) throw ArgumentError("bins must be >= 2");
  metric.ssim.validate();
  if (fusions.empty()) throw ArgumentError("at least one fusion method is required");
  for (const auto& f : fusions) f.validate();
  if (sweeping) {
    if (epochs.empty() || lrs.empty()) throw ArgumentError("sweep grid is empty");
    for (const auto& e : epochs)
      if (e.niter < 1 || e.niter_decay < 0) throw ArgumentError("epoch configs need niter >= 1, niter_decay >= 0");
    for (double lr : lrs)
      if (!(lr > 0.0)) throw ArgumentError("learning rates must be positive");
    train.validate();
  }
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
}

std::vector<SweepCell> CampaignSpec::cells() const {
  std::vector<SweepCell> out;
  for (const auto& e : epochs)
    for (double lr : lrs) out.push_back(SweepCell{e, lr});
  return out;
}

std::string fusion_tag(const FusionParams& f) {
  if (f.method != FusionMethod::RejectOutliers) return method_name(f.method);
  char buf[64];
  std::snprintf(buf, sizeof buf, "reject(m=%g)", f.m);
  return buf;
}

namespace {

std::vector<ScoreRow> score_case(const std::string& id, const Volume& orig, const OrientedTriplet& t,
                                 const CampaignSpec& spec, const std::vector<FusionParams>& fusions,
                                 bool orientation_rows, const Mask* mask, const std::string& tag_suffix) {
  std::vector<ScoreRow> rows;
  if (orientation_rows) {
    const Volume* vols[3] = {&t.x, &t.y, &t.z};
    for (int a = 0; a < 3; ++a)
      rows.push_back({id, axis_name(static_cast<Axis>(a)) + tag_suffix, score_pair(orig, *vols[a], spec.metric, mask)});
  }
  for (const auto& f : fusions) rows.push_back({id, fusion_tag(f) + tag_suffix, score_pair(orig, fuse(t, f), spec.metric, mask)});
  return rows;
}

}  // namespace

ScoreReport run_scores(const CampaignSpec& spec) {
  spec.validate(false);
  const auto cases = discover_cases(spec.root, spec.pairing);
  if (cases.empty()) throw DataError("no '<case>" + spec.pairing.orig_suffix + spec.pairing.extension + "' files in " + spec.root.string());

  ReportSection section{"scores", {}, {}};
  std::vector<std::vector<ScoreRow>> per_case(cases.size());
  const auto errors = parallel_cases(cases.size(), spec.jobs, [&](std::size_t i) {
    const CaseFiles& c = cases[i];
    for (int a = 0; a < 3; ++a)
      if (!c.synth[static_cast<std::size_t>(a)])
        throw DataError(std::string("missing synthesis along ") + axis_name(static_cast<Axis>(a)));
    const Volume orig = read_volume(c.orig);
    OrientedTriplet t{read_volume(*c.synth[0]), read_volume(*c.synth[1]), read_volume(*c.synth[2])};
    require_same_dims(orig.dims(), t.x.dims(), "orig vs synth_x");
    require_same_dims(orig.dims(), t.y.dims(), "orig vs synth_y");
    require_same_dims(orig.dims(), t.z.dims(), "orig vs synth_z");
    std::optional<Mask> mask;
    if (spec.masked) {
      const LabelVolume labels = read_labels(require_labels(c));
      require_same_dims(orig.dims(), labels.dims(), "orig vs labels");
      mask = brain_mask(labels);
    }
    per_case[i] = score_case(c.id, orig, t, spec, spec.fusions, true, mask ? &*mask : nullptr, "");
  });
  add_skip_notes(cases, errors, section.notes);
  section.rows = flatten(std::move(per_case));
  if (section.rows.empty()) throw DataError("no case could be scored");
  return ScoreReport{{std::move(section)}};
}

DataSplit split_cases(std::vector<CaseFiles> cases, double train_fraction, std::uint64_t seed) {
  std::sort(cases.begin(), cases.end(), [](const CaseFiles& a, const CaseFiles& b) { return a.id < b.id; });
  std::mt19937_64 rng(mix_seed(seed, 100));
  for (std::size_t i = cases.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(cases[i - 1], cases[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(cases.size())));
  DataSplit s;
  s.train.assign(cases.begin(), cases.begin() + static_cast<long>(std::min(n_train, cases.size())));
  s.held_out.assign(cases.begin() + static_cast<long>(std::min(n_train, cases.size())), cases.end());
  const auto by_id = [](const CaseFiles& a, const CaseFiles& b) { return a.id < b.id; };
  std::sort(s.train.begin(), s.train.end(), by_id);
  std::sort(s.held_out.begin(), s.held_out.end(), by_id);
  return s;
}

OrientationModels train_orientations(const std::vector<CaseFiles>& cases, const gan::TrainConfig& cfg,
                                     int slices_per_case, int jobs) {
  if (cases.empty()) throw DataError("training split is empty");
  std::vector<Volume> volumes;
  std::vector<LabelVolume> labels;
  for (const auto& c : cases) {
    volumes.push_back(normalize_intensity(read_volume(c.orig)));
    labels.push_back(read_labels(require_labels(c)));
    require_same_dims(volumes.back().dims(), labels.back().dims(), "orig vs labels");
  }
  OrientationModels out;
  std::exception_ptr failure[3];
#pragma omp parallel for schedule(static) num_threads(std::clamp(jobs, 1, 3))
  for (int a = 0; a < 3; ++a) {
    try {
      std::vector<gan::TrainingPair> data;
      for (std::size_t i = 0; i < volumes.size(); ++i) {
        auto s = gan::slices_for_training(volumes[i], labels[i], static_cast<Axis>(a), cfg.arch.canvas, slices_per_case);
        for (auto& p : s) data.push_back(std::move(p));
      }
      if (data.empty()) throw DataError(std::string("no labelled slices along ") + axis_name(static_cast<Axis>(a)));
      gan::TrainConfig c = cfg;
      c.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(a));
      auto r = gan::train(data, c);
      out.generators[static_cast<std::size_t>(a)] = std::move(r.generator);
      out.curves[static_cast<std::size_t>(a)] = std::move(r.curves);
    } catch (...) {
      failure[a] = std::current_exception();
    }
  }
  for (auto& f : failure)
    if (f) std::rethrow_exception(f);
  return out;
}

std::vector<ScoreRow> score_synthesis(const OrientationModels& models, const std::vector<CaseFiles>& cases,
                                      const CampaignSpec& spec, const std::vector<FusionParams>& fusions,
                                      bool orientation_rows, std::vector<std::string>& notes) {
  const std::array<const gan::Generator*, 3> gens{&models.generators[0], &models.generators[1], &models.generators[2]};
  std::vector<std::vector<ScoreRow>> per_case(cases.size());
  const auto errors = parallel_cases(cases.size(), spec.jobs, [&](std::size_t i) {
    const CaseFiles& c = cases[i];
    const LabelVolume labels = read_labels(require_labels(c));
    const Volume orig = read_volume(c.orig);
    require_same_dims(orig.dims(), labels.dims(), "orig vs labels");
    const OrientedTriplet t = gan::synthesize_volume(gens, labels, mix_seed(spec.seed, 1000 + i));
    std::optional<Mask> mask;
    if (spec.masked) mask = brain_mask(labels);
    const std::string suffix = orientation_rows || !c.tag ? std::string() : "/" + *c.tag;
    per_case[i] = score_case(c.id, orig, t, spec, fusions, orientation_rows, mask ? &*mask : nullptr, suffix);
  });
  add_skip_notes(cases, errors, notes);
  return flatten(std::move(per_case));
}

namespace {

std::string curve_note(const std::string& prefix, const OrientationModels& m) {
  std::string s = prefix;
  for (int a = 0; a < 3; ++a) {
    const auto& c = m.curves[static_cast<std::size_t>(a)];
    if (c.empty()) continue;
    char buf[128];
    std::snprintf(buf, sizeof buf, " %s: d_real %.3f d_fake %.3f;", axis_name(static_cast<Axis>(a)), c.back().d_real,
                  c.back().d_fake);
    s += buf;
  }
  return s;
}

gan::TrainConfig cell_config(const CampaignSpec& spec, const SweepCell& cell) {
  gan::TrainConfig cfg = spec.train;
  cfg.niter = cell.epochs.niter;
  cfg.niter_decay = cell.epochs.niter_decay;
  cfg.lr = cell.lr;
  cfg.seed = spec.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

ScoreReport run_sweep(const CampaignSpec& spec) {
  spec.validate(true);
  const DataSplit split = split_cases(discover_cases(spec.root, spec.pairing), spec.train_fraction, spec.seed);
  if (split.train.empty() || split.held_out.empty())
    throw DataError("empty split: " + std::to_string(split.train.size()) + " training / " +
                    std::to_string(split.held_out.size()) + " held-out cases");
  ScoreReport report;
  for (const auto& cell : spec.cells()) {
    ReportSection sec{cell.name(), {}, {}};
    sec.notes.push_back("split: " + std::to_string(split.train.size()) + " training, " +
                        std::to_string(split.held_out.size()) + " held-out cases");
    const auto models = train_orientations(split.train, cell_config(spec, cell), spec.slices_per_case, spec.jobs);
    sec.notes.push_back(curve_note("final epoch", models));
    sec.rows = score_synthesis(models, split.held_out, spec, spec.fusions, true, sec.notes);
    report.sections.push_back(std::move(sec));
  }
  return report;
}

ScoreReport run_recon_compare(const CampaignSpec& spec) {
  spec.validate(true);
  const auto cases = discover_cases(spec.root, spec.pairing);
  for (const auto& c : cases)
    if (!c.tag) throw DataError("case " + c.id + " has no tag file");
  std::set<std::string> tags;
  for (const auto& c : cases) tags.insert(*c.tag);

  // Stratified: each tag is split on its own, then the parts are merged.
  DataSplit split;
  for (const auto& t : tags) {
    std::vector<CaseFiles> group;
    for (const auto& c : cases)
      if (*c.tag == t) group.push_back(c);
    auto part = split_cases(std::move(group), spec.train_fraction, spec.seed);
    split.train.insert(split.train.end(), part.train.begin(), part.train.end());
    split.held_out.insert(split.held_out.end(), part.held_out.begin(), part.held_out.end());
  }
  const auto by_id = [](const CaseFiles& a, const CaseFiles& b) { return a.id < b.id; };
  std::sort(split.train.begin(), split.train.end(), by_id);
  std::sort(split.held_out.begin(), split.held_out.end(), by_id);
  if (split.held_out.empty()) throw DataError("held-out split is empty");
  std::vector<std::pair<std::string, std::vector<CaseFiles>>> partitions{{"all", split.train}};
  for (const auto& t : tags) {
    std::vector<CaseFiles> part;
    for (const auto& c : split.train)
      if (*c.tag == t) part.push_back(c);
    if (part.empty()) throw DataError("tag '" + t + "' has zero training cases");
    partitions.emplace_back(t, std::move(part));
  }

  std::vector<std::string> imbalance;
  for (std::size_t i = 1; i < partitions.size(); ++i)
    for (std::size_t j = 1; j < partitions.size(); ++j) {
      const auto ni = partitions[i].second.size(), nj = partitions[j].second.size();
      if (2 * ni < nj)
        imbalance.push_back("partition '" + partitions[i].first + "' trained on " + std::to_string(ni) +
                            " cases, less than half of '" + partitions[j].first + "' (" + std::to_string(nj) + ")");
    }

  const SweepCell cell{spec.epochs.front(), spec.lrs.front()};
  const std::vector<FusionParams> fusion{spec.fusions.front()};
  ScoreReport report;
  for (const auto& [name, part] : partitions) {
    ReportSection sec{name, {}, {}};
    sec.notes.push_back("trained on " + std::to_string(part.size()) + " cases (" + cell.name() + "), applied to " +
                        std::to_string(split.held_out.size()) + " held-out cases");
    if (name == "all")
      for (const auto& n : imbalance) sec.notes.push_back(n);
    const auto models = train_orientations(part, cell_config(spec, cell), spec.slices_per_case, spec.jobs);
    sec.notes.push_back(curve_note("final epoch", models));
    sec.rows = score_synthesis(models, split.held_out, spec, fusion, false, sec.notes);
    report.sections.push_back(std::move(sec));
  }
  return report;
}

}  // namespace fetalsyn
