#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fetalsyn/errors.hpp"
#include "fetalsyn/fusion.hpp"
#include "fetalsyn/gan/train.hpp"
#include "fetalsyn/harness.hpp"
#include "fetalsyn/label_morph.hpp"
#include "fetalsyn/metrics.hpp"
#include "fetalsyn/phantom.hpp"
#include "fetalsyn/report.hpp"
#include "fetalsyn/volume_io.hpp"

namespace fs = std::filesystem;
using namespace fetalsyn;

namespace {

enum Exit { kOk = 0, kBadArgs = 2, kDataError = 3, kNumericError = 4 };

struct Globals {
  int jobs = 1;
  std::uint64_t seed = 0;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ArgumentError("invalid " + what + ": '" + s + "'");
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ArgumentError("invalid " + what + ": '" + s + "'");
}

Dims parse_dims(const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() == 1) {
    const int n = parse_int(parts[0], "dims");
    return {n, n, n};
  }
  if (parts.size() != 3) throw ArgumentError("dims must be N or NX,NY,NZ");
  return {parse_int(parts[0], "dims"), parse_int(parts[1], "dims"), parse_int(parts[2], "dims")};
}

std::vector<EpochConfig> parse_epochs(const std::string& s) {
  std::vector<EpochConfig> out;
  for (const auto& item : split_list(s)) {
    const auto plus = item.find('+');
    EpochConfig e;
    e.niter = parse_int(item.substr(0, plus), "epochs");
    e.niter_decay = plus == std::string::npos ? 0 : parse_int(item.substr(plus + 1), "epochs");
    out.push_back(e);
  }
  return out;
}

std::vector<FusionParams> parse_fusions(const std::string& s) {
  std::vector<FusionParams> out;
  for (const auto& item : split_list(s)) {
    FusionParams f;
    const auto colon = item.find(':');
    f.method = parse_method(item.substr(0, colon));
    if (colon != std::string::npos) f.m = parse_double(item.substr(colon + 1), "fusion threshold");
    f.validate();
    out.push_back(f);
  }
  return out;
}

std::string csv_scores(const ScoreSet& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f", s.mse, s.ssim, s.corr, s.mi, s.self_defined);
  return buf;
}

fs::path with_suffix(const fs::path& prefix, const std::string& suffix, const std::string& ext) {
  return fs::path(prefix.string() + suffix + ext);
}

// Options shared by train, sweep and recon-compare.
struct TrainOpts {
  int canvas = 32;
  int batch = 1;
  std::string g_loss = "minimax";
  std::string optimizer = "adam";
  int slices_per_case = 4;

  void add(CLI::App* app) {
    app->add_option("--canvas", canvas, "Square training canvas (pixels)")->capture_default_str();
    app->add_option("--batch", batch, "Mini-batch size")->capture_default_str();
    app->add_option("--g-loss", g_loss, "Generator loss: minimax | nonsat")->capture_default_str();
    app->add_option("--optimizer", optimizer, "adam | sgd")->capture_default_str();
    app->add_option("--slices-per-case", slices_per_case, "Training slices taken per case and axis")
        ->capture_default_str();
  }

  gan::TrainConfig config(std::uint64_t seed) const {
    gan::TrainConfig cfg;
    cfg.arch.canvas = Canvas{canvas, canvas};
    cfg.batch = batch;
    cfg.g_loss = gan::parse_g_loss(g_loss);
    cfg.optimizer = gan::parse_optimizer(optimizer);
    cfg.seed = seed;
    return cfg;
  }
};

struct CampaignOpts {
  std::string data;
  std::string out_dir;
  bool masked = false;
  bool ssim_2d = false;
  int bins = 64;
  std::string fusions = "mean,avg2,reject:0.5,reject:2";
  std::string epochs = "25+25,50+0,100+0";
  std::string lrs = "5e-5,1e-4,5e-4,1e-3,2e-4";
  double train_fraction = 0.5;
  TrainOpts train;

  void add(CLI::App* app, bool training) {
    app->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    app->add_option("--out-dir", out_dir, "Directory for CSV and JSON reports");
    app->add_flag("--masked", masked, "Score inside the brain mask only");
    app->add_flag("--ssim-2d", ssim_2d, "Planar 11x11 SSIM per axial slice instead of 3D");
    app->add_option("--bins", bins, "Histogram bins for MI")->capture_default_str();
    app->add_option("--fusions", fusions, "Fusion settings, e.g. mean,avg2,reject:0.5")->capture_default_str();
    if (training) {
      app->add_option("--epochs", epochs, "Epoch configs niter+decay, comma separated")->capture_default_str();
      app->add_option("--lrs", lrs, "Learning rates, comma separated")->capture_default_str();
      app->add_option("--train-fraction", train_fraction, "Share of cases used for training")->capture_default_str();
      train.add(app);
    }
  }

  CampaignSpec spec(const Globals& g, bool training) const {
    CampaignSpec s;
    s.root = data;
    s.out_dir = out_dir;
    s.masked = masked;
    if (ssim_2d) s.metric.ssim = SsimParams::planar();
    s.metric.bins = bins;
    s.fusions = parse_fusions(fusions);
    s.seed = g.seed;
    s.jobs = g.jobs;
    if (training) {
      s.epochs = parse_epochs(epochs);
      s.lrs.clear();
      for (const auto& lr : split_list(lrs)) s.lrs.push_back(parse_double(lr, "learning rate"));
      s.train_fraction = train_fraction;
      s.slices_per_case = train.slices_per_case;
      s.train = train.config(g.seed);
    }
    return s;
  }
};

void emit(const ScoreReport& report, const std::string& out_dir) {
  std::cout << report_text(report);
  if (!out_dir.empty()) write_report(report, out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-conditioned fetal brain MRI synthesis: metrics, fusion, label morphology and GAN tools"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI file of option defaults; command-line flags take precedence");
  Globals g;
  app.add_option("--jobs", g.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();

  // metrics
  std::string m_a, m_b, m_mask;
  bool m_ssim3d = false;
  int m_bins = 64;
  auto* metrics = app.add_subcommand("metrics", "Score one volume pair: mse,ssim,corr,mi,self_defined");
  metrics->add_option("--a", m_a, "Reference volume")->required()->check(CLI::ExistingFile);
  metrics->add_option("--b", m_b, "Compared volume")->required()->check(CLI::ExistingFile);
  metrics->add_option("--mask", m_mask, "Label volume; scores inside the brain mask")->check(CLI::ExistingFile);
  metrics->add_flag("--ssim-3d", m_ssim3d, "7x7x7 volumetric SSIM instead of 11x11 per axial slice");
  metrics->add_option("--bins", m_bins, "Histogram bins for MI")->capture_default_str();

  // fuse
  std::string f_x, f_y, f_z, f_method = "mean", f_out;
  double f_m = 2.0, f_eps = 1e-4;
  auto* fuse_cmd = app.add_subcommand("fuse", "Combine x/y/z syntheses into one volume");
  fuse_cmd->add_option("--x", f_x)->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--y", f_y)->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--z", f_z)->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--method", f_method, "mean | avg2 | reject")->capture_default_str();
  fuse_cmd->add_option("--m", f_m, "Outlier threshold for reject")->capture_default_str();
  fuse_cmd->add_option("--epsilon", f_eps, "Added to the median deviation")->capture_default_str();
  fuse_cmd->add_option("--out", f_out)->required();

  // dilate
  std::string d_labels, d_consumable, d_mirror, d_out;
  int d_class = static_cast<int>(Tissue::Ventricles), d_grade = 1, d_conn = 6;
  auto* dilate = app.add_subcommand("dilate", "Grow a label class (synthetic ventriculomegaly)");
  dilate->add_option("--labels", d_labels)->required()->check(CLI::ExistingFile);
  dilate->add_option("--class", d_class, "Label to grow")->capture_default_str();
  dilate->add_option("--grade", d_grade, "Dilation iterations")->required();
  dilate->add_option("--connectivity", d_conn, "6 | 18 | 26 (3D) or 4 | 8 (per slice)")->capture_default_str();
  dilate->add_option("--consumable", d_consumable, "Labels that may be overwritten, e.g. 2,3,4");
  dilate->add_option("--mirror-volume", d_mirror, "Intensity volume to update alongside")->check(CLI::ExistingFile);
  dilate->add_option("--out", d_out, "Output prefix")->required();

  // phantom
  std::string p_out, p_dims = "64", p_format = "nifti", p_tags;
  double p_ga = 0.5, p_synth_noise = -1.0;
  int p_cases = 1, p_smooth = 2;
  auto* phantom = app.add_subcommand("phantom", "Write synthetic (volume, labels) pairs");
  phantom->add_option("--out", p_out, "Output prefix; with --cases > 1, a dataset directory")->required();
  phantom->add_option("--dims", p_dims, "N or NX,NY,NZ")->capture_default_str();
  phantom->add_option("--ga", p_ga, "Structure scale in [0,1]; with --cases > 1 the cases span [0.2, 0.8]")
      ->capture_default_str();
  phantom->add_option("--smoothness", p_smooth, "Noise box-blur radius")->capture_default_str();
  phantom->add_option("--format", p_format, "nifti | raw")->capture_default_str();
  phantom->add_option("--cases", p_cases, "Number of cases")->capture_default_str();
  phantom->add_option("--tags", p_tags, "Tags assigned round-robin to cases, e.g. irtk,mial");
  phantom->add_option("--synth-noise", p_synth_noise, "Also write noisy x/y/z syntheses with this sigma");

  // train
  std::string t_data, t_axis, t_out, t_curves;
  int t_niter = 50, t_decay = 0;
  double t_lr = 2e-4;
  TrainOpts t_opts;
  auto* train_cmd = app.add_subcommand("train", "Train one orientation model on a dataset directory");
  train_cmd->add_option("--data", t_data)->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--axis", t_axis, "x | y | z")->required();
  train_cmd->add_option("--niter", t_niter)->capture_default_str();
  train_cmd->add_option("--niter-decay", t_decay)->capture_default_str();
  train_cmd->add_option("--lr", t_lr)->capture_default_str();
  train_cmd->add_option("--out", t_out, "Parameter file")->required();
  train_cmd->add_option("--curves", t_curves, "CSV of per-epoch losses and D outputs");
  t_opts.add(train_cmd);

  // synth
  std::string s_mx, s_my, s_mz, s_labels, s_out, s_method;
  auto* synth = app.add_subcommand("synth", "Synthesize x/y/z volumes from a label volume");
  synth->add_option("--model-x", s_mx)->required()->check(CLI::ExistingFile);
  synth->add_option("--model-y", s_my)->required()->check(CLI::ExistingFile);
  synth->add_option("--model-z", s_mz)->required()->check(CLI::ExistingFile);
  synth->add_option("--labels", s_labels)->required()->check(CLI::ExistingFile);
  synth->add_option("--out", s_out, "Output prefix")->required();
  synth->add_option("--fuse", s_method, "Also write a fused volume (mean | avg2 | reject)");

  CampaignOpts c_scores, c_sweep, c_recon;
  auto* scores = app.add_subcommand("scores", "Score every case's syntheses and fusions");
  c_scores.add(scores, false);
  auto* sweep = app.add_subcommand("sweep", "Epoch x learning-rate grid on a seeded split");
  c_sweep.add(sweep, true);
  auto* recon = app.add_subcommand("recon-compare", "Per-tag models applied to the full held-out set");
  c_recon.add(recon, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadArgs;
  }

  omp_set_num_threads(g.jobs);

  try {
    if (*metrics) {
      SsimParams sp = m_ssim3d ? SsimParams::volumetric3d() : SsimParams::planar();
      ScoreParams params{sp, m_bins};
      sp.validate();
      if (m_bins < 2) throw ArgumentError("--bins must be >= 2");
      const Volume a = read_volume(m_a), b = read_volume(m_b);
      require_same_dims(a.dims(), b.dims(), "--a vs --b");
      std::optional<Mask> mask;
      if (!m_mask.empty()) {
        const LabelVolume lv = read_labels(m_mask);
        require_same_dims(a.dims(), lv.dims(), "--a vs --mask");
        mask = brain_mask(lv);
      }
      std::cout << csv_scores(score_pair(a, b, params, mask ? &*mask : nullptr)) << '\n';
    } else if (*fuse_cmd) {
      FusionParams p{parse_method(f_method), f_m, f_eps};
      p.validate();
      OrientedTriplet t{read_volume(f_x), read_volume(f_y), read_volume(f_z)};
      t.validate();
      write_volume(fuse(t, p), f_out);
    } else if (*dilate) {
      HydroSpec h;
      if (d_class < 1 || d_class > kMaxLabel) throw ArgumentError("--class must be in 1.." + std::to_string(kMaxLabel));
      h.target_class = static_cast<std::uint8_t>(d_class);
      h.grade = d_grade;
      h.elem.connectivity = d_conn;
      for (const auto& k : split_list(d_consumable)) {
        const int v = parse_int(k, "--consumable");
        if (v < 0 || v > kMaxLabel) throw ArgumentError("--consumable labels must be in 0.." + std::to_string(kMaxLabel));
        h.consumable.insert(static_cast<std::uint8_t>(v));
      }
      h.validate();
      const LabelVolume before = read_labels(d_labels);
      std::optional<Volume> vol;
      if (!d_mirror.empty()) {
        vol = read_volume(d_mirror);
        require_same_dims(vol->dims(), before.dims(), "--mirror-volume vs --labels");
      }
      const LabelVolume after = apply_hydrocephalus(before, h);
      const std::string ext = fs::path(d_labels).extension().string();
      const std::string grade = "_grade" + std::to_string(d_grade);
      write_labels(after, with_suffix(d_out, grade + "_labels", ext));
      if (vol) {
        write_volume(mirror_intensity_transform(*vol, before, after, h.target_class, g.seed),
                     with_suffix(d_out, grade + "_orig", fs::path(d_mirror).extension().string()));
      }
      const auto cb = before.class_counts(), ca = after.class_counts();
      std::cout << "class,before,after\n";
      for (int k = 0; k < kNumClasses; ++k) std::cout << k << ',' << cb[k] << ',' << ca[k] << '\n';
    } else if (*phantom) {
      if (p_cases < 1) throw ArgumentError("--cases must be >= 1");
      if (p_format != "nifti" && p_format != "raw") throw ArgumentError("--format must be nifti or raw");
      const FileFormat fmt = p_format == "raw" ? FileFormat::Raw : FileFormat::Nifti1;
      const std::string ext = p_format == "raw" ? ".raw" : ".nii";
      const auto tags = split_list(p_tags);
      PhantomSpec spec;
      spec.dims = parse_dims(p_dims);
      spec.ga_factor = p_ga;
      spec.noise_smoothness = p_smooth;
      spec.validate();
      if (p_cases > 1) {
        fs::create_directories(p_out);
      } else if (fs::path(p_out).has_parent_path()) {
        fs::create_directories(fs::path(p_out).parent_path());
      }
      for (int i = 0; i < p_cases; ++i) {
        spec.seed = g.seed + static_cast<std::uint64_t>(i);
        if (p_cases > 1) spec.ga_factor = 0.2 + 0.6 * i / (p_cases - 1);
        const Phantom ph = make_phantom(spec);
        char id[32];
        std::snprintf(id, sizeof id, "case%03d", i);
        const fs::path prefix = p_cases > 1 ? fs::path(p_out) / id : fs::path(p_out);
        write_volume(ph.volume, with_suffix(prefix, "_orig", ext), fmt);
        write_labels(ph.labels, with_suffix(prefix, "_labels", ext), fmt);
        if (p_synth_noise >= 0.0) {
          const OrientedTriplet t = make_noisy_triplet(ph.volume, spec.seed, p_synth_noise);
          write_volume(t.x, with_suffix(prefix, "_synth_x", ext), fmt);
          write_volume(t.y, with_suffix(prefix, "_synth_y", ext), fmt);
          write_volume(t.z, with_suffix(prefix, "_synth_z", ext), fmt);
        }
        if (!tags.empty()) std::ofstream(with_suffix(prefix, "", ".tag")) << tags[static_cast<std::size_t>(i) % tags.size()] << '\n';
      }
    } else if (*train_cmd) {
      const Axis axis = parse_axis(t_axis);
      gan::TrainConfig cfg = t_opts.config(g.seed);
      cfg.niter = t_niter;
      cfg.niter_decay = t_decay;
      cfg.lr = t_lr;
      cfg.validate();
      if (t_opts.slices_per_case < 1) throw ArgumentError("--slices-per-case must be >= 1");
      std::vector<gan::TrainingPair> data;
      for (const auto& c : discover_cases(t_data)) {
        if (!c.labels) throw DataError("case " + c.id + " has no label volume");
        const Volume v = normalize_intensity(read_volume(c.orig));
        const LabelVolume lv = read_labels(*c.labels);
        require_same_dims(v.dims(), lv.dims(), "orig vs labels");
        for (auto& p : gan::slices_for_training(v, lv, axis, cfg.arch.canvas, t_opts.slices_per_case))
          data.push_back(std::move(p));
      }
      if (data.empty()) throw DataError("no labelled training slices in " + t_data);
      const auto result = gan::train(data, cfg);
      gan::save_model(t_out, result.generator, result.discriminator);
      std::ostringstream curves;
      curves << "epoch,lr,loss_d,loss_g,d_real,d_fake\n";
      for (const auto& e : result.curves) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%d,%.8g,%.6f,%.6f,%.6f,%.6f\n", e.epoch, e.lr, e.loss_d, e.loss_g, e.d_real,
                      e.d_fake);
        curves << buf;
      }
      if (!t_curves.empty()) std::ofstream(t_curves) << curves.str();
      std::cout << "trained " << data.size() << " slices along " << axis_name(axis) << ", final:\n"
                << curves.str().substr(curves.str().rfind('\n', curves.str().size() - 2) + 1);
    } else if (*synth) {
      const auto mx = gan::load_model(s_mx), my = gan::load_model(s_my), mz = gan::load_model(s_mz);
      std::optional<FusionParams> fp;
      if (!s_method.empty()) fp = FusionParams{parse_method(s_method)};
      const LabelVolume labels = read_labels(s_labels);
      const OrientedTriplet t = gan::synthesize_volume({&mx.generator, &my.generator, &mz.generator}, labels, g.seed);
      const std::string ext = fs::path(s_labels).extension().string();
      write_volume(t.x, with_suffix(s_out, "_synth_x", ext));
      write_volume(t.y, with_suffix(s_out, "_synth_y", ext));
      write_volume(t.z, with_suffix(s_out, "_synth_z", ext));
      if (fp) write_volume(fuse(t, *fp), with_suffix(s_out, "_fused", ext));
    } else if (*scores) {
      emit(run_scores(c_scores.spec(g, false)), c_scores.out_dir);
    } else if (*sweep) {
      emit(run_sweep(c_sweep.spec(g, true)), c_sweep.out_dir);
    } else if (*recon) {
      emit(run_recon_compare(c_recon.spec(g, true)), c_recon.out_dir);
    }
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArgs;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}
