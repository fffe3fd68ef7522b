// eigenpatch command-line interface.
//
//   eigenpatch generate   --controls 20 --diseased 80 --dims 128 --seed 7 --out data/
//   eigenpatch preprocess --cohort data/ --out prep/
//   eigenpatch train      --data prep/ --out model/ --patch-side 28
//   eigenpatch classify   --model model/ --data prep/ --out results/
//   eigenpatch evaluate   --cohort data/ --patch-sides 28 --loo --baseline vaf --out eval/
//   eigenpatch sweep      --cohort data/ --out sweep/
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Every command
// writes config.lock.json into its output directory.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "eigenpatch/ensemble.hpp"
#include "eigenpatch/errors.hpp"
#include "eigenpatch/evaluation.hpp"
#include "eigenpatch/parallel.hpp"
#include "eigenpatch/phantom.hpp"
#include "eigenpatch/segmentation.hpp"
#include "eigenpatch/simd/kernels.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eigenpatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void log(const std::string& msg) { std::cerr << "[eigenpatch] " << msg << '\n'; }

struct Common {
  std::uint64_t seed = 7;
  std::size_t threads = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--seed", c.seed, "Run seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
}

// Registration and preprocessing flags shared by preprocess, evaluate and sweep.
struct PreprocessFlags {
  std::size_t dims = 128;
  int max_iters = 400;
  double tol = 1e-6;
  int template_rounds = 2;
  std::size_t sample_stride = 4;
  std::size_t otsu_bins = 256;

  void add(CLI::App* cmd) {
    cmd->add_option("--dims", dims, "Working grid edge length (volumes are resampled to dims^3)")
        ->capture_default_str();
    cmd->add_option("--max-iters", max_iters, "Nelder-Mead iteration cap per registration")
        ->capture_default_str();
    cmd->add_option("--tol", tol, "Simplex diameter at which registration stops")->capture_default_str();
    cmd->add_option("--template-rounds", template_rounds, "Template refinement rounds")
        ->capture_default_str();
    cmd->add_option("--sample-stride", sample_stride, "Registration cost lattice stride")
        ->capture_default_str();
    cmd->add_option("--otsu-bins", otsu_bins, "Histogram bins for Otsu")->capture_default_str();
  }

  PreprocessConfig config() const {
    PreprocessConfig c;
    c.target = {dims, dims, dims};
    c.otsu_bins = otsu_bins;
    c.template_rounds = template_rounds;
    c.registration.max_iters = max_iters;
    c.registration.tol = tol;
    c.registration.sample_stride = sample_stride;
    return c;
  }
};

json preprocess_json(const PreprocessConfig& c) {
  return {{"target", {c.target.nx, c.target.ny, c.target.nz}},
          {"otsu_bins", c.otsu_bins},
          {"template_rounds", c.template_rounds},
          {"registration",
           {{"max_iters", c.registration.max_iters},
            {"init_step", c.registration.init_step},
            {"tol", c.registration.tol},
            {"sample_stride", c.registration.sample_stride}}}};
}

// Ensemble flags shared by train, evaluate and sweep.
struct EnsembleFlags {
  std::size_t patch_side = 28;
  std::string features = "kpca";
  double min_lung_fraction = 0.20;
  double variance = 0.90;
  double kpca_sigma = 0.0;
  std::size_t repeats = 500;
  double fraction = 0.8;
  double gamma = 3.0;
  double C = 1.0;

  void add(CLI::App* cmd, bool with_side) {
    if (with_side) {
      cmd->add_option("--patch-side", patch_side, "Cubic patch edge in voxels")->capture_default_str();
      cmd->add_option("--features", features, "kpca or vaf")
          ->check(CLI::IsMember({"kpca", "vaf"}))
          ->capture_default_str();
    }
    cmd->add_option("--min-lung-fraction", min_lung_fraction, "Active-patch lung fraction")
        ->capture_default_str();
    cmd->add_option("--variance", variance, "kPCA retained variance")->capture_default_str();
    cmd->add_option("--kpca-sigma", kpca_sigma, "kPCA RBF width (0 = median distance)")
        ->capture_default_str();
    cmd->add_option("--repeats", repeats, "Bootstrap repeats K")->capture_default_str();
    cmd->add_option("--fraction", fraction, "Bootstrap subsample fraction")->capture_default_str();
    cmd->add_option("--gamma", gamma, "SVM RBF gamma")->capture_default_str();
    cmd->add_option("--C", C, "SVM box constraint")->capture_default_str();
  }

  EnsembleConfig config(std::uint64_t seed, std::size_t threads) const {
    EnsembleConfig c;
    c.patch_side = patch_side;
    c.features = feature_mode_from_string(features);
    c.min_lung_fraction = min_lung_fraction;
    c.variance_target = variance;
    c.kpca_sigma = kpca_sigma;
    c.bootstrap.repeats = repeats;
    c.bootstrap.subsample_fraction = fraction;
    c.bootstrap.svm.gamma = gamma;
    c.bootstrap.svm.C = C;
    c.seed = seed;
    c.threads = threads;
    return c;
  }
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed " + path.string() + ": " + e.what());
  }
}

void write_lock(const fs::path& dir, const std::string& command, const Common& c, json params) {
  json lock = {{"command", command},
               {"version", "0.1.0"},
               {"seed", c.seed},
               {"threads", resolve_threads(c.threads)},
               {"simd", std::string(simd::active_kernels().name)},
               {"parameters", std::move(params)}};
  write_json(dir / "config.lock.json", lock);
}

// ---- preprocessed cohort on disk ------------------------------------------

struct Prepared {
  std::vector<std::string> ids;
  std::vector<Label> labels;
  std::vector<Volume3> volumes;
  std::vector<LungMask> masks;
};

const char* kPreparedManifest = "preprocessed.json";

Prepared load_prepared(const fs::path& dir) {
  const json j = read_json(dir / kPreparedManifest);
  Prepared p;
  try {
    for (const json& s : j.at("subjects")) {
      p.ids.push_back(s.at("id").get<std::string>());
      p.labels.push_back(s.at("label").get<std::string>() == "pneumonia" ? Label::pneumonia
                                                                         : Label::control);
      p.volumes.push_back(load_volume(dir / s.at("volume").get<std::string>()));
      p.masks.push_back(load_mask(dir / s.at("mask").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed preprocessed manifest: ") + e.what());
  }
  return p;
}

// ---- commands ---------------------------------------------------------------

struct GenerateArgs {
  Common common;
  std::size_t controls = 20;
  std::size_t diseased = 80;
  std::size_t dims = 128;
  int lesion_min = -1;
  int lesion_max = -1;
};

int run_generate(const GenerateArgs& a) {
  PhantomSpec spec;
  spec.dims = {a.dims, a.dims, a.dims};
  spec.rng_seed = a.common.seed;
  if (a.lesion_min >= 0) spec.lesion_count_min = a.lesion_min;
  if (a.lesion_max >= 0) spec.lesion_count_max = a.lesion_max;
  spec.validate();
  const fs::path out(a.common.out);
  fs::create_directories(out);
  write_lock(out, "generate", a.common,
             {{"controls", a.controls}, {"diseased", a.diseased}, {"phantom", to_json(spec)}});
  log("generating " + std::to_string(a.controls) + " controls and " + std::to_string(a.diseased) +
      " diseased subjects at " + std::to_string(a.dims) + "^3");
  const Cohort c = generate_cohort(spec, a.controls, a.diseased, out, a.common.threads);
  log("wrote " + std::to_string(c.subjects.size()) + " subjects to " + out.string());
  return kExitOk;
}

struct PreprocessArgs {
  Common common;
  std::string cohort;
  PreprocessFlags pre;
};

int run_preprocess(const PreprocessArgs& a) {
  const fs::path out(a.common.out);
  fs::create_directories(out);
  const PreprocessConfig cfg = a.pre.config();
  write_lock(out, "preprocess", a.common,
             {{"cohort", fs::absolute(a.cohort).string()}, {"preprocess", preprocess_json(cfg)}});
  const Cohort cohort = load_cohort(a.cohort);
  const std::size_t n = cohort.subjects.size();

  std::vector<SegmentedSubject> seg(n);
  std::vector<std::string> failures(n);
  parallel_for(n, a.common.threads, [&](std::size_t i) {
    try {
      seg[i] = segment_subject(load_volume(fs::path(a.cohort) / cohort.subjects[i].volume), cfg);
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < n; ++i) {
    if (failures[i].empty()) {
      ok.push_back(i);
    } else {
      log("subject " + cohort.subjects[i].id + " failed: " + failures[i]);
    }
  }
  if (ok.size() < 2) throw SegmentationError("fewer than two subjects segmented");

  std::vector<const SegmentedSubject*> members;
  for (std::size_t i : ok) members.push_back(&seg[i]);
  log("building template from " + std::to_string(members.size()) + " subjects");
  const AlignedCohort aligned = align_cohort(members, {}, cfg, a.common.threads);

  json subjects = json::array();
  for (std::size_t k = 0; k < ok.size(); ++k) {
    const CohortEntry& e = cohort.subjects[ok[k]];
    save_volume(aligned.volumes[k], out / (e.id + ".evr"));
    save_mask(aligned.masks[k], out / (e.id + "_mask.evr"));
    const AffineTransform& t = aligned.transforms[k];
    json m = json::array();
    for (int r = 0; r < 3; ++r) m.push_back({t.matrix(r, 0), t.matrix(r, 1), t.matrix(r, 2)});
    subjects.push_back({{"id", e.id},
                        {"label", to_string(e.label)},
                        {"volume", e.id + ".evr"},
                        {"mask", e.id + "_mask.evr"},
                        {"transform",
                         {{"matrix", m},
                          {"translation",
                           {t.translation.x(), t.translation.y(), t.translation.z()}}}}});
  }
  save_volume(aligned.template_volume, out / "template.evr");
  write_json(out / kPreparedManifest, {{"template", "template.evr"}, {"subjects", subjects}});

  const std::size_t failed = n - ok.size();
  log("preprocessed " + std::to_string(ok.size()) + " subjects, " + std::to_string(failed) +
      " failed");
  return failed == 0 ? kExitOk : kExitRuntime;
}

struct TrainArgs {
  Common common;
  std::string data;
  EnsembleFlags ens;
};

int run_train(const TrainArgs& a) {
  const fs::path out(a.common.out);
  fs::create_directories(out);
  const EnsembleConfig cfg = a.ens.config(a.common.seed, a.common.threads);
  write_lock(out, "train", a.common,
             {{"data", fs::absolute(a.data).string()}, {"ensemble", to_json(cfg)}});
  const Prepared p = load_prepared(a.data);
  std::vector<const Volume3*> vols;
  std::vector<const LungMask*> masks;
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    vols.push_back(&p.volumes[i]);
    masks.push_back(&p.masks[i]);
  }
  log("training on " + std::to_string(p.ids.size()) + " subjects");
  const EnsembleModel m = train_ensemble(vols, masks, p.labels, cfg, p.ids);
  save_ensemble(m, out);
  log("saved " + std::to_string(m.patches.size()) + " patch models to " + out.string());
  return kExitOk;
}

struct ClassifyArgs {
  Common common;
  std::string model;
  std::string data;
  std::vector<std::string> ids;
};

int run_classify(const ClassifyArgs& a) {
  const fs::path out(a.common.out);
  fs::create_directories(out / "reliability");
  write_lock(out, "classify", a.common,
             {{"model", fs::absolute(a.model).string()},
              {"data", fs::absolute(a.data).string()},
              {"ids", a.ids}});
  EnsembleModel m = load_ensemble(a.model);
  m.config.threads = a.common.threads;
  const Prepared p = load_prepared(a.data);
  std::ofstream csv(out / "predictions.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write predictions.csv");
  csv << "id,truth,predicted,majority,e_neg,e_pos\n";
  csv.precision(17);
  std::size_t done = 0;
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    if (!a.ids.empty() && std::find(a.ids.begin(), a.ids.end(), p.ids[i]) == a.ids.end()) continue;
    const SubjectDecision d = classify_subject(m, p.volumes[i], p.masks[i]);
    csv << p.ids[i] << ',' << to_string(p.labels[i]) << ',' << to_string(d.label) << ','
        << to_string(d.majority) << ',' << d.scores.e_neg << ',' << d.scores.e_pos << '\n';
    write_json(out / "reliability" / (p.ids[i] + ".json"), reliability_map(m.grid, d));
    ++done;
  }
  log("classified " + std::to_string(done) + " subjects");
  return kExitOk;
}

struct EvaluateArgs {
  Common common;
  std::string cohort;
  std::vector<std::size_t> sides;
  bool loo = false;
  std::string baseline;
  std::size_t baseline_side = 28;
  std::size_t confidence_resamples = 1000;
  PreprocessFlags pre;
  EnsembleFlags ens;
};

std::string file_tag(const Variant& v) { return to_string(v.features) + "_" + std::to_string(v.patch_side); }

int run_evaluate(const EvaluateArgs& a, const std::string& command) {
  if (!a.loo) throw ArgumentError("only leave-one-out evaluation is implemented; pass --loo");
  const fs::path out(a.common.out);
  fs::create_directories(out);

  LooConfig cfg;
  cfg.preprocess = a.pre.config();
  cfg.ensemble = a.ens.config(a.common.seed, a.common.threads);
  cfg.variants.clear();
  for (std::size_t s : a.sides) cfg.variants.push_back({s, FeatureMode::kpca});
  if (a.baseline == "vaf") cfg.variants.push_back({a.baseline_side, FeatureMode::vaf});
  cfg.confidence_resamples = a.confidence_resamples;
  cfg.seed = a.common.seed;
  cfg.threads = a.common.threads;
  const auto start = std::chrono::steady_clock::now();
  cfg.progress = [&](std::size_t fold, std::size_t total) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log("fold " + std::to_string(fold + 1) + "/" + std::to_string(total) + " done, " +
        std::to_string(static_cast<int>(s)) + " s elapsed");
  };

  json variants = json::array();
  for (const Variant& v : cfg.variants) variants.push_back(v.name());
  write_lock(out, command, a.common,
             {{"cohort", fs::absolute(a.cohort).string()},
              {"variants", variants},
              {"confidence_resamples", cfg.confidence_resamples},
              {"preprocess", preprocess_json(cfg.preprocess)},
              {"ensemble", to_json(cfg.ensemble)}});

  const Dataset data = load_dataset(a.cohort);
  log("loaded " + std::to_string(data.ids.size()) + " subjects; " +
      std::to_string(cfg.variants.size()) + " variants");
  const LooResult r = loo_evaluate(data, cfg);

  write_summary_csv(r.reports, out / "summary.csv");
  json audits = json::array();
  bool audits_ok = true;
  for (const FoldAudit& f : r.audits) {
    const bool pass = audit_passes(f, data.ids);
    audits_ok = audits_ok && pass;
    audits.push_back({{"test_id", f.test_id},
                      {"template_hash", f.template_hash},
                      {"ensemble_hash", f.ensemble_hash},
                      {"passes", pass}});
  }
  write_json(out / "audit.json", audits);
  const Dims dims = cfg.preprocess.target;
  for (const EvaluationReport& rep : r.reports) {
    const std::string tag = file_tag(rep.variant);
    write_json(out / ("report_" + tag + ".json"), to_json(rep));
    write_kappa_csv(rep, out / ("kappa_" + tag + ".csv"));
    write_roc_csv(rep, out / ("roc_" + tag + ".csv"));
    write_predictions_csv(rep, out / ("predictions_" + tag + ".csv"));
    // Reliability maps for the misclassified subjects.
    const PatchGrid grid = make_patch_grid(dims, rep.variant.patch_side);
    for (const SubjectRecord& s : rep.subjects) {
      if (s.decision.label == s.truth) continue;
      fs::create_directories(out / "reliability" / tag);
      write_json(out / "reliability" / tag / (s.id + ".json"), reliability_map(grid, s.decision));
    }
    std::ostringstream line;
    line.precision(4);
    line << rep.variant.name() << ": bal_acc=" << rep.metrics.bal_acc.value_or(0.0)
         << " auc=" << rep.auc << " (" << rep.seconds << " s)";
    log(line.str());
  }
  log(std::string("leakage audit ") + (audits_ok ? "passed" : "FAILED"));
  return audits_ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-based kernel PCA ensemble classifier for 3D scans"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic phantom cohort");
  add_common(g, gen.common);
  g->add_option("--controls", gen.controls, "Control subjects")->capture_default_str();
  g->add_option("--diseased", gen.diseased, "Diseased subjects")->capture_default_str();
  g->add_option("--dims", gen.dims, "Grid edge length")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--lesion-min", gen.lesion_min, "Minimum lesion count per diseased subject");
  g->add_option("--lesion-max", gen.lesion_max, "Maximum lesion count per diseased subject");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Segment, register to a mean template and standardize");
  add_common(p, pre.common);
  p->add_option("--cohort", pre.cohort, "Cohort directory")->required()->check(CLI::ExistingDirectory);
  pre.pre.add(p);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train the patch ensemble on a preprocessed cohort");
  add_common(t, train.common);
  t->add_option("--data", train.data, "Preprocessed directory")->required()->check(CLI::ExistingDirectory);
  train.ens.add(t, true);

  ClassifyArgs cls;
  auto* c = app.add_subcommand("classify", "Classify preprocessed subjects with a trained model");
  add_common(c, cls.common);
  c->add_option("--model", cls.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("--data", cls.data, "Preprocessed directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("--ids", cls.ids, "Subset of subject ids")->delimiter(',');

  EvaluateArgs ev;
  ev.sides = {28};
  auto* e = app.add_subcommand("evaluate", "Leave-one-out evaluation at the given patch sides");
  add_common(e, ev.common);
  e->add_option("--cohort", ev.cohort, "Cohort directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--patch-sides", ev.sides, "Patch sides")->delimiter(',')->capture_default_str();
  e->add_flag("--loo", ev.loo, "Leave-one-out cross-validation");
  e->add_option("--baseline", ev.baseline, "Add a baseline row")->check(CLI::IsMember({"vaf"}));
  e->add_option("--baseline-side", ev.baseline_side, "Patch side of the baseline")->capture_default_str();
  e->add_option("--confidence-resamples", ev.confidence_resamples, "Subject bootstrap resamples")
      ->capture_default_str();
  ev.pre.add(e);
  ev.ens.add(e, false);

  EvaluateArgs sw;
  sw.sides = {24, 28, 32, 42, 48, 56, 64};
  sw.loo = true;
  sw.baseline = "vaf";
  auto* s = app.add_subcommand("sweep", "Leave-one-out patch-size sweep with the VAF baseline");
  add_common(s, sw.common);
  s->add_option("--cohort", sw.cohort, "Cohort directory")->required()->check(CLI::ExistingDirectory);
  s->add_option("--patch-sides", sw.sides, "Patch sides")->delimiter(',')->capture_default_str();
  s->add_option("--baseline", sw.baseline, "Baseline row ('' to disable)")->capture_default_str();
  s->add_option("--baseline-side", sw.baseline_side, "Patch side of the baseline")->capture_default_str();
  s->add_option("--confidence-resamples", sw.confidence_resamples, "Subject bootstrap resamples")
      ->capture_default_str();
  sw.pre.add(s);
  sw.ens.add(s, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return run_generate(gen);
    if (*p) return run_preprocess(pre);
    if (*t) return run_train(train);
    if (*c) return run_classify(cls);
    if (*e) return run_evaluate(ev, "evaluate");
    if (*s) return run_evaluate(sw, "sweep");
  } catch (const ArgumentError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
