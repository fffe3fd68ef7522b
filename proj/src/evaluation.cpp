#include "eigenpatch/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/parallel.hpp"
#include "eigenpatch/phantom.hpp"
#include "eigenpatch/random.hpp"

namespace eigenpatch {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> spread(const std::vector<double>& xs) {
  if (xs.size() < 2) return std::nullopt;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) throw ArgumentError("prediction and truth differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == Label::pneumonia;
    if (truth[i] == Label::pneumonia) {
      p ? ++c.tp : ++c.fn;
    } else {
      p ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

Metrics compute_metrics(const ConfusionCounts& c) {
  Metrics m;
  m.sens = ratio(c.tp, c.tp + c.fn);
  m.spec = ratio(c.tn, c.tn + c.fp);
  m.prec = ratio(c.tp, c.tp + c.fp);
  if (m.sens && m.spec) m.bal_acc = 0.5 * (*m.sens + *m.spec);
  // Undefined when precision and sensitivity are both zero.
  if (m.sens && m.prec && *m.sens + *m.prec > 0.0) {
    m.f1 = 2.0 * *m.prec * *m.sens / (*m.prec + *m.sens);
  }
  return m;
}

RocResult roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("scores and labels differ in length");
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::pneumonia));
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ArgumentError("ROC analysis needs both classes");
  for (const double s : scores) {
    if (std::isnan(s)) throw ArgumentError("ROC scores must not be NaN");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  // Twice the area in count units stays an exact integer.
  std::uint64_t twice_area = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double thr = scores[order[k]];
    const std::size_t tp0 = tp;
    const std::size_t fp0 = fp;
    while (k < order.size() && scores[order[k]] == thr) {
      (labels[order[k]] == Label::pneumonia ? tp : fp) += 1;
      ++k;
    }
    twice_area += static_cast<std::uint64_t>(fp - fp0) * (tp + tp0);
    r.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                        static_cast<double>(tp) / static_cast<double>(n_pos), thr});
  }
  r.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return r;
}

std::optional<double> cohens_kappa(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw ArgumentError("kappa needs equal, non-empty label sequences");
  }
  const auto n = static_cast<double>(truth.size());
  std::size_t agree = 0;
  std::size_t pred_pos = 0;
  std::size_t truth_pos = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    agree += predicted[i] == truth[i];
    pred_pos += predicted[i] == Label::pneumonia;
    truth_pos += truth[i] == Label::pneumonia;
  }
  const double pa = static_cast<double>(agree) / n;
  const double pp = static_cast<double>(pred_pos) / n;
  const double tp = static_cast<double>(truth_pos) / n;
  const double pe = pp * tp + (1.0 - pp) * (1.0 - tp);
  if (pe >= 1.0) return std::nullopt;
  return (pa - pe) / (1.0 - pe);
}

std::uint64_t id_set_hash(std::span<const std::string> ids) {
  std::vector<std::string> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const std::string& s : sorted) {
    for (const char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool audit_passes(const FoldAudit& audit, std::span<const std::string> all_ids) {
  std::vector<std::string> complement;
  for (const std::string& id : all_ids) {
    if (id != audit.test_id) complement.push_back(id);
  }
  const std::uint64_t expected = id_set_hash(complement);
  auto excludes = [&](const std::vector<std::string>& ids) {
    return std::find(ids.begin(), ids.end(), audit.test_id) == ids.end();
  };
  return excludes(audit.template_ids) && excludes(audit.ensemble_ids) &&
         audit.template_hash == expected && audit.ensemble_hash == expected &&
         id_set_hash(audit.template_ids) == audit.template_hash &&
         id_set_hash(audit.ensemble_ids) == audit.ensemble_hash;
}

Dataset load_dataset(const std::filesystem::path& cohort_dir) {
  const Cohort cohort = load_cohort(cohort_dir);
  Dataset d;
  for (const CohortEntry& e : cohort.subjects) {
    d.ids.push_back(e.id);
    d.labels.push_back(e.label);
    d.volumes.push_back(load_volume(cohort_dir / e.volume));
  }
  return d;
}

SegmentedSubject segment_subject(const Volume3& raw, const PreprocessConfig& config) {
  Volume3 v = raw.dims() == config.target ? raw : downsample(raw, config.target);
  LungMask mask = segment_lungs(v, config.otsu_bins);
  return {std::move(v), std::move(mask)};
}

AlignedCohort align_cohort(std::span<const SegmentedSubject* const> members,
                           std::span<const SegmentedSubject* const> extra,
                           const PreprocessConfig& config, std::size_t threads) {
  if (members.size() < 2) throw ArgumentError("template needs at least two volumes");
  std::vector<const Volume3*> vols;
  vols.reserve(members.size());
  for (const SegmentedSubject* s : members) vols.push_back(&s->volume);
  const MeanTemplate tmpl = MeanTemplate::build(vols, config.template_rounds, config.registration, threads);

  const std::size_t m = members.size();
  const std::size_t total = m + extra.size();
  AlignedCohort out{{}, {}, std::vector<AffineTransform>(total),
                    config.keep_template ? tmpl.full_resolution(vols) : Volume3(Dims{1, 1, 1}, Spacing{})};
  if (config.template_rounds > 0) {
    std::copy(tmpl.member_transforms().begin(), tmpl.member_transforms().end(), out.transforms.begin());
  }
  auto subject = [&](std::size_t i) { return i < m ? members[i] : extra[i - m]; };
  out.volumes.resize(total, Volume3(Dims{1, 1, 1}, Spacing{}));
  out.masks.resize(total);
  parallel_for(total, threads, [&](std::size_t i) {
    const SegmentedSubject& s = *subject(i);
    if (i >= m || config.template_rounds == 0) {
      out.transforms[i] = tmpl.align(s.volume, config.registration).transform;
    }
    const Dims d = s.volume.dims();
    out.volumes[i] = standardize(resample_with(s.volume, out.transforms[i], d));
    out.masks[i] = resample_mask_with(s.mask, out.transforms[i], d);
  });
  return out;
}

std::string Variant::name() const { return to_string(features) + "_" + std::to_string(patch_side); }

EvaluationReport summarize(const Variant& variant, std::vector<SubjectRecord> subjects,
                           std::size_t confidence_resamples, std::uint64_t seed) {
  EvaluationReport r;
  r.variant = variant;
  r.subjects = std::move(subjects);
  const std::size_t n = r.subjects.size();
  std::vector<Label> truth(n), pred(n), majority(n);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = r.subjects[i].truth;
    pred[i] = r.subjects[i].decision.label;
    majority[i] = r.subjects[i].decision.majority;
    scores[i] = r.subjects[i].decision.score();
  }
  r.counts = confusion(pred, truth);
  r.metrics = compute_metrics(r.counts);
  r.majority_counts = confusion(majority, truth);
  r.majority_metrics = compute_metrics(r.majority_counts);
  r.ensemble_kappa = cohens_kappa(pred, truth);
  const RocResult roc = roc_auc(scores, truth);
  r.auc = roc.auc;
  r.roc = roc.points;

  // One point per patch classifier over the folds where it was active.
  std::map<std::size_t, std::pair<std::vector<Label>, std::vector<Label>>> by_patch;
  for (std::size_t i = 0; i < n; ++i) {
    for (const PatchVote& v : r.subjects[i].decision.per_patch) {
      auto& [p, t] = by_patch[v.patch_id];
      p.push_back(v.predicted);
      t.push_back(truth[i]);
    }
  }
  for (const auto& [id, pt] : by_patch) {
    const auto k = cohens_kappa(pt.first, pt.second);
    const auto b = compute_metrics(confusion(pt.first, pt.second)).bal_acc;
    r.kappa_points.push_back({id, k.value_or(0.0), b.value_or(0.5), pt.first.size()});
  }

  Rng rng(derive_seed(seed, {0xC0FFEEULL}));
  std::vector<double> bal, sens, spec, prec, f1, auc;
  std::vector<Label> bt(n), bp(n);
  std::vector<double> bs(n);
  for (std::size_t b = 0; b < confidence_resamples; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(rng.below(n));
      bt[i] = truth[j];
      bp[i] = pred[j];
      bs[i] = scores[j];
    }
    const Metrics m = compute_metrics(confusion(bp, bt));
    if (m.bal_acc) bal.push_back(*m.bal_acc);
    if (m.sens) sens.push_back(*m.sens);
    if (m.spec) spec.push_back(*m.spec);
    if (m.prec) prec.push_back(*m.prec);
    if (m.f1) f1.push_back(*m.f1);
    if (m.sens && m.spec) auc.push_back(roc_auc(bs, bt).auc);
  }
  r.confidence = {spread(bal), spread(sens), spread(spec), spread(prec), spread(f1), spread(auc)};
  return r;
}

LooResult loo_evaluate(const Dataset& data, const LooConfig& config) {
  const std::size_t n = data.volumes.size();
  if (data.ids.size() != n || data.labels.size() != n) throw ArgumentError("dataset arrays differ in length");
  if (std::count(data.labels.begin(), data.labels.end(), Label::control) < 2 ||
      std::count(data.labels.begin(), data.labels.end(), Label::pneumonia) < 2) {
    throw StratificationError("leave-one-out needs at least two subjects per class");
  }
  if (config.variants.empty()) throw ArgumentError("no evaluation variants requested");
  {
    std::set<std::string> unique(data.ids.begin(), data.ids.end());
    if (unique.size() != n) throw ArgumentError("subject ids must be unique");
  }

  LooResult result;
  auto t0 = Clock::now();
  std::vector<SegmentedSubject> seg(n, {Volume3(Dims{1, 1, 1}, Spacing{}), LungMask{}});
  parallel_for(n, config.threads, [&](std::size_t i) {
    try {
      seg[i] = segment_subject(data.volumes[i], config.preprocess);
    } catch (const SegmentationError& e) {
      throw SegmentationError("subject " + data.ids[i] + ": " + e.what());
    }
  });
  result.segmentation_seconds = seconds_since(t0);

  std::vector<std::vector<SubjectRecord>> records(config.variants.size(), std::vector<SubjectRecord>(n));
  std::vector<double> variant_seconds(config.variants.size(), 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    std::vector<const SegmentedSubject*> members;
    std::vector<std::string> train_ids;
    std::vector<Label> train_labels;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == f) continue;
      members.push_back(&seg[i]);
      train_ids.push_back(data.ids[i]);
      train_labels.push_back(data.labels[i]);
    }
    if (std::count(train_labels.begin(), train_labels.end(), Label::control) < 2 ||
        std::count(train_labels.begin(), train_labels.end(), Label::pneumonia) < 2) {
      throw StratificationError("fold " + data.ids[f] + " leaves a class with fewer than two subjects");
    }
    const SegmentedSubject* test = &seg[f];

    t0 = Clock::now();
    PreprocessConfig fold_pre = config.preprocess;
    fold_pre.keep_template = false;
    const AlignedCohort aligned = align_cohort(members, std::span(&test, 1), fold_pre, config.threads);
    result.registration_seconds += seconds_since(t0);

    FoldAudit audit;
    audit.test_id = data.ids[f];
    audit.template_ids = train_ids;
    audit.template_hash = id_set_hash(train_ids);

    const std::size_t m = members.size();
    std::vector<const Volume3*> tv(m);
    std::vector<const LungMask*> tm(m);
    for (std::size_t i = 0; i < m; ++i) {
      tv[i] = &aligned.volumes[i];
      tm[i] = &aligned.masks[i];
    }
    const Volume3* xv = &aligned.volumes[m];
    const LungMask* xm = &aligned.masks[m];
    audit.ensemble_ids = train_ids;
    audit.ensemble_hash = id_set_hash(audit.ensemble_ids);

    for (std::size_t v = 0; v < config.variants.size(); ++v) {
      EnsembleConfig ec = config.ensemble;
      ec.patch_side = config.variants[v].patch_side;
      ec.features = config.variants[v].features;
      ec.seed = config.seed;
      ec.threads = config.threads;
      t0 = Clock::now();
      std::vector<SubjectDecision> d =
          train_and_classify(tv, tm, train_labels, std::span(&xv, 1), std::span(&xm, 1), ec);
      variant_seconds[v] += seconds_since(t0);
      records[v][f] = {data.ids[f], data.labels[f], std::move(d.front())};
    }
    result.audits.push_back(std::move(audit));
    if (config.progress) config.progress(f, n);
  }

  for (std::size_t v = 0; v < config.variants.size(); ++v) {
    EvaluationReport r = summarize(config.variants[v], std::move(records[v]),
                                   config.confidence_resamples, config.seed);
    r.seconds = variant_seconds[v];
    result.reports.push_back(std::move(r));
  }
  return result;
}

json to_json(const EvaluationReport& r) {
  auto metrics_json = [](const Metrics& m) {
    return json{{"bal_acc", opt_json(m.bal_acc)}, {"sens", opt_json(m.sens)}, {"spec", opt_json(m.spec)},
                {"prec", opt_json(m.prec)},       {"f1", opt_json(m.f1)}};
  };
  auto counts_json = [](const ConfusionCounts& c) {
    return json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
  };
  json metrics = metrics_json(r.metrics);
  metrics["auc"] = r.auc;
  json kappa = json::array();
  for (const KappaPoint& k : r.kappa_points) {
    kappa.push_back({{"classifier_id", k.patch_id}, {"kappa", k.kappa}, {"bal_acc", k.bal_acc},
                     {"evaluations", k.evaluations}});
  }
  json roc = json::array();
  for (const RocPoint& p : r.roc) {
    roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", std::isinf(p.threshold) ? json("inf") : json(p.threshold)}});
  }
  json subjects = json::array();
  for (const SubjectRecord& s : r.subjects) {
    subjects.push_back({{"id", s.id},
                        {"truth", to_string(s.truth)},
                        {"predicted", to_string(s.decision.label)},
                        {"majority", to_string(s.decision.majority)},
                        {"e_neg", s.decision.scores.e_neg},
                        {"e_pos", s.decision.scores.e_pos}});
  }
  return {{"variant", r.variant.name()},
          {"method", to_string(r.variant.features)},
          {"patch_side", r.variant.patch_side},
          {"counts", counts_json(r.counts)},
          {"metrics", std::move(metrics)},
          {"confidence",
           {{"bal_acc", opt_json(r.confidence.bal_acc)},
            {"sens", opt_json(r.confidence.sens)},
            {"spec", opt_json(r.confidence.spec)},
            {"prec", opt_json(r.confidence.prec)},
            {"f1", opt_json(r.confidence.f1)},
            {"auc", opt_json(r.confidence.auc)}}},
          {"majority_vote", {{"counts", counts_json(r.majority_counts)}, {"metrics", metrics_json(r.majority_metrics)}}},
          {"ensemble_kappa", opt_json(r.ensemble_kappa)},
          {"kappa_points", std::move(kappa)},
          {"roc_points", std::move(roc)},
          {"subjects", std::move(subjects)}};
}

void write_summary_csv(std::span<const EvaluationReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "method,patch_side,bal_acc,bal_acc_std,sens,spec,prec,auc,f1\n";
  for (const EvaluationReport& r : reports) {
    out << to_string(r.variant.features) << ',' << r.variant.patch_side << ',' << fmt(r.metrics.bal_acc)
        << ',' << fmt(r.confidence.bal_acc) << ',' << fmt(r.metrics.sens) << ',' << fmt(r.metrics.spec)
        << ',' << fmt(r.metrics.prec) << ',' << fmt(r.auc) << ',' << fmt(r.metrics.f1) << '\n';
  }
  if (!out) throw IoError("cannot write " + path.string());
}

void write_kappa_csv(const EvaluationReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "classifier_id,kappa,bal_acc\n";
  for (const KappaPoint& k : r.kappa_points) {
    out << k.patch_id << ',' << fmt(k.kappa) << ',' << fmt(k.bal_acc) << '\n';
  }
  out << "ensemble," << fmt(r.ensemble_kappa) << ',' << fmt(r.metrics.bal_acc) << '\n';
}

void write_roc_csv(const EvaluationReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "fpr,tpr,threshold\n";
  for (const RocPoint& p : r.roc) {
    out << fmt(p.fpr) << ',' << fmt(p.tpr) << ',' << (std::isinf(p.threshold) ? "inf" : fmt(p.threshold)) << '\n';
  }
}

void write_predictions_csv(const EvaluationReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,truth,predicted,majority,e_neg,e_pos\n";
  for (const SubjectRecord& s : r.subjects) {
    out << s.id << ',' << to_string(s.truth) << ',' << to_string(s.decision.label) << ','
        << to_string(s.decision.majority) << ',' << fmt(s.decision.scores.e_neg) << ','
        << fmt(s.decision.scores.e_pos) << '\n';
  }
}

}  // namespace eigenpatch
