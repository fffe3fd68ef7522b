#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eigenpatch/ensemble.hpp"
#include "eigenpatch/label.hpp"
#include "eigenpatch/registration.hpp"
#include "eigenpatch/segmentation.hpp"
#include "eigenpatch/volume.hpp"
#include "json.hpp"

namespace eigenpatch {

/// Pneumonia is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> truth);

/// A metric whose denominator is zero is absent.
struct Metrics {
  std::optional<double> bal_acc;
  std::optional<double> sens;
  std::optional<double> spec;
  std::optional<double> prec;
  std::optional<double> f1;
};

Metrics compute_metrics(const ConfusionCounts& c);

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1)
};

/// Threshold sweep over the distinct scores, trapezoidal area. Tied scores
/// count one half.
RocResult roc_auc(std::span<const double> scores, std::span<const Label> labels);

/// Absent when the chance agreement is 1.
std::optional<double> cohens_kappa(std::span<const Label> predicted, std::span<const Label> truth);

/// Order-independent 64-bit digest of a set of subject ids.
std::uint64_t id_set_hash(std::span<const std::string> ids);

/// Raw subjects in memory. Masks are derived by segmentation.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<Label> labels;
  std::vector<Volume3> volumes;
};

Dataset load_dataset(const std::filesystem::path& cohort_dir);

struct PreprocessConfig {
  /// Volumes are downsampled here when their dims differ.
  Dims target{128, 128, 128};
  std::size_t otsu_bins = 256;
  int template_rounds = 2;
  RegistrationConfig registration{.max_iters = 400, .init_step = 2.0, .tol = 1e-6, .sample_stride = 4};
  /// When false, AlignedCohort::template_volume is left empty (1x1x1).
  bool keep_template = true;
};

/// Downsampled volume and its lung mask, before registration.
struct SegmentedSubject {
  Volume3 volume;
  LungMask mask;
};

SegmentedSubject segment_subject(const Volume3& raw, const PreprocessConfig& config);

/// Subjects aligned to a common template and standardized.
struct AlignedCohort {
  std::vector<Volume3> volumes;
  std::vector<LungMask> masks;
  std::vector<AffineTransform> transforms;
  Volume3 template_volume;
};

/// Template built from `members` only; `extra` subjects are aligned to it
/// afterwards. Output order is members then extra.
AlignedCohort align_cohort(std::span<const SegmentedSubject* const> members,
                           std::span<const SegmentedSubject* const> extra,
                           const PreprocessConfig& config, std::size_t threads);

struct Variant {
  std::size_t patch_side = 28;
  FeatureMode features = FeatureMode::kpca;

  std::string name() const;
};

struct LooConfig {
  PreprocessConfig preprocess;
  /// Base ensemble settings; side and feature mode come from each variant.
  EnsembleConfig ensemble;
  std::vector<Variant> variants{{28, FeatureMode::kpca}};
  std::size_t confidence_resamples = 1000;
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  /// Called after each fold with (fold index, fold count).
  std::function<void(std::size_t, std::size_t)> progress;
};

struct SubjectRecord {
  std::string id;
  Label truth = Label::control;
  SubjectDecision decision;
};

struct KappaPoint {
  std::size_t patch_id;
  double kappa;
  double bal_acc;
  std::size_t evaluations;
};

struct MetricSpread {
  std::optional<double> bal_acc;
  std::optional<double> sens;
  std::optional<double> spec;
  std::optional<double> prec;
  std::optional<double> f1;
  std::optional<double> auc;
};

struct EvaluationReport {
  Variant variant;
  std::vector<SubjectRecord> subjects;
  ConfusionCounts counts;
  Metrics metrics;
  double auc = 0.0;
  std::vector<RocPoint> roc;
  /// Standard deviation of each metric over bootstrap resamples of subjects.
  MetricSpread confidence;
  std::vector<KappaPoint> kappa_points;
  /// Majority vote over the same per-patch labels.
  ConfusionCounts majority_counts;
  Metrics majority_metrics;
  std::optional<double> ensemble_kappa;
  /// Time spent in ensemble training and classification.
  double seconds = 0.0;
};

/// Training sets seen by each stage of one fold.
struct FoldAudit {
  std::string test_id;
  std::vector<std::string> template_ids;
  std::vector<std::string> ensemble_ids;
  std::uint64_t template_hash = 0;
  std::uint64_t ensemble_hash = 0;
};

/// True when every stage of the fold trained on exactly the complement of
/// the test subject.
bool audit_passes(const FoldAudit& audit, std::span<const std::string> all_ids);

struct LooResult {
  std::vector<EvaluationReport> reports;  // one per variant
  std::vector<FoldAudit> audits;
  double segmentation_seconds = 0.0;
  double registration_seconds = 0.0;
};

LooResult loo_evaluate(const Dataset& data, const LooConfig& config);

/// Metrics, ROC, kappa cloud and bootstrap spread from a prediction table.
EvaluationReport summarize(const Variant& variant, std::vector<SubjectRecord> subjects,
                           std::size_t confidence_resamples, std::uint64_t seed);

nlohmann::json to_json(const EvaluationReport& r);
void write_summary_csv(std::span<const EvaluationReport> reports, const std::filesystem::path& path);
void write_kappa_csv(const EvaluationReport& r, const std::filesystem::path& path);
void write_roc_csv(const EvaluationReport& r, const std::filesystem::path& path);
void write_predictions_csv(const EvaluationReport& r, const std::filesystem::path& path);

}  // namespace eigenpatch
