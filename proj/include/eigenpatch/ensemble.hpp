#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eigenpatch/kpca.hpp"
#include "eigenpatch/label.hpp"
#include "eigenpatch/segmentation.hpp"
#include "eigenpatch/svm.hpp"
#include "eigenpatch/uncertainty.hpp"
#include "eigenpatch/volume.hpp"
#include "json.hpp"

namespace eigenpatch {

/// kpca: eigenlung projections feed the SVM. vaf: the raw masked patch
/// voxels do (voxels-as-features baseline).
enum class FeatureMode { kpca, vaf };

std::string to_string(FeatureMode m);
FeatureMode feature_mode_from_string(const std::string& s);

struct EnsembleConfig {
  std::size_t patch_side = 28;
  double min_lung_fraction = 0.20;
  FeatureMode features = FeatureMode::kpca;
  KernelKind kpca_kernel = KernelKind::rbf;
  /// RBF width for kPCA; 0 selects the median pairwise training distance.
  double kpca_sigma = 0.0;
  int kpca_degree = 2;
  double kpca_coef0 = 1.0;
  double variance_target = 0.90;
  BootstrapConfig bootstrap;
  std::uint64_t seed = 7;
  std::size_t threads = 1;
};

nlohmann::json to_json(const EnsembleConfig& c);
EnsembleConfig ensemble_config_from_json(const nlohmann::json& j);

/// Floor applied to u before inverting it.
inline constexpr double kUncertaintyFloor = 1e-12;

struct ClassScores {
  double e_neg = 0.0;
  double e_pos = 0.0;
};

/// Each posterior adds 1 / max(u, floor) to the class it predicts; both sums
/// are divided by the number of posteriors.
ClassScores ensemble_weights(std::span<const PatchPosterior> posteriors);
/// argmax of the scores; a tie goes to control.
Label fused_label(const ClassScores& s);
/// Plain vote over predicted labels; a tie goes to control.
Label majority_vote(std::span<const PatchPosterior> posteriors);

struct PatchVote {
  std::size_t patch_id = 0;
  Label predicted = Label::control;
  double mean_p = 0.0;
  double u = 0.0;
  double weight = 0.0;
};

struct SubjectDecision {
  Label label = Label::control;
  ClassScores scores;
  Label majority = Label::control;
  std::vector<PatchVote> per_patch;

  /// Continuous score for ROC analysis.
  double score() const { return scores.e_pos - scores.e_neg; }
};

/// Patch vector with non-lung voxels set to zero.
void masked_patch_into(const Volume3& v, const LungMask& mask, const PatchGrid& grid,
                       std::size_t index, std::span<float> out);

/// Patches whose lung fraction, averaged over `masks`, reaches `min_fraction`.
/// `mean_fractions` (if given) receives the average for every grid patch.
std::vector<std::size_t> select_active_patches(std::span<const LungMask* const> masks,
                                               const PatchGrid& grid, double min_fraction,
                                               std::vector<double>* mean_fractions = nullptr);

struct PatchModel {
  std::size_t patch_id = 0;
  std::uint64_t seed = 0;
  /// Present in kpca mode.
  std::optional<EigenlungModel> eigenlungs;
  /// Raw training vectors, kept in vaf mode only.
  SampleMatrix raw_vectors;
  /// SVM inputs of the training subjects, one row each.
  Eigen::MatrixXd train_features;
  std::vector<int> train_labels;
  /// Calibrated SVM on all training subjects.
  CalibratedSvm svm;
};

struct EnsembleModel {
  EnsembleConfig config;
  PatchGrid grid;
  std::vector<double> mean_lung_fraction;
  std::vector<std::size_t> active_patches;
  std::vector<PatchModel> patches;  // parallel to active_patches
  std::vector<std::string> training_ids;
};

/// `volumes` must be registered and standardized, with matching dims.
/// `ids` is optional and only recorded.
EnsembleModel train_ensemble(std::span<const Volume3* const> volumes,
                             std::span<const LungMask* const> masks, std::span<const Label> labels,
                             const EnsembleConfig& config, std::span<const std::string> ids = {});

SubjectDecision classify_subject(const EnsembleModel& model, const Volume3& volume,
                                 const LungMask& mask);

/// Trains on the training subjects and classifies the test subjects without
/// keeping per-patch models. Equal to train_ensemble followed by
/// classify_subject for each test subject.
std::vector<SubjectDecision> train_and_classify(std::span<const Volume3* const> train_volumes,
                                                std::span<const LungMask* const> train_masks,
                                                std::span<const Label> train_labels,
                                                std::span<const Volume3* const> test_volumes,
                                                std::span<const LungMask* const> test_masks,
                                                const EnsembleConfig& config);

/// [{patch_id, origin, side, predicted_label, mean_p, u, weight}].
nlohmann::json reliability_map(const PatchGrid& grid, const SubjectDecision& decision);

void save_ensemble(const EnsembleModel& model, const std::filesystem::path& dir);
EnsembleModel load_ensemble(const std::filesystem::path& dir);

}  // namespace eigenpatch
