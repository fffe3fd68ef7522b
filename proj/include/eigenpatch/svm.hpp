#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "eigenpatch/kpca.hpp"
#include "json.hpp"

namespace eigenpatch {

enum class ClassWeighting { balanced, explicit_weights };

struct SvmConfig {
  double C = 1.0;
  double gamma = 3.0;
  ClassWeighting weighting = ClassWeighting::balanced;
  /// Used when weighting is explicit_weights.
  double w_neg = 1.0;
  double w_pos = 1.0;
  double kkt_tol = 1e-3;
  long max_iters = 100000;
  /// Record the dual objective, sum(a) - a'Qa/2, after every SMO step.
  bool track_objective = false;
};

/// Solution of the dual on a precomputed kernel matrix.
struct DualSolution {
  Eigen::VectorXd alpha;  // one per training row, 0 <= alpha_i <= C w_{y_i}
  double bias = 0.0;
  double w_neg = 1.0;
  double w_pos = 1.0;
  long iterations = 0;
  /// Gap m - M between the most violating pair at exit.
  double kkt_gap = 0.0;
  std::vector<double> objective_history;
};

/// (w_neg, w_pos) for the configuration and labels in {-1, +1}.
std::pair<double, double> class_weights(const SvmConfig& config, std::span<const int> y);

/// SMO with second-order working-set selection. `kernel` is the full
/// n x n training kernel; labels are in {-1, +1}.
DualSolution solve_svm_dual(const Eigen::MatrixXd& kernel, std::span<const int> y,
                            const SvmConfig& config);

/// Same, over the rows/columns of `kernel` listed in `subset` (duplicates
/// allowed). `y` is indexed like `subset`.
DualSolution solve_svm_dual(const Eigen::MatrixXd& kernel, std::span<const std::size_t> subset,
                            std::span<const int> y, const SvmConfig& config);

struct SvmModel {
  SampleMatrix support_vectors;  // N_sv x m
  Eigen::VectorXd dual_coefs;    // alpha_i y_i
  Eigen::VectorXd alphas;        // alpha_i
  std::vector<int> sv_labels;
  double bias = 0.0;
  KernelSpec kernel;
  double C = 1.0;
  double w_neg = 1.0;
  double w_pos = 1.0;

  std::size_t dimension() const { return static_cast<std::size_t>(support_vectors.cols()); }
  std::size_t support_count() const { return static_cast<std::size_t>(support_vectors.rows()); }
};

SvmModel train_svm(const SampleMatrix& x, std::span<const int> y, const SvmConfig& config,
                   DualSolution* solution = nullptr);

double decision_value(const SvmModel& model, std::span<const float> x);

/// Largest violation of the per-sample KKT conditions over (x, y).
double max_kkt_violation(const SvmModel& model, const SampleMatrix& x, std::span<const int> y);

/// P(y = +1 | f) = 1 / (1 + exp(A f + B)).
struct PlattSigmoid {
  double A = 0.0;
  double B = 0.0;

  double p_pos(double f) const;
};

struct PlattFit {
  PlattSigmoid sigmoid;
  int iterations = 0;
  double gradient_norm = 0.0;
  /// NLL at the start and after every accepted Newton step.
  std::vector<double> nll_history;
};

/// Newton's method with backtracking on Platt's smoothed targets.
PlattFit fit_platt(std::span<const double> f_vals, std::span<const int> y,
                   int max_newton_iters = 100);

/// Platt NLL of (A, B) on (f, y) with smoothed targets.
double platt_nll(const PlattSigmoid& s, std::span<const double> f_vals, std::span<const int> y);

struct CalibratedSvm {
  SvmModel svm;
  PlattSigmoid sigmoid;
};

CalibratedSvm train_calibrated_svm(const SampleMatrix& x, std::span<const int> y,
                                   const SvmConfig& config);

/// (p_neg, p_pos).
std::pair<double, double> posterior(const CalibratedSvm& cal, std::span<const float> x);
std::pair<double, double> posterior_from_decision(const PlattSigmoid& s, double f);

struct GridCell {
  double gamma;
  double C;
  std::size_t fold;
  double balanced_accuracy;
};

struct GridSearchResult {
  double gamma = 0.0;
  double C = 0.0;
  double mean_balanced_accuracy = 0.0;
  std::vector<GridCell> table;
};

/// Stratified k-fold assignment; fold i of sample j is result[j].
std::vector<std::size_t> stratified_folds(std::span<const int> y, std::size_t folds,
                                          std::uint64_t seed);

GridSearchResult grid_search(const SampleMatrix& x, std::span<const int> y,
                             std::span<const double> gammas, std::span<const double> Cs,
                             std::size_t folds, const SvmConfig& base = {},
                             std::uint64_t seed = 0);

void write_grid_csv(const GridSearchResult& result, const std::filesystem::path& path);

nlohmann::json to_json(const SvmModel& model);
SvmModel svm_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CalibratedSvm& model);
CalibratedSvm calibrated_svm_from_json(const nlohmann::json& j);

}  // namespace eigenpatch
