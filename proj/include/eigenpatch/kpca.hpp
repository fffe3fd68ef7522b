#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include "json.hpp"
#include <span>
#include <string>

namespace eigenpatch {

/// Row-major float matrix; each row is one sample vector.
using SampleMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class KernelKind { rbf, polynomial, linear };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& s);

/// rbf: exp(-||x-z||^2 / (2 sigma^2)); polynomial: (x.z + coef0)^degree;
/// linear: x.z.
struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  double sigma = 1.0;
  int degree = 2;
  double coef0 = 1.0;

  static KernelSpec rbf(double sigma);
  /// rbf written as exp(-gamma ||x-z||^2).
  static KernelSpec rbf_gamma(double gamma);
  static KernelSpec polynomial(int degree, double coef0);
  static KernelSpec linear();

  double gamma() const { return 0.5 / (sigma * sigma); }
  void validate() const;
  /// Kernel value from the pair's squared distance and dot product; only the
  /// one the kind needs is read.
  double from_parts(double squared_distance, double dot) const;
  bool uses_distance() const { return kind == KernelKind::rbf; }
};

double kernel_value(const KernelSpec& k, std::span<const float> a, std::span<const float> b);

/// All-pairs squared Euclidean distances between rows, cache-blocked over
/// columns.
Eigen::MatrixXd pairwise_squared_distances(const SampleMatrix& x);
/// All-pairs dot products between rows.
Eigen::MatrixXd pairwise_dots(const SampleMatrix& x);

/// Distances and dots between the rows of `a` and the rows of `b`. Entry
/// (i, j) is bit-identical to the (i, j) entry of the pairwise routines run on
/// the rows of `a` followed by the rows of `b`.
Eigen::MatrixXd cross_squared_distances(const SampleMatrix& a, const SampleMatrix& b);
Eigen::MatrixXd cross_dots(const SampleMatrix& a, const SampleMatrix& b);

/// Median of the pairwise (unsquared) distances among the first `n` rows of a
/// squared-distance matrix.
double median_pairwise_distance(const Eigen::MatrixXd& squared_distances, std::size_t n);

/// K_ij = k(x_i, x_j).
Eigen::MatrixXd gram_matrix(const SampleMatrix& x, const KernelSpec& kernel);
/// Kernel matrix from precomputed pair statistics (distances or dots,
/// whichever the kind uses).
Eigen::MatrixXd gram_from_parts(const Eigen::MatrixXd& parts, const KernelSpec& kernel);

/// Double-centred Gram matrix: K - 1K - K1 + 1K1 with 1 = ones/N.
Eigen::MatrixXd center_gram(const Eigen::MatrixXd& k);

struct EigenlungModel {
  SampleMatrix train_vectors;  // N x d
  KernelSpec kernel;
  Eigen::MatrixXd alphas;        // N x m, columns are components
  Eigen::VectorXd eigenvalues;   // m, descending; covariance eigenvalues
  std::size_t n_components = 0;  // m
  std::size_t rank = 0;          // components kept before the variance cut
  double variance_target = 0.9;
  Eigen::VectorXd train_row_means;  // mean of each Gram row
  double train_grand_mean = 0.0;

  std::size_t input_dim() const { return static_cast<std::size_t>(train_vectors.cols()); }
  std::size_t train_count() const { return static_cast<std::size_t>(train_vectors.rows()); }
};

constexpr double kEigenvalueCutoff = 1e-10;

/// Fits on rows of `x`. If `train_projections` is given it receives the N x m
/// projections of the training rows.
EigenlungModel fit_eigenlungs(const SampleMatrix& x, const KernelSpec& kernel,
                              double variance_target = 0.90,
                              Eigen::MatrixXd* train_projections = nullptr);

/// As fit_eigenlungs, with the uncentred Gram matrix of `x` supplied.
EigenlungModel fit_eigenlungs_from_gram(SampleMatrix x, const Eigen::MatrixXd& gram,
                                        const KernelSpec& kernel, double variance_target,
                                        Eigen::MatrixXd* train_projections = nullptr);

Eigen::VectorXd project(const EigenlungModel& model, std::span<const float> x);
/// Projection given k(x_i, x) for every training row i.
Eigen::VectorXd project_kernel_row(const EigenlungModel& model, const Eigen::VectorXd& k_row);

nlohmann::json to_json(const EigenlungModel& model);
EigenlungModel eigenlung_model_from_json(const nlohmann::json& j);
/// For documents written without "train_vectors"; the vectors come from
/// elsewhere.
EigenlungModel eigenlung_model_from_json(const nlohmann::json& j, SampleMatrix train_vectors);
nlohmann::json to_json(const KernelSpec& k);
KernelSpec kernel_spec_from_json(const nlohmann::json& j);

}  // namespace eigenpatch
