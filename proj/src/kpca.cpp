#include "eigenpatch/kpca.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/simd/kernels.hpp"

namespace eigenpatch {
namespace {

using nlohmann::json;

// Column block for the pairwise passes; 2048 floats per row keeps a block of
// a hundred rows inside L2.
constexpr Eigen::Index kColumnBlock = 2048;

template <typename PairFn>
Eigen::MatrixXd blocked_pairwise(const SampleMatrix& x, PairFn&& pair, bool include_diagonal) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index c0 = 0; c0 < d; c0 += kColumnBlock) {
    const auto len = static_cast<std::size_t>(std::min(kColumnBlock, d - c0));
    for (Eigen::Index i = 0; i < n; ++i) {
      const float* a = x.data() + i * d + c0;
      for (Eigen::Index j = include_diagonal ? i : i + 1; j < n; ++j) {
        out(i, j) += pair(a, x.data() + j * d + c0, len);
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) out(j, i) = out(i, j);
  }
  return out;
}

template <typename PairFn>
Eigen::MatrixXd blocked_cross(const SampleMatrix& a, const SampleMatrix& b, PairFn&& pair) {
  if (a.cols() != b.cols()) throw ArgumentError("sample matrices differ in dimension");
  const Eigen::Index d = a.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (Eigen::Index c0 = 0; c0 < d; c0 += kColumnBlock) {
    const auto len = static_cast<std::size_t>(std::min(kColumnBlock, d - c0));
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const float* pa = a.data() + i * d + c0;
      for (Eigen::Index j = 0; j < b.rows(); ++j) out(i, j) += pair(pa, b.data() + j * d + c0, len);
    }
  }
  return out;
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + " has non-finite entries");
}

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::rbf:
      return "rbf";
    case KernelKind::polynomial:
      return "polynomial";
    case KernelKind::linear:
      return "linear";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "rbf") return KernelKind::rbf;
  if (s == "polynomial") return KernelKind::polynomial;
  if (s == "linear") return KernelKind::linear;
  throw ArgumentError("unknown kernel kind '" + s + "'");
}

KernelSpec KernelSpec::rbf(double sigma) {
  KernelSpec k;
  k.kind = KernelKind::rbf;
  k.sigma = sigma;
  k.validate();
  return k;
}

KernelSpec KernelSpec::rbf_gamma(double gamma) {
  if (!(gamma > 0.0)) throw ArgumentError("rbf gamma must be positive");
  return rbf(std::sqrt(0.5 / gamma));
}

KernelSpec KernelSpec::polynomial(int degree, double coef0) {
  KernelSpec k;
  k.kind = KernelKind::polynomial;
  k.degree = degree;
  k.coef0 = coef0;
  k.validate();
  return k;
}

KernelSpec KernelSpec::linear() {
  KernelSpec k;
  k.kind = KernelKind::linear;
  return k;
}

void KernelSpec::validate() const {
  if (kind == KernelKind::rbf && !(sigma > 0.0 && std::isfinite(sigma))) {
    throw ArgumentError("rbf kernel needs sigma > 0");
  }
  if (kind == KernelKind::polynomial && degree < 1) {
    throw ArgumentError("polynomial kernel needs degree >= 1");
  }
}

double KernelSpec::from_parts(double squared_distance, double dot) const {
  switch (kind) {
    case KernelKind::rbf:
      return std::exp(-0.5 * squared_distance / (sigma * sigma));
    case KernelKind::polynomial:
      return std::pow(dot + coef0, degree);
    case KernelKind::linear:
      return dot;
  }
  return 0.0;
}

double kernel_value(const KernelSpec& k, std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ArgumentError("kernel arguments differ in dimension");
  const auto& simd = simd::active_kernels();
  if (k.uses_distance()) return k.from_parts(simd.squared_distance(a.data(), b.data(), a.size()), 0.0);
  return k.from_parts(0.0, simd.dot(a.data(), b.data(), a.size()));
}

Eigen::MatrixXd pairwise_squared_distances(const SampleMatrix& x) {
  const auto& k = simd::active_kernels();
  return blocked_pairwise(x, k.squared_distance, false);
}

Eigen::MatrixXd pairwise_dots(const SampleMatrix& x) {
  const auto& k = simd::active_kernels();
  return blocked_pairwise(x, k.dot, true);
}

Eigen::MatrixXd cross_squared_distances(const SampleMatrix& a, const SampleMatrix& b) {
  return blocked_cross(a, b, simd::active_kernels().squared_distance);
}

Eigen::MatrixXd cross_dots(const SampleMatrix& a, const SampleMatrix& b) {
  return blocked_cross(a, b, simd::active_kernels().dot);
}

double median_pairwise_distance(const Eigen::MatrixXd& squared_distances, std::size_t n) {
  if (n < 2 || static_cast<Eigen::Index>(n) > squared_distances.rows()) {
    throw ArgumentError("median distance needs at least two rows");
  }
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d.push_back(std::sqrt(std::max(0.0, squared_distances(static_cast<Eigen::Index>(i),
                                                            static_cast<Eigen::Index>(j)))));
    }
  }
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double median = *mid;
  if (d.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(d.begin(), mid));
  }
  if (!(median > 0.0)) throw DegenerateInputError("all training vectors coincide");
  return median;
}

Eigen::MatrixXd gram_from_parts(const Eigen::MatrixXd& parts, const KernelSpec& kernel) {
  kernel.validate();
  Eigen::MatrixXd k(parts.rows(), parts.cols());
  for (Eigen::Index j = 0; j < parts.cols(); ++j) {
    for (Eigen::Index i = 0; i < parts.rows(); ++i) {
      k(i, j) = kernel.uses_distance() ? kernel.from_parts(parts(i, j), 0.0)
                                       : kernel.from_parts(0.0, parts(i, j));
    }
  }
  check_finite(k, "Gram matrix");
  return k;
}

Eigen::MatrixXd gram_matrix(const SampleMatrix& x, const KernelSpec& kernel) {
  if (x.rows() < 2) throw ArgumentError("Gram matrix needs at least two samples");
  if (!x.allFinite()) throw NumericalError("sample matrix has non-finite entries");
  kernel.validate();
  return gram_from_parts(kernel.uses_distance() ? pairwise_squared_distances(x) : pairwise_dots(x),
                         kernel);
}

Eigen::MatrixXd center_gram(const Eigen::MatrixXd& k) {
  const Eigen::VectorXd col_means = k.colwise().mean().transpose();
  const Eigen::VectorXd row_means = k.rowwise().mean();
  const double grand = k.mean();
  Eigen::MatrixXd c = k;
  c.colwise() -= row_means;
  c.rowwise() -= col_means.transpose();
  c.array() += grand;
  return c;
}

EigenlungModel fit_eigenlungs_from_gram(SampleMatrix x, const Eigen::MatrixXd& gram,
                                        const KernelSpec& kernel, double variance_target,
                                        Eigen::MatrixXd* train_projections) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw ArgumentError("kernel PCA needs at least two samples");
  if (gram.rows() != n || gram.cols() != n) throw ArgumentError("Gram matrix does not match samples");
  if (!(variance_target > 0.0 && variance_target <= 1.0)) {
    throw ArgumentError("variance target must lie in (0, 1]");
  }
  kernel.validate();
  check_finite(gram, "Gram matrix");

  const Eigen::MatrixXd kc = center_gram(gram);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(kc);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");

  // Eigen returns ascending order.
  const Eigen::VectorXd& evals = solver.eigenvalues();
  const double top = evals(n - 1);
  const double scale = std::max(gram.diagonal().cwiseAbs().mean(), 1e-300);
  if (!(top > 1e-12 * scale)) throw DegenerateInputError("centred Gram matrix is numerically zero");

  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (evals(i) > kEigenvalueCutoff * top) kept.push_back(i);
  }

  std::vector<double> cumulative(kept.size());
  double running = 0.0;
  for (std::size_t j = 0; j < kept.size(); ++j) {
    running += evals(kept[j]);
    cumulative[j] = running;
  }
  std::size_t m = kept.size();
  for (std::size_t j = 0; j < kept.size(); ++j) {
    if (cumulative[j] >= variance_target * running) {
      m = j + 1;
      break;
    }
  }

  EigenlungModel model;
  model.kernel = kernel;
  model.variance_target = variance_target;
  model.rank = kept.size();
  model.n_components = m;
  model.alphas.resize(n, static_cast<Eigen::Index>(m));
  model.eigenvalues.resize(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j) {
    const double mu = evals(kept[j]);  // = N * lambda
    Eigen::VectorXd v = solver.eigenvectors().col(kept[j]);
    Eigen::Index argmax = 0;
    v.cwiseAbs().maxCoeff(&argmax);
    if (v(argmax) < 0.0) v = -v;
    model.alphas.col(static_cast<Eigen::Index>(j)) = v / std::sqrt(mu);
    model.eigenvalues(static_cast<Eigen::Index>(j)) = mu / static_cast<double>(n);
  }
  model.train_row_means = gram.rowwise().mean();
  model.train_grand_mean = gram.mean();
  model.train_vectors = std::move(x);
  if (train_projections != nullptr) *train_projections = kc * model.alphas;
  return model;
}

EigenlungModel fit_eigenlungs(const SampleMatrix& x, const KernelSpec& kernel,
                              double variance_target, Eigen::MatrixXd* train_projections) {
  return fit_eigenlungs_from_gram(x, gram_matrix(x, kernel), kernel, variance_target,
                                  train_projections);
}

Eigen::VectorXd project_kernel_row(const EigenlungModel& model, const Eigen::VectorXd& k_row) {
  if (k_row.size() != model.alphas.rows()) throw ArgumentError("kernel row has the wrong length");
  Eigen::VectorXd kc = k_row.array() - k_row.mean() + model.train_grand_mean;
  kc -= model.train_row_means;
  return model.alphas.transpose() * kc;
}

Eigen::VectorXd project(const EigenlungModel& model, std::span<const float> x) {
  if (x.size() != model.input_dim()) {
    throw ArgumentError("projection input has dimension " + std::to_string(x.size()) +
                        ", model expects " + std::to_string(model.input_dim()));
  }
  const Eigen::Index n = model.train_vectors.rows();
  const auto d = static_cast<std::size_t>(model.train_vectors.cols());
  Eigen::VectorXd k_row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k_row(i) = kernel_value(model.kernel, {model.train_vectors.data() + i * model.train_vectors.cols(), d}, x);
  }
  return project_kernel_row(model, k_row);
}

json to_json(const KernelSpec& k) {
  return {{"kind", to_string(k.kind)}, {"sigma", k.sigma}, {"degree", k.degree}, {"coef0", k.coef0}};
}

KernelSpec kernel_spec_from_json(const json& j) {
  KernelSpec k;
  k.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
  k.sigma = j.at("sigma").get<double>();
  k.degree = j.at("degree").get<int>();
  k.coef0 = j.at("coef0").get<double>();
  k.validate();
  return k;
}

namespace {

template <typename Matrix>
json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Matrix>
Matrix matrix_from_json(const json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("ragged matrix in model JSON");
    for (Eigen::Index jj = 0; jj < cols; ++jj) {
      m(i, jj) = row.at(static_cast<std::size_t>(jj)).get<typename Matrix::Scalar>();
    }
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

json to_json(const EigenlungModel& model) {
  return {
      {"kernel", to_json(model.kernel)},
      {"variance_target", model.variance_target},
      {"n_components", model.n_components},
      {"rank", model.rank},
      {"eigenvalues", vector_to_json(model.eigenvalues)},
      {"alphas", matrix_to_json(model.alphas)},
      {"train_row_means", vector_to_json(model.train_row_means)},
      {"train_grand_mean", model.train_grand_mean},
      {"train_vectors", matrix_to_json(model.train_vectors)},
  };
}

EigenlungModel eigenlung_model_from_json(const json& j) {
  try {
    return eigenlung_model_from_json(j, matrix_from_json<SampleMatrix>(j.at("train_vectors")));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed eigenlung model: ") + e.what());
  }
}

EigenlungModel eigenlung_model_from_json(const json& j, SampleMatrix train_vectors) {
  try {
    EigenlungModel m;
    m.kernel = kernel_spec_from_json(j.at("kernel"));
    m.variance_target = j.at("variance_target").get<double>();
    m.n_components = j.at("n_components").get<std::size_t>();
    m.rank = j.at("rank").get<std::size_t>();
    m.eigenvalues = vector_from_json(j.at("eigenvalues"));
    m.alphas = matrix_from_json<Eigen::MatrixXd>(j.at("alphas"));
    m.train_row_means = vector_from_json(j.at("train_row_means"));
    m.train_grand_mean = j.at("train_grand_mean").get<double>();
    m.train_vectors = std::move(train_vectors);
    if (m.alphas.cols() != static_cast<Eigen::Index>(m.n_components) ||
        m.eigenvalues.size() != static_cast<Eigen::Index>(m.n_components) ||
        m.alphas.rows() != m.train_vectors.rows() ||
        m.train_row_means.size() != m.train_vectors.rows()) {
      throw FormatError("inconsistent eigenlung model shapes");
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed eigenlung model: ") + e.what());
  }
}

}  // namespace eigenpatch
