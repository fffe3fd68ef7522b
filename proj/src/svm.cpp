#include "eigenpatch/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/label.hpp"
#include "eigenpatch/random.hpp"
#include "eigenpatch/simd/kernels.hpp"

namespace eigenpatch {
namespace {

using nlohmann::json;

constexpr double kTau = 1e-12;

void require_labels(std::span<const int> y) {
  std::size_t pos = 0;
  std::size_t neg = 0;
  for (const int v : y) {
    if (v == 1) {
      ++pos;
    } else if (v == -1) {
      ++neg;
    } else {
      throw ArgumentError("labels must be -1 or +1");
    }
  }
  if (pos == 0 || neg == 0) throw ArgumentError("training data must contain both classes");
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double dual_objective(const Eigen::VectorXd& alpha, const Eigen::VectorXd& grad) {
  // -(1/2 a'Qa - e'a) with Qa = G + e.
  return -0.5 * alpha.dot(grad - Eigen::VectorXd::Ones(alpha.size()));
}

DualSolution smo(const Eigen::MatrixXd& k, std::span<const int> y, const SvmConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(y.size());
  const auto [w_neg, w_pos] = class_weights(cfg, y);
  Eigen::VectorXd c(n);
  for (Eigen::Index i = 0; i < n; ++i) c(i) = cfg.C * (y[static_cast<std::size_t>(i)] > 0 ? w_pos : w_neg);
  auto yi = [&](Eigen::Index i) { return static_cast<double>(y[static_cast<std::size_t>(i)]); };

  DualSolution sol;
  sol.w_neg = w_neg;
  sol.w_pos = w_pos;
  sol.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd& a = sol.alpha;
  Eigen::VectorXd g = -Eigen::VectorXd::Ones(n);  // gradient of 1/2 a'Qa - e'a
  auto in_up = [&](Eigen::Index t) { return yi(t) > 0 ? a(t) < c(t) : a(t) > 0.0; };
  auto in_low = [&](Eigen::Index t) { return yi(t) > 0 ? a(t) > 0.0 : a(t) < c(t); };

  if (cfg.track_objective) sol.objective_history.push_back(0.0);
  for (;;) {
    Eigen::Index i = -1;
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -yi(t) * g(t);
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t)) gmin = std::min(gmin, v);
    }
    sol.kkt_gap = gmax - gmin;
    if (i < 0 || sol.kkt_gap < cfg.kkt_tol) break;
    if (sol.iterations >= cfg.max_iters) {
      throw ConvergenceError("SMO did not reach the KKT tolerance in " +
                             std::to_string(cfg.max_iters) + " iterations");
    }

    Eigen::Index j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double b = gmax + yi(t) * g(t);
      if (b <= 0.0) continue;
      double quad = k(i, i) + k(t, t) - 2.0 * k(i, t);
      if (quad <= 0.0) quad = kTau;
      const double score = -(b * b) / quad;
      if (score <= best) {
        best = score;
        j = t;
      }
    }
    if (j < 0) break;
    ++sol.iterations;

    const double ai_old = a(i);
    const double aj_old = a(j);
    const double ci = c(i);
    const double cj = c(j);
    if (yi(i) != yi(j)) {
      double quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-g(i) - g(j)) / quad;
      const double diff = a(i) - a(j);
      a(i) += delta;
      a(j) += delta;
      if (diff > 0.0) {
        if (a(j) < 0.0) {
          a(j) = 0.0;
          a(i) = diff;
        }
      } else if (a(i) < 0.0) {
        a(i) = 0.0;
        a(j) = -diff;
      }
      if (diff > ci - cj) {
        if (a(i) > ci) {
          a(i) = ci;
          a(j) = ci - diff;
        }
      } else if (a(j) > cj) {
        a(j) = cj;
        a(i) = cj + diff;
      }
    } else {
      double quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (g(i) - g(j)) / quad;
      const double sum = a(i) + a(j);
      a(i) -= delta;
      a(j) += delta;
      if (sum > ci) {
        if (a(i) > ci) {
          a(i) = ci;
          a(j) = sum - ci;
        }
      } else if (a(j) < 0.0) {
        a(j) = 0.0;
        a(i) = sum;
      }
      if (sum > cj) {
        if (a(j) > cj) {
          a(j) = cj;
          a(i) = sum - cj;
        }
      } else if (a(i) < 0.0) {
        a(i) = 0.0;
        a(j) = sum;
      }
    }

    const double di = (a(i) - ai_old) * yi(i);
    const double dj = (a(j) - aj_old) * yi(j);
    for (Eigen::Index t = 0; t < n; ++t) g(t) += yi(t) * (k(t, i) * di + k(t, j) * dj);
    if (cfg.track_objective) sol.objective_history.push_back(dual_objective(a, g));
  }

  // Bias from free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = yi(t) * g(t);
    if (a(t) >= c(t)) {
      if (yi(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (a(t) <= 0.0) {
      if (yi(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  sol.bias = -rho;
  return sol;
}

double kernel_between(const KernelSpec& k, const float* a, const float* b, std::size_t d) {
  return kernel_value(k, {a, d}, {b, d});
}

}  // namespace

std::vector<int> to_signs(std::span<const Label> labels) {
  std::vector<int> y(labels.size());
  std::transform(labels.begin(), labels.end(), y.begin(), to_sign);
  return y;
}

std::pair<double, double> class_weights(const SvmConfig& config, std::span<const int> y) {
  if (config.weighting == ClassWeighting::explicit_weights) {
    if (!(config.w_neg > 0.0 && config.w_pos > 0.0)) {
      throw ArgumentError("class weights must be positive");
    }
    return {config.w_neg, config.w_pos};
  }
  const auto n = static_cast<double>(y.size());
  const auto n_pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double n_neg = n - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw ArgumentError("training data must contain both classes");
  return {n / (2.0 * n_neg), n / (2.0 * n_pos)};
}

DualSolution solve_svm_dual(const Eigen::MatrixXd& kernel, std::span<const int> y,
                            const SvmConfig& config) {
  if (kernel.rows() != kernel.cols() || kernel.rows() != static_cast<Eigen::Index>(y.size())) {
    throw ArgumentError("kernel matrix does not match the labels");
  }
  if (y.size() < 2) throw ArgumentError("SVM training needs at least two samples");
  if (!(config.C > 0.0) || !(config.kkt_tol > 0.0)) throw ArgumentError("invalid SVM configuration");
  require_labels(y);
  if (!kernel.allFinite()) throw NumericalError("kernel matrix has non-finite entries");
  return smo(kernel, y, config);
}

DualSolution solve_svm_dual(const Eigen::MatrixXd& kernel, std::span<const std::size_t> subset,
                            std::span<const int> y, const SvmConfig& config) {
  if (subset.size() != y.size()) throw ArgumentError("subset and labels differ in length");
  const auto s = static_cast<Eigen::Index>(subset.size());
  Eigen::MatrixXd local(s, s);
  for (Eigen::Index b = 0; b < s; ++b) {
    const auto cb = static_cast<Eigen::Index>(subset[static_cast<std::size_t>(b)]);
    if (cb >= kernel.rows()) throw ArgumentError("subset index out of range");
    for (Eigen::Index a = 0; a < s; ++a) {
      local(a, b) = kernel(static_cast<Eigen::Index>(subset[static_cast<std::size_t>(a)]), cb);
    }
  }
  return solve_svm_dual(local, y, config);
}

SvmModel train_svm(const SampleMatrix& x, std::span<const int> y, const SvmConfig& config,
                   DualSolution* solution) {
  if (x.rows() != static_cast<Eigen::Index>(y.size())) {
    throw ArgumentError("sample count does not match the labels");
  }
  require_labels(y);
  const KernelSpec kernel = KernelSpec::rbf_gamma(config.gamma);
  DualSolution sol = solve_svm_dual(gram_matrix(x, kernel), y, config);

  SvmModel model;
  model.kernel = kernel;
  model.C = config.C;
  model.w_neg = sol.w_neg;
  model.w_pos = sol.w_pos;
  model.bias = sol.bias;
  std::vector<Eigen::Index> sv;
  for (Eigen::Index i = 0; i < sol.alpha.size(); ++i) {
    if (sol.alpha(i) > 0.0) sv.push_back(i);
  }
  const auto nsv = static_cast<Eigen::Index>(sv.size());
  model.support_vectors.resize(nsv, x.cols());
  model.dual_coefs.resize(nsv);
  model.alphas.resize(nsv);
  model.sv_labels.resize(sv.size());
  for (Eigen::Index r = 0; r < nsv; ++r) {
    const Eigen::Index i = sv[static_cast<std::size_t>(r)];
    model.support_vectors.row(r) = x.row(i);
    model.alphas(r) = sol.alpha(i);
    model.sv_labels[static_cast<std::size_t>(r)] = y[static_cast<std::size_t>(i)];
    model.dual_coefs(r) = sol.alpha(i) * y[static_cast<std::size_t>(i)];
  }
  if (solution != nullptr) *solution = std::move(sol);
  return model;
}

double decision_value(const SvmModel& model, std::span<const float> x) {
  if (x.size() != model.dimension()) {
    throw ArgumentError("decision input has dimension " + std::to_string(x.size()) +
                        ", model expects " + std::to_string(model.dimension()));
  }
  double f = model.bias;
  const auto d = model.dimension();
  for (Eigen::Index i = 0; i < model.support_vectors.rows(); ++i) {
    f += model.dual_coefs(i) *
         kernel_between(model.kernel, model.support_vectors.data() + i * model.support_vectors.cols(),
                        x.data(), d);
  }
  return f;
}

double max_kkt_violation(const SvmModel& model, const SampleMatrix& x, std::span<const int> y) {
  // Support vectors are matched back to rows by content.
  double worst = 0.0;
  const auto d = static_cast<std::size_t>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double yf = y[static_cast<std::size_t>(r)] * decision_value(model, {x.data() + r * x.cols(), d});
    const double bound = model.C * (y[static_cast<std::size_t>(r)] > 0 ? model.w_pos : model.w_neg);
    double alpha = 0.0;
    for (Eigen::Index s = 0; s < model.support_vectors.rows(); ++s) {
      if (model.sv_labels[static_cast<std::size_t>(s)] == y[static_cast<std::size_t>(r)] &&
          model.support_vectors.row(s) == x.row(r)) {
        alpha = model.alphas(s);
        break;
      }
    }
    double v;
    if (alpha <= 0.0) {
      v = std::max(0.0, 1.0 - yf);
    } else if (alpha >= bound * (1.0 - 1e-12)) {
      v = std::max(0.0, yf - 1.0);
    } else {
      v = std::abs(yf - 1.0);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

double PlattSigmoid::p_pos(double f) const {
  const double z = A * f + B;
  // 1 / (1 + e^z), evaluated on the side that cannot overflow.
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

namespace {

struct PlattTargets {
  double hi;
  double lo;
};

PlattTargets platt_targets(std::span<const int> y) {
  const auto n_pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double n_neg = static_cast<double>(y.size()) - n_pos;
  return {(n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0)};
}

double nll_with(double A, double B, std::span<const double> f, std::span<const int> y,
                PlattTargets tg) {
  double nll = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double t = y[i] > 0 ? tg.hi : tg.lo;
    const double z = f[i] * A + B;
    // -(t log p + (1-t) log(1-p)) with p = 1/(1+e^z).
    nll += t * softplus(z) + (1.0 - t) * softplus(-z);
  }
  return nll;
}

}  // namespace

double platt_nll(const PlattSigmoid& s, std::span<const double> f_vals, std::span<const int> y) {
  if (f_vals.size() != y.size()) throw ArgumentError("decision values and labels differ in length");
  return nll_with(s.A, s.B, f_vals, y, platt_targets(y));
}

PlattFit fit_platt(std::span<const double> f_vals, std::span<const int> y, int max_newton_iters) {
  if (f_vals.size() != y.size()) throw ArgumentError("decision values and labels differ in length");
  require_labels(y);
  if (max_newton_iters < 0) throw ArgumentError("Newton iteration cap must be non-negative");
  const PlattTargets tg = platt_targets(y);
  const auto n_pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double n_neg = static_cast<double>(y.size()) - n_pos;

  constexpr double kMinStep = 1e-10;
  constexpr double kSigma = 1e-12;  // Hessian ridge
  constexpr double kGradTol = 1e-8;

  PlattFit fit;
  double A = 0.0;
  double B = std::log((n_neg + 1.0) / (n_pos + 1.0));
  double nll = nll_with(A, B, f_vals, y, tg);
  if (!std::isfinite(nll)) throw NumericalError("Platt NLL is not finite");
  fit.nll_history.push_back(nll);

  for (;;) {
    double h11 = kSigma;
    double h22 = kSigma;
    double h21 = 0.0;
    double g1 = 0.0;
    double g2 = 0.0;
    for (std::size_t i = 0; i < f_vals.size(); ++i) {
      const double f = f_vals[i];
      const double t = y[i] > 0 ? tg.hi : tg.lo;
      const double z = f * A + B;
      double p;
      double q;
      if (z >= 0.0) {
        const double e = std::exp(-z);
        p = e / (1.0 + e);
        q = 1.0 / (1.0 + e);
      } else {
        const double e = std::exp(z);
        p = 1.0 / (1.0 + e);
        q = e / (1.0 + e);
      }
      const double d2 = p * q;
      h11 += f * f * d2;
      h22 += d2;
      h21 += f * d2;
      const double d1 = t - p;
      g1 += f * d1;
      g2 += d1;
    }
    fit.gradient_norm = std::hypot(g1, g2);
    if (fit.gradient_norm < kGradTol || fit.iterations >= max_newton_iters) break;

    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;

    double step = 1.0;
    bool accepted = false;
    while (step >= kMinStep) {
      const double nA = A + step * dA;
      const double nB = B + step * dB;
      const double nn = nll_with(nA, nB, f_vals, y, tg);
      if (!std::isfinite(nn)) throw NumericalError("Platt NLL is not finite");
      if (nn < nll + 1e-4 * step * gd) {
        A = nA;
        B = nB;
        nll = nn;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent left at machine precision
    ++fit.iterations;
    fit.nll_history.push_back(nll);
  }
  fit.sigmoid = {A, B};
  return fit;
}

std::pair<double, double> posterior_from_decision(const PlattSigmoid& s, double f) {
  const double p = s.p_pos(f);
  return {1.0 - p, p};
}

std::pair<double, double> posterior(const CalibratedSvm& cal, std::span<const float> x) {
  return posterior_from_decision(cal.sigmoid, decision_value(cal.svm, x));
}

CalibratedSvm train_calibrated_svm(const SampleMatrix& x, std::span<const int> y,
                                   const SvmConfig& config) {
  CalibratedSvm cal;
  cal.svm = train_svm(x, y, config);
  std::vector<double> f(y.size());
  const auto d = static_cast<std::size_t>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    f[static_cast<std::size_t>(i)] = decision_value(cal.svm, {x.data() + i * x.cols(), d});
  }
  cal.sigmoid = fit_platt(f, y).sigmoid;
  return cal;
}

std::vector<std::size_t> stratified_folds(std::span<const int> y, std::size_t folds,
                                          std::uint64_t seed) {
  if (folds < 2) throw ArgumentError("cross-validation needs at least two folds");
  std::vector<std::size_t> fold(y.size());
  for (const int cls : {-1, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) idx.push_back(i);
    }
    if (idx.size() < folds) {
      throw StratificationError("class " + std::to_string(cls) + " has " +
                                std::to_string(idx.size()) + " samples for " +
                                std::to_string(folds) + " folds");
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(cls + 1)}));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    for (std::size_t r = 0; r < idx.size(); ++r) fold[idx[r]] = r % folds;
  }
  return fold;
}

GridSearchResult grid_search(const SampleMatrix& x, std::span<const int> y,
                             std::span<const double> gammas, std::span<const double> Cs,
                             std::size_t folds, const SvmConfig& base, std::uint64_t seed) {
  if (gammas.empty() || Cs.empty()) throw ArgumentError("grid search needs a non-empty grid");
  if (x.rows() != static_cast<Eigen::Index>(y.size())) {
    throw ArgumentError("sample count does not match the labels");
  }
  require_labels(y);
  const std::vector<std::size_t> fold = stratified_folds(y, folds, seed);
  const Eigen::MatrixXd sq = pairwise_squared_distances(x);

  GridSearchResult result;
  result.mean_balanced_accuracy = -1.0;
  for (const double gamma : gammas) {
    for (const double C : Cs) {
      SvmConfig cfg = base;
      cfg.gamma = gamma;
      cfg.C = C;
      const Eigen::MatrixXd k = gram_from_parts(sq, KernelSpec::rbf_gamma(gamma));
      double total = 0.0;
      for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> train;
        std::vector<int> ty;
        for (std::size_t i = 0; i < y.size(); ++i) {
          if (fold[i] != f) {
            train.push_back(i);
            ty.push_back(y[i]);
          }
        }
        const DualSolution sol = solve_svm_dual(k, train, ty, cfg);
        std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
          if (fold[i] != f) continue;
          double v = sol.bias;
          for (std::size_t t = 0; t < train.size(); ++t) {
            v += sol.alpha(static_cast<Eigen::Index>(t)) * ty[t] *
                 k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(train[t]));
          }
          const bool pred_pos = v > 0.0;
          if (y[i] > 0) {
            pred_pos ? ++tp : ++fn;
          } else {
            pred_pos ? ++fp : ++tn;
          }
        }
        const double bal = 0.5 * (static_cast<double>(tp) / static_cast<double>(tp + fn) +
                                  static_cast<double>(tn) / static_cast<double>(tn + fp));
        result.table.push_back({gamma, C, f, bal});
        total += bal;
      }
      const double mean = total / static_cast<double>(folds);
      // Strictly greater keeps the earlier cell; ties are settled below.
      const bool better = mean > result.mean_balanced_accuracy ||
                          (mean == result.mean_balanced_accuracy &&
                           (C < result.C || (C == result.C && gamma < result.gamma)));
      if (better) {
        result.mean_balanced_accuracy = mean;
        result.gamma = gamma;
        result.C = C;
      }
    }
  }
  return result;
}

void write_grid_csv(const GridSearchResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "gamma,C,fold,balanced_accuracy\n";
  for (const GridCell& c : result.table) {
    out << c.gamma << ',' << c.C << ',' << c.fold << ',' << c.balanced_accuracy << '\n';
  }
}

json to_json(const SvmModel& m) {
  json svs = json::array();
  for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i) {
    svs.push_back(std::vector<float>(m.support_vectors.row(i).begin(), m.support_vectors.row(i).end()));
  }
  return {
      {"kernel", to_json(m.kernel)},
      {"C", m.C},
      {"w_neg", m.w_neg},
      {"w_pos", m.w_pos},
      {"bias", m.bias},
      {"alphas", std::vector<double>(m.alphas.data(), m.alphas.data() + m.alphas.size())},
      {"labels", m.sv_labels},
      {"dimension", m.dimension()},
      {"support_vectors", std::move(svs)},
  };
}

SvmModel svm_model_from_json(const json& j) {
  try {
    SvmModel m;
    m.kernel = kernel_spec_from_json(j.at("kernel"));
    m.C = j.at("C").get<double>();
    m.w_neg = j.at("w_neg").get<double>();
    m.w_pos = j.at("w_pos").get<double>();
    m.bias = j.at("bias").get<double>();
    const auto alphas = j.at("alphas").get<std::vector<double>>();
    m.sv_labels = j.at("labels").get<std::vector<int>>();
    const auto d = j.at("dimension").get<Eigen::Index>();
    const json& svs = j.at("support_vectors");
    if (alphas.size() != m.sv_labels.size() || svs.size() != alphas.size()) {
      throw FormatError("SVM model arrays differ in length");
    }
    const auto n = static_cast<Eigen::Index>(alphas.size());
    m.support_vectors.resize(n, d);
    m.alphas.resize(n);
    m.dual_coefs.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto row = svs.at(static_cast<std::size_t>(i)).get<std::vector<float>>();
      if (static_cast<Eigen::Index>(row.size()) != d) throw FormatError("support vector has the wrong dimension");
      for (Eigen::Index c = 0; c < d; ++c) m.support_vectors(i, c) = row[static_cast<std::size_t>(c)];
      m.alphas(i) = alphas[static_cast<std::size_t>(i)];
      m.dual_coefs(i) = m.alphas(i) * m.sv_labels[static_cast<std::size_t>(i)];
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed SVM model: ") + e.what());
  }
}

json to_json(const CalibratedSvm& m) {
  return {{"svm", to_json(m.svm)}, {"platt", {{"A", m.sigmoid.A}, {"B", m.sigmoid.B}}}};
}

CalibratedSvm calibrated_svm_from_json(const json& j) {
  try {
    CalibratedSvm m;
    m.svm = svm_model_from_json(j.at("svm"));
    m.sigmoid = {j.at("platt").at("A").get<double>(), j.at("platt").at("B").get<double>()};
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed calibrated SVM: ") + e.what());
  }
}

}  // namespace eigenpatch
