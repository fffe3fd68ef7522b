#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/svm.hpp"
#include "oracles.hpp"

namespace eigenpatch {
namespace {

std::span<const float> row(const SampleMatrix& x, Eigen::Index i) {
  return {x.data() + i * x.cols(), static_cast<std::size_t>(x.cols())};
}

// Per-sample KKT residual computed from the full dual vector and the naive
// decision function.
double kkt_violation_oracle(const SvmModel& m, const DualSolution& sol, const SampleMatrix& x,
                            std::span<const int> y) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int yi = y[static_cast<std::size_t>(i)];
    const double margin = yi * oracle::naive_decision(m, row(x, i));
    const double upper = m.C * (yi > 0 ? sol.w_pos : sol.w_neg);
    const double a = sol.alpha(i);
    double v = 0.0;
    if (a <= 0.0) v = std::max(0.0, 1.0 - margin);
    else if (a >= upper) v = std::max(0.0, margin - 1.0);
    else v = std::abs(margin - 1.0);
    worst = std::max(worst, v);
  }
  return worst;
}

TEST(Svm, KktAndEqualityConstraintOnRandomInstances) {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 10 + rng.below(71);
    const std::size_t d = 1 + rng.below(6);
    const std::size_t n_pos = 2 + rng.below(n - 4);
    SampleMatrix x;
    std::vector<int> y;
    oracle::gaussian_blobs(n - n_pos, n_pos, d, rng.uniform(0.0, 3.0), rng, x, y);
    SvmConfig cfg;
    cfg.C = std::pow(10.0, rng.uniform(-1.0, 2.0));
    cfg.gamma = std::pow(10.0, rng.uniform(-1.5, 0.5));
    DualSolution sol;
    const SvmModel m = train_svm(x, y, cfg, &sol);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < sol.alpha.size(); ++i) {
      sum += sol.alpha(i) * y[static_cast<std::size_t>(i)];
      ASSERT_GE(sol.alpha(i), 0.0);
      ASSERT_LE(sol.alpha(i), cfg.C * (y[static_cast<std::size_t>(i)] > 0 ? sol.w_pos : sol.w_neg));
    }
    EXPECT_LE(std::abs(sum), 1e-8) << "trial " << trial;
    EXPECT_LE(kkt_violation_oracle(m, sol, x, y), 1e-3) << "trial " << trial;
    EXPECT_LE(max_kkt_violation(m, x, y), 1e-3) << "trial " << trial;
  }
}

TEST(Svm, DuplicationEqualsClassWeighting) {
  Rng rng(32);
  for (int trial = 0; trial < 5; ++trial) {
    SampleMatrix x;
    std::vector<int> y;
    oracle::gaussian_blobs(25, 15, 2, 1.5, rng, x, y);
    // Every positive row twice, unit weights.
    SampleMatrix dup(x.rows() + 15, 2);
    std::vector<int> ydup(y);
    dup.topRows(x.rows()) = x;
    for (Eigen::Index k = 0; k < 15; ++k) {
      dup.row(x.rows() + k) = x.row(25 + k);
      ydup.push_back(1);
    }
    SvmConfig base;
    base.weighting = ClassWeighting::explicit_weights;
    base.kkt_tol = 1e-9;
    base.C = 2.0;
    base.gamma = 0.7;
    SvmConfig weighted = base;
    weighted.w_pos = 2.0;
    const SvmModel a = train_svm(dup, ydup, base);
    const SvmModel b = train_svm(x, y, weighted);
    for (double px = -3.0; px <= 3.0; px += 0.5) {
      for (double py = -3.0; py <= 3.0; py += 0.5) {
        const std::vector<float> p{static_cast<float>(px), static_cast<float>(py)};
        EXPECT_NEAR(decision_value(a, p), decision_value(b, p), 1e-4);
      }
    }
  }
}

TEST(Svm, DecisionValueMatchesNaiveSum) {
  Rng rng(33);
  SampleMatrix x;
  std::vector<int> y;
  oracle::gaussian_blobs(30, 20, 7, 1.0, rng, x, y);
  const SvmModel m = train_svm(x, y, SvmConfig{.C = 1.0, .gamma = 0.1});
  const SampleMatrix probes = oracle::random_matrix(20, 7, rng);
  for (Eigen::Index i = 0; i < probes.rows(); ++i) {
    EXPECT_NEAR(decision_value(m, row(probes, i)), oracle::naive_decision(m, row(probes, i)),
                1e-10);
  }
}

TEST(Svm, SeparatesXor) {
  SampleMatrix x(40, 2);
  std::vector<int> y;
  Rng rng(34);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const double sx = (i % 2) ? 1.0 : -1.0, sy = ((i / 2) % 2) ? 1.0 : -1.0;
    x(i, 0) = static_cast<float>(sx + 0.1 * rng.normal());
    x(i, 1) = static_cast<float>(sy + 0.1 * rng.normal());
    y.push_back(sx * sy > 0 ? 1 : -1);
  }
  const SvmModel m = train_svm(x, y, SvmConfig{.C = 10.0, .gamma = 1.0});
  for (Eigen::Index i = 0; i < 40; ++i) {
    EXPECT_GT(y[static_cast<std::size_t>(i)] * decision_value(m, row(x, i)), 0.0);
  }
}

TEST(Svm, BalancedWeightsFollowClassSizes) {
  const std::vector<int> y{1, 1, 1, -1};
  const auto [wn, wp] = class_weights(SvmConfig{}, y);
  EXPECT_DOUBLE_EQ(wn, 2.0);
  EXPECT_DOUBLE_EQ(wp, 4.0 / 6.0);
  const std::vector<int> one_class{1, 1};
  EXPECT_THROW(class_weights(SvmConfig{}, one_class), ArgumentError);
}

TEST(Svm, SubsetSolveMatchesMaterializedSubset) {
  Rng rng(35);
  SampleMatrix x;
  std::vector<int> y;
  oracle::gaussian_blobs(12, 12, 3, 1.0, rng, x, y);
  const Eigen::MatrixXd k = gram_matrix(x, KernelSpec::rbf_gamma(0.5));
  const std::vector<std::size_t> subset{0, 3, 3, 5, 13, 14, 14, 20, 7};
  std::vector<int> ys;
  Eigen::MatrixXd local(9, 9);
  for (std::size_t a = 0; a < 9; ++a) {
    ys.push_back(y[subset[a]]);
    for (std::size_t b = 0; b < 9; ++b)
      local(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          k(static_cast<Eigen::Index>(subset[a]), static_cast<Eigen::Index>(subset[b]));
  }
  const DualSolution s1 = solve_svm_dual(k, subset, ys, SvmConfig{});
  const DualSolution s2 = solve_svm_dual(local, ys, SvmConfig{});
  EXPECT_EQ(s1.alpha, s2.alpha);
  EXPECT_EQ(s1.bias, s2.bias);
}

TEST(Svm, DualObjectiveNeverDecreases) {
  Rng rng(36);
  SampleMatrix x;
  std::vector<int> y;
  oracle::gaussian_blobs(30, 30, 4, 0.8, rng, x, y);
  SvmConfig cfg;
  cfg.track_objective = true;
  DualSolution sol;
  train_svm(x, y, cfg, &sol);
  ASSERT_GE(sol.objective_history.size(), 2u);
  for (std::size_t i = 1; i < sol.objective_history.size(); ++i) {
    EXPECT_GE(sol.objective_history[i], sol.objective_history[i - 1] - 1e-12);
  }
}

// Labels at each decision level follow the sigmoid exactly (counts rounded),
// so the fit is judged without Bernoulli sampling noise.
void stratified_sigmoid_data(double a0, double b0, std::vector<double>& f, std::vector<int>& y) {
  constexpr int kLevels = 100, kPerLevel = 100;
  f.clear();
  y.clear();
  for (int l = 0; l < kLevels; ++l) {
    const double z = -4.0 + 8.0 * (l + 0.5) / kLevels;
    const double fv = (z - b0) / a0;
    const long n_pos = std::lround(kPerLevel / (1.0 + std::exp(z)));
    for (int k = 0; k < kPerLevel; ++k) {
      f.push_back(fv);
      y.push_back(k < n_pos ? 1 : -1);
    }
  }
}

TEST(Platt, RecoversKnownSigmoid) {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const double a0 = -rng.uniform(0.5, 4.0);
    const double b0 = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 2.0);
    std::vector<double> f;
    std::vector<int> y;
    stratified_sigmoid_data(a0, b0, f, y);
    ASSERT_EQ(f.size(), 10000u);
    const PlattFit fit = fit_platt(f, y);
    EXPECT_LE(std::abs(fit.sigmoid.A - a0), 0.05 * std::abs(a0)) << "A0=" << a0;
    EXPECT_LE(std::abs(fit.sigmoid.B - b0), 0.05 * std::abs(b0)) << "B0=" << b0;
    for (std::size_t i = 1; i < fit.nll_history.size(); ++i) {
      EXPECT_LT(fit.nll_history[i], fit.nll_history[i - 1]);
    }
  }
}

TEST(Platt, BernoulliSampleIsCloseToTruth) {
  Rng rng(38);
  const double a0 = -2.0, b0 = 1.0;
  std::vector<double> f(10000);
  std::vector<int> y(10000);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = rng.uniform(-2.5, 3.5);
    y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(a0 * f[i] + b0)) ? 1 : -1;
  }
  const PlattFit fit = fit_platt(f, y);
  // Roughly four standard errors at this sample size.
  EXPECT_NEAR(fit.sigmoid.A, a0, 0.2);
  EXPECT_NEAR(fit.sigmoid.B, b0, 0.15);
  EXPECT_LT(fit.gradient_norm, 1e-6);
}

TEST(Platt, NllMatchesDirectFormula) {
  const std::vector<double> f{-1.0, 0.5, 2.0};
  const std::vector<int> y{-1, 1, 1};
  const PlattSigmoid s{-1.5, 0.2};
  const double hi = 3.0 / 4.0, lo = 1.0 / 3.0;
  double expect = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = 1.0 / (1.0 + std::exp(s.A * f[i] + s.B));
    const double t = y[i] > 0 ? hi : lo;
    expect -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  EXPECT_NEAR(platt_nll(s, f, y), expect, 1e-12);
  const auto [pn, pp] = posterior_from_decision(s, 0.3);
  EXPECT_DOUBLE_EQ(pn + pp, 1.0);
  // Extreme arguments stay finite.
  EXPECT_EQ((PlattSigmoid{1.0, 0.0}.p_pos(1e6)), 0.0);
  EXPECT_EQ((PlattSigmoid{1.0, 0.0}.p_pos(-1e6)), 1.0);
}

TEST(GridSearch, PicksWorkingCellAndWritesTable) {
  Rng rng(39);
  SampleMatrix x;
  std::vector<int> y;
  oracle::gaussian_blobs(20, 20, 3, 3.0, rng, x, y);
  const std::vector<double> gammas{1e-4, 0.1};
  const std::vector<double> cs{0.01, 1.0};
  const GridSearchResult r = grid_search(x, y, gammas, cs, 4);
  EXPECT_EQ(r.table.size(), 16u);
  EXPECT_GE(r.mean_balanced_accuracy, 0.9);
  const auto folds = stratified_folds(y, 4, 0);
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_EQ(std::count(folds.begin(), folds.begin() + 20, f), 5);
    EXPECT_EQ(std::count(folds.begin() + 20, folds.end(), f), 5);
  }
  const auto path = std::filesystem::temp_directory_path() / "eigenpatch_grid.csv";
  write_grid_csv(r, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("gamma"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(Svm, JsonRoundTrip) {
  Rng rng(40);
  SampleMatrix x;
  std::vector<int> y;
  oracle::gaussian_blobs(10, 10, 3, 1.0, rng, x, y);
  const CalibratedSvm cal = train_calibrated_svm(x, y, SvmConfig{});
  const CalibratedSvm back = calibrated_svm_from_json(to_json(cal));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    EXPECT_DOUBLE_EQ(posterior(cal, row(x, i)).second, posterior(back, row(x, i)).second);
  }
}

TEST(Svm, RejectsBadLabels) {
  SampleMatrix x(3, 1);
  x << 0.0f, 1.0f, 2.0f;
  const std::vector<int> y{1, 0, -1};
  EXPECT_THROW(train_svm(x, y, SvmConfig{}), ArgumentError);
}

}  // namespace
}  // namespace eigenpatch
