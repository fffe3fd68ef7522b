#include <gtest/gtest.h>

#include <chrono>
#include <vector>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/kpca.hpp"
#include "oracles.hpp"

namespace eigenpatch {
namespace {

std::span<const float> row(const SampleMatrix& x, Eigen::Index i) {
  return {x.data() + i * x.cols(), static_cast<std::size_t>(x.cols())};
}

TEST(Kpca, LinearKernelMatchesClassicalPca) {
  Rng rng(77);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng.below(46);
    const std::size_t d = 2 + rng.below(9);
    const SampleMatrix x = oracle::random_matrix(n, d, rng);
    const EigenlungModel model = fit_eigenlungs(x, KernelSpec::linear(), 1.0);
    const Eigen::MatrixXd scores = oracle::pca_scores(x);
    const std::size_t m = model.n_components;
    ASSERT_EQ(m, std::min(n - 1, d));

    Eigen::MatrixXd ours(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      ours.row(i) = project(model, row(x, i)).transpose();
    }
    EXPECT_LT(oracle::max_error_up_to_sign(ours, scores.leftCols(static_cast<Eigen::Index>(m))),
              1e-6)
        << "trial " << trial;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 5.0);
}

TEST(Kpca, NewPointsProjectLikePca) {
  Rng rng(5);
  const SampleMatrix x = oracle::random_matrix(30, 4, rng);
  const SampleMatrix z = oracle::random_matrix(6, 4, rng);
  const EigenlungModel model = fit_eigenlungs(x, KernelSpec::linear(), 1.0);
  const Eigen::MatrixXd xd = x.cast<double>();
  const Eigen::RowVectorXd mean = xd.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(xd.rowwise() - mean, Eigen::ComputeThinV);
  const Eigen::MatrixXd expect = (z.cast<double>().rowwise() - mean) * svd.matrixV();
  Eigen::MatrixXd ours(6, 4);
  for (Eigen::Index i = 0; i < 6; ++i) ours.row(i) = project(model, row(z, i)).transpose();
  EXPECT_LT(oracle::max_error_up_to_sign(ours, expect), 1e-6);
}

TEST(Kpca, CenteredGramHasZeroRowSumsAndIsIdempotent) {
  Rng rng(8);
  const SampleMatrix x = oracle::random_matrix(25, 6, rng);
  const Eigen::MatrixXd k = gram_matrix(x, KernelSpec::rbf(2.0));
  const Eigen::MatrixXd kc = center_gram(k);
  EXPECT_LT(kc.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(kc.colwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((center_gram(kc) - kc).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Kpca, GramMatchesKernelValue) {
  Rng rng(9);
  const SampleMatrix x = oracle::random_matrix(12, 5, rng);
  for (const KernelSpec& k : {KernelSpec::rbf(1.3), KernelSpec::polynomial(3, 0.5),
                              KernelSpec::linear(), KernelSpec::rbf_gamma(0.2)}) {
    const Eigen::MatrixXd g = gram_matrix(x, k);
    for (Eigen::Index i = 0; i < 12; ++i)
      for (Eigen::Index j = 0; j < 12; ++j)
        EXPECT_NEAR(g(i, j), kernel_value(k, row(x, i), row(x, j)), 1e-12);
  }
  EXPECT_NEAR(KernelSpec::rbf_gamma(0.2).gamma(), 0.2, 1e-15);
}

TEST(Kpca, CrossMatricesMatchPairwiseOnStackedRows) {
  Rng rng(10);
  const SampleMatrix a = oracle::random_matrix(7, 33, rng);
  const SampleMatrix b = oracle::random_matrix(5, 33, rng);
  SampleMatrix ab(12, 33);
  ab << a, b;
  const Eigen::MatrixXd d = pairwise_squared_distances(ab);
  const Eigen::MatrixXd p = pairwise_dots(ab);
  const Eigen::MatrixXd cd = cross_squared_distances(a, b);
  const Eigen::MatrixXd cp = cross_dots(a, b);
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) {
      EXPECT_EQ(cd(i, j), d(i, 7 + j));
      EXPECT_EQ(cp(i, j), p(i, 7 + j));
    }
}

TEST(Kpca, VarianceRuleKeepsSmallestSufficientPrefix) {
  Rng rng(11);
  const SampleMatrix x = oracle::random_matrix(40, 8, rng);
  const EigenlungModel full = fit_eigenlungs(x, KernelSpec::rbf(3.0), 1.0);
  const double total = full.eigenvalues.sum();
  for (double target : {0.5, 0.8, 0.9, 0.99}) {
    const EigenlungModel m = fit_eigenlungs(x, KernelSpec::rbf(3.0), target);
    const auto k = static_cast<Eigen::Index>(m.n_components);
    EXPECT_GE(full.eigenvalues.head(k).sum(), target * total - 1e-12);
    if (k > 1) EXPECT_LT(full.eigenvalues.head(k - 1).sum(), target * total);
    for (Eigen::Index j = 1; j < k; ++j) EXPECT_GE(m.eigenvalues(j - 1), m.eigenvalues(j));
  }
}

TEST(Kpca, TrainingProjectionsAreCentredAndUncorrelated) {
  Rng rng(12);
  const SampleMatrix x = oracle::random_matrix(35, 6, rng);
  Eigen::MatrixXd proj;
  const EigenlungModel m = fit_eigenlungs(x, KernelSpec::rbf(2.5), 0.9, &proj);
  ASSERT_EQ(proj.cols(), static_cast<Eigen::Index>(m.n_components));
  EXPECT_LT(proj.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::MatrixXd cov = proj.transpose() * proj / static_cast<double>(proj.rows());
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j) {
      if (i == j) EXPECT_NEAR(cov(i, i), m.eigenvalues(i), 1e-9);
      else EXPECT_NEAR(cov(i, j), 0.0, 1e-9);
    }
  // Projecting a training row reproduces its training projection.
  for (Eigen::Index i = 0; i < 35; i += 7) {
    EXPECT_LT((project(m, row(x, i)) - proj.row(i).transpose()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Kpca, JsonRoundTrip) {
  Rng rng(13);
  const SampleMatrix x = oracle::random_matrix(10, 3, rng);
  const EigenlungModel m = fit_eigenlungs(x, KernelSpec::polynomial(2, 1.0), 0.9);
  const EigenlungModel back = eigenlung_model_from_json(to_json(m));
  const SampleMatrix z = oracle::random_matrix(1, 3, rng);
  EXPECT_LT((project(m, row(z, 0)) - project(back, row(z, 0))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Kpca, RejectsBadInput) {
  Rng rng(14);
  const SampleMatrix one = oracle::random_matrix(1, 3, rng);
  EXPECT_THROW(fit_eigenlungs(one, KernelSpec::linear()), ArgumentError);
  const SampleMatrix x = oracle::random_matrix(5, 3, rng);
  EXPECT_THROW(fit_eigenlungs(x, KernelSpec::linear(), 1.5), ArgumentError);
  SampleMatrix same(4, 3);
  same.setConstant(1.0f);
  EXPECT_THROW(fit_eigenlungs(same, KernelSpec::linear()), DegenerateInputError);
  const EigenlungModel m = fit_eigenlungs(x, KernelSpec::linear());
  const std::vector<float> wrong(4, 0.0f);
  EXPECT_THROW(project(m, wrong), ArgumentError);
  EXPECT_THROW(KernelSpec::rbf(0.0).validate(), ArgumentError);
}

}  // namespace
}  // namespace eigenpatch
