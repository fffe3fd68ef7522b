#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/evaluation.hpp"
#include "eigenpatch/phantom.hpp"
#include "oracles.hpp"

namespace eigenpatch {
namespace {

TEST(Metrics, MatchSingleExpressionFormulas) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionCounts c{rng.below(60), rng.below(60), rng.below(60), rng.below(60)};
    if (trial < 4) (trial == 0 ? c.tp : trial == 1 ? c.fp : trial == 2 ? c.tn : c.fn) = 0;
    const Metrics m = compute_metrics(c);
    const double tp = c.tp, fp = c.fp, tn = c.tn, fn = c.fn;
    if (c.tp + c.fn > 0) EXPECT_EQ(*m.sens, tp / (tp + fn));
    else EXPECT_FALSE(m.sens);
    if (c.tn + c.fp > 0) EXPECT_EQ(*m.spec, tn / (tn + fp));
    else EXPECT_FALSE(m.spec);
    if (c.tp + c.fp > 0) EXPECT_EQ(*m.prec, tp / (tp + fp));
    else EXPECT_FALSE(m.prec);
    if (c.tp + c.fn > 0 && c.tn + c.fp > 0) {
      EXPECT_EQ(*m.bal_acc, 0.5 * (tp / (tp + fn) + tn / (tn + fp)));
    } else {
      EXPECT_FALSE(m.bal_acc);
    }
    if (c.tp > 0) {
      EXPECT_EQ(*m.f1, 2.0 * (tp / (tp + fp)) * (tp / (tp + fn)) / (tp / (tp + fp) + tp / (tp + fn)));
    } else {
      EXPECT_FALSE(m.f1);
    }
  }
}

TEST(Metrics, ConfusionCountsLabels) {
  using L = Label;
  const std::vector<L> pred{L::pneumonia, L::pneumonia, L::control, L::control, L::pneumonia};
  const std::vector<L> truth{L::pneumonia, L::control, L::control, L::pneumonia, L::pneumonia};
  const ConfusionCounts c = confusion(pred, truth);
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.tn, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.total(), 5u);
}

TEST(Roc, AucMatchesPairwiseOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<Label> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores force ties.
      s[i] = trial % 2 ? static_cast<double>(rng.below(7)) : rng.normal();
      l[i] = rng.uniform() < 0.3 ? Label::control : Label::pneumonia;
    }
    l[0] = Label::control;
    l[1] = Label::pneumonia;
    EXPECT_EQ(roc_auc(s, l).auc, oracle::pairwise_auc(s, l)) << "trial " << trial;
  }
}

TEST(Roc, CurveEndpointsAndExamples) {
  using L = Label;
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<L> perfect{L::pneumonia, L::pneumonia, L::control, L::control};
  const RocResult r = roc_auc(s, perfect);
  EXPECT_EQ(r.auc, 1.0);
  EXPECT_EQ(r.points.front().fpr, 0.0);
  EXPECT_EQ(r.points.back().fpr, 1.0);
  EXPECT_EQ(r.points.back().tpr, 1.0);
  const std::vector<double> flat(4, 0.5);
  EXPECT_EQ(roc_auc(flat, perfect).auc, 0.5);
  const std::vector<L> one_class(4, L::control);
  EXPECT_THROW(roc_auc(s, one_class), ArgumentError);
}

TEST(Kappa, Examples) {
  using L = Label;
  const std::vector<L> a{L::pneumonia, L::control, L::pneumonia, L::control};
  EXPECT_DOUBLE_EQ(*cohens_kappa(a, a), 1.0);
  const std::vector<L> flipped{L::control, L::pneumonia, L::control, L::pneumonia};
  EXPECT_DOUBLE_EQ(*cohens_kappa(flipped, a), -1.0);
  // pa = 0.5, pe = 0.5.
  const std::vector<L> half{L::pneumonia, L::pneumonia, L::control, L::control};
  EXPECT_DOUBLE_EQ(*cohens_kappa(half, a), 0.0);
  const std::vector<L> all_pos(4, L::pneumonia);
  EXPECT_FALSE(cohens_kappa(all_pos, all_pos).has_value());
}

TEST(IdSetHash, OrderIndependentAndSensitive) {
  const std::vector<std::string> a{"s1", "s2", "s3"}, b{"s3", "s1", "s2"}, c{"s1", "s2"};
  EXPECT_EQ(id_set_hash(a), id_set_hash(b));
  EXPECT_NE(id_set_hash(a), id_set_hash(c));
  // Concatenation ambiguity is not a collision.
  const std::vector<std::string> d{"ab", "c"}, e{"a", "bc"};
  EXPECT_NE(id_set_hash(d), id_set_hash(e));
}

TEST(Audit, DetectsLeakage) {
  const std::vector<std::string> all{"a", "b", "c"};
  FoldAudit ok{"b", {"a", "c"}, {"c", "a"}, 0, 0};
  ok.template_hash = id_set_hash(ok.template_ids);
  ok.ensemble_hash = id_set_hash(ok.ensemble_ids);
  EXPECT_TRUE(audit_passes(ok, all));
  FoldAudit leak = ok;
  leak.ensemble_ids = {"a", "b", "c"};
  leak.ensemble_hash = id_set_hash(leak.ensemble_ids);
  EXPECT_FALSE(audit_passes(leak, all));
  FoldAudit missing = ok;
  missing.template_ids = {"a"};
  missing.template_hash = id_set_hash(missing.template_ids);
  EXPECT_FALSE(audit_passes(missing, all));
}

// A miniature end-to-end run: 48^3 phantoms, 4 + 4 subjects, side 12.
class MiniLoo : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    PhantomSpec spec;
    spec.dims = {48, 48, 48};
    spec.lesion_count_min = 30;
    spec.lesion_count_max = 40;
    data_ = new Dataset;
    for (std::size_t i = 0; i < 8; ++i) {
      const bool sick = i >= 4;
      data_->ids.push_back((sick ? "d" : "c") + std::to_string(i));
      data_->labels.push_back(sick ? Label::pneumonia : Label::control);
      data_->volumes.push_back(generate_subject(spec, sick, 500 + i).volume);
    }
  }
  static void TearDownTestSuite() { delete data_; }

  static LooConfig config(std::size_t threads) {
    LooConfig c;
    c.preprocess.target = {48, 48, 48};
    c.preprocess.template_rounds = 1;
    c.preprocess.registration = {.max_iters = 60, .init_step = 2.0, .tol = 1e-3, .sample_stride = 4};
    c.ensemble.bootstrap.repeats = 6;
    c.variants = {{12, FeatureMode::kpca}, {12, FeatureMode::vaf}};
    c.confidence_resamples = 50;
    c.threads = threads;
    return c;
  }
  static Dataset* data_;
};
Dataset* MiniLoo::data_ = nullptr;

TEST_F(MiniLoo, AuditsPassAndReportsAreComplete) {
  const LooResult r = loo_evaluate(*data_, config(1));
  ASSERT_EQ(r.audits.size(), 8u);
  for (const FoldAudit& a : r.audits) EXPECT_TRUE(audit_passes(a, data_->ids)) << a.test_id;
  ASSERT_EQ(r.reports.size(), 2u);
  for (const EvaluationReport& rep : r.reports) {
    EXPECT_EQ(rep.subjects.size(), 8u);
    EXPECT_EQ(rep.counts.total(), 8u);
    EXPECT_GE(rep.auc, 0.0);
    EXPECT_LE(rep.auc, 1.0);
  }
  const auto path = std::filesystem::temp_directory_path() / "eigenpatch_summary.csv";
  write_summary_csv(r.reports, path);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "method,patch_side,bal_acc,bal_acc_std,sens,spec,prec,auc,f1");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2u);
  std::filesystem::remove(path);
}

TEST_F(MiniLoo, SummaryIsThreadCountIndependent) {
  const auto dir = std::filesystem::temp_directory_path();
  const LooResult a = loo_evaluate(*data_, config(1));
  const LooResult b = loo_evaluate(*data_, config(3));
  write_summary_csv(a.reports, dir / "eigenpatch_a.csv");
  write_summary_csv(b.reports, dir / "eigenpatch_b.csv");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir / "eigenpatch_a.csv"), slurp(dir / "eigenpatch_b.csv"));
  std::filesystem::remove(dir / "eigenpatch_a.csv");
  std::filesystem::remove(dir / "eigenpatch_b.csv");
}

}  // namespace
}  // namespace eigenpatch
