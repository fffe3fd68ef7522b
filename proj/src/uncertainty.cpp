#include "eigenpatch/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/parallel.hpp"

namespace eigenpatch {

double posterior_variance(std::span<const double> samples) {
  if (samples.empty()) throw ArgumentError("variance of an empty sample set");
  const auto k = static_cast<double>(samples.size());
  double mean = 0.0;
  for (const double x : samples) mean += x;
  mean /= k;
  double ss = 0.0;
  for (const double x : samples) ss += (x - mean) * (x - mean);
  return ss / k;
}

PatchPosterior summarize_posterior(std::vector<double> samples) {
  if (samples.empty()) throw ArgumentError("posterior needs at least one sample");
  PatchPosterior p;
  double mean = 0.0;
  for (const double x : samples) mean += x;
  p.mean_p = mean / static_cast<double>(samples.size());
  p.u = posterior_variance(samples);
  p.predicted = p.mean_p >= 0.5 ? Label::pneumonia : Label::control;
  p.samples = std::move(samples);
  return p;
}

std::vector<std::size_t> draw_resample(std::span<const int> y, double fraction, int retries,
                                       Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ArgumentError("subsample fraction must lie in (0, 1]");
  }
  const std::size_t n = y.size();
  if (n == 0) throw ArgumentError("cannot resample an empty training set");
  const auto size = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(size);
  for (int attempt = 0; attempt <= retries; ++attempt) {
    bool pos = false;
    bool neg = false;
    for (std::size_t& i : idx) {
      i = static_cast<std::size_t>(rng.below(n));
      (y[i] > 0 ? pos : neg) = true;
    }
    if (pos && neg) return idx;
  }
  throw ResampleError("resample lacked a class after " + std::to_string(retries) + " redraws");
}

std::vector<PatchPosterior> bootstrap_posteriors(const Eigen::MatrixXd& train_kernel,
                                                 std::span<const int> train_y,
                                                 const Eigen::MatrixXd& test_kernel,
                                                 const BootstrapConfig& config,
                                                 std::uint64_t seed, std::size_t threads) {
  if (config.repeats < 2) throw ArgumentError("bootstrap needs at least two repeats");
  const auto n = static_cast<Eigen::Index>(train_y.size());
  if (train_kernel.rows() != n || train_kernel.cols() != n || test_kernel.cols() != n) {
    throw ArgumentError("kernel matrices do not match the training labels");
  }
  const auto t = static_cast<std::size_t>(test_kernel.rows());
  // samples[r][i]: p_pos of test row i in repeat r.
  std::vector<std::vector<double>> by_repeat(config.repeats);
  parallel_for(config.repeats, threads, [&](std::size_t r) {
    Rng rng(repeat_seed(seed, r));
    const std::vector<std::size_t> idx =
        draw_resample(train_y, config.subsample_fraction, config.class_retries, rng);
    std::vector<int> y(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) y[a] = train_y[idx[a]];
    const DualSolution sol = solve_svm_dual(train_kernel, idx, y, config.svm);

    std::vector<double> f(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
      double v = sol.bias;
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const double ab = sol.alpha(static_cast<Eigen::Index>(b));
        if (ab != 0.0) {
          v += ab * y[b] *
               train_kernel(static_cast<Eigen::Index>(idx[a]), static_cast<Eigen::Index>(idx[b]));
        }
      }
      f[a] = v;
    }
    const PlattSigmoid sig = fit_platt(f, y, config.platt_max_iters).sigmoid;

    auto& out = by_repeat[r];
    out.resize(t);
    for (std::size_t i = 0; i < t; ++i) {
      double v = sol.bias;
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const double ab = sol.alpha(static_cast<Eigen::Index>(b));
        if (ab != 0.0) {
          v += ab * y[b] *
               test_kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx[b]));
        }
      }
      out[i] = sig.p_pos(v);
    }
  });

  std::vector<PatchPosterior> result;
  result.reserve(t);
  for (std::size_t i = 0; i < t; ++i) {
    std::vector<double> s(config.repeats);
    for (std::size_t r = 0; r < config.repeats; ++r) s[r] = by_repeat[r][i];
    result.push_back(summarize_posterior(std::move(s)));
  }
  return result;
}

PatchPosterior bootstrap_posterior(const SampleMatrix& train_x, std::span<const int> train_y,
                                   std::span<const float> test_x, const BootstrapConfig& config,
                                   std::uint64_t seed, std::size_t threads) {
  if (train_x.rows() != static_cast<Eigen::Index>(train_y.size())) {
    throw ArgumentError("sample count does not match the labels");
  }
  if (test_x.size() != static_cast<std::size_t>(train_x.cols())) {
    throw ArgumentError("test sample has the wrong dimension");
  }
  const KernelSpec k = KernelSpec::rbf_gamma(config.svm.gamma);
  const Eigen::MatrixXd kt = gram_matrix(train_x, k);
  Eigen::MatrixXd kx(1, train_x.rows());
  const auto d = static_cast<std::size_t>(train_x.cols());
  for (Eigen::Index i = 0; i < train_x.rows(); ++i) {
    kx(0, i) = kernel_value(k, {train_x.data() + i * train_x.cols(), d}, test_x);
  }
  return bootstrap_posteriors(kt, train_y, kx, config, seed, threads).front();
}

void write_posterior_csv(std::span<const PosteriorRecord> records,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "patch_id,repeat,p_pos\n";
  for (const PosteriorRecord& rec : records) {
    for (std::size_t r = 0; r < rec.posterior->samples.size(); ++r) {
      out << rec.patch_id << ',' << r << ',' << rec.posterior->samples[r] << '\n';
    }
  }
}

}  // namespace eigenpatch
