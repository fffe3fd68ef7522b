#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "eigenpatch/kpca.hpp"
#include "eigenpatch/label.hpp"
#include "eigenpatch/random.hpp"
#include "eigenpatch/svm.hpp"

namespace eigenpatch {

struct BootstrapConfig {
  std::size_t repeats = 500;
  double subsample_fraction = 0.8;
  int class_retries = 50;
  int platt_max_iters = 100;
  SvmConfig svm;
};

/// Bootstrap distribution of p_pos for one test sample and one patch.
struct PatchPosterior {
  std::vector<double> samples;
  double mean_p = 0.0;
  double u = 0.0;
  Label predicted = Label::control;

  std::size_t repeats() const { return samples.size(); }
};

/// Population variance (divisor K).
double posterior_variance(std::span<const double> samples);

/// Mean, variance and label (mean_p >= 0.5 is pneumonia) of a sample set.
PatchPosterior summarize_posterior(std::vector<double> samples);

/// ceil(fraction * n) indices drawn with replacement, redrawn up to `retries`
/// times until both classes appear.
std::vector<std::size_t> draw_resample(std::span<const int> y, double fraction, int retries,
                                       Rng& rng);

/// Seed of repeat r given the stream seed.
inline std::uint64_t repeat_seed(std::uint64_t seed, std::size_t r) {
  return derive_seed(seed, {static_cast<std::uint64_t>(r)});
}

PatchPosterior bootstrap_posterior(const SampleMatrix& train_x, std::span<const int> train_y,
                                   std::span<const float> test_x, const BootstrapConfig& config,
                                   std::uint64_t seed, std::size_t threads = 1);

/// Bootstrap posteriors for several test samples at once from precomputed
/// kernels: `train_kernel` is n x n, `test_kernel` is t x n. Gives the same
/// values as bootstrap_posterior for each test row.
std::vector<PatchPosterior> bootstrap_posteriors(const Eigen::MatrixXd& train_kernel,
                                                 std::span<const int> train_y,
                                                 const Eigen::MatrixXd& test_kernel,
                                                 const BootstrapConfig& config,
                                                 std::uint64_t seed, std::size_t threads = 1);

struct PosteriorRecord {
  std::size_t patch_id;
  const PatchPosterior* posterior;
};

/// CSV rows (patch_id, repeat, p_pos).
void write_posterior_csv(std::span<const PosteriorRecord> records, const std::filesystem::path& path);

}  // namespace eigenpatch
