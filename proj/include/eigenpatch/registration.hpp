#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "eigenpatch/segmentation.hpp"
#include "eigenpatch/volume.hpp"

namespace eigenpatch {

/// x_moving = matrix * x_fixed + translation, both in voxel coordinates.
struct AffineTransform {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static AffineTransform identity() { return {}; }
  static AffineTransform translation_by(double tx, double ty, double tz);
  /// Scaling by `s` about `center`.
  static AffineTransform scaling_about(const Eigen::Vector3d& center, const Eigen::Vector3d& s);

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return matrix * p + translation; }
  bool preserves_orientation() const { return matrix.determinant() > 0.0; }
};

struct RegistrationConfig {
  int max_iters = 400;
  /// Initial simplex edge, in voxels of displacement.
  double init_step = 2.0;
  /// Simplex diameter at which the search stops, same units as init_step.
  double tol = 1e-6;
  /// The cost is evaluated on every `sample_stride`-th voxel along each axis;
  /// 1 samples the whole fixed domain.
  std::size_t sample_stride = 1;
};

struct RegistrationResult {
  AffineTransform transform;
  double final_cost = 0.0;
  double identity_cost = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

/// Mean squared difference over the fixed domain (or the mask's lung voxels),
/// sampling the moving image trilinearly with zero fill outside.
double msd_cost(const Volume3& fixed, const Volume3& moving, const AffineTransform& t,
                const LungMask* mask = nullptr);

/// Fixed-image samples on a regular lattice; evaluates MSD against a moving
/// image for any transform.
class MsdSampler {
 public:
  MsdSampler(const Volume3& fixed, std::size_t stride);
  /// Lattice values supplied directly (size must equal lattice_size()).
  MsdSampler(Dims fixed_dims, std::size_t stride, std::vector<float> lattice_values);

  static std::size_t lattice_extent(std::size_t n, std::size_t stride);
  std::size_t lattice_size() const { return values_.size(); }
  const Dims& fixed_dims() const { return dims_; }
  std::size_t stride() const { return stride_; }
  std::span<const float> values() const { return values_; }

  double cost(const Volume3& moving, const AffineTransform& t) const;
  /// Moving image sampled at T(lattice points), lattice order.
  void sample(const Volume3& moving, const AffineTransform& t, std::span<float> out) const;

 private:
  Dims dims_;
  std::size_t stride_;
  std::size_t offset_;
  std::size_t lx_, ly_, lz_;
  std::vector<float> values_;
};

/// Nelder-Mead over the 12 affine parameters, starting from `init` (identity
/// when null).
RegistrationResult register_affine(const Volume3& fixed, const Volume3& moving,
                                   const RegistrationConfig& config,
                                   const AffineTransform* init = nullptr);
RegistrationResult register_affine(const MsdSampler& fixed, const Volume3& moving,
                                   const RegistrationConfig& config,
                                   const AffineTransform* init = nullptr);

/// output(x) = moving(T(x)), trilinear, zero outside.
Volume3 resample_with(const Volume3& moving, const AffineTransform& t, Dims out_dims);
/// Mask warped trilinearly and re-binarized at 0.5.
LungMask resample_mask_with(const LungMask& mask, const AffineTransform& t, Dims out_dims);

/// Iteratively refined cohort-mean template. Round 0 is the voxelwise mean;
/// each further round registers every member to the current template and
/// re-averages. Intermediate templates live only on the cost lattice.
class MeanTemplate {
 public:
  static MeanTemplate build(std::span<const Volume3* const> cohort, int n_rounds,
                            const RegistrationConfig& config, std::size_t threads = 1);

  const MsdSampler& sampler() const { return sampler_; }
  int rounds() const { return rounds_; }
  /// Transforms of the last refinement round (identity when rounds == 0).
  const std::vector<AffineTransform>& member_transforms() const { return transforms_; }

  RegistrationResult align(const Volume3& moving, const RegistrationConfig& config,
                           const AffineTransform* init = nullptr) const;

  /// Full-resolution template: mean of the members warped by the last
  /// round's transforms.
  Volume3 full_resolution(std::span<const Volume3* const> cohort) const;

 private:
  MeanTemplate(MsdSampler sampler, int rounds, std::vector<AffineTransform> transforms)
      : sampler_(std::move(sampler)), rounds_(rounds), transforms_(std::move(transforms)) {}

  MsdSampler sampler_;
  int rounds_;
  std::vector<AffineTransform> transforms_;
};

Volume3 build_mean_template(std::span<const Volume3> volumes, int n_rounds = 2,
                            const RegistrationConfig& config = {}, std::size_t threads = 1);

}  // namespace eigenpatch
