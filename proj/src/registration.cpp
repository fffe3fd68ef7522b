#include "eigenpatch/registration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/parallel.hpp"
#include "eigenpatch/simd/kernels.hpp"

namespace eigenpatch {
namespace {

constexpr int kParams = 12;
using Params = std::array<double, kParams>;

simd::VolumeView view_of(const Volume3& v) {
  return {v.data().data(), static_cast<std::ptrdiff_t>(v.dims().nx),
          static_cast<std::ptrdiff_t>(v.dims().ny), static_cast<std::ptrdiff_t>(v.dims().nz)};
}

// Parameters are displacements in voxels: the nine linear terms are scaled
// by a characteristic radius of the fixed grid, the last three translate the
// grid centre. This keeps one step size meaningful for all twelve.
struct ParamFrame {
  Eigen::Vector3d center;
  double radius;

  explicit ParamFrame(const Dims& d)
      : center(0.5 * (static_cast<double>(d.nx) - 1.0), 0.5 * (static_cast<double>(d.ny) - 1.0),
               0.5 * (static_cast<double>(d.nz) - 1.0)),
        radius(std::max(1.0, static_cast<double>(d.nx + d.ny + d.nz) / 6.0)) {}

  AffineTransform to_transform(const Params& p) const {
    AffineTransform t;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) t.matrix(r, c) += p[3 * r + c] / radius;
    }
    const Eigen::Vector3d shift(p[9], p[10], p[11]);
    t.translation = center + shift - t.matrix * center;
    return t;
  }

  Params to_params(const AffineTransform& t) const {
    Params p{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        p[3 * r + c] = (t.matrix(r, c) - (r == c ? 1.0 : 0.0)) * radius;
      }
    }
    const Eigen::Vector3d shift = t.translation - center + t.matrix * center;
    p[9] = shift.x();
    p[10] = shift.y();
    p[11] = shift.z();
    return p;
  }
};

void require_same_dims(const Volume3& a, const Volume3& b) {
  if (a.dims() != b.dims()) throw ArgumentError("fixed and moving volumes differ in dims");
}

struct Vertex {
  Params x;
  double f;
};

// Nelder-Mead with dimension-adaptive coefficients (Gao & Han), which behaves
// better than the classic constants in twelve dimensions.
template <typename Cost>
Vertex nelder_mead(Cost&& cost, const Params& start, const RegistrationConfig& cfg,
                   int& iterations, int& evaluations) {
  constexpr double n = kParams;
  const double alpha = 1.0;
  const double beta = 1.0 + 2.0 / n;
  const double gamma = 0.75 - 1.0 / (2.0 * n);
  const double delta = 1.0 - 1.0 / n;

  auto eval = [&](const Params& x) {
    ++evaluations;
    const double f = cost(x);
    if (std::isnan(f)) throw NumericalError("registration cost is not a number");
    return f;
  };

  std::array<Vertex, kParams + 1> simplex;
  simplex[0] = {start, eval(start)};
  for (int i = 0; i < kParams; ++i) {
    Params x = start;
    x[static_cast<std::size_t>(i)] += cfg.init_step;
    simplex[static_cast<std::size_t>(i) + 1] = {x, eval(x)};
  }

  auto combine = [](const Params& a, const Params& b, double w) {
    // a + w * (b - a)
    Params r;
    for (int i = 0; i < kParams; ++i) r[i] = a[i] + w * (b[i] - a[i]);
    return r;
  };

  iterations = 0;
  while (iterations < cfg.max_iters) {
    std::stable_sort(simplex.begin(), simplex.end(),
                     [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    double diameter = 0.0;
    for (std::size_t v = 1; v < simplex.size(); ++v) {
      double d2 = 0.0;
      for (int i = 0; i < kParams; ++i) {
        const double d = simplex[v].x[i] - simplex[0].x[i];
        d2 += d * d;
      }
      diameter = std::max(diameter, std::sqrt(d2));
    }
    if (diameter < cfg.tol) break;
    ++iterations;

    Params centroid{};
    for (std::size_t v = 0; v < kParams; ++v) {
      for (int i = 0; i < kParams; ++i) centroid[i] += simplex[v].x[i] / n;
    }
    Vertex& worst = simplex.back();
    const double f_second = simplex[kParams - 1].f;

    const Params xr = combine(centroid, worst.x, -alpha);
    const double fr = eval(xr);
    if (fr < simplex[0].f) {
      const Params xe = combine(centroid, xr, beta);
      const double fe = eval(xe);
      worst = fe < fr ? Vertex{xe, fe} : Vertex{xr, fr};
      continue;
    }
    if (fr < f_second) {
      worst = {xr, fr};
      continue;
    }
    if (fr < worst.f) {
      const Params xc = combine(centroid, xr, gamma);
      const double fc = eval(xc);
      if (fc <= fr) {
        worst = {xc, fc};
        continue;
      }
    } else {
      const Params xc = combine(centroid, worst.x, gamma);
      const double fc = eval(xc);
      if (fc < worst.f) {
        worst = {xc, fc};
        continue;
      }
    }
    for (std::size_t v = 1; v < simplex.size(); ++v) {
      simplex[v].x = combine(simplex[0].x, simplex[v].x, delta);
      simplex[v].f = eval(simplex[v].x);
    }
  }
  return *std::min_element(simplex.begin(), simplex.end(),
                           [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
}

}  // namespace

AffineTransform AffineTransform::translation_by(double tx, double ty, double tz) {
  AffineTransform t;
  t.translation = {tx, ty, tz};
  return t;
}

AffineTransform AffineTransform::scaling_about(const Eigen::Vector3d& center,
                                               const Eigen::Vector3d& s) {
  AffineTransform t;
  t.matrix = s.asDiagonal();
  t.translation = center - t.matrix * center;
  return t;
}

double msd_cost(const Volume3& fixed, const Volume3& moving, const AffineTransform& t,
                const LungMask* mask) {
  require_same_dims(fixed, moving);
  if (mask != nullptr && mask->dims() != fixed.dims()) {
    throw ArgumentError("mask does not match the fixed volume");
  }
  const Dims d = fixed.dims();
  const auto& k = simd::active_kernels();
  const simd::VolumeView mv = view_of(moving);
  const Eigen::Vector3d step = t.matrix.col(0);
  const double step_arr[3] = {step.x(), step.y(), step.z()};
  std::vector<float> row(d.nx);
  double acc = 0.0;
  std::size_t samples = 0;
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      const Eigen::Vector3d o =
          t.apply({0.0, static_cast<double>(y), static_cast<double>(z)});
      const double origin[3] = {o.x(), o.y(), o.z()};
      k.trilinear_row(mv, origin, step_arr, d.nx, row.data());
      const float* f = fixed.data().data() + fixed.index(0, y, z);
      if (mask == nullptr) {
        acc += k.squared_distance(f, row.data(), d.nx);
        samples += d.nx;
      } else {
        const std::uint8_t* m = mask->bits().data() + fixed.index(0, y, z);
        for (std::size_t x = 0; x < d.nx; ++x) {
          if (!m[x]) continue;
          const double diff = static_cast<double>(f[x]) - static_cast<double>(row[x]);
          acc += diff * diff;
          ++samples;
        }
      }
    }
  }
  if (samples == 0) throw ArgumentError("msd_cost: empty fixed-image domain");
  return acc / static_cast<double>(samples);
}

std::size_t MsdSampler::lattice_extent(std::size_t n, std::size_t stride) {
  std::size_t offset = (stride - 1) / 2;
  if (offset >= n) offset = 0;
  return (n - offset + stride - 1) / stride;
}

MsdSampler::MsdSampler(Dims fixed_dims, std::size_t stride, std::vector<float> lattice_values)
    : dims_(fixed_dims), stride_(stride), offset_((stride - 1) / 2) {
  if (stride_ == 0) throw ArgumentError("sample stride must be positive");
  if (offset_ >= dims_.min_extent()) offset_ = 0;
  lx_ = lattice_extent(dims_.nx, stride_);
  ly_ = lattice_extent(dims_.ny, stride_);
  lz_ = lattice_extent(dims_.nz, stride_);
  if (lattice_values.size() != lx_ * ly_ * lz_) {
    throw SizeError("lattice values do not match the sample lattice");
  }
  values_ = std::move(lattice_values);
}

MsdSampler::MsdSampler(const Volume3& fixed, std::size_t stride)
    : MsdSampler(fixed.dims(), stride,
                 std::vector<float>(lattice_extent(fixed.dims().nx, stride) *
                                    lattice_extent(fixed.dims().ny, stride) *
                                    lattice_extent(fixed.dims().nz, stride))) {
  std::size_t i = 0;
  for (std::size_t z = 0; z < lz_; ++z) {
    for (std::size_t y = 0; y < ly_; ++y) {
      for (std::size_t x = 0; x < lx_; ++x) {
        values_[i++] = fixed.at(offset_ + x * stride_, offset_ + y * stride_, offset_ + z * stride_);
      }
    }
  }
}

void MsdSampler::sample(const Volume3& moving, const AffineTransform& t,
                        std::span<float> out) const {
  if (moving.dims() != dims_) throw ArgumentError("moving volume differs from fixed dims");
  if (out.size() != values_.size()) throw SizeError("sample buffer has the wrong size");
  const auto& k = simd::active_kernels();
  const simd::VolumeView mv = view_of(moving);
  const Eigen::Vector3d step = t.matrix.col(0) * static_cast<double>(stride_);
  const double step_arr[3] = {step.x(), step.y(), step.z()};
  const auto s = static_cast<double>(stride_);
  const auto off = static_cast<double>(offset_);
  for (std::size_t z = 0; z < lz_; ++z) {
    for (std::size_t y = 0; y < ly_; ++y) {
      const Eigen::Vector3d o = t.apply({off, off + s * static_cast<double>(y),
                                         off + s * static_cast<double>(z)});
      const double origin[3] = {o.x(), o.y(), o.z()};
      k.trilinear_row(mv, origin, step_arr, lx_, out.data() + lx_ * (y + ly_ * z));
    }
  }
}

double MsdSampler::cost(const Volume3& moving, const AffineTransform& t) const {
  if (moving.dims() != dims_) throw ArgumentError("moving volume differs from fixed dims");
  const auto& k = simd::active_kernels();
  const simd::VolumeView mv = view_of(moving);
  const Eigen::Vector3d step = t.matrix.col(0) * static_cast<double>(stride_);
  const double step_arr[3] = {step.x(), step.y(), step.z()};
  const auto s = static_cast<double>(stride_);
  const auto off = static_cast<double>(offset_);
  thread_local std::vector<float> row;
  row.resize(lx_);
  double acc = 0.0;
  for (std::size_t z = 0; z < lz_; ++z) {
    for (std::size_t y = 0; y < ly_; ++y) {
      const Eigen::Vector3d o = t.apply({off, off + s * static_cast<double>(y),
                                         off + s * static_cast<double>(z)});
      const double origin[3] = {o.x(), o.y(), o.z()};
      k.trilinear_row(mv, origin, step_arr, lx_, row.data());
      acc += k.squared_distance(values_.data() + lx_ * (y + ly_ * z), row.data(), lx_);
    }
  }
  return acc / static_cast<double>(values_.size());
}

RegistrationResult register_affine(const MsdSampler& fixed, const Volume3& moving,
                                   const RegistrationConfig& config,
                                   const AffineTransform* init) {
  if (config.max_iters < 0 || !(config.init_step > 0.0) || !(config.tol >= 0.0)) {
    throw ArgumentError("invalid registration configuration");
  }
  const ParamFrame frame(fixed.fixed_dims());
  RegistrationResult result;
  result.identity_cost = fixed.cost(moving, AffineTransform::identity());
  if (!std::isfinite(result.identity_cost)) {
    throw NumericalError("registration cost is not finite at the identity");
  }

  auto cost = [&](const Params& p) {
    const AffineTransform t = frame.to_transform(p);
    if (!t.preserves_orientation()) return std::numeric_limits<double>::max();
    const double f = fixed.cost(moving, t);
    if (!std::isfinite(f)) throw NumericalError("registration cost is not finite");
    return f;
  };
  const Params start = init ? frame.to_params(*init) : Params{};
  const Vertex best = nelder_mead(cost, start, config, result.iterations, result.evaluations);

  if (best.f <= result.identity_cost) {
    result.transform = frame.to_transform(best.x);
    result.final_cost = best.f;
  } else {
    // Only reachable with a warm start worse than the identity.
    result.transform = AffineTransform::identity();
    result.final_cost = result.identity_cost;
  }
  return result;
}

RegistrationResult register_affine(const Volume3& fixed, const Volume3& moving,
                                   const RegistrationConfig& config,
                                   const AffineTransform* init) {
  require_same_dims(fixed, moving);
  const MsdSampler sampler(fixed, config.sample_stride);
  return register_affine(sampler, moving, config, init);
}

Volume3 resample_with(const Volume3& moving, const AffineTransform& t, Dims out_dims) {
  if (!t.matrix.allFinite() || !t.translation.allFinite()) {
    throw ArgumentError("transform has non-finite entries");
  }
  Volume3 out(out_dims, moving.spacing());
  const auto& k = simd::active_kernels();
  const simd::VolumeView mv = view_of(moving);
  const Eigen::Vector3d step = t.matrix.col(0);
  const double step_arr[3] = {step.x(), step.y(), step.z()};
  auto dst = out.mutable_data();
  for (std::size_t z = 0; z < out_dims.nz; ++z) {
    for (std::size_t y = 0; y < out_dims.ny; ++y) {
      const Eigen::Vector3d o = t.apply({0.0, static_cast<double>(y), static_cast<double>(z)});
      const double origin[3] = {o.x(), o.y(), o.z()};
      k.trilinear_row(mv, origin, step_arr, out_dims.nx, dst.data() + out.index(0, y, z));
    }
  }
  return out;
}

LungMask resample_mask_with(const LungMask& mask, const AffineTransform& t, Dims out_dims) {
  return LungMask::from_volume(resample_with(mask.to_volume(), t, out_dims));
}

MeanTemplate MeanTemplate::build(std::span<const Volume3* const> cohort, int n_rounds,
                                 const RegistrationConfig& config, std::size_t threads) {
  if (cohort.empty()) throw ArgumentError("template needs at least one volume");
  if (n_rounds < 0) throw ArgumentError("template rounds must be non-negative");
  const Dims dims = cohort.front()->dims();
  for (const Volume3* v : cohort) {
    if (v->dims() != dims) throw ArgumentError("template volumes differ in dims");
  }
  const std::size_t m = cohort.size();
  const auto inv_m = 1.0 / static_cast<double>(m);

  // Round 0: voxelwise mean, read straight off the lattice voxels.
  MsdSampler sampler(*cohort.front(), config.sample_stride);
  {
    std::vector<double> acc(sampler.lattice_size(), 0.0);
    for (const Volume3* v : cohort) {
      const MsdSampler member(*v, config.sample_stride);
      const auto vals = member.values();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += vals[i];
    }
    std::vector<float> lattice(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) lattice[i] = static_cast<float>(acc[i] * inv_m);
    sampler = MsdSampler(dims, config.sample_stride, std::move(lattice));
  }

  std::vector<AffineTransform> transforms(m, AffineTransform::identity());
  std::vector<std::vector<float>> warped(m);
  for (int round = 0; round < n_rounds; ++round) {
    // Later rounds start from the previous transforms, so a smaller simplex suffices.
    RegistrationConfig round_cfg = config;
    if (round > 0) round_cfg.init_step = config.init_step * 0.25;
    parallel_for(m, threads, [&](std::size_t i) {
      try {
        transforms[i] = register_affine(sampler, *cohort[i], round_cfg, &transforms[i]).transform;
      } catch (const NumericalError& e) {
        throw NumericalError("template member " + std::to_string(i) + ": " + e.what());
      }
      warped[i].resize(sampler.lattice_size());
      sampler.sample(*cohort[i], transforms[i], warped[i]);
    });
    std::vector<double> acc(sampler.lattice_size(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += warped[i][j];
    }
    std::vector<float> lattice(acc.size());
    for (std::size_t j = 0; j < acc.size(); ++j) lattice[j] = static_cast<float>(acc[j] * inv_m);
    sampler = MsdSampler(dims, config.sample_stride, std::move(lattice));
  }
  return MeanTemplate(std::move(sampler), n_rounds, std::move(transforms));
}

RegistrationResult MeanTemplate::align(const Volume3& moving, const RegistrationConfig& config,
                                       const AffineTransform* init) const {
  return register_affine(sampler_, moving, config, init);
}

Volume3 MeanTemplate::full_resolution(std::span<const Volume3* const> cohort) const {
  if (cohort.size() != transforms_.size()) {
    throw ArgumentError("cohort does not match the template's members");
  }
  const Dims dims = sampler_.fixed_dims();
  std::vector<double> acc(dims.voxel_count(), 0.0);
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (rounds_ == 0) {
      const auto vals = cohort[i]->data();
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += vals[j];
    } else {
      const Volume3 w = resample_with(*cohort[i], transforms_[i], dims);
      const auto vals = w.data();
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += vals[j];
    }
  }
  const double inv_m = 1.0 / static_cast<double>(cohort.size());
  std::vector<float> data(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) data[j] = static_cast<float>(acc[j] * inv_m);
  return Volume3(dims, cohort.front()->spacing(), std::move(data));
}

Volume3 build_mean_template(std::span<const Volume3> volumes, int n_rounds,
                            const RegistrationConfig& config, std::size_t threads) {
  if (volumes.size() < 2) throw ArgumentError("template needs at least two volumes");
  std::vector<const Volume3*> cohort;
  cohort.reserve(volumes.size());
  for (const Volume3& v : volumes) cohort.push_back(&v);
  return MeanTemplate::build(cohort, n_rounds, config, threads).full_resolution(cohort);
}

}  // namespace eigenpatch
