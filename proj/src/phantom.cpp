#include "eigenpatch/phantom.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/parallel.hpp"
#include "eigenpatch/random.hpp"

namespace eigenpatch {
namespace {

using nlohmann::json;

constexpr int kPlacementAttempts = 200;

struct Ellipsoid {
  Eigen::Vector3d center;
  Eigen::Vector3d semi;

  bool contains(const Eigen::Vector3d& q) const {
    return ((q - center).array() / semi.array()).square().sum() <= 1.0;
  }
};

struct Sphere {
  Eigen::Vector3d center;
  double radius;

  bool contains(const Eigen::Vector3d& q) const {
    return (q - center).squaredNorm() <= radius * radius;
  }
};

// Canonical anatomy on the subject grid; lengths are given for 128^3.
struct Anatomy {
  Ellipsoid body;
  std::array<Ellipsoid, 2> lungs;
};

Anatomy canonical_anatomy(const Dims& d) {
  const Eigen::Vector3d g(static_cast<double>(d.nx) / 128.0, static_cast<double>(d.ny) / 128.0,
                          static_cast<double>(d.nz) / 128.0);
  const Eigen::Vector3d c(0.5 * (static_cast<double>(d.nx) - 1.0),
                          0.5 * (static_cast<double>(d.ny) - 1.0),
                          0.5 * (static_cast<double>(d.nz) - 1.0));
  Anatomy a;
  a.body = {c, Eigen::Vector3d(66.0, 60.0, 66.0).cwiseProduct(g)};
  const Eigen::Vector3d lung_semi = Eigen::Vector3d(25.0, 42.0, 52.0).cwiseProduct(g);
  a.lungs[0] = {c + Eigen::Vector3d(-30.0 * g.x(), 0.0, 0.0), lung_semi};
  a.lungs[1] = {c + Eigen::Vector3d(30.0 * g.x(), 0.0, 0.0), lung_semi};
  return a;
}

// Subject frame p = S (q - c) + c + t.
struct Jitter {
  Eigen::Vector3d center;
  Eigen::Vector3d scale;
  Eigen::Vector3d shift;

  Eigen::Vector3d to_canonical(const Eigen::Vector3d& p) const {
    return (p - center - shift).cwiseQuotient(scale) + center;
  }
  Eigen::Vector3d to_subject(const Eigen::Vector3d& q) const {
    return (q - center).cwiseProduct(scale) + center + shift;
  }
};

Eigen::Vector3d random_direction(Rng& rng) {
  for (;;) {
    const Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

bool lung_at(const Anatomy& a, const Eigen::Vector3d& q) {
  return a.lungs[0].contains(q) || a.lungs[1].contains(q);
}

// Every voxel the sphere covers must also be lung.
bool sphere_within_lungs(const Anatomy& a, const Jitter& j, const Sphere& s, const Dims& d) {
  const Eigen::Vector3d p = j.to_subject(s.center);
  const double reach = s.radius * j.scale.maxCoeff() + 1.0;
  const auto lo = [&](double v) { return static_cast<long>(std::floor(v - reach)); };
  const auto hi = [&](double v) { return static_cast<long>(std::ceil(v + reach)); };
  const std::array<long, 3> n = {static_cast<long>(d.nx), static_cast<long>(d.ny),
                                 static_cast<long>(d.nz)};
  const std::array<long, 3> l = {lo(p.x()), lo(p.y()), lo(p.z())};
  const std::array<long, 3> h = {hi(p.x()), hi(p.y()), hi(p.z())};
  for (long z = l[2]; z <= h[2]; ++z) {
    for (long y = l[1]; y <= h[1]; ++y) {
      for (long x = l[0]; x <= h[0]; ++x) {
        const Eigen::Vector3d q = j.to_canonical(
            {static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)});
        if (!s.contains(q)) continue;
        if (x < 0 || y < 0 || z < 0 || x >= n[0] || y >= n[1] || z >= n[2]) return false;
        if (!lung_at(a, q)) return false;
      }
    }
  }
  return true;
}

}  // namespace

void PhantomSpec::validate() const {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) throw ArgumentError("phantom dims must be positive");
  if (!(lung_intensity < lesion_intensity && lesion_intensity < body_intensity)) {
    throw ArgumentError("phantom intensities must satisfy lung < lesion < body");
  }
  if (lesion_count_min < 0 || lesion_count_max < lesion_count_min) {
    throw ArgumentError("invalid lesion count range");
  }
  if (!(lesion_radius_min >= 1.0 && lesion_radius_max >= lesion_radius_min)) {
    throw ArgumentError("lesion radii must be >= 1 and ordered");
  }
  if (!(lesion_depth_min >= 0.0 && lesion_depth_max <= 1.0 && lesion_depth_min <= lesion_depth_max)) {
    throw ArgumentError("lesion depth range must lie in [0, 1]");
  }
  if (!(jitter_translation >= 0.0 && jitter_scale >= 0.0 && jitter_scale < 0.5)) {
    throw ArgumentError("invalid jitter range");
  }
  if (!(noise_sigma >= 0.0)) throw ArgumentError("noise sigma must be non-negative");
}

json to_json(const PhantomSpec& s) {
  return {
      {"dims", {s.dims.nx, s.dims.ny, s.dims.nz}},
      {"body_intensity", s.body_intensity},
      {"lung_intensity", s.lung_intensity},
      {"lesion_intensity", s.lesion_intensity},
      {"lesion_count", {s.lesion_count_min, s.lesion_count_max}},
      {"lesion_radius", {s.lesion_radius_min, s.lesion_radius_max}},
      {"lesion_depth", {s.lesion_depth_min, s.lesion_depth_max}},
      {"jitter_translation", s.jitter_translation},
      {"jitter_scale", s.jitter_scale},
      {"noise_sigma", s.noise_sigma},
      {"rng_seed", s.rng_seed},
  };
}

PhantomSpec phantom_spec_from_json(const json& j) {
  try {
    PhantomSpec s;
    const auto d = j.at("dims").get<std::array<std::size_t, 3>>();
    s.dims = {d[0], d[1], d[2]};
    s.body_intensity = j.at("body_intensity").get<double>();
    s.lung_intensity = j.at("lung_intensity").get<double>();
    s.lesion_intensity = j.at("lesion_intensity").get<double>();
    const auto c = j.at("lesion_count").get<std::array<int, 2>>();
    s.lesion_count_min = c[0];
    s.lesion_count_max = c[1];
    const auto r = j.at("lesion_radius").get<std::array<double, 2>>();
    s.lesion_radius_min = r[0];
    s.lesion_radius_max = r[1];
    const auto dep = j.at("lesion_depth").get<std::array<double, 2>>();
    s.lesion_depth_min = dep[0];
    s.lesion_depth_max = dep[1];
    s.jitter_translation = j.at("jitter_translation").get<double>();
    s.jitter_scale = j.at("jitter_scale").get<double>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed phantom spec: ") + e.what());
  }
}

std::vector<std::size_t> PhantomSubject::lesion_patch_ids(std::size_t side) const {
  const PatchGrid grid = make_patch_grid(lesions.dims(), side);
  std::vector<std::size_t> ids;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (lung_count(lesions, grid, p) > 0) ids.push_back(p);
  }
  return ids;
}

PhantomSubject generate_subject(const PhantomSpec& spec, bool diseased, std::uint64_t subject_seed) {
  spec.validate();
  const Dims d = spec.dims;
  const Anatomy anatomy = canonical_anatomy(d);
  Rng geo(derive_seed(subject_seed, {0}));

  Jitter jit;
  jit.center = anatomy.body.center;
  for (int a = 0; a < 3; ++a) {
    jit.scale(a) = 1.0 + geo.uniform(-spec.jitter_scale, spec.jitter_scale);
    jit.shift(a) = geo.uniform(-spec.jitter_translation, spec.jitter_translation);
  }

  std::vector<Sphere> lesions;
  if (diseased) {
    const int count = spec.lesion_count_min +
                      static_cast<int>(geo.below(static_cast<std::uint64_t>(
                          spec.lesion_count_max - spec.lesion_count_min + 1)));
    for (int l = 0; l < count; ++l) {
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
        const Ellipsoid& lung = anatomy.lungs[geo.below(2)];
        const double radius = geo.uniform(spec.lesion_radius_min, spec.lesion_radius_max);
        const double depth = geo.uniform(spec.lesion_depth_min, spec.lesion_depth_max);
        const Eigen::Vector3d dir = random_direction(geo);
        const Sphere s{lung.center + depth * lung.semi.cwiseProduct(dir), radius};
        if (sphere_within_lungs(anatomy, jit, s, d)) {
          lesions.push_back(s);
          placed = true;
        }
      }
      if (!placed) {
        throw GenerationError("could not place lesion " + std::to_string(l) + " inside the lungs");
      }
    }
  }

  PhantomSubject out{Volume3(d, {1.0, 1.0, 1.0}), LungMask(d), LungMask(d), lesions.size()};
  auto data = out.volume.mutable_data();
  auto mask = out.mask.mutable_bits();
  auto lesion_bits = out.lesions.mutable_bits();
  Rng noise(derive_seed(subject_seed, {1}));
  std::size_t i = 0;
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x, ++i) {
        const Eigen::Vector3d q = jit.to_canonical(
            {static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)});
        double v = spec.lung_intensity;  // air outside the body
        if (anatomy.body.contains(q)) {
          if (lung_at(anatomy, q)) {
            mask[i] = 1;
            const bool lesion = std::any_of(lesions.begin(), lesions.end(),
                                            [&](const Sphere& s) { return s.contains(q); });
            if (lesion) lesion_bits[i] = 1;
            v = lesion ? spec.lesion_intensity : spec.lung_intensity;
          } else {
            v = spec.body_intensity;
          }
        }
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise.normal();
        data[i] = static_cast<float>(v);
      }
    }
  }
  for (std::size_t k = 0; k < lesion_bits.size(); ++k) {
    if (lesion_bits[k] && !mask[k]) throw GenerationError("lesion voxel outside the lung mask");
  }
  return out;
}

std::size_t Cohort::count(Label l) const {
  return static_cast<std::size_t>(std::count_if(subjects.begin(), subjects.end(),
                                                [&](const CohortEntry& e) { return e.label == l; }));
}

void save_cohort_manifest(const Cohort& cohort) {
  json subjects = json::array();
  for (const CohortEntry& e : cohort.subjects) {
    json lp = json::object();
    for (const auto& [side, ids] : e.lesion_patches) lp[std::to_string(side)] = ids;
    subjects.push_back({{"id", e.id},
                        {"label", to_string(e.label)},
                        {"seed", e.seed},
                        {"volume", e.volume.generic_string()},
                        {"mask", e.mask.generic_string()},
                        {"lesion_patches", std::move(lp)}});
  }
  const json manifest = {{"subjects", std::move(subjects)}, {"spec", to_json(cohort.spec)}};
  std::filesystem::create_directories(cohort.root);
  std::ofstream out(cohort.root / "cohort.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (cohort.root / "cohort.json").string());
}

Cohort generate_cohort(const PhantomSpec& spec, std::size_t n_control, std::size_t n_diseased,
                       const std::filesystem::path& out_dir, std::size_t threads) {
  if (n_control < 1 || n_diseased < 1) throw ArgumentError("cohort needs at least one subject per class");
  spec.validate();
  Cohort cohort;
  cohort.root = out_dir;
  cohort.spec = spec;
  const std::size_t n = n_control + n_diseased;
  cohort.subjects.resize(n);
  std::filesystem::create_directories(out_dir);
  parallel_for(n, threads, [&](std::size_t i) {
    CohortEntry& e = cohort.subjects[i];
    char id[32];
    std::snprintf(id, sizeof id, "s%03zu", i);
    e.id = id;
    e.label = i < n_control ? Label::control : Label::pneumonia;
    e.seed = derive_seed(spec.rng_seed, {static_cast<std::uint64_t>(i)});
    const PhantomSubject s = generate_subject(spec, e.label == Label::pneumonia, e.seed);
    e.volume = e.id + ".evr";
    e.mask = e.id + "_mask.evr";
    save_volume(s.volume, out_dir / e.volume);
    save_mask(s.mask, out_dir / e.mask, s.volume.spacing());
    for (const std::size_t side : kManifestSides) {
      if (side <= spec.dims.min_extent()) e.lesion_patches[side] = s.lesion_patch_ids(side);
    }
  });
  save_cohort_manifest(cohort);
  return cohort;
}

Cohort load_cohort(const std::filesystem::path& dir) {
  std::ifstream in(dir / "cohort.json");
  if (!in) throw IoError("missing cohort manifest in " + dir.string());
  try {
    const json j = json::parse(in);
    Cohort c;
    c.root = dir;
    c.spec = phantom_spec_from_json(j.at("spec"));
    for (const json& s : j.at("subjects")) {
      CohortEntry e;
      e.id = s.at("id").get<std::string>();
      const auto label = s.at("label").get<std::string>();
      if (label != "control" && label != "pneumonia") throw FormatError("unknown label '" + label + "'");
      e.label = label == "pneumonia" ? Label::pneumonia : Label::control;
      e.seed = s.value("seed", std::uint64_t{0});
      e.volume = s.at("volume").get<std::string>();
      e.mask = s.at("mask").get<std::string>();
      if (s.contains("lesion_patches")) {
        for (const auto& [side, ids] : s.at("lesion_patches").items()) {
          e.lesion_patches[std::stoul(side)] = ids.get<std::vector<std::size_t>>();
        }
      }
      c.subjects.push_back(std::move(e));
    }
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed cohort manifest: ") + e.what());
  }
}

}  // namespace eigenpatch
