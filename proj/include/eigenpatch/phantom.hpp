#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "eigenpatch/label.hpp"
#include "eigenpatch/segmentation.hpp"
#include "eigenpatch/volume.hpp"
#include "json.hpp"

namespace eigenpatch {

/// Synthetic chest phantom: an ellipsoidal body holding two ellipsoidal
/// lungs, optional spherical lesions inside the lungs, a random affine
/// jitter per subject and additive Gaussian noise. Geometry is given for a
/// 128^3 grid and scales with `dims`.
struct PhantomSpec {
  Dims dims{128, 128, 128};
  double body_intensity = 1.0;
  double lung_intensity = 0.0;
  double lesion_intensity = 0.35;
  int lesion_count_min = 100;
  int lesion_count_max = 200;
  double lesion_radius_min = 2.0;
  double lesion_radius_max = 4.0;
  /// Lesion centres sit at this range of normalized lung radius.
  double lesion_depth_min = 0.45;
  double lesion_depth_max = 0.95;
  double jitter_translation = 3.0;
  double jitter_scale = 0.05;
  double noise_sigma = 0.03;
  std::uint64_t rng_seed = 7;

  void validate() const;
};

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

struct PhantomSubject {
  Volume3 volume;
  LungMask mask;
  /// Voxels covered by a lesion.
  LungMask lesions;
  std::size_t lesion_count = 0;

  /// Patch ids of a side-`side` grid whose voxels intersect a lesion, sorted.
  std::vector<std::size_t> lesion_patch_ids(std::size_t side) const;
};

PhantomSubject generate_subject(const PhantomSpec& spec, bool diseased, std::uint64_t subject_seed);

/// Patch sides recorded in cohort manifests.
inline constexpr std::size_t kManifestSides[] = {24, 28, 32, 42, 48, 56, 64};

struct CohortEntry {
  std::string id;
  Label label = Label::control;
  std::uint64_t seed = 0;
  std::filesystem::path volume;  // relative to the cohort directory
  std::filesystem::path mask;
  std::map<std::size_t, std::vector<std::size_t>> lesion_patches;
};

struct Cohort {
  std::filesystem::path root;
  PhantomSpec spec;
  std::vector<CohortEntry> subjects;

  std::size_t count(Label l) const;
};

/// Writes `<id>.evr`, `<id>_mask.evr` and `cohort.json` under `out_dir`.
/// Controls come first, then diseased subjects.
Cohort generate_cohort(const PhantomSpec& spec, std::size_t n_control, std::size_t n_diseased,
                       const std::filesystem::path& out_dir, std::size_t threads = 1);

Cohort load_cohort(const std::filesystem::path& dir);
void save_cohort_manifest(const Cohort& cohort);

}  // namespace eigenpatch
