#include "eigenpatch/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/parallel.hpp"
#include "eigenpatch/random.hpp"

namespace eigenpatch {
namespace {

using nlohmann::json;

constexpr int kManifestVersion = 1;

std::uint64_t patch_seed(const EnsembleConfig& c, std::size_t patch_id) {
  return derive_seed(c.seed, {static_cast<std::uint64_t>(c.patch_side),
                              static_cast<std::uint64_t>(patch_id)});
}

KernelSpec kpca_kernel(const EnsembleConfig& c, double median_sigma) {
  switch (c.kpca_kernel) {
    case KernelKind::rbf:
      return KernelSpec::rbf(c.kpca_sigma > 0.0 ? c.kpca_sigma : median_sigma);
    case KernelKind::polynomial:
      return KernelSpec::polynomial(c.kpca_degree, c.kpca_coef0);
    case KernelKind::linear:
      return KernelSpec::linear();
  }
  return KernelSpec::linear();
}

// SVM kernel between feature rows.
Eigen::MatrixXd feature_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
  const KernelSpec k = KernelSpec::rbf_gamma(gamma);
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double d = a(i, c) - b(j, c);
        d2 += d * d;
      }
      out(i, j) = k.from_parts(d2, 0.0);
    }
  }
  return out;
}

void require_consistent(std::span<const Volume3* const> volumes,
                        std::span<const LungMask* const> masks, const Dims& dims) {
  if (volumes.size() != masks.size()) throw ArgumentError("volumes and masks differ in count");
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    if (volumes[i]->dims() != dims || masks[i]->dims() != dims) {
      throw ArgumentError("subject " + std::to_string(i) + " does not match the ensemble dims");
    }
  }
}

struct PatchRun {
  std::optional<EigenlungModel> eigenlungs;
  Eigen::MatrixXd train_features;
  std::vector<PatchPosterior> test_posteriors;
};

// Rows [0, n) of `vectors` are training subjects, the rest are test subjects.
PatchRun run_patch(SampleMatrix vectors, Eigen::Index n, std::span<const int> y,
                   const EnsembleConfig& cfg, std::uint64_t seed) {
  const Eigen::Index t = vectors.rows() - n;
  const double gamma = cfg.bootstrap.svm.gamma;
  PatchRun run;
  Eigen::MatrixXd svm_train;
  Eigen::MatrixXd svm_test;
  if (cfg.features == FeatureMode::kpca) {
    const bool rbf = cfg.kpca_kernel == KernelKind::rbf;
    const Eigen::MatrixXd parts = rbf ? pairwise_squared_distances(vectors) : pairwise_dots(vectors);
    const double median = rbf && cfg.kpca_sigma <= 0.0
                              ? median_pairwise_distance(parts, static_cast<std::size_t>(n))
                              : 1.0;
    const KernelSpec kernel = kpca_kernel(cfg, median);
    const Eigen::MatrixXd k_all = gram_from_parts(parts, kernel);
    SampleMatrix train = vectors.topRows(n);
    Eigen::MatrixXd train_proj;
    run.eigenlungs = fit_eigenlungs_from_gram(std::move(train), k_all.topLeftCorner(n, n), kernel,
                                              cfg.variance_target, &train_proj);
    Eigen::MatrixXd test_proj(t, train_proj.cols());
    for (Eigen::Index r = 0; r < t; ++r) {
      test_proj.row(r) =
          project_kernel_row(*run.eigenlungs, k_all.row(n + r).head(n).transpose()).transpose();
    }
    svm_train = feature_kernel(train_proj, train_proj, gamma);
    svm_test = feature_kernel(test_proj, train_proj, gamma);
    run.train_features = std::move(train_proj);
  } else {
    const Eigen::MatrixXd k_all =
        gram_from_parts(pairwise_squared_distances(vectors), KernelSpec::rbf_gamma(gamma));
    svm_train = k_all.topLeftCorner(n, n);
    svm_test = k_all.bottomLeftCorner(t, n);
    run.train_features = vectors.topRows(n).cast<double>();
  }
  if (t > 0) run.test_posteriors = bootstrap_posteriors(svm_train, y, svm_test, cfg.bootstrap, seed, 1);
  return run;
}

SampleMatrix gather_vectors(std::span<const Volume3* const> a, std::span<const LungMask* const> am,
                            std::span<const Volume3* const> b, std::span<const LungMask* const> bm,
                            const PatchGrid& grid, std::size_t patch) {
  const auto d = static_cast<Eigen::Index>(grid.patch_voxels());
  SampleMatrix x(static_cast<Eigen::Index>(a.size() + b.size()), d);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < a.size(); ++i, ++r) {
    masked_patch_into(*a[i], *am[i], grid, patch, {x.data() + r * d, static_cast<std::size_t>(d)});
  }
  for (std::size_t i = 0; i < b.size(); ++i, ++r) {
    masked_patch_into(*b[i], *bm[i], grid, patch, {x.data() + r * d, static_cast<std::size_t>(d)});
  }
  return x;
}

SubjectDecision decide(std::span<const std::size_t> patch_ids,
                       std::span<const PatchPosterior> posteriors) {
  SubjectDecision d;
  d.scores = ensemble_weights(posteriors);
  d.label = fused_label(d.scores);
  d.majority = majority_vote(posteriors);
  d.per_patch.reserve(posteriors.size());
  for (std::size_t k = 0; k < posteriors.size(); ++k) {
    const PatchPosterior& p = posteriors[k];
    d.per_patch.push_back(
        {patch_ids[k], p.predicted, p.mean_p, p.u, 1.0 / std::max(p.u, kUncertaintyFloor)});
  }
  return d;
}

template <typename Fn>
auto with_patch_context(std::size_t patch_id, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DegenerateInputError& e) {
    throw DegenerateInputError("patch " + std::to_string(patch_id) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError("patch " + std::to_string(patch_id) + ": " + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError("patch " + std::to_string(patch_id) + ": " + e.what());
  } catch (const ResampleError& e) {
    throw ResampleError("patch " + std::to_string(patch_id) + ": " + e.what());
  }
}

}  // namespace

std::string to_string(FeatureMode m) { return m == FeatureMode::kpca ? "kpca" : "vaf"; }

FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "kpca") return FeatureMode::kpca;
  if (s == "vaf") return FeatureMode::vaf;
  throw ArgumentError("unknown feature mode '" + s + "'");
}

json to_json(const EnsembleConfig& c) {
  return {
      {"patch_side", c.patch_side},
      {"min_lung_fraction", c.min_lung_fraction},
      {"features", to_string(c.features)},
      {"kpca_kernel", to_string(c.kpca_kernel)},
      {"kpca_sigma", c.kpca_sigma},
      {"kpca_degree", c.kpca_degree},
      {"kpca_coef0", c.kpca_coef0},
      {"variance_target", c.variance_target},
      {"bootstrap_repeats", c.bootstrap.repeats},
      {"subsample_fraction", c.bootstrap.subsample_fraction},
      {"class_retries", c.bootstrap.class_retries},
      {"platt_max_iters", c.bootstrap.platt_max_iters},
      {"svm_C", c.bootstrap.svm.C},
      {"svm_gamma", c.bootstrap.svm.gamma},
      {"svm_weighting", c.bootstrap.svm.weighting == ClassWeighting::balanced ? "balanced" : "explicit"},
      {"svm_w_neg", c.bootstrap.svm.w_neg},
      {"svm_w_pos", c.bootstrap.svm.w_pos},
      {"svm_kkt_tol", c.bootstrap.svm.kkt_tol},
      {"svm_max_iters", c.bootstrap.svm.max_iters},
      {"seed", c.seed},
  };
}

EnsembleConfig ensemble_config_from_json(const json& j) {
  try {
    EnsembleConfig c;
    c.patch_side = j.at("patch_side").get<std::size_t>();
    c.min_lung_fraction = j.at("min_lung_fraction").get<double>();
    c.features = feature_mode_from_string(j.at("features").get<std::string>());
    c.kpca_kernel = kernel_kind_from_string(j.at("kpca_kernel").get<std::string>());
    c.kpca_sigma = j.at("kpca_sigma").get<double>();
    c.kpca_degree = j.at("kpca_degree").get<int>();
    c.kpca_coef0 = j.at("kpca_coef0").get<double>();
    c.variance_target = j.at("variance_target").get<double>();
    c.bootstrap.repeats = j.at("bootstrap_repeats").get<std::size_t>();
    c.bootstrap.subsample_fraction = j.at("subsample_fraction").get<double>();
    c.bootstrap.class_retries = j.at("class_retries").get<int>();
    c.bootstrap.platt_max_iters = j.at("platt_max_iters").get<int>();
    c.bootstrap.svm.C = j.at("svm_C").get<double>();
    c.bootstrap.svm.gamma = j.at("svm_gamma").get<double>();
    c.bootstrap.svm.weighting = j.at("svm_weighting").get<std::string>() == "balanced"
                                    ? ClassWeighting::balanced
                                    : ClassWeighting::explicit_weights;
    c.bootstrap.svm.w_neg = j.at("svm_w_neg").get<double>();
    c.bootstrap.svm.w_pos = j.at("svm_w_pos").get<double>();
    c.bootstrap.svm.kkt_tol = j.at("svm_kkt_tol").get<double>();
    c.bootstrap.svm.max_iters = j.at("svm_max_iters").get<long>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed ensemble config: ") + e.what());
  }
}

ClassScores ensemble_weights(std::span<const PatchPosterior> posteriors) {
  if (posteriors.empty()) throw ArgumentError("fusion needs at least one posterior");
  ClassScores s;
  for (const PatchPosterior& p : posteriors) {
    const double w = 1.0 / std::max(p.u, kUncertaintyFloor);
    (p.predicted == Label::pneumonia ? s.e_pos : s.e_neg) += w;
  }
  const auto k = static_cast<double>(posteriors.size());
  s.e_neg /= k;
  s.e_pos /= k;
  return s;
}

Label fused_label(const ClassScores& s) {
  return s.e_pos > s.e_neg ? Label::pneumonia : Label::control;
}

Label majority_vote(std::span<const PatchPosterior> posteriors) {
  if (posteriors.empty()) throw ArgumentError("vote needs at least one posterior");
  const auto pos = std::count_if(posteriors.begin(), posteriors.end(),
                                 [](const PatchPosterior& p) { return p.predicted == Label::pneumonia; });
  const auto neg = static_cast<std::ptrdiff_t>(posteriors.size()) - pos;
  return pos > neg ? Label::pneumonia : Label::control;
}

void masked_patch_into(const Volume3& v, const LungMask& mask, const PatchGrid& grid,
                       std::size_t index, std::span<float> out) {
  if (mask.dims() != v.dims()) throw ArgumentError("mask does not match the volume");
  extract_patch_into(v, grid, index, out);
  const std::size_t s = grid.patch_side;
  const Index3 o = grid.patch_origins[index];
  const auto bits = mask.bits();
  std::size_t k = 0;
  for (std::size_t z = 0; z < s; ++z) {
    for (std::size_t y = 0; y < s; ++y) {
      const std::uint8_t* row = bits.data() + v.index(o.x, o.y + y, o.z + z);
      for (std::size_t x = 0; x < s; ++x, ++k) {
        if (!row[x]) out[k] = 0.0f;
      }
    }
  }
}

std::vector<std::size_t> select_active_patches(std::span<const LungMask* const> masks,
                                               const PatchGrid& grid, double min_fraction,
                                               std::vector<double>* mean_fractions) {
  if (masks.empty()) throw ArgumentError("active-patch selection needs at least one mask");
  std::vector<double> mean(grid.size(), 0.0);
  for (const LungMask* m : masks) {
    for (std::size_t p = 0; p < grid.size(); ++p) mean[p] += lung_fraction(*m, grid, p);
  }
  std::vector<std::size_t> active;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    mean[p] /= static_cast<double>(masks.size());
    if (mean[p] >= min_fraction) active.push_back(p);
  }
  if (mean_fractions != nullptr) *mean_fractions = std::move(mean);
  return active;
}

std::vector<SubjectDecision> train_and_classify(std::span<const Volume3* const> train_volumes,
                                                std::span<const LungMask* const> train_masks,
                                                std::span<const Label> train_labels,
                                                std::span<const Volume3* const> test_volumes,
                                                std::span<const LungMask* const> test_masks,
                                                const EnsembleConfig& config) {
  if (train_volumes.empty() || train_labels.size() != train_volumes.size()) {
    throw ArgumentError("training volumes and labels differ in count");
  }
  const Dims dims = train_volumes.front()->dims();
  require_consistent(train_volumes, train_masks, dims);
  require_consistent(test_volumes, test_masks, dims);
  const PatchGrid grid = make_patch_grid(dims, config.patch_side);
  const std::vector<std::size_t> active =
      select_active_patches(train_masks, grid, config.min_lung_fraction);
  if (active.empty()) throw ConfigurationError("no patch reaches the lung-fraction threshold");
  const std::vector<int> y = to_signs(train_labels);
  const auto n = static_cast<Eigen::Index>(train_volumes.size());

  std::vector<std::vector<PatchPosterior>> by_patch(active.size());
  parallel_for(active.size(), config.threads, [&](std::size_t k) {
    const std::size_t p = active[k];
    by_patch[k] = with_patch_context(p, [&] {
      return run_patch(gather_vectors(train_volumes, train_masks, test_volumes, test_masks, grid, p),
                       n, y, config, patch_seed(config, p))
          .test_posteriors;
    });
  });

  std::vector<SubjectDecision> out;
  out.reserve(test_volumes.size());
  for (std::size_t t = 0; t < test_volumes.size(); ++t) {
    std::vector<PatchPosterior> post;
    post.reserve(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) post.push_back(std::move(by_patch[k][t]));
    out.push_back(decide(active, post));
  }
  return out;
}

EnsembleModel train_ensemble(std::span<const Volume3* const> volumes,
                             std::span<const LungMask* const> masks, std::span<const Label> labels,
                             const EnsembleConfig& config, std::span<const std::string> ids) {
  if (volumes.empty() || labels.size() != volumes.size()) {
    throw ArgumentError("volumes and labels differ in count");
  }
  if (std::count(labels.begin(), labels.end(), Label::control) < 2 ||
      std::count(labels.begin(), labels.end(), Label::pneumonia) < 2) {
    throw ArgumentError("ensemble training needs at least two subjects per class");
  }
  if (!ids.empty() && ids.size() != volumes.size()) throw ArgumentError("ids and volumes differ in count");
  const Dims dims = volumes.front()->dims();
  require_consistent(volumes, masks, dims);

  EnsembleModel model;
  model.config = config;
  model.grid = make_patch_grid(dims, config.patch_side);
  model.active_patches = select_active_patches(masks, model.grid, config.min_lung_fraction,
                                               &model.mean_lung_fraction);
  if (model.active_patches.empty()) {
    throw ConfigurationError("no patch reaches the lung-fraction threshold");
  }
  model.training_ids.assign(ids.begin(), ids.end());
  const std::vector<int> y = to_signs(labels);
  const auto n = static_cast<Eigen::Index>(volumes.size());

  model.patches.resize(model.active_patches.size());
  parallel_for(model.active_patches.size(), config.threads, [&](std::size_t k) {
    const std::size_t p = model.active_patches[k];
    PatchModel& pm = model.patches[k];
    pm.patch_id = p;
    pm.seed = patch_seed(config, p);
    pm.train_labels = y;
    with_patch_context(p, [&] {
      SampleMatrix vectors = gather_vectors(volumes, masks, {}, {}, model.grid, p);
      if (config.features == FeatureMode::vaf) pm.raw_vectors = vectors;
      PatchRun run = run_patch(std::move(vectors), n, y, config, pm.seed);
      pm.eigenlungs = std::move(run.eigenlungs);
      pm.train_features = std::move(run.train_features);
      const SampleMatrix f = pm.train_features.cast<float>();
      pm.svm = train_calibrated_svm(f, y, config.bootstrap.svm);
      return 0;
    });
  });
  return model;
}

SubjectDecision classify_subject(const EnsembleModel& model, const Volume3& volume,
                                 const LungMask& mask) {
  const EnsembleConfig& cfg = model.config;
  if (volume.dims() != model.grid.volume_dims || mask.dims() != model.grid.volume_dims) {
    throw ArgumentError("subject dims do not match the ensemble model");
  }
  const double gamma = cfg.bootstrap.svm.gamma;
  const auto d = static_cast<Eigen::Index>(model.grid.patch_voxels());
  std::vector<PatchPosterior> post(model.patches.size());
  parallel_for(model.patches.size(), cfg.threads, [&](std::size_t k) {
    const PatchModel& pm = model.patches[k];
    SampleMatrix x(1, d);
    masked_patch_into(volume, mask, model.grid, pm.patch_id, {x.data(), static_cast<std::size_t>(d)});
    Eigen::MatrixXd svm_test;
    if (cfg.features == FeatureMode::kpca) {
      const EigenlungModel& el = *pm.eigenlungs;
      const Eigen::MatrixXd parts = el.kernel.uses_distance()
                                        ? cross_squared_distances(el.train_vectors, x)
                                        : cross_dots(el.train_vectors, x);
      const Eigen::VectorXd k_row = gram_from_parts(parts, el.kernel).col(0);
      const Eigen::MatrixXd proj = project_kernel_row(el, k_row).transpose();
      svm_test = feature_kernel(proj, pm.train_features, gamma);
    } else {
      svm_test = gram_from_parts(cross_squared_distances(pm.raw_vectors, x),
                                 KernelSpec::rbf_gamma(gamma))
                     .transpose();
    }
    const Eigen::MatrixXd svm_train =
        cfg.features == FeatureMode::kpca
            ? feature_kernel(pm.train_features, pm.train_features, gamma)
            : gram_from_parts(pairwise_squared_distances(pm.raw_vectors), KernelSpec::rbf_gamma(gamma));
    post[k] = with_patch_context(pm.patch_id, [&] {
      return bootstrap_posteriors(svm_train, pm.train_labels, svm_test, cfg.bootstrap, pm.seed, 1)
          .front();
    });
  });
  return decide(model.active_patches, post);
}

json reliability_map(const PatchGrid& grid, const SubjectDecision& decision) {
  json out = json::array();
  for (const PatchVote& v : decision.per_patch) {
    const Index3 o = grid.patch_origins.at(v.patch_id);
    out.push_back({{"patch_id", v.patch_id},
                   {"origin", {o.x, o.y, o.z}},
                   {"side", grid.patch_side},
                   {"predicted_label", to_string(v.predicted)},
                   {"mean_p", v.mean_p},
                   {"u", v.u},
                   {"weight", v.weight}});
  }
  return out;
}

namespace {

void write_matrix(const std::filesystem::path& path, const SampleMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * static_cast<Eigen::Index>(sizeof(float))));
  if (!out) throw IoError("cannot write " + path.string());
}

SampleMatrix read_matrix(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  SampleMatrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * static_cast<Eigen::Index>(sizeof(float))));
  if (!in || in.peek() != std::char_traits<char>::eof()) {
    throw SizeError(path.string() + " does not hold a " + std::to_string(rows) + " x " +
                    std::to_string(cols) + " matrix");
  }
  return m;
}

json features_to_json(const Eigen::MatrixXd& f) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    rows.push_back(std::vector<double>(f.row(i).begin(), f.row(i).end()));
  }
  return rows;
}

Eigen::MatrixXd features_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd f(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto r = j.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(r.size()) != cols) throw FormatError("ragged feature matrix");
    for (Eigen::Index c = 0; c < cols; ++c) f(i, c) = r[static_cast<std::size_t>(c)];
  }
  return f;
}

}  // namespace

void save_ensemble(const EnsembleModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Dims& d = model.grid.volume_dims;
  json patches = json::array();
  for (const PatchModel& pm : model.patches) {
    const std::string stem = "patch_" + std::to_string(pm.patch_id);
    json pj = {{"patch_id", pm.patch_id},
               {"seed", pm.seed},
               {"train_labels", pm.train_labels},
               {"train_features", features_to_json(pm.train_features)},
               {"svm", to_json(pm.svm)},
               {"vectors_file", stem + "_vectors.f32"},
               {"vector_rows", pm.train_labels.size()}};
    if (pm.eigenlungs) {
      json ej = to_json(*pm.eigenlungs);
      ej.erase("train_vectors");
      pj["eigenlungs"] = std::move(ej);
      write_matrix(dir / (stem + "_vectors.f32"), pm.eigenlungs->train_vectors);
    } else {
      write_matrix(dir / (stem + "_vectors.f32"), pm.raw_vectors);
    }
    std::ofstream out(dir / (stem + ".json"));
    out << pj.dump() << '\n';
    if (!out) throw IoError("cannot write " + (dir / (stem + ".json")).string());
    patches.push_back(stem + ".json");
  }
  const json manifest = {{"version", kManifestVersion},
                         {"config", to_json(model.config)},
                         {"volume_dims", {d.nx, d.ny, d.nz}},
                         {"active_patches", model.active_patches},
                         {"mean_lung_fraction", model.mean_lung_fraction},
                         {"training_ids", model.training_ids},
                         {"patches", std::move(patches)}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
}

EnsembleModel load_ensemble(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing ensemble manifest in " + dir.string());
  try {
    const json m = json::parse(in);
    if (m.at("version").get<int>() != kManifestVersion) throw FormatError("unsupported ensemble manifest version");
    EnsembleModel model;
    model.config = ensemble_config_from_json(m.at("config"));
    const auto d = m.at("volume_dims").get<std::vector<std::size_t>>();
    if (d.size() != 3) throw FormatError("volume_dims must have 3 entries");
    model.grid = make_patch_grid({d[0], d[1], d[2]}, model.config.patch_side);
    model.active_patches = m.at("active_patches").get<std::vector<std::size_t>>();
    model.mean_lung_fraction = m.at("mean_lung_fraction").get<std::vector<double>>();
    model.training_ids = m.at("training_ids").get<std::vector<std::string>>();
    const auto files = m.at("patches").get<std::vector<std::string>>();
    if (files.size() != model.active_patches.size()) throw FormatError("patch list does not match active patches");
    const auto pv = static_cast<Eigen::Index>(model.grid.patch_voxels());
    for (const std::string& f : files) {
      std::ifstream pin(dir / f);
      if (!pin) throw IoError("missing patch model " + (dir / f).string());
      const json pj = json::parse(pin);
      PatchModel pm;
      pm.patch_id = pj.at("patch_id").get<std::size_t>();
      pm.seed = pj.at("seed").get<std::uint64_t>();
      pm.train_labels = pj.at("train_labels").get<std::vector<int>>();
      pm.train_features = features_from_json(pj.at("train_features"));
      pm.svm = calibrated_svm_from_json(pj.at("svm"));
      SampleMatrix vectors = read_matrix(dir / pj.at("vectors_file").get<std::string>(),
                                         pj.at("vector_rows").get<Eigen::Index>(), pv);
      if (pj.contains("eigenlungs")) {
        pm.eigenlungs = eigenlung_model_from_json(pj.at("eigenlungs"), std::move(vectors));
      } else {
        pm.raw_vectors = std::move(vectors);
      }
      model.patches.push_back(std::move(pm));
    }
    for (std::size_t k = 0; k < model.patches.size(); ++k) {
      if (model.patches[k].patch_id != model.active_patches[k]) throw FormatError("patch order does not match the manifest");
    }
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed ensemble model: ") + e.what());
  }
}

}  // namespace eigenpatch
