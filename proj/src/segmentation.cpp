#include "eigenpatch/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "eigenpatch/errors.hpp"

namespace eigenpatch {
namespace {

__extension__ typedef unsigned __int128 u128;

/// 256-bit unsigned value as (high, low) halves.
struct U256 {
  u128 hi = 0, lo = 0;
  auto operator<=>(const U256&) const = default;
};

U256 mul(u128 a, u128 b) {
  const u128 mask = ~static_cast<std::uint64_t>(0);
  const u128 a0 = a & mask, a1 = a >> 64, b0 = b & mask, b1 = b >> 64;
  const u128 p00 = a0 * b0, p01 = a0 * b1, p10 = a1 * b0, p11 = a1 * b1;
  const u128 mid = (p00 >> 64) + (p01 & mask) + (p10 & mask);
  U256 r;
  r.lo = (p00 & mask) | (mid << 64);
  r.hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
  return r;
}

/// x^2 * y > z^2 * w. The squares must fit 128 bits.
bool greater_product(u128 x, u128 y, u128 z, u128 w) { return mul(x * x, y) > mul(z * z, w); }

struct HistogramBinning {
  double lo = 0.0;
  double width = 0.0;
  std::size_t n_bins = 0;

  std::size_t bin(float v) const {
    const double pos = (static_cast<double>(v) - lo) / width;
    const auto b = static_cast<std::size_t>(std::max(0.0, std::floor(pos)));
    return std::min(b, n_bins - 1);
  }
};

HistogramBinning make_binning(std::span<const float> values, std::size_t n_bins) {
  if (n_bins < 2) throw ArgumentError("otsu needs at least two bins");
  if (values.empty()) throw DegenerateInputError("otsu on empty input");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (!(*mx > *mn)) throw DegenerateInputError("otsu: all values identical");
  return {static_cast<double>(*mn), (static_cast<double>(*mx) - *mn) / static_cast<double>(n_bins),
          n_bins};
}

std::size_t select_bin(std::span<const float> values, const HistogramBinning& binning) {
  std::vector<std::uint64_t> counts(binning.n_bins, 0);
  for (const float v : values) ++counts[binning.bin(v)];
  return otsu_select_bin(counts);
}

}  // namespace

LungMask::LungMask(Dims dims) : dims_(dims), bits_(dims.voxel_count(), 0) {}

LungMask::LungMask(Dims dims, std::vector<std::uint8_t> bits)
    : dims_(dims), bits_(std::move(bits)) {
  if (bits_.size() != dims_.voxel_count()) throw SizeError("mask size does not match dims");
  for (auto& b : bits_) b = b != 0 ? 1 : 0;
}

std::size_t LungMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Volume3 LungMask::to_volume(Spacing spacing) const {
  std::vector<float> data(bits_.size());
  std::transform(bits_.begin(), bits_.end(), data.begin(),
                 [](std::uint8_t b) { return b ? 1.0f : 0.0f; });
  return Volume3(dims_, spacing, std::move(data));
}

LungMask LungMask::from_volume(const Volume3& v) {
  std::vector<std::uint8_t> bits(v.size());
  std::transform(v.data().begin(), v.data().end(), bits.begin(),
                 [](float f) { return static_cast<std::uint8_t>(f > 0.5f); });
  return LungMask(v.dims(), std::move(bits));
}

void save_mask(const LungMask& mask, const std::filesystem::path& path, Spacing spacing) {
  save_volume(mask.to_volume(spacing), path);
}

LungMask load_mask(const std::filesystem::path& path) {
  return LungMask::from_volume(load_volume(path));
}

std::size_t otsu_select_bin(std::span<const std::uint64_t> counts) {
  const std::size_t n_bins = counts.size();
  if (n_bins < 2) throw ArgumentError("otsu needs at least two bins");
  u128 total = 0;
  u128 total_moment = 0;
  for (std::size_t i = 0; i < n_bins; ++i) {
    total += counts[i];
    total_moment += static_cast<u128>(i) * counts[i];
  }
  // |c0*M - m0*N| < N^2 * n_bins must stay below 2^64 for the squares below.
  if (total * total * n_bins >= (static_cast<u128>(1) << 64)) {
    throw ArgumentError("otsu histogram holds too many samples");
  }

  // Between-class variance scaled by N^2 is (c0*M - m0*N)^2 / (c0*c1). The
  // candidates are compared exactly so that equal maxima keep the lowest bin.
  std::size_t best_bin = 0;
  u128 best_diff = 0, best_den = 1;
  u128 c0 = 0;
  u128 m0 = 0;
  for (std::size_t k = 1; k < n_bins; ++k) {
    c0 += counts[k - 1];
    m0 += static_cast<u128>(k - 1) * counts[k - 1];
    const u128 c1 = total - c0;
    if (c0 == 0 || c1 == 0) continue;
    const u128 a = c0 * total_moment, b = m0 * total;
    const u128 diff = a > b ? a - b : b - a;
    const u128 den = c0 * c1;
    // diff^2 / den > best_diff^2 / best_den  <=>  diff^2 * best_den > best_diff^2 * den
    if (best_bin == 0 || greater_product(diff, best_den, best_diff, den)) {
      best_bin = k;
      best_diff = diff;
      best_den = den;
    }
  }
  if (best_bin == 0) throw DegenerateInputError("otsu: histogram has a single occupied bin");
  return best_bin;
}

double otsu_threshold(std::span<const float> values, std::size_t n_bins) {
  const HistogramBinning binning = make_binning(values, n_bins);
  const std::size_t k = select_bin(values, binning);
  return binning.lo + static_cast<double>(k) * binning.width;
}

LungMask segment_lungs(const Volume3& v, std::size_t n_bins) {
  const HistogramBinning binning = make_binning(v.data(), n_bins);
  const std::size_t k = select_bin(v.data(), binning);

  const Dims d = v.dims();
  const std::size_t n = d.voxel_count();
  const auto src = v.data();
  std::vector<std::uint8_t> candidate(n);
  for (std::size_t i = 0; i < n; ++i) candidate[i] = binning.bin(src[i]) < k ? 1 : 0;

  // Raster-order flood fill; label 0 = unlabeled.
  std::vector<std::uint32_t> label(n, 0);
  struct Component {
    std::size_t size = 0;
    bool touches_border = false;
  };
  std::vector<Component> components(1);
  std::vector<std::size_t> stack;
  const auto on_border = [&](std::size_t x, std::size_t y, std::size_t z) {
    return x == 0 || y == 0 || z == 0 || x + 1 == d.nx || y + 1 == d.ny || z + 1 == d.nz;
  };
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!candidate[seed] || label[seed] != 0) continue;
    const auto id = static_cast<std::uint32_t>(components.size());
    Component comp;
    label[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++comp.size;
      const std::size_t x = i % d.nx;
      const std::size_t y = (i / d.nx) % d.ny;
      const std::size_t z = i / (d.nx * d.ny);
      if (on_border(x, y, z)) comp.touches_border = true;
      const auto visit = [&](std::size_t j) {
        if (candidate[j] && label[j] == 0) {
          label[j] = id;
          stack.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < d.nx) visit(i + 1);
      if (y > 0) visit(i - d.nx);
      if (y + 1 < d.ny) visit(i + d.nx);
      if (z > 0) visit(i - d.nx * d.ny);
      if (z + 1 < d.nz) visit(i + d.nx * d.ny);
    }
    components.push_back(comp);
  }

  std::vector<std::uint32_t> interior;
  for (std::uint32_t id = 1; id < components.size(); ++id) {
    if (!components[id].touches_border) interior.push_back(id);
  }
  if (interior.empty()) {
    throw SegmentationError("no dark component survives boundary suppression");
  }
  std::stable_sort(interior.begin(), interior.end(), [&](std::uint32_t a, std::uint32_t b) {
    return components[a].size > components[b].size;
  });
  const std::uint32_t keep0 = interior[0];
  const std::uint32_t keep1 = interior.size() > 1 ? interior[1] : keep0;

  LungMask mask(d);
  auto bits = mask.mutable_bits();
  for (std::size_t i = 0; i < n; ++i) {
    bits[i] = (label[i] == keep0 || label[i] == keep1) ? 1 : 0;
  }
  return mask;
}

std::size_t lung_count(const LungMask& mask, const PatchGrid& grid, std::size_t index) {
  if (mask.dims() != grid.volume_dims) throw ArgumentError("mask does not match patch grid");
  if (index >= grid.size()) throw ArgumentError("patch index out of range");
  const std::size_t s = grid.patch_side;
  const Index3 o = grid.patch_origins[index];
  const auto bits = mask.bits();
  const Dims d = mask.dims();
  std::size_t count = 0;
  for (std::size_t z = 0; z < s; ++z) {
    for (std::size_t y = 0; y < s; ++y) {
      const std::uint8_t* row = bits.data() + o.x + d.nx * ((o.y + y) + d.ny * (o.z + z));
      count += static_cast<std::size_t>(std::count(row, row + s, std::uint8_t{1}));
    }
  }
  return count;
}

double lung_fraction(const LungMask& mask, const PatchGrid& grid, std::size_t index) {
  return static_cast<double>(lung_count(mask, grid, index)) /
         static_cast<double>(grid.patch_voxels());
}

}  // namespace eigenpatch
