#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "eigenpatch/volume.hpp"

namespace eigenpatch {

/// Binary lung mask, one byte per voxel (1 = lung), x-fastest.
class LungMask {
 public:
  LungMask() = default;
  explicit LungMask(Dims dims);
  LungMask(Dims dims, std::vector<std::uint8_t> bits);

  const Dims& dims() const { return dims_; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> mutable_bits() { return bits_; }
  bool at(std::size_t x, std::size_t y, std::size_t z) const {
    return bits_[x + dims_.nx * (y + dims_.ny * z)] != 0;
  }
  std::size_t count() const;

  /// 0.0/1.0 volume for `.evr` export.
  Volume3 to_volume(Spacing spacing = {}) const;
  /// Voxels > 0.5 become lung.
  static LungMask from_volume(const Volume3& v);

 private:
  Dims dims_;
  std::vector<std::uint8_t> bits_;
};

void save_mask(const LungMask& mask, const std::filesystem::path& path, Spacing spacing = {});
LungMask load_mask(const std::filesystem::path& path);

/// Histogram bin k in [1, n_bins) maximizing the between-class variance when
/// bins [0, k) form the dark class. Ties resolve to the lowest k.
std::size_t otsu_select_bin(std::span<const std::uint64_t> counts);

/// Otsu threshold over [min, max] split into `n_bins` equal bins; the result
/// is the lower edge of the first bright bin.
double otsu_threshold(std::span<const float> values, std::size_t n_bins = 256);

/// Dark voxels below the Otsu threshold, minus components touching the volume
/// boundary, keeping the two largest remaining 6-connected components.
LungMask segment_lungs(const Volume3& v, std::size_t n_bins = 256);

/// Fraction of the patch's voxels marked as lung.
double lung_fraction(const LungMask& mask, const PatchGrid& grid, std::size_t index);

/// Number of lung voxels inside the patch.
std::size_t lung_count(const LungMask& mask, const PatchGrid& grid, std::size_t index);

}  // namespace eigenpatch
