#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace eigenpatch {

struct Dims {
  std::size_t nx = 0, ny = 0, nz = 0;

  std::size_t voxel_count() const { return nx * ny * nz; }
  std::size_t min_extent() const;
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double sx = 1.0, sy = 1.0, sz = 1.0;
  bool operator==(const Spacing&) const = default;
};

struct Index3 {
  std::size_t x = 0, y = 0, z = 0;
  bool operator==(const Index3&) const = default;
};

/// Dense scalar field, x-fastest. Construction validates shape, spacing and
/// finiteness; the object is immutable apart from explicit data access by
/// producers in this library.
class Volume3 {
 public:
  Volume3() = default;
  Volume3(Dims dims, Spacing spacing, std::vector<float> data);
  /// Zero-filled volume.
  Volume3(Dims dims, Spacing spacing);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const float> data() const { return data_; }
  std::span<float> mutable_data() { return data_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims_.nx * (y + dims_.ny * z);
  }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return data_[index(x, y, z)]; }
  float& at(std::size_t x, std::size_t y, std::size_t z) { return data_[index(x, y, z)]; }

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<float> data_;
};

/// Reads `<name>.evr` (little-endian float32, x-fastest) and its sibling
/// `<name>.json` header.
Volume3 load_volume(const std::filesystem::path& path);
void save_volume(const Volume3& v, const std::filesystem::path& path);

/// Trilinear resampling onto `target` with voxel-centre alignment.
Volume3 downsample(const Volume3& v, Dims target);

/// Zero mean, unit population variance.
Volume3 standardize(const Volume3& v);

/// Non-overlapping cubic tiling anchored at the origin. Border voxels beyond
/// the last whole patch on the high side are not covered.
struct PatchGrid {
  std::size_t patch_side = 0;
  std::size_t origin_stride = 0;
  std::vector<Index3> patch_origins;
  Dims volume_dims;
  std::array<std::size_t, 3> counts{};  // patches along x, y, z

  std::size_t size() const { return patch_origins.size(); }
  std::size_t patch_voxels() const { return patch_side * patch_side * patch_side; }
};

PatchGrid make_patch_grid(Dims dims, std::size_t patch_side);

std::vector<float> extract_patch(const Volume3& v, const PatchGrid& grid, std::size_t index);

/// extract_patch into a caller buffer of patch_voxels() floats.
void extract_patch_into(const Volume3& v, const PatchGrid& grid, std::size_t index,
                        std::span<float> out);

}  // namespace eigenpatch
