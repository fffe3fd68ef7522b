#include "eigenpatch/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include "json.hpp"
#include <string>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/simd/kernels.hpp"

namespace eigenpatch {
namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

std::filesystem::path header_path(const std::filesystem::path& evr) {
  auto p = evr;
  p.replace_extension(".json");
  return p;
}

void require_little_endian() {
  static_assert(std::endian::native == std::endian::little ||
                    std::endian::native == std::endian::big,
                "mixed-endian hosts are not supported");
}

float byteswap_float(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, sizeof u);
  u = ((u & 0x000000FFu) << 24) | ((u & 0x0000FF00u) << 8) | ((u & 0x00FF0000u) >> 8) |
      ((u & 0xFF000000u) >> 24);
  std::memcpy(&f, &u, sizeof f);
  return f;
}

}  // namespace

std::size_t Dims::min_extent() const { return std::min({nx, ny, nz}); }

Volume3::Volume3(Dims dims, Spacing spacing, std::vector<float> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  if (dims_.nx == 0 || dims_.ny == 0 || dims_.nz == 0) {
    throw ArgumentError("volume dimensions must be positive");
  }
  if (!(spacing_.sx > 0.0 && spacing_.sy > 0.0 && spacing_.sz > 0.0)) {
    throw ArgumentError("volume spacing must be positive");
  }
  if (data_.size() != dims_.voxel_count()) {
    throw SizeError("volume holds " + std::to_string(data_.size()) + " values, dims need " +
                    std::to_string(dims_.voxel_count()));
  }
  const auto bad = std::find_if(data_.begin(), data_.end(),
                                [](float v) { return !std::isfinite(v); });
  if (bad != data_.end()) {
    throw ValueError("non-finite voxel at linear index " +
                     std::to_string(std::distance(data_.begin(), bad)));
  }
}

Volume3::Volume3(Dims dims, Spacing spacing)
    : Volume3(dims, spacing, std::vector<float>(dims.voxel_count(), 0.0f)) {}

Volume3 load_volume(const std::filesystem::path& path) {
  require_little_endian();
  const auto hdr_path = header_path(path);
  std::ifstream hdr_in(hdr_path);
  if (!hdr_in) throw FormatError("missing volume header " + hdr_path.string());

  Dims dims;
  Spacing spacing;
  try {
    const json hdr = json::parse(hdr_in);
    if (!hdr.contains("version") || hdr.at("version").get<int>() != kFormatVersion) {
      throw FormatError("unsupported volume header version in " + hdr_path.string());
    }
    const auto d = hdr.at("dims").get<std::vector<long long>>();
    const auto s = hdr.at("spacing").get<std::vector<double>>();
    if (d.size() != 3 || s.size() != 3) throw FormatError("dims/spacing must have 3 entries");
    if (d[0] <= 0 || d[1] <= 0 || d[2] <= 0) throw FormatError("dims must be positive");
    dims = {static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[1]),
            static_cast<std::size_t>(d[2])};
    spacing = {s[0], s[1], s[2]};
  } catch (const json::exception& e) {
    throw FormatError("garbled volume header " + hdr_path.string() + ": " + e.what());
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (bytes % sizeof(float) != 0 || bytes / sizeof(float) != dims.voxel_count()) {
    throw SizeError(path.string() + " holds " + std::to_string(bytes) + " bytes, header needs " +
                    std::to_string(dims.voxel_count() * sizeof(float)));
  }
  std::vector<float> data(dims.voxel_count());
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("short read from " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (float& f : data) f = byteswap_float(f);
  }
  return Volume3(dims, spacing, std::move(data));
}

void save_volume(const Volume3& v, const std::filesystem::path& path) {
  require_little_endian();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const json hdr = {
      {"dims", {v.dims().nx, v.dims().ny, v.dims().nz}},
      {"spacing", {v.spacing().sx, v.spacing().sy, v.spacing().sz}},
      {"version", kFormatVersion},
  };
  std::ofstream hdr_out(header_path(path));
  hdr_out << hdr.dump() << '\n';
  if (!hdr_out) throw IoError("cannot write " + header_path(path).string());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if constexpr (std::endian::native == std::endian::big) {
    std::vector<float> swapped(v.data().begin(), v.data().end());
    for (float& f : swapped) f = byteswap_float(f);
    out.write(reinterpret_cast<const char*>(swapped.data()),
              static_cast<std::streamsize>(swapped.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(v.data().data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw IoError("cannot write " + path.string());
}

Volume3 downsample(const Volume3& v, Dims target) {
  const Dims& src = v.dims();
  if (target.nx == 0 || target.ny == 0 || target.nz == 0 || target.nx > src.nx ||
      target.ny > src.ny || target.nz > src.nz) {
    throw ArgumentError("downsample target must lie in [1, source dims]");
  }
  const double rx = static_cast<double>(src.nx) / static_cast<double>(target.nx);
  const double ry = static_cast<double>(src.ny) / static_cast<double>(target.ny);
  const double rz = static_cast<double>(src.nz) / static_cast<double>(target.nz);

  Volume3 out(target, {v.spacing().sx * rx, v.spacing().sy * ry, v.spacing().sz * rz});
  const simd::VolumeView view{v.data().data(), static_cast<std::ptrdiff_t>(src.nx),
                              static_cast<std::ptrdiff_t>(src.ny),
                              static_cast<std::ptrdiff_t>(src.nz)};
  const auto& k = simd::active_kernels();
  const double step[3] = {rx, 0.0, 0.0};
  auto dst = out.mutable_data();
  for (std::size_t z = 0; z < target.nz; ++z) {
    for (std::size_t y = 0; y < target.ny; ++y) {
      const double origin[3] = {0.5 * rx - 0.5, (static_cast<double>(y) + 0.5) * ry - 0.5,
                                (static_cast<double>(z) + 0.5) * rz - 0.5};
      k.trilinear_row(view, origin, step, target.nx, dst.data() + out.index(0, y, z));
    }
  }
  return out;
}

Volume3 standardize(const Volume3& v) {
  if (v.size() < 2) throw DegenerateInputError("standardize needs at least two voxels");
  const auto& k = simd::active_kernels();
  const auto n = static_cast<double>(v.size());
  const double mean = k.sum(v.data().data(), v.size()) / n;
  const double sigma = std::sqrt(k.sum_squared_deviation(v.data().data(), v.size(), mean) / n);
  if (!(sigma > 0.0)) throw DegenerateInputError("standardize: constant volume");
  Volume3 out(v.dims(), v.spacing());
  k.shift_scale(v.data().data(), v.size(), mean, 1.0 / sigma, out.mutable_data().data());
  return out;
}

PatchGrid make_patch_grid(Dims dims, std::size_t patch_side) {
  if (patch_side == 0 || patch_side > dims.min_extent()) {
    throw ArgumentError("patch side " + std::to_string(patch_side) +
                        " must lie in [1, smallest volume dimension]");
  }
  PatchGrid grid;
  grid.patch_side = patch_side;
  grid.origin_stride = patch_side;
  grid.volume_dims = dims;
  grid.counts = {dims.nx / patch_side, dims.ny / patch_side, dims.nz / patch_side};
  grid.patch_origins.reserve(grid.counts[0] * grid.counts[1] * grid.counts[2]);
  for (std::size_t iz = 0; iz < grid.counts[2]; ++iz) {
    for (std::size_t iy = 0; iy < grid.counts[1]; ++iy) {
      for (std::size_t ix = 0; ix < grid.counts[0]; ++ix) {
        grid.patch_origins.push_back({ix * patch_side, iy * patch_side, iz * patch_side});
      }
    }
  }
  return grid;
}

void extract_patch_into(const Volume3& v, const PatchGrid& grid, std::size_t index,
                        std::span<float> out) {
  if (index >= grid.size()) {
    throw ArgumentError("patch index " + std::to_string(index) + " out of range (" +
                        std::to_string(grid.size()) + " patches)");
  }
  if (v.dims() != grid.volume_dims) throw ArgumentError("volume does not match patch grid");
  const std::size_t s = grid.patch_side;
  if (out.size() != s * s * s) throw ArgumentError("patch buffer has the wrong size");
  const Index3 o = grid.patch_origins[index];
  const auto src = v.data();
  float* dst = out.data();
  for (std::size_t z = 0; z < s; ++z) {
    for (std::size_t y = 0; y < s; ++y) {
      const float* row = src.data() + v.index(o.x, o.y + y, o.z + z);
      std::copy(row, row + s, dst);
      dst += s;
    }
  }
}

std::vector<float> extract_patch(const Volume3& v, const PatchGrid& grid, std::size_t index) {
  std::vector<float> out(grid.patch_voxels());
  extract_patch_into(v, grid, index, out);
  return out;
}

}  // namespace eigenpatch
