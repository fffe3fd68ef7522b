#include <cstdlib>
#include <string_view>

#include "eigenpatch/simd/kernels.hpp"

namespace eigenpatch::simd {
namespace {

const KernelTable& select() {
  if (const char* forced = std::getenv("EIGENPATCH_SIMD")) {
    if (std::string_view(forced) == "scalar") return scalar_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return *t;
  if (const KernelTable* t = neon_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active_kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace eigenpatch::simd
