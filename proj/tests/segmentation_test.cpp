#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "eigenpatch/errors.hpp"
#include "eigenpatch/phantom.hpp"
#include "eigenpatch/segmentation.hpp"
#include "oracles.hpp"

namespace eigenpatch {
namespace {

double dice(const LungMask& a, const LungMask& b) {
  std::size_t both = 0;
  for (std::size_t i = 0; i < a.bits().size(); ++i) both += a.bits()[i] && b.bits()[i];
  return 2.0 * static_cast<double>(both) / static_cast<double>(a.count() + b.count());
}

TEST(Otsu, MatchesExhaustiveScanOnRandomHistograms) {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t bins = 2 + rng.below(255);
    std::vector<std::uint64_t> counts(bins);
    for (auto& c : counts) c = rng.uniform() < 0.2 ? 0 : rng.below(5000);
    counts[rng.below(bins)] += 1;
    counts[rng.below(bins)] += 1;
    std::size_t occupied = 0;
    for (auto c : counts) occupied += c > 0;
    if (occupied < 2) counts[0] = counts[bins - 1] = 1;
    EXPECT_EQ(otsu_select_bin(counts), oracle::otsu_bin_exhaustive(counts)) << "trial " << trial;
  }
}

TEST(Otsu, SymmetricTieGoesToLowestBin) {
  // Splits after bin 1 and after bin 2 give the same between-class variance.
  const std::vector<std::uint64_t> counts{5, 0, 5};
  EXPECT_EQ(otsu_select_bin(counts), 1u);
  EXPECT_EQ(oracle::otsu_bin_exhaustive(counts), 1u);
}

TEST(Otsu, BimodalThresholdFallsBetweenModes) {
  Rng rng(9);
  std::vector<float> v;
  for (int i = 0; i < 4000; ++i) v.push_back(static_cast<float>(0.1 + 0.03 * rng.normal()));
  for (int i = 0; i < 6000; ++i) v.push_back(static_cast<float>(0.9 + 0.03 * rng.normal()));
  const double t = otsu_threshold(v);
  // Every split inside the empty gap scores the same, and ties keep the
  // lowest bin, so the threshold sits just above the dark mode.
  const float dark_max = *std::max_element(v.begin(), v.begin() + 4000);
  const float bright_min = *std::min_element(v.begin() + 4000, v.end());
  EXPECT_GT(t, dark_max);
  EXPECT_LE(t, bright_min);
  EXPECT_LT(t - dark_max, (bright_min - dark_max) / 2.0);
}

TEST(Otsu, DegenerateInputs) {
  const std::vector<float> flat(100, 3.0f);
  EXPECT_THROW(otsu_threshold(flat), DegenerateInputError);
  EXPECT_THROW(otsu_threshold(std::vector<float>{}), DegenerateInputError);
  const std::vector<std::uint64_t> one_bin{0, 7, 0};
  EXPECT_THROW(otsu_select_bin(one_bin), DegenerateInputError);
  EXPECT_THROW(otsu_select_bin(std::vector<std::uint64_t>{3}), ArgumentError);
}

TEST(Segmentation, RecoversPhantomLungs) {
  PhantomSpec spec;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const PhantomSubject subj = generate_subject(spec, s % 2 == 1, 100 + s);
    const LungMask m = segment_lungs(subj.volume);
    EXPECT_GE(dice(m, subj.mask), 0.95) << "subject " << s;
    const Dims d = m.dims();
    for (std::size_t z = 0; z < d.nz; ++z)
      for (std::size_t y = 0; y < d.ny; ++y)
        for (std::size_t x = 0; x < d.nx; ++x) {
          const bool border = x == 0 || y == 0 || z == 0 || x + 1 == d.nx || y + 1 == d.ny ||
                              z + 1 == d.nz;
          if (border) ASSERT_FALSE(m.at(x, y, z));
        }
  }
}

TEST(Segmentation, DarkRegionTouchingBorderIsRemoved) {
  const Dims d{20, 20, 20};
  Volume3 v(d, Spacing{});
  for (float& x : v.mutable_data()) x = 1.0f;
  // Interior cube and a slab touching the x = 0 face.
  for (std::size_t z = 6; z < 12; ++z)
    for (std::size_t y = 6; y < 12; ++y)
      for (std::size_t x = 6; x < 12; ++x) v.at(x, y, z) = 0.0f;
  for (std::size_t z = 2; z < 18; ++z)
    for (std::size_t y = 14; y < 18; ++y)
      for (std::size_t x = 0; x < 4; ++x) v.at(x, y, z) = 0.0f;
  const LungMask m = segment_lungs(v);
  EXPECT_EQ(m.count(), 216u);
  EXPECT_TRUE(m.at(8, 8, 8));
  EXPECT_FALSE(m.at(1, 15, 5));
}

TEST(Segmentation, LungFractionMatchesTripleLoop) {
  const PhantomSubject subj = generate_subject(PhantomSpec{}, false, 5);
  const PatchGrid g = make_patch_grid(subj.mask.dims(), 28);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const Index3 o = g.patch_origins[p];
    std::size_t n = 0;
    for (std::size_t z = 0; z < 28; ++z)
      for (std::size_t y = 0; y < 28; ++y)
        for (std::size_t x = 0; x < 28; ++x) n += subj.mask.at(o.x + x, o.y + y, o.z + z);
    EXPECT_EQ(lung_count(subj.mask, g, p), n);
    EXPECT_DOUBLE_EQ(lung_fraction(subj.mask, g, p), static_cast<double>(n) / (28.0 * 28 * 28));
  }
}

TEST(LungMask, VolumeRoundTrip) {
  LungMask m(Dims{4, 3, 2});
  m.mutable_bits()[5] = 1;
  m.mutable_bits()[17] = 1;
  const LungMask back = LungMask::from_volume(m.to_volume());
  EXPECT_EQ(back.count(), 2u);
  EXPECT_TRUE(std::equal(back.bits().begin(), back.bits().end(), m.bits().begin()));
  EXPECT_THROW(LungMask(Dims{2, 2, 2}, std::vector<std::uint8_t>(3)), SizeError);
}

}  // namespace
}  // namespace eigenpatch
