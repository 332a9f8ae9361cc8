#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "bsr/ensemble.hpp"
#include "bsr/error.hpp"
#include "bsr/forward_model.hpp"
#include "bsr/solver.hpp"
#include "scene.hpp"

using namespace bsr;

namespace {

Burst random_burst(int frames, int rows, int cols, CfaPattern cfa = CfaPattern::RGGB, std::uint64_t seed = 1) {
  std::vector<RawBayerImage> f;
  for (int k = 0; k < frames; ++k) f.emplace_back(test::random_grid(rows, cols, 1, seed * 100 + k), cfa);
  return Burst(std::move(f));
}

// Transpose-equivariant stand-in for a reconstruction.
RgbImage baseline_solve(const Burst& b) {
  return single_frame_baseline(b.frames[0].grid, ObservationModel::make(b.rows(), b.cols(), 4, b.cfa()));
}

bool same_burst(const Burst& a, const Burst& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(a.frames[k].grid == b.frames[k].grid) || a.frames[k].cfa != b.frames[k].cfa) return false;
  }
  return true;
}

double max_abs_diff(const PixelGrid& a, const PixelGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.vec()[i] - b.vec()[i]));
  return m;
}

}  // namespace

TEST(Augment, IdentityKeepsBurst) {
  const Burst b = random_burst(5, 8, 10);
  EXPECT_TRUE(same_burst(augment(b, AugDescriptor{}), b));
  EXPECT_TRUE(AugDescriptor{}.is_identity());
}

TEST(Augment, ShuffleIsPermutationKeepingReference) {
  const AugDescriptor d = AugDescriptor::shuffled(14, 7);
  ASSERT_EQ(d.frame_permutation.size(), 13u);
  std::vector<int> sorted = d.frame_permutation;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(13);
  std::iota(expect.begin(), expect.end(), 1);
  EXPECT_EQ(sorted, expect);
  EXPECT_EQ(AugDescriptor::shuffled(14, 7), d);

  const Burst b = random_burst(14, 6, 6);
  const Burst s = augment(b, d);
  EXPECT_EQ(s.frames[0].grid, b.frames[0].grid);
  for (int i = 0; i < 13; ++i) EXPECT_EQ(s.frames[i + 1].grid, b.frames[d.frame_permutation[i]].grid);
}

TEST(Augment, RoundTripIsBitExact) {
  const Burst b = random_burst(9, 12, 8);
  for (auto t : {SpatialTransform::Identity, SpatialTransform::Transpose}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const AugDescriptor d = AugDescriptor::shuffled(9, seed, t);
      EXPECT_TRUE(same_burst(augment(augment(b, d), inverse(d)), b));
    }
  }
}

TEST(Augment, TransposeIsInvolution) {
  const Burst b = random_burst(4, 6, 10, CfaPattern::BGGR);
  const AugDescriptor t{SpatialTransform::Transpose, {}, 0};
  const Burst once = augment(b, t);
  EXPECT_EQ(once.rows(), 10);
  EXPECT_EQ(once.cols(), 6);
  EXPECT_EQ(once.cfa(), CfaPattern::BGGR);
  EXPECT_TRUE(same_burst(augment(once, t), b));
}

TEST(Augment, TransposeOfRggbTile) {
  PixelGrid g(4, 4, 1);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) g.at(r, c) = 10 * r + c;
  const Burst b(std::vector<RawBayerImage>{RawBayerImage(g, CfaPattern::RGGB)});
  const Burst t = augment(b, AugDescriptor{SpatialTransform::Transpose, {}, 0});
  const PixelGrid& o = t.frames[0].grid;
  EXPECT_EQ(o.at(0, 0), g.at(0, 0));
  EXPECT_EQ(o.at(0, 1), g.at(1, 0));
  EXPECT_EQ(o.at(1, 0), g.at(0, 1));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(cfa_channel(t.cfa(), r, c), cfa_channel(CfaPattern::RGGB, c, r));
}

TEST(Augment, RemosaicReproducesAugmentedRaw) {
  for (auto cfa : {CfaPattern::RGGB, CfaPattern::BGGR}) {
    const Burst b = random_burst(3, 10, 14, cfa, 4);
    const Burst a = augment(b, AugDescriptor::shuffled(3, 5, SpatialTransform::Transpose));
    for (const auto& f : a.frames) EXPECT_EQ(mosaic(demosaic_bilinear(f), cfa).grid, f.grid);
  }
}

TEST(Augment, TransposeRejectsAsymmetricPhases) {
  for (auto cfa : {CfaPattern::GRBG, CfaPattern::GBRG}) {
    const Burst b = random_burst(2, 4, 4, cfa);
    EXPECT_THROW(augment(b, AugDescriptor{SpatialTransform::Transpose, {}, 0}), UnsupportedPhaseError);
    EXPECT_NO_THROW(augment(b, AugDescriptor::shuffled(2, 1)));
  }
}

TEST(Augment, RejectsBadPermutation) {
  const Burst b = random_burst(4, 4, 4);
  EXPECT_THROW(augment(b, AugDescriptor{SpatialTransform::Identity, {1, 1, 2}, 0}), ParameterError);
  EXPECT_THROW(augment(b, AugDescriptor{SpatialTransform::Identity, {1, 2}, 0}), ParameterError);
}

TEST(InvertOutput, UndoesTranspose) {
  const RgbImage x(test::random_grid(6, 9, 3, 3), ColorSpace::LinearSensor);
  const AugDescriptor t{SpatialTransform::Transpose, {}, 0};
  EXPECT_EQ(invert_output(x, AugDescriptor{}).grid, x.grid);
  EXPECT_EQ(invert_output(RgbImage(x.grid.transposed()), t).grid, x.grid);
}

TEST(InvertOutput, EquivariantSolverIsUnchanged) {
  const Burst b = random_burst(5, 12, 16, CfaPattern::RGGB, 6);
  const RgbImage plain = baseline_solve(b);
  for (const auto& d : default_descriptors(5, 11)) {
    const RgbImage back = invert_output(baseline_solve(augment(b, d)), d);
    EXPECT_LE(max_abs_diff(back.grid, plain.grid), 1e-6);
  }
}

TEST(AugmentMotions, MatchTransposedFrames) {
  // Frames rendered from a transposed scene with transformed motions equal
  // the transposed frames of the original burst.
  const ObservationModel m = ObservationModel::make(10, 12, 4, CfaPattern::RGGB);
  const PixelGrid x = test::random_grid(m.hr_rows(), m.hr_cols(), 3, 9);
  const Vec2 c = m.hr_center();
  const std::vector<MotionParams> motions{MotionParams::identity(MotionModel::Euclidean, c),
                                          MotionParams::euclidean(1.2, -0.7, 0.015, c),
                                          MotionParams::euclidean(-2.0, 1.4, -0.01, c)};
  const auto frames = forward(x, motions, m);
  const AugDescriptor d = AugDescriptor::shuffled(3, 2, SpatialTransform::Transpose);
  const auto aug_motions = augment_motions(motions, d);

  ObservationModel mt = m;
  std::swap(mt.lr_rows, mt.lr_cols);
  const auto aug_frames = forward(x.transposed(), aug_motions, mt);
  std::vector<RawBayerImage> raws;
  for (const auto& f : frames) raws.emplace_back(f, CfaPattern::RGGB);
  const Burst expected = augment(Burst(std::move(raws)), d);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(max_abs_diff(aug_frames[k], expected.frames[k].grid), 1e-12);
}

TEST(Tta, SingleIdentityEqualsPlainSolve) {
  const Burst b = random_burst(4, 8, 8);
  EXPECT_EQ(tta_solve(SolveFn(baseline_solve), b, {AugDescriptor{}}).grid, baseline_solve(b).grid);
}

TEST(Tta, DuplicatesAndOrderDoNotMatter) {
  const Burst b = random_burst(6, 8, 12);
  // Depends on frame order, so shuffles change the output.
  const SolveFn order_sensitive = [](const Burst& burst) {
    PixelGrid out = baseline_solve(burst).grid;
    for (std::size_t k = 1; k < burst.size(); ++k) out.vec()[0] += static_cast<double>(k) * burst.frames[k].grid.vec()[0];
    return RgbImage(std::move(out));
  };
  auto set = default_descriptors(6, 3);
  const RgbImage ref = tta_solve(order_sensitive, b, set);
  auto dup = set;
  dup.push_back(set[2]);
  dup.push_back(set[0]);
  EXPECT_EQ(tta_solve(order_sensitive, b, dup).grid, ref.grid);
  std::reverse(set.begin(), set.end());
  EXPECT_EQ(tta_solve(order_sensitive, b, set).grid, ref.grid);
  EXPECT_EQ(canonical_descriptors(dup, 6).size(), 3u);
}

TEST(Tta, RequiresIdentity) {
  const Burst b = random_burst(4, 8, 8);
  EXPECT_THROW(tta_solve(SolveFn(baseline_solve), b, {AugDescriptor{SpatialTransform::Transpose, {}, 0}}),
               ParameterError);
  EXPECT_THROW(tta_solve(SolveFn(baseline_solve), b, {}), ParameterError);
}

TEST(Tta, SolverErrorsPropagate) {
  const Burst b = random_burst(4, 8, 8);
  const SolveFn failing = [](const Burst&) -> RgbImage { throw NumericalError("boom"); };
  EXPECT_THROW(tta_solve(failing, b, default_descriptors(4, 1)), NumericalError);
}

TEST(Subsets, Counts) {
  EXPECT_EQ(subset_partition(14, 2).size(), 13u);
  EXPECT_EQ(subset_partition(14, 8).size(), 2u);
  EXPECT_EQ(subset_partition(14, 14).size(), 1u);
  EXPECT_THROW(subset_partition(14, 1), ParameterError);
  const auto groups = subset_partition(14, 8);
  EXPECT_EQ(groups[0], (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(groups[1], (std::vector<int>{0, 8, 9, 10, 11, 12, 13, 0}));
}

TEST(Subsets, EveryFrameUsedAndReferenceFirst) {
  for (int k = 2; k <= 16; ++k) {
    for (int s = 2; s <= k; ++s) {
      std::vector<int> seen(k, 0);
      for (const auto& g : subset_partition(k, s)) {
        ASSERT_EQ(static_cast<int>(g.size()), s);
        EXPECT_EQ(g[0], 0);
        for (int i : g) ++seen[i];
      }
      for (int i = 1; i < k; ++i) EXPECT_EQ(seen[i], 1) << k << " " << s;
    }
  }
}

TEST(Subsets, FullSizeEqualsPlainSolve) {
  const Burst b = random_burst(6, 8, 8);
  EXPECT_EQ(subset_ensemble(SolveFn(baseline_solve), b, 6).grid, baseline_solve(b).grid);
}

TEST(Subsets, SolverSeesReferenceFirst) {
  const Burst b = random_burst(7, 6, 6);
  int calls = 0;
  const SubsetSolveFn check = [&](const Burst& sub, const std::vector<int>& idx) {
    ++calls;
    EXPECT_EQ(idx.front(), 0);
    EXPECT_EQ(sub.frames[0].grid, b.frames[0].grid);
    for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(sub.frames[i].grid, b.frames[idx[i]].grid);
    return baseline_solve(sub);
  };
  subset_ensemble(check, b, 3);
  EXPECT_EQ(calls, 3);
}
