#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bsr/image.hpp"
#include "bsr/motion.hpp"

namespace bsr {

enum class SpatialTransform { Identity, Transpose };

/// A Bayer-preserving test-time augmentation.
struct AugDescriptor {
  SpatialTransform transform = SpatialTransform::Identity;
  /// New position i+1 holds input frame frame_permutation[i]; entries are a
  /// permutation of 1..K-1. Empty means no shuffle.
  std::vector<int> frame_permutation;
  std::uint64_t seed = 0;

  /// Random shuffle of frames 1..K-1 drawn from `seed`.
  static AugDescriptor shuffled(int frames, std::uint64_t seed, SpatialTransform t = SpatialTransform::Identity);
  bool is_identity() const;

  friend bool operator==(const AugDescriptor& a, const AugDescriptor& b) {
    return a.transform == b.transform && a.frame_permutation == b.frame_permutation;
  }
};

/// Identity, transpose, and one shuffle.
std::vector<AugDescriptor> default_descriptors(int frames, std::uint64_t seed);

Burst augment(const Burst& burst, const AugDescriptor& d);
/// Undoes the spatial part of `d` on a reconstruction.
RgbImage invert_output(const RgbImage& sr, const AugDescriptor& d);
/// Descriptor whose augment undoes `d` on bursts.
AugDescriptor inverse(const AugDescriptor& d);

/// Motions of the augmented burst, given the motions of the original frames
/// at any scale.
std::vector<MotionParams> augment_motions(std::span<const MotionParams> motions, const AugDescriptor& d);

using SolveFn = std::function<RgbImage(const Burst&)>;
/// Also receives the descriptor that produced the burst.
using AugSolveFn = std::function<RgbImage(const Burst&, const AugDescriptor&)>;
/// Also receives the original frame indices of the sub-burst.
using SubsetSolveFn = std::function<RgbImage(const Burst&, const std::vector<int>&)>;

/// Canonical order with duplicates removed; the result does not depend on
/// the input order.
std::vector<AugDescriptor> canonical_descriptors(std::vector<AugDescriptor> descriptors, int frames);

/// Average of invert_output(solve(augment(burst, d)), d) over the distinct
/// descriptors, in canonical order. The set must contain the identity.
RgbImage tta_solve(const SolveFn& solve, const Burst& burst, std::vector<AugDescriptor> descriptors);
RgbImage tta_solve(const AugSolveFn& solve, const Burst& burst, std::vector<AugDescriptor> descriptors);

/// Frame indices of each sub-burst; every subset starts with frame 0.
std::vector<std::vector<int>> subset_partition(int frames, int subset_size);
RgbImage subset_ensemble(const SolveFn& solve, const Burst& burst, int subset_size);
RgbImage subset_ensemble(const SubsetSolveFn& solve, const Burst& burst, int subset_size);

}  // namespace bsr
