#include "bsr/ensemble.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "bsr/error.hpp"

namespace bsr {

namespace {

void check_permutation(const std::vector<int>& perm, std::size_t frames) {
  if (perm.empty()) return;
  if (perm.size() + 1 != frames) throw ParameterError("augment: permutation length must be frame count - 1");
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != static_cast<int>(i) + 1) throw ParameterError("augment: not a permutation of 1..K-1");
  }
}

std::vector<int> full_permutation(const AugDescriptor& d, int frames) {
  if (!d.frame_permutation.empty()) return d.frame_permutation;
  std::vector<int> id(frames - 1);
  std::iota(id.begin(), id.end(), 1);
  return id;
}

void accumulate(PixelGrid& sum, const PixelGrid& x) {
  if (sum.empty()) {
    sum = x;
    return;
  }
  if (!sum.same_shape(x)) throw DimensionError("ensemble: reconstructions differ in shape");
  for (std::size_t i = 0; i < sum.size(); ++i) sum.vec()[i] += x.vec()[i];
}

RgbImage mean_of(PixelGrid sum, std::size_t n) {
  for (double& v : sum.vec()) v /= static_cast<double>(n);
  return RgbImage(std::move(sum), ColorSpace::LinearSensor);
}

}  // namespace

AugDescriptor AugDescriptor::shuffled(int frames, std::uint64_t seed, SpatialTransform t) {
  AugDescriptor d;
  d.transform = t;
  d.seed = seed;
  d.frame_permutation.resize(std::max(frames - 1, 0));
  std::iota(d.frame_permutation.begin(), d.frame_permutation.end(), 1);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the result does not depend on the
  // standard library's shuffle.
  for (std::size_t i = d.frame_permutation.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(d.frame_permutation[i - 1], d.frame_permutation[j]);
  }
  return d;
}

bool AugDescriptor::is_identity() const {
  if (transform != SpatialTransform::Identity) return false;
  for (std::size_t i = 0; i < frame_permutation.size(); ++i) {
    if (frame_permutation[i] != static_cast<int>(i) + 1) return false;
  }
  return true;
}

std::vector<AugDescriptor> default_descriptors(int frames, std::uint64_t seed) {
  AugDescriptor transpose;
  transpose.transform = SpatialTransform::Transpose;
  return {AugDescriptor{}, transpose, AugDescriptor::shuffled(frames, seed)};
}

Burst augment(const Burst& burst, const AugDescriptor& d) {
  check_permutation(d.frame_permutation, burst.size());
  if (d.transform == SpatialTransform::Transpose && !cfa_transpose_invariant(burst.cfa())) {
    throw UnsupportedPhaseError("augment: transpose does not preserve the " + std::string(to_string(burst.cfa())) +
                                " pattern");
  }
  const std::vector<int> perm = full_permutation(d, static_cast<int>(burst.size()));
  std::vector<RawBayerImage> frames;
  frames.reserve(burst.size());
  for (std::size_t i = 0; i < burst.size(); ++i) {
    const RawBayerImage& src = burst.frames[i == 0 ? 0 : perm[i - 1]];
    frames.emplace_back(d.transform == SpatialTransform::Transpose ? src.grid.transposed() : src.grid, src.cfa);
  }
  return Burst(std::move(frames));
}

RgbImage invert_output(const RgbImage& sr, const AugDescriptor& d) {
  if (d.transform == SpatialTransform::Transpose) return RgbImage(sr.grid.transposed(), sr.space);
  return sr;
}

AugDescriptor inverse(const AugDescriptor& d) {
  AugDescriptor inv = d;
  if (!d.frame_permutation.empty()) {
    for (std::size_t i = 0; i < d.frame_permutation.size(); ++i) {
      inv.frame_permutation[d.frame_permutation[i] - 1] = static_cast<int>(i) + 1;
    }
  }
  return inv;
}

std::vector<MotionParams> augment_motions(std::span<const MotionParams> motions, const AugDescriptor& d) {
  check_permutation(d.frame_permutation, motions.size());
  const std::vector<int> perm = full_permutation(d, static_cast<int>(motions.size()));
  std::vector<MotionParams> out;
  out.reserve(motions.size());
  for (std::size_t i = 0; i < motions.size(); ++i) {
    MotionParams m = motions[i == 0 ? 0 : perm[i - 1]];
    if (d.transform == SpatialTransform::Transpose) {
      // Conjugating by the axis swap P: t -> P t, c -> P c, A -> P A P.
      std::swap(m.p[0], m.p[1]);
      std::swap(m.center.x, m.center.y);
      if (m.model == MotionModel::Euclidean) {
        m.p[2] = -m.p[2];
      } else if (m.model == MotionModel::Affine) {
        std::swap(m.p[2], m.p[5]);
        std::swap(m.p[3], m.p[4]);
      }
    }
    out.push_back(m);
  }
  return out;
}

std::vector<AugDescriptor> canonical_descriptors(std::vector<AugDescriptor> descriptors, int frames) {
  for (auto& d : descriptors) {
    check_permutation(d.frame_permutation, static_cast<std::size_t>(frames));
    d.frame_permutation = full_permutation(d, frames);
    d.seed = 0;
  }
  std::sort(descriptors.begin(), descriptors.end(), [](const AugDescriptor& a, const AugDescriptor& b) {
    if (a.transform != b.transform) return a.transform < b.transform;
    return a.frame_permutation < b.frame_permutation;
  });
  descriptors.erase(std::unique(descriptors.begin(), descriptors.end()), descriptors.end());
  return descriptors;
}

RgbImage tta_solve(const AugSolveFn& solve, const Burst& burst, std::vector<AugDescriptor> descriptors) {
  if (descriptors.empty()) throw ParameterError("tta_solve: no descriptors");
  descriptors = canonical_descriptors(std::move(descriptors), static_cast<int>(burst.size()));
  if (std::none_of(descriptors.begin(), descriptors.end(), [](const AugDescriptor& d) { return d.is_identity(); })) {
    throw ParameterError("tta_solve: descriptors must include the identity");
  }
  PixelGrid sum;
  for (const auto& d : descriptors) accumulate(sum, invert_output(solve(augment(burst, d), d), d).grid);
  return mean_of(std::move(sum), descriptors.size());
}

RgbImage tta_solve(const SolveFn& solve, const Burst& burst, std::vector<AugDescriptor> descriptors) {
  return tta_solve([&](const Burst& b, const AugDescriptor&) { return solve(b); }, burst, std::move(descriptors));
}

std::vector<std::vector<int>> subset_partition(int frames, int subset_size) {
  if (frames < 1) throw ParameterError("subset_partition: empty burst");
  if (subset_size < 2) throw ParameterError("subset_partition: subset size must be >= 2");
  const int per = subset_size - 1;
  const int others = frames - 1;
  std::vector<std::vector<int>> out;
  if (others == 0) return {{0}};
  for (int start = 1; start <= others; start += per) {
    std::vector<int> s{0};
    for (int k = start; k < start + per; ++k) s.push_back(k <= others ? k : 0);
    out.push_back(std::move(s));
  }
  return out;
}

RgbImage subset_ensemble(const SubsetSolveFn& solve, const Burst& burst, int subset_size) {
  const auto parts = subset_partition(static_cast<int>(burst.size()), subset_size);
  PixelGrid sum;
  for (const auto& idx : parts) {
    std::vector<RawBayerImage> frames;
    for (int k : idx) frames.push_back(burst.frames[k]);
    accumulate(sum, solve(Burst(std::move(frames)), idx).grid);
  }
  return mean_of(std::move(sum), parts.size());
}

RgbImage subset_ensemble(const SolveFn& solve, const Burst& burst, int subset_size) {
  return subset_ensemble([&](const Burst& b, const std::vector<int>&) { return solve(b); }, burst, subset_size);
}

}  // namespace bsr
