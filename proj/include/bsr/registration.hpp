#pragma once

#include <vector>

#include "bsr/image.hpp"
#include "bsr/motion.hpp"

namespace bsr {

struct LkConfig {
  int pyramid_levels = 3;
  int iters_per_level = 30;
  /// Huber threshold in linear intensity units; infinity gives plain SSD.
  double robust_threshold = 0.05;
  double convergence_tol = 1e-4;
  int max_halvings = 5;
  double max_condition = 1e8;

  void validate() const;
};

enum class LkStatus { Converged, MaxIterations, Degenerate };
std::string_view to_string(LkStatus s);

struct LkLevelTrace {
  int level = 0;
  double entry_cost = 0.0;
  double exit_cost = 0.0;
  int iterations = 0;
};

struct LkResult {
  MotionParams params;
  LkStatus status = LkStatus::Converged;
  /// Set when the estimate was abandoned and `params` is the initial guess.
  bool fell_back = false;
  std::vector<LkLevelTrace> levels;
};

/// Axis-aligned pixel rectangle [row0, row1) x [col0, col1).
struct Roi {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;
};

/// Level 0 is the input; each further level is a sigma=1 Gaussian blur
/// (reflect-101) followed by keeping even rows and columns.
std::vector<PixelGrid> build_pyramid(const PixelGrid& gray, int levels);

/// Largest level count <= `requested` whose coarsest level is at least 8x8.
int usable_levels(int rows, int cols, int requested);

/// Robust forward-additive Lucas-Kanade.
///
/// Estimates p such that ref(S_p(u)) ~ mov(u) for u in mov, minimizing the
/// mean Huber loss of the residual over samples whose bilinear footprint is
/// inside ref. Runs coarse to fine on up to cfg.pyramid_levels levels (fewer
/// when the image is too small); the parameters of `init` (including its
/// rotation center) are at the scale of level 0.
LkResult lk_align(const PixelGrid& ref, const PixelGrid& mov, MotionModel model, const LkConfig& cfg,
                  const MotionParams& init);

/// Single-scale refinement restricted to residuals at mov pixels in `roi`.
LkResult lk_refine(const PixelGrid& ref, const PixelGrid& mov, const Roi& roi, const LkConfig& cfg,
                   const MotionParams& init);

/// Mean Huber cost of ref(S_p(u)) - mov(u) over valid u in `roi`.
double robust_cost(const PixelGrid& ref, const PixelGrid& mov, const Roi& roi, const MotionParams& p,
                   double threshold);

/// Aligns every frame of a burst to frame 0 on grayscale conversions.
/// Parameters are at the LR frame scale, centered at grid_center().
std::vector<LkResult> align_burst(const Burst& burst, MotionModel model, const LkConfig& cfg);

/// Dense displacement field: sample position in `ref` for each pixel of
/// `mov` is u + flow(u).
struct FlowField {
  int rows = 0;
  int cols = 0;
  std::vector<Vec2> flow;

  Vec2 at(int r, int c) const { return flow[static_cast<std::size_t>(r) * cols + c]; }
};

/// Block-parametric flow: a global multiscale Euclidean alignment, then a
/// translation per `block` x `block` tile refined on the tile (plus a small
/// border), bilinearly interpolated between tile centers.
FlowField block_flow(const PixelGrid& ref, const PixelGrid& mov, int block, const LkConfig& cfg);

}  // namespace bsr
