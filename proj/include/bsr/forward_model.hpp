#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bsr/image.hpp"
#include "bsr/motion.hpp"

namespace bsr {

enum class Direction { Apply, Adjoint };

/// Separable, odd-length blur taps summing to one.
struct BlurKernel {
  std::vector<double> taps{1.0};

  /// Area integration over a box of width `s`, sampled on the integer grid.
  /// Odd s gives s equal taps; even s gives s+1 taps with half weight at
  /// both ends. This is also the anti-aliasing kernel of the synthetic
  /// bilinear x`s` downsampling.
  static BlurKernel box(int s);
  static BlurKernel gaussian(double sigma);
  static BlurKernel delta() { return BlurKernel{}; }

  int radius() const { return static_cast<int>(taps.size()) / 2; }
  void validate() const;
};

/// Observation operator y_k = D B W_{p_k} x for one burst.
///
/// D samples every `sr_factor`-th high-resolution pixel starting at
/// decimation_phase(sr_factor) and, when `mosaic` is set, keeps only the CFA
/// channel of each site. With `mosaic` off, frames carry all three channels.
struct ObservationModel {
  BlurKernel kernel = BlurKernel::box(4);
  int sr_factor = 4;
  CfaPattern cfa = CfaPattern::RGGB;
  bool mosaic = true;
  int lr_rows = 0;
  int lr_cols = 0;

  static ObservationModel make(int lr_rows, int lr_cols, int sr_factor, CfaPattern cfa);

  int hr_rows() const { return lr_rows * sr_factor; }
  int hr_cols() const { return lr_cols * sr_factor; }
  int phase() const { return decimation_phase(sr_factor); }
  int lr_channels() const { return mosaic ? 1 : 3; }
  std::size_t lr_size() const {
    return static_cast<std::size_t>(lr_rows) * lr_cols * lr_channels();
  }
  std::size_t hr_size() const { return static_cast<std::size_t>(hr_rows()) * hr_cols() * 3; }
  /// Rotation center that corresponds to grid_center() of the LR frames.
  Vec2 hr_center() const;
  /// Converts LR-scale motion parameters to the HR grid and back.
  MotionParams to_hr(const MotionParams& lr) const;
  MotionParams to_lr(const MotionParams& hr) const;
  void validate() const;
};

/// Per-pixel validity at one resolution: false where the sampling footprint
/// of a warped sample leaves the image domain.
struct ValidityMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> valid;

  bool at(int r, int c) const { return valid[static_cast<std::size_t>(r) * cols + c] != 0; }
  double fraction() const;
};

/// Bilinear resampling (W_p x)(u) = x(S_p(u)) with zero outside the domain.
/// Apply produces an `out_rows` x `out_cols` grid; the adjoint scatters the
/// same bilinear weights back onto an `in_rows` x `in_cols` grid.
PixelGrid warp_apply(const PixelGrid& x, const MotionParams& p, int out_rows, int out_cols,
                     ValidityMask* mask = nullptr);
PixelGrid warp_adjoint(const PixelGrid& y, const MotionParams& p, int in_rows, int in_cols);
/// Same-size warp in either direction.
PixelGrid warp(const PixelGrid& x, const MotionParams& p, Direction dir,
               ValidityMask* mask = nullptr);

/// Separable zero-padded convolution (apply) or correlation (adjoint).
PixelGrid blur(const PixelGrid& x, const BlurKernel& k, Direction dir);

/// Apply: HR (3 channels) -> LR frame. Adjoint: LR frame -> zero-filled HR.
PixelGrid decimate_mosaic(const PixelGrid& x, const ObservationModel& model, Direction dir);

/// Validity of each LR site of one frame: every blur tap lies on the HR
/// frame grid and every tap's bilinear footprint lies inside x.
ValidityMask frame_mask(const ObservationModel& model, const MotionParams& p);

/// Noise-free frames D B W_{p_k} x, zero at masked sites. Evaluated through
/// the chain of full-image operators.
std::vector<PixelGrid> forward(const PixelGrid& x, std::span<const MotionParams> motions,
                               const ObservationModel& model,
                               std::vector<ValidityMask>* masks = nullptr);
/// sum_k W_k^T B^T D^T (mask_k * y_k).
PixelGrid forward_adjoint(std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                          const ObservationModel& model);

/// d(W_p x)/dp_j for every parameter j, using the exact derivative of the
/// zero-extended bilinear interpolant.
std::vector<PixelGrid> warp_jacobian(const PixelGrid& x, const MotionParams& p);

/// One frame's prediction and its derivative with respect to the motion
/// parameters, evaluated only at LR sites.
struct FrameLinearization {
  std::vector<double> values;                 // lr_size
  std::vector<std::vector<double>> jacobian;  // count x lr_size
  ValidityMask mask;
};
FrameLinearization linearize_frame(const PixelGrid& x, const MotionParams& p,
                                   const ObservationModel& model, bool with_jacobian = true);

/// U_p assembled as a sparse matrix, with a transposed copy so both
/// directions are gathers. Rows are the stacked LR samples of all frames;
/// masked rows are empty.
class StackedOperator {
 public:
  StackedOperator(const ObservationModel& model, std::span<const MotionParams> motions);

  std::size_t frame_count() const { return frames_; }
  std::size_t rows() const { return frames_ * lr_size_; }
  std::size_t cols() const { return hr_size_; }
  std::size_t frame_size() const { return lr_size_; }
  const ObservationModel& model() const { return model_; }
  const std::vector<ValidityMask>& masks() const { return masks_; }

  void apply(std::span<const double> x, std::span<double> y) const;
  void adjoint(std::span<const double> y, std::span<double> x) const;
  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> adjoint(std::span<const double> y) const;

  /// Stacks frames into one vector, zeroing masked samples.
  std::vector<double> stack(std::span<const PixelGrid> frames) const;

 private:
  ObservationModel model_;
  std::size_t frames_ = 0;
  std::size_t lr_size_ = 0;
  std::size_t hr_size_ = 0;
  std::vector<ValidityMask> masks_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> col_;
  std::vector<double> val_;
  std::vector<std::size_t> t_row_ptr_;
  std::vector<std::uint32_t> t_col_;
  std::vector<double> t_val_;
};

}  // namespace bsr
