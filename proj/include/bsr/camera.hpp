#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "bsr/forward_model.hpp"
#include "bsr/image.hpp"
#include "bsr/motion.hpp"

namespace bsr {

/// Simplified invertible camera pipeline: white balance, 3x3 color matrix,
/// power-law gamma. The defaults use a diagonally dominant CCM with rows
/// summing to one, whose inverse is non-negative, so unprocessing an sRGB
/// image in [0,1] stays in [0,1].
struct ColorPipelineParams {
  std::array<double, 3> wb_gains{2.0, 1.0, 1.7};
  std::array<double, 9> ccm{1.7, -0.5, -0.2,  //
                            -0.3, 1.6, -0.3,  //
                            -0.1, -0.6, 1.7};
  double gamma = 2.2;

  static ColorPipelineParams identity();
  void validate() const;
};

/// Heteroscedastic sensor noise: Var(y | x) = shot_slope * x + read_var.
struct NoiseParams {
  double shot_slope = 0.0;
  double read_var = 0.0;

  bool is_zero() const { return shot_slope == 0.0 && read_var == 0.0; }
  void validate() const;
  /// Upper end of the shot/read relation used for the synthetic track
  /// (shot 1e-2, log read variance = 2.18 log shot + 1.2).
  static NoiseParams challenge();
};

struct SynthConfig {
  int frames = 14;
  int sr_factor = 4;
  int lr_rows = 96;
  int lr_cols = 96;
  double max_translation = 24.0;  // HR pixels
  double max_rotation = 1.0;      // degrees
  NoiseParams noise = NoiseParams::challenge();
  bool add_noise = true;
  std::uint64_t seed = 0;
  CfaPattern cfa = CfaPattern::RGGB;
  /// Defaults to BlurKernel::box(sr_factor).
  std::optional<BlurKernel> kernel;
  /// Overrides the random motions (HR scale, one per frame, frame 0 should
  /// be the identity). Centers are taken as given.
  std::optional<std::vector<MotionParams>> motions;

  ObservationModel observation_model() const;
  void validate() const;
};

struct SyntheticBurstSample {
  Burst burst;
  RgbImage gt_linear;
  std::vector<MotionParams> gt_motions;  // HR scale
  NoiseParams noise;
  ObservationModel model;
};

RgbImage unprocess(const RgbImage& srgb, const ColorPipelineParams& params);
RgbImage process(const RgbImage& linear, const ColorPipelineParams& params);

RawBayerImage add_noise(const RawBayerImage& raw, const NoiseParams& noise, std::uint64_t seed);

/// Random motion set for a burst: identity for frame 0, otherwise uniform
/// translation in [-max_translation, max_translation] and rotation in
/// [-max_rotation, max_rotation] degrees, about `center`.
std::vector<MotionParams> sample_motions(const SynthConfig& cfg, Vec2 center);

/// Largest translation plus rotation excursion of the sampling footprint
/// for the given ranges; the source image must exceed the ground truth by
/// at least this margin on every side.
int required_margin(const SynthConfig& cfg);

SyntheticBurstSample synthesize_burst(const RgbImage& hr_srgb, const ColorPipelineParams& pipeline,
                                      const SynthConfig& cfg);

/// Renders noise-free frames of `source` for motions given in the
/// coordinates of a ground-truth crop starting at (origin_row, origin_col).
std::vector<PixelGrid> render_frames(const PixelGrid& source, int origin_row, int origin_col,
                                     std::span<const MotionParams> motions,
                                     const ObservationModel& model);

/// Derives a well-mixed 64-bit seed for stream `index` of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace bsr
