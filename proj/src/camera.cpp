#include "bsr/camera.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "bsr/error.hpp"

namespace bsr {

namespace {

Eigen::Matrix3d ccm_matrix(const ColorPipelineParams& p) {
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = p.ccm[3 * r + c];
  }
  return m;
}

}  // namespace

ColorPipelineParams ColorPipelineParams::identity() {
  ColorPipelineParams p;
  p.wb_gains = {1.0, 1.0, 1.0};
  p.ccm = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  p.gamma = 1.0;
  return p;
}

void ColorPipelineParams::validate() const {
  for (double g : wb_gains) {
    if (!(g > 0.0)) throw ParameterError("white-balance gains must be positive");
  }
  if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
  if (std::abs(ccm_matrix(*this).determinant()) <= 1e-8) throw ParameterError("color matrix is singular");
}

void NoiseParams::validate() const {
  if (!(shot_slope >= 0.0) || !(read_var >= 0.0)) throw ParameterError("noise parameters must be >= 0");
}

NoiseParams NoiseParams::challenge() {
  const double shot = 1e-2;
  return {shot, std::exp(2.18 * std::log(shot) + 1.2)};
}

ObservationModel SynthConfig::observation_model() const {
  ObservationModel m = ObservationModel::make(lr_rows, lr_cols, sr_factor, cfa);
  if (kernel) m.kernel = *kernel;
  m.validate();
  return m;
}

void SynthConfig::validate() const {
  if (frames < 1) throw ParameterError("synthesis needs at least one frame");
  if (sr_factor < 1) throw ParameterError("sr_factor must be >= 1");
  if (max_translation < 0.0 || max_rotation < 0.0) throw ParameterError("motion ranges must be >= 0");
  if (motions && static_cast<int>(motions->size()) != frames) {
    throw ParameterError("injected motion count does not match frame count");
  }
  noise.validate();
}

RgbImage unprocess(const RgbImage& srgb, const ColorPipelineParams& params) {
  params.validate();
  if (srgb.space != ColorSpace::SRGB) throw ParameterError("unprocess expects an sRGB image");
  const Eigen::Matrix3d inv = ccm_matrix(params).inverse();
  PixelGrid out(srgb.rows(), srgb.cols(), 3);
  for (int r = 0; r < srgb.rows(); ++r) {
    for (int c = 0; c < srgb.cols(); ++c) {
      Eigen::Vector3d v;
      for (int q = 0; q < 3; ++q) v[q] = std::pow(std::max(srgb.grid.at(r, c, q), 0.0), params.gamma);
      const Eigen::Vector3d cam = inv * v;
      for (int q = 0; q < 3; ++q) out.at(r, c, q) = cam[q] / params.wb_gains[q];
    }
  }
  return RgbImage(std::move(out), ColorSpace::LinearSensor);
}

RgbImage process(const RgbImage& linear, const ColorPipelineParams& params) {
  params.validate();
  if (linear.space != ColorSpace::LinearSensor) throw ParameterError("process expects a linear image");
  const Eigen::Matrix3d m = ccm_matrix(params);
  PixelGrid out(linear.rows(), linear.cols(), 3);
  for (int r = 0; r < linear.rows(); ++r) {
    for (int c = 0; c < linear.cols(); ++c) {
      Eigen::Vector3d v;
      for (int q = 0; q < 3; ++q) v[q] = linear.grid.at(r, c, q) * params.wb_gains[q];
      const Eigen::Vector3d rgb = m * v;
      for (int q = 0; q < 3; ++q) {
        out.at(r, c, q) = std::pow(std::clamp(rgb[q], 0.0, 1.0), 1.0 / params.gamma);
      }
    }
  }
  return RgbImage(std::move(out), ColorSpace::SRGB);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over the pair.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RawBayerImage add_noise(const RawBayerImage& raw, const NoiseParams& noise, std::uint64_t seed) {
  noise.validate();
  RawBayerImage out = raw;
  if (noise.is_zero()) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : out.grid.vec()) {
    const double var = noise.shot_slope * std::max(v, 0.0) + noise.read_var;
    v += std::sqrt(var) * gauss(rng);
  }
  return out;
}

std::vector<MotionParams> sample_motions(const SynthConfig& cfg, Vec2 center) {
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<MotionParams> motions;
  motions.reserve(cfg.frames);
  motions.push_back(MotionParams::identity(MotionModel::Euclidean, center));
  for (int k = 1; k < cfg.frames; ++k) {
    const double tx = cfg.max_translation * unit(rng);
    const double ty = cfg.max_translation * unit(rng);
    const double th = cfg.max_rotation * unit(rng) * std::numbers::pi / 180.0;
    motions.push_back(MotionParams::euclidean(tx, ty, th, center));
  }
  return motions;
}

int required_margin(const SynthConfig& cfg) {
  const int hr_rows = cfg.lr_rows * cfg.sr_factor;
  const int hr_cols = cfg.lr_cols * cfg.sr_factor;
  const int rad = cfg.kernel ? cfg.kernel->radius() : BlurKernel::box(cfg.sr_factor).radius();
  const double theta = cfg.max_rotation * std::numbers::pi / 180.0;
  // Farthest extended-grid point from the rotation center.
  const double radius = std::hypot(0.5 * hr_rows + rad + 1.0, 0.5 * hr_cols + rad + 1.0);
  const double swing = radius * (std::sin(std::min(theta, std::numbers::pi / 2)) + 1.0 - std::cos(theta));
  return static_cast<int>(std::ceil(cfg.max_translation + swing)) + rad + 2;
}

std::vector<PixelGrid> render_frames(const PixelGrid& source, int origin_row, int origin_col,
                                     std::span<const MotionParams> motions, const ObservationModel& m) {
  // Frames are rendered on the HR frame grid extended by the blur radius so
  // that every tap of every LR site sees real image content; the ground
  // truth crop is source shifted by the origin.
  const int rad = m.kernel.radius();
  const int ext_rows = m.hr_rows() + 2 * rad;
  const int ext_cols = m.hr_cols() + 2 * rad;
  std::vector<PixelGrid> frames;
  frames.reserve(motions.size());
  for (const auto& p : motions) {
    MotionParams shifted = p;
    shifted.p[0] = p.p[0] + origin_col - rad;
    shifted.p[1] = p.p[1] + origin_row - rad;
    shifted.center = {p.center.x + rad, p.center.y + rad};
    const PixelGrid blurred = blur(warp_apply(source, shifted, ext_rows, ext_cols), m.kernel, Direction::Apply);
    PixelGrid cropped(m.hr_rows(), m.hr_cols(), 3);
    for (int r = 0; r < m.hr_rows(); ++r) {
      for (int c = 0; c < m.hr_cols(); ++c) {
        for (int q = 0; q < 3; ++q) cropped.at(r, c, q) = blurred.at(r + rad, c + rad, q);
      }
    }
    frames.push_back(decimate_mosaic(cropped, m, Direction::Apply));
  }
  return frames;
}

SyntheticBurstSample synthesize_burst(const RgbImage& hr_srgb, const ColorPipelineParams& pipeline,
                                      const SynthConfig& cfg) {
  cfg.validate();
  const ObservationModel model = cfg.observation_model();
  const int margin = required_margin(cfg);
  const int hr_rows = model.hr_rows();
  const int hr_cols = model.hr_cols();
  if (hr_srgb.rows() < hr_rows + 2 * margin || hr_srgb.cols() < hr_cols + 2 * margin) {
    throw DimensionError("synthesize_burst: source image too small for the crop plus motion margin (needs " +
                         std::to_string(hr_rows + 2 * margin) + "x" + std::to_string(hr_cols + 2 * margin) + ")");
  }
  const RgbImage linear = unprocess(hr_srgb, pipeline);
  const int origin_row = (hr_srgb.rows() - hr_rows) / 2;
  const int origin_col = (hr_srgb.cols() - hr_cols) / 2;

  PixelGrid gt(hr_rows, hr_cols, 3);
  for (int r = 0; r < hr_rows; ++r) {
    for (int c = 0; c < hr_cols; ++c) {
      for (int q = 0; q < 3; ++q) gt.at(r, c, q) = linear.grid.at(r + origin_row, c + origin_col, q);
    }
  }

  std::vector<MotionParams> motions = cfg.motions ? *cfg.motions : sample_motions(cfg, model.hr_center());
  const std::vector<PixelGrid> clean = render_frames(linear.grid, origin_row, origin_col, motions, model);

  std::vector<RawBayerImage> frames;
  frames.reserve(clean.size());
  for (std::size_t k = 0; k < clean.size(); ++k) {
    RawBayerImage raw(clean[k], cfg.cfa);
    if (cfg.add_noise) raw = add_noise(raw, cfg.noise, derive_seed(cfg.seed, 1000 + k));
    frames.push_back(std::move(raw));
  }
  return SyntheticBurstSample{Burst(std::move(frames)), RgbImage(std::move(gt), ColorSpace::LinearSensor),
                              std::move(motions), cfg.add_noise ? cfg.noise : NoiseParams{}, model};
}

}  // namespace bsr
