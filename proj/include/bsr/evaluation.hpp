#pragma once

#include <array>
#include <string>
#include <vector>

#include "bsr/forward_model.hpp"
#include "bsr/image.hpp"
#include "bsr/registration.hpp"

namespace bsr {

struct MetricReport {
  double psnr = 0.0;  // dB
  double ssim = 0.0;
  double valid_fraction = 1.0;
  std::vector<std::string> flags;
};

/// {psnr_db, ssim, valid_fraction, flags}
std::string to_json(const MetricReport& report);

/// PSNR returned when MSE < peak^2 * 1e-10.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE) over all channels of the pixels in `mask`
/// (every pixel when null).
double psnr(const RgbImage& pred, const RgbImage& gt, double peak = 1.0, const ValidityMask* mask = nullptr);

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean local SSIM over window positions fully inside the image, averaged
/// over channels. With a mask, only windows centered on valid pixels count.
double ssim(const RgbImage& pred, const RgbImage& gt, const SsimConfig& cfg = {}, const ValidityMask* mask = nullptr);

/// Row-major 3x3 matrix acting on RGB column vectors.
using ColorMap3x3 = std::array<double, 9>;

struct ColorFit {
  ColorMap3x3 map{1, 0, 0, 0, 1, 0, 0, 0, 1};
  bool rank_deficient = false;
};

/// Least-squares M minimizing sum ||M pred(i) - gt(i)||^2 over masked pixels.
ColorFit fit_color_map(const RgbImage& pred, const RgbImage& gt, const ValidityMask* mask = nullptr);
RgbImage apply_color_map(const RgbImage& img, const ColorMap3x3& m);

struct AlignedScoreConfig {
  int block = 16;
  double peak = 1.0;
  LkConfig lk{};
  SsimConfig ssim{};
};

/// Flow-aligned, color-corrected scoring: warp `pred` onto `gt` with block
/// flow, fit a global color map on the valid pixels, then score there.
MetricReport aligned_score(const RgbImage& pred, const RgbImage& gt, const AlignedScoreConfig& cfg = {});

/// Plain scoring on all pixels.
MetricReport plain_score(const RgbImage& pred, const RgbImage& gt, double peak = 1.0, const SsimConfig& cfg = {});

}  // namespace bsr
