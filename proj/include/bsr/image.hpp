#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace bsr {

/// Row-major real-valued image with 1 or 3 interleaved channels.
///
/// Values are linear intensities with a nominal [0,1] range. Nothing in the
/// pipeline clamps them; clamping happens only when writing files.
class PixelGrid {
 public:
  PixelGrid() = default;
  PixelGrid(int rows, int cols, int channels, double fill = 0.0);
  PixelGrid(int rows, int cols, int channels, std::vector<double> data);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int r, int c, int ch = 0) {
    return data_[(static_cast<std::size_t>(r) * cols_ + c) * channels_ + ch];
  }
  double at(int r, int c, int ch = 0) const {
    return data_[(static_cast<std::size_t>(r) * cols_ + c) * channels_ + ch];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  bool same_shape(const PixelGrid& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && channels_ == other.channels_;
  }
  bool all_finite() const;

  /// Extracts channel `ch` as a single-channel grid.
  PixelGrid channel(int ch) const;
  PixelGrid transposed() const;

  friend bool operator==(const PixelGrid&, const PixelGrid&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
};

enum class CfaPattern { RGGB, GRBG, GBRG, BGGR };

/// Color channel (0=R, 1=G, 2=B) sampled at pixel (r, c).
int cfa_channel(CfaPattern cfa, int r, int c);
std::string_view to_string(CfaPattern cfa);
CfaPattern parse_cfa(std::string_view name);
/// RGGB and BGGR are the phases whose tile is symmetric under transposition.
bool cfa_transpose_invariant(CfaPattern cfa);

enum class ColorSpace { LinearSensor, SRGB };

struct RgbImage {
  PixelGrid grid;
  ColorSpace space = ColorSpace::LinearSensor;

  RgbImage() = default;
  RgbImage(PixelGrid g, ColorSpace s = ColorSpace::LinearSensor);
  int rows() const { return grid.rows(); }
  int cols() const { return grid.cols(); }
};

struct RawBayerImage {
  PixelGrid grid;
  CfaPattern cfa = CfaPattern::RGGB;

  RawBayerImage() = default;
  RawBayerImage(PixelGrid g, CfaPattern pattern);
  int rows() const { return grid.rows(); }
  int cols() const { return grid.cols(); }
};

/// Ordered RAW frames sharing size and CFA phase. Frame 0 is the reference.
struct Burst {
  std::vector<RawBayerImage> frames;

  Burst() = default;
  explicit Burst(std::vector<RawBayerImage> f);

  std::size_t size() const { return frames.size(); }
  CfaPattern cfa() const { return frames.front().cfa; }
  int rows() const { return frames.front().rows(); }
  int cols() const { return frames.front().cols(); }
  std::vector<PixelGrid> grids() const;
};

RawBayerImage mosaic(const RgbImage& rgb, CfaPattern cfa);

/// Bilinear demosaicking with reflect-101 borders. Sampled sites are kept
/// bit-exactly.
RgbImage demosaic_bilinear(const RawBayerImage& raw);

/// Unweighted mean of the three channels of the bilinear demosaic.
PixelGrid raw_to_gray(const RawBayerImage& raw);

/// Reflect-101 index into [0, n).
int reflect101(int i, int n);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace bsr
