#include "bsr/image.hpp"

#include <cctype>
#include <cmath>
#include <numeric>
#include <string>

#include "bsr/error.hpp"

namespace bsr {

PixelGrid::PixelGrid(int rows, int cols, int channels, double fill)
    : rows_(rows), cols_(cols), channels_(channels) {
  if (rows < 0 || cols < 0 || (channels != 1 && channels != 3)) {
    throw DimensionError("PixelGrid: invalid shape");
  }
  data_.assign(static_cast<std::size_t>(rows) * cols * channels, fill);
}

PixelGrid::PixelGrid(int rows, int cols, int channels, std::vector<double> data)
    : rows_(rows), cols_(cols), channels_(channels), data_(std::move(data)) {
  if (rows < 0 || cols < 0 || (channels != 1 && channels != 3) ||
      data_.size() != static_cast<std::size_t>(rows) * cols * channels) {
    throw DimensionError("PixelGrid: data length does not match shape");
  }
}

bool PixelGrid::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

PixelGrid PixelGrid::channel(int ch) const {
  PixelGrid out(rows_, cols_, 1);
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) out.at(r, c) = at(r, c, ch);
  }
  return out;
}

PixelGrid PixelGrid::transposed() const {
  PixelGrid out(cols_, rows_, channels_);
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) {
      for (int ch = 0; ch < channels_; ++ch) out.at(c, r, ch) = at(r, c, ch);
    }
  }
  return out;
}

namespace {

// Channel of the top-left 2x2 tile, indexed [row parity][col parity].
constexpr int kTiles[4][2][2] = {
    {{0, 1}, {1, 2}},  // RGGB
    {{1, 0}, {2, 1}},  // GRBG
    {{1, 2}, {0, 1}},  // GBRG
    {{2, 1}, {1, 0}},  // BGGR
};

}  // namespace

int cfa_channel(CfaPattern cfa, int r, int c) {
  return kTiles[static_cast<int>(cfa)][r & 1][c & 1];
}

std::string_view to_string(CfaPattern cfa) {
  switch (cfa) {
    case CfaPattern::RGGB: return "RGGB";
    case CfaPattern::GRBG: return "GRBG";
    case CfaPattern::GBRG: return "GBRG";
    case CfaPattern::BGGR: return "BGGR";
  }
  return "?";
}

CfaPattern parse_cfa(std::string_view name) {
  std::string upper(name);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (auto p : {CfaPattern::RGGB, CfaPattern::GRBG, CfaPattern::GBRG, CfaPattern::BGGR}) {
    if (to_string(p) == upper) return p;
  }
  throw ParameterError("unknown CFA pattern '" + std::string(name) + "'");
}

bool cfa_transpose_invariant(CfaPattern cfa) {
  return cfa == CfaPattern::RGGB || cfa == CfaPattern::BGGR;
}

RgbImage::RgbImage(PixelGrid g, ColorSpace s) : grid(std::move(g)), space(s) {
  if (grid.channels() != 3) throw DimensionError("RgbImage needs 3 channels");
}

RawBayerImage::RawBayerImage(PixelGrid g, CfaPattern pattern) : grid(std::move(g)), cfa(pattern) {
  if (grid.channels() != 1) throw DimensionError("RawBayerImage needs 1 channel");
  if (grid.rows() % 2 != 0 || grid.cols() % 2 != 0) {
    throw DimensionError("RawBayerImage needs even dimensions");
  }
}

Burst::Burst(std::vector<RawBayerImage> f) : frames(std::move(f)) {
  if (frames.empty()) throw DimensionError("Burst needs at least one frame");
  for (const auto& fr : frames) {
    if (fr.rows() != frames[0].rows() || fr.cols() != frames[0].cols() || fr.cfa != frames[0].cfa) {
      throw DimensionError("Burst frames must share dimensions and CFA");
    }
  }
}

std::vector<PixelGrid> Burst::grids() const {
  std::vector<PixelGrid> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.grid);
  return out;
}

RawBayerImage mosaic(const RgbImage& rgb, CfaPattern cfa) {
  const int rows = rgb.rows();
  const int cols = rgb.cols();
  if (rows % 2 != 0 || cols % 2 != 0) throw DimensionError("mosaic: odd image dimensions");
  PixelGrid out(rows, cols, 1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out.at(r, c) = rgb.grid.at(r, c, cfa_channel(cfa, r, c));
  }
  return RawBayerImage(std::move(out), cfa);
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

RgbImage demosaic_bilinear(const RawBayerImage& raw) {
  const int rows = raw.rows();
  const int cols = raw.cols();
  const PixelGrid& g = raw.grid;
  PixelGrid out(rows, cols, 3);

  // Green uses the cross kernel [0 1 0; 1 4 1; 0 1 0]/4 on the sparse plane,
  // red and blue the tent kernel [1 2 1; 2 4 2; 1 2 1]/4. Reflect-101 keeps
  // the Bayer parity of mirrored indices, so mirrored taps stay on-channel.
  constexpr double kCross[3][3] = {{0, 1, 0}, {1, 4, 1}, {0, 1, 0}};
  constexpr double kTent[3][3] = {{1, 2, 1}, {2, 4, 2}, {1, 2, 1}};

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int here = cfa_channel(raw.cfa, r, c);
      for (int ch = 0; ch < 3; ++ch) {
        if (ch == here) {
          out.at(r, c, ch) = g.at(r, c);
          continue;
        }
        const auto& k = ch == 1 ? kCross : kTent;
        double acc = 0.0;
        for (int dr = -1; dr <= 1; ++dr) {
          const int rr = reflect101(r + dr, rows);
          for (int dc = -1; dc <= 1; ++dc) {
            const double w = k[dr + 1][dc + 1];
            if (w == 0.0) continue;
            const int cc = reflect101(c + dc, cols);
            if (cfa_channel(raw.cfa, rr, cc) == ch) acc += w * g.at(rr, cc);
          }
        }
        out.at(r, c, ch) = acc / 4.0;
      }
    }
  }
  return RgbImage(std::move(out), ColorSpace::LinearSensor);
}

PixelGrid raw_to_gray(const RawBayerImage& raw) {
  const RgbImage rgb = demosaic_bilinear(raw);
  PixelGrid out(raw.rows(), raw.cols(), 1);
  for (int r = 0; r < raw.rows(); ++r) {
    for (int c = 0; c < raw.cols(); ++c) {
      out.at(r, c) = (rgb.grid.at(r, c, 0) + rgb.grid.at(r, c, 1) + rgb.grid.at(r, c, 2)) / 3.0;
    }
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace bsr
