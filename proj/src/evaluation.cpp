#include "bsr/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include "json.hpp"

#include "bsr/error.hpp"

namespace bsr {

namespace {

void require_pair(const RgbImage& pred, const RgbImage& gt, const char* what) {
  if (pred.space != ColorSpace::LinearSensor || gt.space != ColorSpace::LinearSensor) {
    throw ParameterError(std::string(what) + ": inputs must be linear-sensor images");
  }
  if (!pred.grid.same_shape(gt.grid)) throw DimensionError(std::string(what) + ": image shapes differ");
}

void require_mask(const ValidityMask* mask, const RgbImage& img, const char* what) {
  if (mask && (mask->rows != img.rows() || mask->cols != img.cols())) {
    throw DimensionError(std::string(what) + ": mask shape differs from image");
  }
}

bool in_mask(const ValidityMask* mask, int r, int c) { return !mask || mask->at(r, c); }

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const double mid = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-0.5 * (i - mid) * (i - mid) / (sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// 'valid' correlation of a single-channel plane with a separable window.
std::vector<double> filter_valid(const std::vector<double>& img, int rows, int cols, const std::vector<double>& w) {
  const int n = static_cast<int>(w.size());
  const int orows = rows - n + 1, ocols = cols - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(rows) * ocols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < ocols; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += w[k] * img[static_cast<std::size_t>(r) * cols + c + k];
      tmp[static_cast<std::size_t>(r) * ocols + c] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(orows) * ocols);
  for (int r = 0; r < orows; ++r) {
    for (int c = 0; c < ocols; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += w[k] * tmp[static_cast<std::size_t>(r + k) * ocols + c];
      out[static_cast<std::size_t>(r) * ocols + c] = acc;
    }
  }
  return out;
}

PixelGrid gray(const RgbImage& img) {
  PixelGrid g(img.rows(), img.cols(), 1);
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      g.at(r, c) = (img.grid.at(r, c, 0) + img.grid.at(r, c, 1) + img.grid.at(r, c, 2)) / 3.0;
    }
  }
  return g;
}

}  // namespace

std::string to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["psnr_db"] = report.psnr;
  j["ssim"] = report.ssim;
  j["valid_fraction"] = report.valid_fraction;
  j["flags"] = report.flags;
  return j.dump(2);
}

double psnr(const RgbImage& pred, const RgbImage& gt, double peak, const ValidityMask* mask) {
  require_pair(pred, gt, "psnr");
  require_mask(mask, pred, "psnr");
  if (!(peak > 0.0)) throw ParameterError("psnr: peak must be > 0");
  double acc = 0.0;
  long count = 0;
  for (int r = 0; r < pred.rows(); ++r) {
    for (int c = 0; c < pred.cols(); ++c) {
      if (!in_mask(mask, r, c)) continue;
      for (int q = 0; q < 3; ++q) {
        const double d = pred.grid.at(r, c, q) - gt.grid.at(r, c, q);
        acc += d * d;
        ++count;
      }
    }
  }
  if (count == 0) throw ParameterError("psnr: empty mask");
  const double mse = acc / count;
  if (mse < peak * peak * 1e-10) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const RgbImage& pred, const RgbImage& gt, const SsimConfig& cfg, const ValidityMask* mask) {
  require_pair(pred, gt, "ssim");
  require_mask(mask, pred, "ssim");
  if (cfg.window < 1 || cfg.window % 2 == 0) throw ParameterError("ssim: window must be odd");
  const int rows = pred.rows(), cols = pred.cols();
  if (rows < cfg.window || cols < cfg.window) throw DimensionError("ssim: image smaller than the window");
  const std::vector<double> w = gaussian_window(cfg.window, cfg.sigma);
  const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2);
  const double c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
  const int half = cfg.window / 2;
  const int orows = rows - cfg.window + 1, ocols = cols - cfg.window + 1;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;

  double total = 0.0;
  for (int q = 0; q < 3; ++q) {
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = pred.grid.vec()[i * 3 + q];
      b[i] = gt.grid.vec()[i * 3 + q];
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, rows, cols, w);
    const auto mu_b = filter_valid(b, rows, cols, w);
    const auto s_aa = filter_valid(aa, rows, cols, w);
    const auto s_bb = filter_valid(bb, rows, cols, w);
    const auto s_ab = filter_valid(ab, rows, cols, w);
    double acc = 0.0;
    long count = 0;
    for (int r = 0; r < orows; ++r) {
      for (int c = 0; c < ocols; ++c) {
        if (!in_mask(mask, r + half, c + half)) continue;
        const std::size_t i = static_cast<std::size_t>(r) * ocols + c;
        const double va = s_aa[i] - mu_a[i] * mu_a[i];
        const double vb = s_bb[i] - mu_b[i] * mu_b[i];
        const double cov = s_ab[i] - mu_a[i] * mu_b[i];
        acc += (2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        ++count;
      }
    }
    if (count == 0) throw ParameterError("ssim: no window centered on a valid pixel");
    total += acc / count;
  }
  return total / 3.0;
}

ColorFit fit_color_map(const RgbImage& pred, const RgbImage& gt, const ValidityMask* mask) {
  require_pair(pred, gt, "fit_color_map");
  require_mask(mask, pred, "fit_color_map");
  Eigen::Matrix3d gram = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (int r = 0; r < pred.rows(); ++r) {
    for (int c = 0; c < pred.cols(); ++c) {
      if (!in_mask(mask, r, c)) continue;
      const Eigen::Vector3d p(pred.grid.at(r, c, 0), pred.grid.at(r, c, 1), pred.grid.at(r, c, 2));
      const Eigen::Vector3d g(gt.grid.at(r, c, 0), gt.grid.at(r, c, 1), gt.grid.at(r, c, 2));
      gram.noalias() += p * p.transpose();
      cross.noalias() += p * g.transpose();
    }
  }
  ColorFit fit;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(gram);
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmax > 0.0) || eig.eigenvalues().minCoeff() < 1e-10 * lmax) {
    fit.rank_deficient = true;
    return fit;
  }
  // Row i of M solves gram * m_i = cross(:, i).
  const Eigen::Matrix3d mt = gram.ldlt().solve(cross);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) fit.map[i * 3 + j] = mt(j, i);
  }
  if (!std::all_of(fit.map.begin(), fit.map.end(), [](double v) { return std::isfinite(v); })) {
    fit = ColorFit{};
    fit.rank_deficient = true;
  }
  return fit;
}

RgbImage apply_color_map(const RgbImage& img, const ColorMap3x3& m) {
  PixelGrid out(img.rows(), img.cols(), 3);
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      for (int i = 0; i < 3; ++i) {
        out.at(r, c, i) = m[i * 3] * img.grid.at(r, c, 0) + m[i * 3 + 1] * img.grid.at(r, c, 1) +
                          m[i * 3 + 2] * img.grid.at(r, c, 2);
      }
    }
  }
  return RgbImage(std::move(out), img.space);
}

MetricReport plain_score(const RgbImage& pred, const RgbImage& gt, double peak, const SsimConfig& cfg) {
  MetricReport rep;
  rep.psnr = psnr(pred, gt, peak);
  rep.ssim = ssim(pred, gt, cfg);
  rep.valid_fraction = 1.0;
  return rep;
}

MetricReport aligned_score(const RgbImage& pred, const RgbImage& gt, const AlignedScoreConfig& cfg) {
  require_pair(pred, gt, "aligned_score");
  const int rows = gt.rows(), cols = gt.cols();
  MetricReport rep;

  // A rough color match first, so that pure color differences do not bias
  // the flow estimate.
  const ColorFit pre = fit_color_map(pred, gt);
  const RgbImage pred_matched = apply_color_map(pred, pre.map);
  const FlowField flow = block_flow(gray(pred_matched), gray(gt), cfg.block, cfg.lk);

  PixelGrid warped(rows, cols, 3);
  ValidityMask mask{rows, cols, std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols, 0)};
  long valid = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Vec2 f = flow.at(r, c);
      // Round-off in a zero flow must not push border samples outside.
      constexpr double kSlack = 1e-9;
      double sx = c + f.x, sy = r + f.y;
      if (!(sx >= -kSlack && sy >= -kSlack && sx <= cols - 1 + kSlack && sy <= rows - 1 + kSlack)) {
        for (int q = 0; q < 3; ++q) warped.at(r, c, q) = pred.grid.at(r, c, q);
        continue;
      }
      sx = std::clamp(sx, 0.0, cols - 1.0);
      sy = std::clamp(sy, 0.0, rows - 1.0);
      const int x0 = std::min(static_cast<int>(sx), cols - 1), y0 = std::min(static_cast<int>(sy), rows - 1);
      const int x1 = std::min(x0 + 1, cols - 1), y1 = std::min(y0 + 1, rows - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int q = 0; q < 3; ++q) {
        warped.at(r, c, q) = (1 - fy) * ((1 - fx) * pred.grid.at(y0, x0, q) + fx * pred.grid.at(y0, x1, q)) +
                             fy * ((1 - fx) * pred.grid.at(y1, x0, q) + fx * pred.grid.at(y1, x1, q));
      }
      mask.valid[static_cast<std::size_t>(r) * cols + c] = 1;
      ++valid;
    }
  }
  rep.valid_fraction = static_cast<double>(valid) / (static_cast<double>(rows) * cols);
  if (valid == 0) throw NumericalError("aligned_score: no pixel is valid after alignment");

  RgbImage aligned(std::move(warped), ColorSpace::LinearSensor);
  const ColorFit fit = fit_color_map(aligned, gt, &mask);
  if (fit.rank_deficient) {
    rep.flags.push_back("color_fit_rank_deficient");
  } else {
    aligned = apply_color_map(aligned, fit.map);
  }
  rep.psnr = psnr(aligned, gt, cfg.peak, &mask);
  rep.ssim = ssim(aligned, gt, cfg.ssim, &mask);
  return rep;
}

}  // namespace bsr
