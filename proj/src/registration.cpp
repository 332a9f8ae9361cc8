#include "bsr/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include <Eigen/Dense>

#include "bsr/error.hpp"

namespace bsr {

void LkConfig::validate() const {
  if (pyramid_levels < 1) throw ParameterError("LK needs at least one pyramid level");
  if (!(robust_threshold > 0.0)) throw ParameterError("LK robust threshold must be > 0");
  if (iters_per_level < 0 || max_halvings < 0) throw ParameterError("LK iteration counts must be >= 0");
}

std::string_view to_string(LkStatus s) {
  switch (s) {
    case LkStatus::Converged: return "converged";
    case LkStatus::MaxIterations: return "max_iterations";
    case LkStatus::Degenerate: return "degenerate";
  }
  return "?";
}

namespace {

PixelGrid gaussian_blur_reflect(const PixelGrid& in, double sigma) {
  const int rad = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * rad + 1);
  double sum = 0.0;
  for (int i = -rad; i <= rad; ++i) sum += taps[i + rad] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& t : taps) t /= sum;
  const int rows = in.rows(), cols = in.cols(), ch = in.channels();
  PixelGrid tmp(rows, cols, ch), out(rows, cols, ch);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      for (int a = -rad; a <= rad; ++a) {
        const int cc = reflect101(c + a, cols);
        for (int q = 0; q < ch; ++q) tmp.at(r, c, q) += taps[a + rad] * in.at(r, cc, q);
      }
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int a = -rad; a <= rad; ++a) {
      const int rr = reflect101(r + a, rows);
      for (int c = 0; c < cols; ++c) {
        for (int q = 0; q < ch; ++q) out.at(r, c, q) += taps[a + rad] * tmp.at(rr, c, q);
      }
    }
  }
  return out;
}

// Central differences; one-sided on the border.
void gradients(const PixelGrid& img, PixelGrid& gx, PixelGrid& gy) {
  const int rows = img.rows(), cols = img.cols();
  gx = PixelGrid(rows, cols, 1);
  gy = PixelGrid(rows, cols, 1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int c0 = std::max(c - 1, 0), c1 = std::min(c + 1, cols - 1);
      const int r0 = std::max(r - 1, 0), r1 = std::min(r + 1, rows - 1);
      gx.at(r, c) = c1 > c0 ? (img.at(r, c1) - img.at(r, c0)) / (c1 - c0) : 0.0;
      gy.at(r, c) = r1 > r0 ? (img.at(r1, c) - img.at(r0, c)) / (r1 - r0) : 0.0;
    }
  }
}

struct Sample {
  int x0, y0;
  double w[4];
};

// Bilinear weights at s, or false if a weighted neighbor is outside.
bool bilinear(const PixelGrid& img, Vec2 s, Sample& out) {
  if (!(std::abs(s.x) < 1e9 && std::abs(s.y) < 1e9)) return false;
  const double fx0 = std::floor(s.x), fy0 = std::floor(s.y);
  out.x0 = static_cast<int>(fx0);
  out.y0 = static_cast<int>(fy0);
  const double fx = s.x - fx0, fy = s.y - fy0;
  out.w[0] = (1 - fx) * (1 - fy);
  out.w[1] = fx * (1 - fy);
  out.w[2] = (1 - fx) * fy;
  out.w[3] = fx * fy;
  for (int n = 0; n < 4; ++n) {
    if (out.w[n] == 0.0) continue;
    const int xx = out.x0 + (n & 1), yy = out.y0 + (n >> 1);
    if (xx < 0 || yy < 0 || xx >= img.cols() || yy >= img.rows()) return false;
  }
  return true;
}

double eval(const PixelGrid& img, const Sample& s) {
  double v = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (s.w[n] != 0.0) v += s.w[n] * img.at(s.y0 + (n >> 1), s.x0 + (n & 1));
  }
  return v;
}

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

Roi full_roi(const PixelGrid& img) { return {0, 0, img.rows(), img.cols()}; }

struct LevelOutcome {
  MotionParams params;
  LkLevelTrace trace;
  bool degenerate = false;
  bool converged = false;
};

LevelOutcome refine_level(const PixelGrid& ref, const PixelGrid& mov, const Roi& roi, const LkConfig& cfg,
                          MotionParams p) {
  PixelGrid gx, gy;
  gradients(ref, gx, gy);
  const int n = p.count();
  const double delta = cfg.robust_threshold;

  LevelOutcome out;
  double cost = robust_cost(ref, mov, roi, p, delta);
  out.trace.entry_cost = cost;
  for (int it = 0; it < cfg.iters_per_level; ++it) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd jrow(n);
    long count = 0;
    for (int r = roi.row0; r < roi.row1; ++r) {
      for (int c = roi.col0; c < roi.col1; ++c) {
        const Vec2 u{static_cast<double>(c), static_cast<double>(r)};
        Sample s;
        if (!bilinear(ref, p.map(u), s)) continue;
        const double res = eval(ref, s) - mov.at(r, c);
        const double ax = eval(gx, s), ay = eval(gy, s);
        for (int j = 0; j < n; ++j) {
          const Vec2 d = p.derivative(u, j);
          jrow[j] = ax * d.x + ay * d.y;
        }
        const double a = std::abs(res);
        const double w = a <= delta ? 1.0 : delta / a;
        h.noalias() += w * jrow * jrow.transpose();
        b.noalias() += w * res * jrow;
        ++count;
      }
    }
    out.trace.iterations = it + 1;
    if (count < n) {
      out.degenerate = true;
      break;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    if (!(lmax > 1e-12) || !(lmin > 0.0) || lmax / lmin > cfg.max_condition) {
      out.degenerate = true;
      break;
    }
    Eigen::VectorXd step = -h.ldlt().solve(b);
    bool accepted = false;
    for (int halving = 0; halving <= cfg.max_halvings; ++halving) {
      MotionParams trial = p;
      for (int j = 0; j < n; ++j) trial.p[j] += step[j];
      const double trial_cost = robust_cost(ref, mov, roi, trial, delta);
      if (trial_cost <= cost) {
        p = trial;
        cost = trial_cost;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || step.norm() < cfg.convergence_tol) {
      out.converged = true;
      break;
    }
  }
  out.params = p;
  out.trace.exit_cost = cost;
  return out;
}

}  // namespace

double robust_cost(const PixelGrid& ref, const PixelGrid& mov, const Roi& roi, const MotionParams& p,
                   double threshold) {
  double sum = 0.0;
  long count = 0;
  for (int r = roi.row0; r < roi.row1; ++r) {
    for (int c = roi.col0; c < roi.col1; ++c) {
      Sample s;
      if (!bilinear(ref, p.map({static_cast<double>(c), static_cast<double>(r)}), s)) continue;
      sum += huber(eval(ref, s) - mov.at(r, c), threshold);
      ++count;
    }
  }
  return count > 0 ? sum / count : std::numeric_limits<double>::infinity();
}

std::vector<PixelGrid> build_pyramid(const PixelGrid& gray, int levels) {
  if (levels < 1) throw ParameterError("build_pyramid: levels must be >= 1");
  if (gray.channels() != 1) throw DimensionError("build_pyramid: expects a single-channel image");
  if ((gray.rows() >> (levels - 1)) < 8 || (gray.cols() >> (levels - 1)) < 8) {
    throw DimensionError("build_pyramid: image too small for " + std::to_string(levels) + " levels");
  }
  std::vector<PixelGrid> pyr{gray};
  for (int l = 1; l < levels; ++l) {
    const PixelGrid blurred = gaussian_blur_reflect(pyr.back(), 1.0);
    PixelGrid next(blurred.rows() / 2, blurred.cols() / 2, 1);
    for (int r = 0; r < next.rows(); ++r) {
      for (int c = 0; c < next.cols(); ++c) next.at(r, c) = blurred.at(2 * r, 2 * c);
    }
    pyr.push_back(std::move(next));
  }
  return pyr;
}

int usable_levels(int rows, int cols, int requested) {
  int levels = 1;
  while (levels < requested && (rows >> levels) >= 8 && (cols >> levels) >= 8) ++levels;
  return levels;
}

LkResult lk_refine(const PixelGrid& ref, const PixelGrid& mov, const Roi& roi, const LkConfig& cfg,
                   const MotionParams& init) {
  cfg.validate();
  LkResult result;
  const LevelOutcome o = refine_level(ref, mov, roi, cfg, init);
  result.levels.push_back(o.trace);
  if (o.degenerate) {
    result.params = init;
    result.status = LkStatus::Degenerate;
    result.fell_back = true;
  } else {
    result.params = o.params;
    result.status = o.converged ? LkStatus::Converged : LkStatus::MaxIterations;
  }
  return result;
}

LkResult lk_align(const PixelGrid& ref, const PixelGrid& mov, MotionModel model, const LkConfig& cfg,
                  const MotionParams& init) {
  cfg.validate();
  if (!ref.same_shape(mov) || ref.channels() != 1) {
    throw DimensionError("lk_align: ref and mov must be single-channel images of equal size");
  }
  if (init.model != model) throw ParameterError("lk_align: init does not match the motion model");
  const int levels = usable_levels(ref.rows(), ref.cols(), cfg.pyramid_levels);
  const auto ref_pyr = build_pyramid(ref, levels);
  const auto mov_pyr = build_pyramid(mov, levels);

  LkResult result;
  result.status = LkStatus::Converged;
  const int top = levels - 1;
  MotionParams p = init.rescaled(std::ldexp(1.0, -top));
  for (int l = top; l >= 0; --l) {
    LevelOutcome o = refine_level(ref_pyr[l], mov_pyr[l], full_roi(mov_pyr[l]), cfg, p);
    o.trace.level = l;
    result.levels.push_back(o.trace);
    if (o.degenerate) {
      result.params = init;
      result.status = LkStatus::Degenerate;
      result.fell_back = true;
      return result;
    }
    if (!o.converged) result.status = LkStatus::MaxIterations;
    p = o.params;
    if (l > 0) p = p.rescaled(2.0);
  }
  result.params = p;
  return result;
}

std::vector<LkResult> align_burst(const Burst& burst, MotionModel model, const LkConfig& cfg) {
  if (burst.size() == 0) throw DimensionError("align_burst: empty burst");
  const Vec2 center = grid_center(burst.rows(), burst.cols());
  std::vector<LkResult> out;
  out.reserve(burst.size());
  LkResult ref_result;
  ref_result.params = MotionParams::identity(model, center);
  out.push_back(ref_result);
  if (burst.size() == 1) return out;
  const PixelGrid ref = raw_to_gray(burst.frames[0]);
  for (std::size_t k = 1; k < burst.size(); ++k) {
    out.push_back(lk_align(ref, raw_to_gray(burst.frames[k]), model, cfg, MotionParams::identity(model, center)));
  }
  return out;
}

FlowField block_flow(const PixelGrid& ref, const PixelGrid& mov, int block, const LkConfig& cfg) {
  if (block < 4) throw ParameterError("block_flow: block size must be >= 4");
  const int rows = mov.rows(), cols = mov.cols();
  const Vec2 center = grid_center(rows, cols);
  const LkResult global =
      lk_align(ref, mov, MotionModel::Euclidean, cfg, MotionParams::identity(MotionModel::Euclidean, center));

  const int brows = (rows + block - 1) / block;
  const int bcols = (cols + block - 1) / block;
  const int border = block / 4;
  std::vector<Vec2> node(static_cast<std::size_t>(brows) * bcols);
  std::vector<Vec2> node_pos(node.size());
  LkConfig local = cfg;
  local.iters_per_level = std::max(cfg.iters_per_level, 10);
  for (int bi = 0; bi < brows; ++bi) {
    for (int bj = 0; bj < bcols; ++bj) {
      Roi roi{std::max(bi * block - border, 0), std::max(bj * block - border, 0),
              std::min((bi + 1) * block + border, rows), std::min((bj + 1) * block + border, cols)};
      const Vec2 bc{0.5 * (std::min((bj + 1) * block, cols) - 1 + bj * block),
                    0.5 * (std::min((bi + 1) * block, rows) - 1 + bi * block)};
      const Vec2 g = global.params.map(bc);
      const MotionParams init = MotionParams::translation(g.x - bc.x, g.y - bc.y);
      const LkResult local_fit = lk_refine(ref, mov, roi, local, init);
      const std::size_t idx = static_cast<std::size_t>(bi) * bcols + bj;
      node[idx] = {local_fit.params.tx(), local_fit.params.ty()};
      // Reject local estimates that wander far from the global motion.
      if (std::hypot(node[idx].x - init.tx(), node[idx].y - init.ty()) > 0.5 * block) {
        node[idx] = {init.tx(), init.ty()};
      }
      node_pos[idx] = bc;
    }
  }

  FlowField field{rows, cols, std::vector<Vec2>(static_cast<std::size_t>(rows) * cols)};
  auto coord = [&](double v, int nb) {
    // Position of v between node centers, clamped at the outer nodes.
    const double t = (v - 0.5 * (block - 1)) / block;
    const double tc = std::clamp(t, 0.0, static_cast<double>(nb - 1));
    const int i0 = std::min(static_cast<int>(std::floor(tc)), nb - 1);
    const int i1 = std::min(i0 + 1, nb - 1);
    return std::tuple<int, int, double>{i0, i1, tc - i0};
  };
  for (int r = 0; r < rows; ++r) {
    const auto [r0, r1, fr] = coord(r, brows);
    for (int c = 0; c < cols; ++c) {
      const auto [c0, c1, fc] = coord(c, bcols);
      auto at = [&](int i, int j) { return node[static_cast<std::size_t>(i) * bcols + j]; };
      const Vec2 a = at(r0, c0), b = at(r0, c1), d = at(r1, c0), e = at(r1, c1);
      field.flow[static_cast<std::size_t>(r) * cols + c] = {
          (1 - fr) * ((1 - fc) * a.x + fc * b.x) + fr * ((1 - fc) * d.x + fc * e.x),
          (1 - fr) * ((1 - fc) * a.y + fc * b.y) + fr * ((1 - fc) * d.y + fc * e.y)};
    }
  }
  return field;
}

}  // namespace bsr
