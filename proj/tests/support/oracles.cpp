#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

namespace bsr::test {

double rel_dot_gap(const PixelGrid& x, const PixelGrid& ax, const PixelGrid& y, const PixelGrid& aty) {
  const double lhs = dot(ax.values(), y.values());
  const double rhs = dot(x.values(), aty.values());
  return std::abs(lhs - rhs) / (norm(x.values()) * norm(y.values()));
}

MotionParams random_motion(std::mt19937_64& rng, Vec2 center, MotionModel model) {
  std::uniform_real_distribution<double> t(-3.0, 3.0), a(-0.03, 0.03);
  MotionParams p(model, center);
  p.p[0] = t(rng);
  p.p[1] = t(rng);
  if (model == MotionModel::Euclidean) p.p[2] = a(rng);
  if (model == MotionModel::Affine) {
    for (int j = 2; j < 6; ++j) p.p[j] = a(rng);
  }
  return p;
}

namespace {

// Sample positions of the same-size warp stay in one bilinear cell for every
// step of the sweep, so the interpolant is polynomial along the path.
std::vector<std::size_t> cell_stable_pixels(int rows, int cols, const MotionParams& p, const MotionParams& q) {
  std::vector<std::size_t> out;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Vec2 a = p.map({double(c), double(r)}), b = q.map({double(c), double(r)});
      if (std::floor(a.x) != std::floor(b.x) || std::floor(a.y) != std::floor(b.y)) continue;
      if (a.x < 1 || a.y < 1 || a.x > cols - 2 || a.y > rows - 2) continue;
      out.push_back(static_cast<std::size_t>(r) * cols + c);
    }
  }
  return out;
}

}  // namespace

FdSweep fd_sweep(const PixelGrid& x, const MotionParams& p, const std::vector<double>& dir,
                 const std::vector<double>& deltas) {
  const auto jac = warp_jacobian(x, p);
  MotionParams far = p;
  for (int j = 0; j < p.count(); ++j) far.p[j] += deltas.front() * dir[j];
  MotionParams far_neg = p;
  for (int j = 0; j < p.count(); ++j) far_neg.p[j] -= deltas.front() * dir[j];
  auto pix = cell_stable_pixels(x.rows(), x.cols(), p, far);
  const auto neg = cell_stable_pixels(x.rows(), x.cols(), p, far_neg);
  std::vector<std::size_t> keep;
  std::set_intersection(pix.begin(), pix.end(), neg.begin(), neg.end(), std::back_inserter(keep));
  const PixelGrid base = warp(x, p, Direction::Apply);
  FdSweep out;
  for (double d : deltas) {
    MotionParams q = p;
    for (int j = 0; j < p.count(); ++j) q.p[j] += d * dir[j];
    const PixelGrid moved = warp(x, q, Direction::Apply);
    double rem = 0.0, lin = 0.0;
    for (std::size_t i : keep) {
      for (int ch = 0; ch < x.channels(); ++ch) {
        const std::size_t idx = i * x.channels() + ch;
        double jv = 0.0;
        for (int j = 0; j < p.count(); ++j) jv += jac[j].vec()[idx] * dir[j];
        const double diff = moved.vec()[idx] - base.vec()[idx] - d * jv;
        rem += diff * diff;
        lin += d * d * jv * jv;
      }
    }
    out.remainders.push_back(std::sqrt(rem));
    out.rel_error_smallest = std::sqrt(rem / lin);
  }
  return out;
}

}  // namespace bsr::test
