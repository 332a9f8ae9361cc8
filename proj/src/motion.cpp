#include "bsr/motion.hpp"

#include <cmath>
#include <string>

#include "bsr/error.hpp"

namespace bsr {

int parameter_count(MotionModel model) {
  switch (model) {
    case MotionModel::Translation: return 2;
    case MotionModel::Euclidean: return 3;
    case MotionModel::Affine: return 6;
  }
  return 0;
}

std::string_view to_string(MotionModel model) {
  switch (model) {
    case MotionModel::Translation: return "translation";
    case MotionModel::Euclidean: return "euclidean";
    case MotionModel::Affine: return "affine";
  }
  return "?";
}

MotionModel parse_motion_model(std::string_view name) {
  for (auto m : {MotionModel::Translation, MotionModel::Euclidean, MotionModel::Affine}) {
    if (to_string(m) == name) return m;
  }
  throw ParameterError("unknown motion model '" + std::string(name) + "'");
}

MotionParams MotionParams::translation(double tx, double ty, Vec2 c) {
  MotionParams m(MotionModel::Translation, c);
  m.p[0] = tx;
  m.p[1] = ty;
  return m;
}

MotionParams MotionParams::euclidean(double tx, double ty, double theta, Vec2 c) {
  MotionParams m(MotionModel::Euclidean, c);
  m.p[0] = tx;
  m.p[1] = ty;
  m.p[2] = theta;
  return m;
}

double MotionParams::angle() const {
  switch (model) {
    case MotionModel::Translation: return 0.0;
    case MotionModel::Euclidean: return p[2];
    case MotionModel::Affine: return std::atan2(p[4], 1.0 + p[2]);
  }
  return 0.0;
}

bool MotionParams::is_identity() const {
  for (int j = 0; j < count(); ++j) {
    if (p[j] != 0.0) return false;
  }
  return true;
}

bool MotionParams::finite() const {
  for (int j = 0; j < count(); ++j) {
    if (!std::isfinite(p[j])) return false;
  }
  return std::isfinite(center.x) && std::isfinite(center.y);
}

std::array<double, 4> MotionParams::linear_minus_identity() const {
  switch (model) {
    case MotionModel::Translation: return {0.0, 0.0, 0.0, 0.0};
    case MotionModel::Euclidean: {
      // cos - 1 written as -2 sin^2(theta/2) to keep precision for small angles.
      const double h = std::sin(0.5 * p[2]);
      const double cm1 = -2.0 * h * h;
      const double s = std::sin(p[2]);
      return {cm1, -s, s, cm1};
    }
    case MotionModel::Affine: return {p[2], p[3], p[4], p[5]};
  }
  return {};
}

Vec2 MotionParams::map(Vec2 u) const {
  const auto m = linear_minus_identity();
  const double dx = u.x - center.x;
  const double dy = u.y - center.y;
  return {u.x + p[0] + (m[0] * dx + m[1] * dy), u.y + p[1] + (m[2] * dx + m[3] * dy)};
}

Vec2 MotionParams::derivative(Vec2 u, int j) const {
  const double dx = u.x - center.x;
  const double dy = u.y - center.y;
  if (j == 0) return {1.0, 0.0};
  if (j == 1) return {0.0, 1.0};
  if (model == MotionModel::Euclidean) {
    const double c = std::cos(p[2]);
    const double s = std::sin(p[2]);
    return {-s * dx - c * dy, c * dx - s * dy};
  }
  switch (j) {
    case 2: return {dx, 0.0};
    case 3: return {dy, 0.0};
    case 4: return {0.0, dx};
    case 5: return {0.0, dy};
  }
  throw ParameterError("MotionParams::derivative: index out of range");
}

MotionParams MotionParams::rescaled(double factor, double offset) const {
  MotionParams out = *this;
  out.p[0] = factor * p[0];
  out.p[1] = factor * p[1];
  out.center = {factor * center.x + offset, factor * center.y + offset};
  return out;
}

MotionParams MotionParams::as_model(MotionModel m) const {
  MotionParams out(m, center);
  out.p[0] = p[0];
  out.p[1] = p[1];
  if (m == MotionModel::Euclidean) {
    out.p[2] = angle();
  } else if (m == MotionModel::Affine) {
    const auto lin = linear_minus_identity();
    for (int i = 0; i < 4; ++i) out.p[2 + i] = lin[i];
  }
  return out;
}

MotionParams MotionParams::recentered(Vec2 c) const {
  // u + t + M(u - c0) = u + t' + M(u - c)  =>  t' = t + M(c - c0).
  const auto m = linear_minus_identity();
  MotionParams out = *this;
  const double dx = c.x - center.x;
  const double dy = c.y - center.y;
  out.p[0] = p[0] + m[0] * dx + m[1] * dy;
  out.p[1] = p[1] + m[2] * dx + m[3] * dy;
  out.center = c;
  return out;
}

MotionParams MotionParams::inverse() const {
  // S(u) = c + A(u - c) + t  =>  S^{-1}(v) = c + A^{-1}(v - c - t).
  MotionParams out(model, center);
  const auto m = linear_minus_identity();
  const double a = 1.0 + m[0], b = m[1], c = m[2], d = 1.0 + m[3];
  const double det = a * d - b * c;
  if (std::abs(det) < 1e-12) throw ParameterError("MotionParams::inverse: singular warp");
  const double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;
  out.p[0] = -(ia * p[0] + ib * p[1]);
  out.p[1] = -(ic * p[0] + id * p[1]);
  if (model == MotionModel::Euclidean) {
    out.p[2] = -p[2];
  } else if (model == MotionModel::Affine) {
    out.p[2] = ia - 1.0;
    out.p[3] = ib;
    out.p[4] = ic;
    out.p[5] = id - 1.0;
  }
  return out;
}

int decimation_phase(int sr_factor) { return sr_factor / 2; }

Vec2 grid_center(int rows, int cols) { return {0.5 * (cols - 1), 0.5 * (rows - 1)}; }

}  // namespace bsr
