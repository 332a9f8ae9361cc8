#pragma once

#include <array>
#include <string_view>

namespace bsr {

struct Vec2 {
  double x = 0.0;  // column
  double y = 0.0;  // row
};

enum class MotionModel { Translation, Euclidean, Affine };

int parameter_count(MotionModel model);
std::string_view to_string(MotionModel model);
MotionModel parse_motion_model(std::string_view name);

/// Parametric warp between a frame and the reference.
///
/// Convention, used by synthesis, registration, the observation operator and
/// the solver alike: the parameters define the sampling map
///
///     S(u) = u + t + (A - I)(u - center)
///
/// from a pixel coordinate u of frame k to the coordinate in the reference
/// image that frame k shows at u, i.e. frame_k(u) = reference(S(u)).
/// Coordinates are (column, row) in pixel units of the grid the parameters
/// act on; the rotation angle is in radians. All-zero parameters are the
/// identity.
///
///   Translation: p = (tx, ty)                  A = I
///   Euclidean:   p = (tx, ty, theta)           A = R(theta)
///   Affine:      p = (tx, ty, a, b, c, d)      A = [[1+a, b], [c, 1+d]]
struct MotionParams {
  MotionModel model = MotionModel::Translation;
  std::array<double, 6> p{};
  Vec2 center{};

  MotionParams() = default;
  explicit MotionParams(MotionModel m, Vec2 c = {}) : model(m), center(c) {}

  static MotionParams identity(MotionModel m, Vec2 c = {}) { return MotionParams(m, c); }
  static MotionParams translation(double tx, double ty, Vec2 c = {});
  static MotionParams euclidean(double tx, double ty, double theta, Vec2 c = {});

  int count() const { return parameter_count(model); }
  double tx() const { return p[0]; }
  double ty() const { return p[1]; }
  /// Rotation angle for Euclidean; 0 for translation.
  double angle() const;
  bool is_identity() const;
  bool finite() const;

  /// Linear part minus identity, row-major [m00, m01, m10, m11].
  std::array<double, 4> linear_minus_identity() const;

  Vec2 map(Vec2 u) const;
  /// dS/dp_j at u, for j < count().
  Vec2 derivative(Vec2 u, int j) const;

  /// Same physical motion expressed on a grid whose coordinates relate to
  /// this one by u' = factor * u + offset.
  MotionParams rescaled(double factor, double offset = 0.0) const;
  /// Same physical motion with another parameterization; translation and
  /// rotation are carried over, extra affine terms are dropped when narrowing.
  MotionParams as_model(MotionModel m) const;
  /// Same map with the rotation center moved to `c`.
  MotionParams recentered(Vec2 c) const;
  /// Inverse map S^{-1} with the same center.
  MotionParams inverse() const;
};

/// Coordinate of the center of the low-resolution grid mapped to the
/// high-resolution grid: lr pixel i sits at hr coordinate s*i + phase.
int decimation_phase(int sr_factor);
Vec2 grid_center(int rows, int cols);

}  // namespace bsr
