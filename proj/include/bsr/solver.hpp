#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bsr/camera.hpp"
#include "bsr/forward_model.hpp"
#include "bsr/image.hpp"
#include "bsr/motion.hpp"
#include "bsr/prior.hpp"

namespace bsr {

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Conjugate gradients for a symmetric positive definite operator, starting
/// from the contents of `x`. Stops when ||b - A x|| <= tol ||b||.
CgResult conjugate_gradient(const std::function<void(std::span<const double>, std::span<double>)>& apply,
                            std::span<const double> b, std::span<double> x, int max_iters, double tol);

struct HqsConfig {
  int outer_iters = 8;
  double mu0 = 0.02;
  double mu_growth = 2.0;
  double lambda = 2e-3;
  int cg_iters = 50;
  double cg_tol = 1e-6;
  bool motion_refine = false;
  int gn_iters = 3;

  double mu(int t) const;
  void validate() const;
};

struct PgdConfig {
  int iters = 100;
  double lambda = 2e-3;
  /// Fixed step; when empty, 1/L with L from power iterations.
  std::optional<double> step;
  int power_iters = 20;
  /// Data-term noise variance; when empty, shot_slope * mean(y) + read_var.
  std::optional<double> noise_var;
  NoiseParams noise;

  void validate() const;
};

struct HqsIteration {
  double mu = 0.0;
  double energy_start = 0.0;
  double energy_after_z = 0.0;
  double energy_after_x = 0.0;
  double energy_after_p = 0.0;  // equals energy_after_x without refinement
  double data_term = 0.0;
  double prior_value = 0.0;
  int cg_iterations = 0;
  double cg_residual = 0.0;
  std::vector<int> singular_frames;
};

struct PgdIteration {
  double objective = 0.0;
  double data_term = 0.0;
};

struct SolverDiagnostics {
  std::vector<HqsIteration> hqs;
  std::vector<PgdIteration> pgd;
  double initial_objective = 0.0;
  double step = 0.0;
  double lipschitz = 0.0;
  double noise_var = 0.0;
};

struct SrEstimate {
  RgbImage x;
  std::vector<MotionParams> motions;
  SolverDiagnostics diagnostics;
};

/// Bilinear demosaic of frame 0 followed by bilinear upsampling onto the HR
/// grid; LR pixel i sits at HR coordinate s*i + phase.
RgbImage single_frame_baseline(const PixelGrid& reference, const ObservationModel& model);

/// Normalized shift-and-add: U^T y / U^T 1, falling back to the single-frame
/// baseline where no observation reaches a pixel.
RgbImage init_estimate(std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                       const ObservationModel& model);

/// E_mu(x, z, p) = 1/2 ||y - U_p z||^2 + mu/2 ||z - x||^2 + lambda R(x).
double hqs_energy(const StackedOperator& op, std::span<const double> y, const PixelGrid& x,
                  const PixelGrid& z, double mu, double lambda, const Prior& prior);

/// Solves (U^T U + mu I) z = U^T y + mu x by CG, warm-started from `z`.
CgResult z_step(const StackedOperator& op, std::span<const double> y, const PixelGrid& x, double mu,
                int cg_iters, double cg_tol, PixelGrid& z);
PixelGrid z_step(const PixelGrid& x, std::span<const MotionParams> motions, std::span<const PixelGrid> frames,
                 const ObservationModel& model, double mu, const HqsConfig& cfg);

/// prox of (lambda/mu) R at z.
PixelGrid x_step(const PixelGrid& z, double mu, double lambda, const Prior& prior);

struct PStepResult {
  std::vector<MotionParams> motions;
  std::vector<int> singular_frames;
};

/// Gauss-Newton refinement of frames 1..K-1 against the current HR image,
/// minimizing the mean squared residual over valid sites. Frame 0 is kept.
PStepResult p_step(const PixelGrid& x, std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                   const ObservationModel& model, int gn_iters);

/// Half-quadratic splitting. Motions are HR scale.
SrEstimate hqs_solve(std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                     const ObservationModel& model, const Prior& prior, const HqsConfig& cfg);
SrEstimate hqs_solve(const Burst& burst, std::span<const MotionParams> motions, const ObservationModel& model,
                     const Prior& prior, const HqsConfig& cfg);

/// Proximal gradient descent on (1/(2 sigma^2 B)) sum_k ||y_k - U_k x||^2 + lambda R(x).
SrEstimate pgd_solve(std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                     const ObservationModel& model, const Prior& prior, const PgdConfig& cfg);
SrEstimate pgd_solve(const Burst& burst, std::span<const MotionParams> motions, const ObservationModel& model,
                     const Prior& prior, const PgdConfig& cfg);

/// Largest eigenvalue of U^T U by power iteration from a fixed start vector.
double power_iteration(const StackedOperator& op, int iters);

/// sigma^2 used to weight the PGD data term.
double data_noise_variance(std::span<const PixelGrid> frames, const StackedOperator& op, const PgdConfig& cfg);

}  // namespace bsr
