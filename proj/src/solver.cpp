#include "bsr/solver.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <limits>
#include <string>
#include <tuple>

#include <Eigen/Dense>

#include "bsr/error.hpp"

namespace bsr {

double HqsConfig::mu(int t) const { return mu0 * std::pow(mu_growth, t); }

void HqsConfig::validate() const {
  if (outer_iters < 0) throw ParameterError("hqs: outer_iters must be >= 0");
  if (!(mu0 > 0.0) || !(mu_growth > 1.0)) throw ParameterError("hqs: need mu0 > 0 and growth > 1");
  if (!(lambda >= 0.0)) throw ParameterError("hqs: lambda must be >= 0");
  if (cg_iters < 0 || gn_iters < 0) throw ParameterError("hqs: iteration counts must be >= 0");
}

void PgdConfig::validate() const {
  if (iters < 0) throw ParameterError("pgd: iters must be >= 0");
  if (!(lambda >= 0.0)) throw ParameterError("pgd: lambda must be >= 0");
  if (step && !(*step > 0.0)) throw ParameterError("pgd: step must be > 0");
  if (noise_var && !(*noise_var > 0.0)) throw ParameterError("pgd: noise variance must be > 0");
  if (power_iters < 1) throw ParameterError("pgd: power_iters must be >= 1");
  noise.validate();
}

CgResult conjugate_gradient(const std::function<void(std::span<const double>, std::span<double>)>& apply,
                            std::span<const double> b, std::span<double> x, int max_iters, double tol) {
  const std::size_t n = b.size();
  std::vector<double> r(n), p(n), ap(n);
  apply(x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  p = r;
  double rr = dot(r, r);
  const double bnorm = std::max(norm(b), 1e-300);
  CgResult res;
  res.relative_residual = std::sqrt(rr) / bnorm;
  if (res.relative_residual <= tol) {
    res.converged = true;
    return res;
  }
  for (int it = 0; it < max_iters; ++it) {
    apply(p, ap);
    const double pap = dot(p, ap);
    if (!std::isfinite(pap)) throw NumericalError("conjugate_gradient: non-finite curvature");
    if (pap <= 0.0) break;
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_next = dot(r, r);
    if (!std::isfinite(rr_next)) throw NumericalError("conjugate_gradient: non-finite residual");
    res.iterations = it + 1;
    res.relative_residual = std::sqrt(rr_next) / bnorm;
    if (res.relative_residual <= tol) {
      res.converged = true;
      break;
    }
    const double beta = rr_next / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_next;
  }
  return res;
}

RgbImage single_frame_baseline(const PixelGrid& reference, const ObservationModel& model) {
  const PixelGrid rgb = model.mosaic ? demosaic_bilinear(RawBayerImage(reference, model.cfa)).grid : reference;
  if (rgb.channels() != 3) throw DimensionError("single_frame_baseline: reference has wrong channel count");
  const int s = model.sr_factor;
  const int ph = model.phase();
  PixelGrid out(rgb.rows() * s, rgb.cols() * s, 3);
  auto axis = [](double v, int n) {
    const double t = std::clamp(v, 0.0, static_cast<double>(n - 1));
    const int i0 = std::min(static_cast<int>(std::floor(t)), n - 1);
    return std::tuple<int, int, double>{i0, std::min(i0 + 1, n - 1), t - i0};
  };
  for (int r = 0; r < out.rows(); ++r) {
    const auto [r0, r1, fr] = axis(static_cast<double>(r - ph) / s, rgb.rows());
    for (int c = 0; c < out.cols(); ++c) {
      const auto [c0, c1, fc] = axis(static_cast<double>(c - ph) / s, rgb.cols());
      for (int q = 0; q < 3; ++q) {
        out.at(r, c, q) = (1 - fr) * ((1 - fc) * rgb.at(r0, c0, q) + fc * rgb.at(r0, c1, q)) +
                          fr * ((1 - fc) * rgb.at(r1, c0, q) + fc * rgb.at(r1, c1, q));
      }
    }
  }
  return RgbImage(std::move(out), ColorSpace::LinearSensor);
}

namespace {

void check_inputs(std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                  const ObservationModel& model) {
  if (frames.empty()) throw DimensionError("solver: no frames");
  if (frames.size() != motions.size()) throw DimensionError("solver: motion count does not match frame count");
  for (const auto& f : frames) {
    if (f.rows() != model.lr_rows || f.cols() != model.lr_cols || f.channels() != model.lr_channels()) {
      throw DimensionError("solver: frame shape does not match the observation model");
    }
  }
}

PixelGrid from_vector(const ObservationModel& m, std::vector<double> v) {
  return PixelGrid(m.hr_rows(), m.hr_cols(), 3, std::move(v));
}

double data_term(const StackedOperator& op, std::span<const double> y, std::span<const double> x) {
  const std::vector<double> ux = op.apply(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < ux.size(); ++i) {
    const double d = y[i] - ux[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

void require_finite(const PixelGrid& g, const std::string& what) {
  if (!g.all_finite()) throw NumericalError(what + ": non-finite values");
}

}  // namespace

RgbImage init_estimate(std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                       const ObservationModel& model) {
  check_inputs(frames, motions, model);
  const StackedOperator op(model, motions);
  const std::vector<double> num = op.adjoint(op.stack(frames));
  std::vector<PixelGrid> ones;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    ones.emplace_back(model.lr_rows, model.lr_cols, model.lr_channels(), 1.0);
  }
  const std::vector<double> den = op.adjoint(op.stack(ones));
  const RgbImage fallback = single_frame_baseline(frames[0], model);
  std::vector<double> x(num.size());
  const auto& fb = fallback.grid.vec();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = den[i] > 1e-8 ? num[i] / den[i] : fb[i];
  return RgbImage(from_vector(model, std::move(x)), ColorSpace::LinearSensor);
}

double hqs_energy(const StackedOperator& op, std::span<const double> y, const PixelGrid& x, const PixelGrid& z,
                  double mu, double lambda, const Prior& prior) {
  double coupling = 0.0;
  const auto& xv = x.vec();
  const auto& zv = z.vec();
  for (std::size_t i = 0; i < xv.size(); ++i) coupling += (zv[i] - xv[i]) * (zv[i] - xv[i]);
  const double reg = lambda > 0.0 ? lambda * prior.value(x) : 0.0;
  return data_term(op, y, zv) + 0.5 * mu * coupling + reg;
}

CgResult z_step(const StackedOperator& op, std::span<const double> y, const PixelGrid& x, double mu, int cg_iters,
                double cg_tol, PixelGrid& z) {
  if (!(mu > 0.0)) throw ParameterError("z_step: mu must be > 0");
  std::vector<double> b = op.adjoint(y);
  const auto& xv = x.vec();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += mu * xv[i];
  std::vector<double> tmp(op.rows());
  auto normal = [&](std::span<const double> in, std::span<double> out) {
    op.apply(in, tmp);
    op.adjoint(tmp, out);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += mu * in[i];
  };
  const CgResult res = conjugate_gradient(normal, b, z.vec(), cg_iters, cg_tol);
  require_finite(z, "z_step");
  return res;
}

PixelGrid z_step(const PixelGrid& x, std::span<const MotionParams> motions, std::span<const PixelGrid> frames,
                 const ObservationModel& model, double mu, const HqsConfig& cfg) {
  check_inputs(frames, motions, model);
  const StackedOperator op(model, motions);
  const std::vector<double> y = op.stack(frames);
  PixelGrid z = x;
  z_step(op, y, x, mu, cfg.cg_iters, cfg.cg_tol, z);
  return z;
}

PixelGrid x_step(const PixelGrid& z, double mu, double lambda, const Prior& prior) {
  if (!(mu > 0.0)) throw ParameterError("x_step: mu must be > 0");
  if (lambda == 0.0 || prior.kind() == PriorKind::None) return z;
  return prior.prox(z, lambda / mu);
}

namespace {

double frame_cost(const FrameLinearization& lin, const PixelGrid& y, const ObservationModel& m) {
  const int ch = m.lr_channels();
  double acc = 0.0;
  long count = 0;
  for (int i = 0; i < m.lr_rows; ++i) {
    for (int j = 0; j < m.lr_cols; ++j) {
      if (!lin.mask.at(i, j)) continue;
      for (int q = 0; q < ch; ++q) {
        const double d = y.at(i, j, q) - lin.values[(static_cast<std::size_t>(i) * m.lr_cols + j) * ch + q];
        acc += d * d;
        ++count;
      }
    }
  }
  return count > 0 ? 0.5 * acc / count : std::numeric_limits<double>::infinity();
}

}  // namespace

PStepResult p_step(const PixelGrid& x, std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                   const ObservationModel& m, int gn_iters) {
  check_inputs(frames, motions, m);
  PStepResult out;
  out.motions.assign(motions.begin(), motions.end());
  const int ch = m.lr_channels();
  for (std::size_t k = 1; k < frames.size(); ++k) {
    MotionParams p = motions[k];
    const int n = p.count();
    FrameLinearization lin = linearize_frame(x, p, m, true);
    double cost = frame_cost(lin, frames[k], m);
    bool singular = false;
    for (int it = 0; it < gn_iters; ++it) {
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd jrow(n);
      for (int i = 0; i < m.lr_rows; ++i) {
        for (int j = 0; j < m.lr_cols; ++j) {
          if (!lin.mask.at(i, j)) continue;
          for (int q = 0; q < ch; ++q) {
            const std::size_t row = (static_cast<std::size_t>(i) * m.lr_cols + j) * ch + q;
            for (int a = 0; a < n; ++a) jrow[a] = lin.jacobian[a][row];
            h.noalias() += jrow * jrow.transpose();
            g.noalias() += (frames[k].at(i, j, q) - lin.values[row]) * jrow;
          }
        }
      }
      // Condition number after Jacobi scaling, so pixel and radian units
      // are comparable.
      const Eigen::VectorXd d = h.diagonal();
      if (!(d.minCoeff() > 1e-14 * std::max(1.0, d.maxCoeff()))) {
        singular = true;
        break;
      }
      const Eigen::VectorXd inv_sqrt = d.cwiseSqrt().cwiseInverse();
      const Eigen::MatrixXd hs = inv_sqrt.asDiagonal() * h * inv_sqrt.asDiagonal();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hs);
      const double lmin = eig.eigenvalues().minCoeff();
      if (!(lmin > 0.0) || eig.eigenvalues().maxCoeff() / lmin > 1e8) {
        singular = true;
        break;
      }
      Eigen::VectorXd step = h.ldlt().solve(g);
      bool accepted = false;
      for (int halving = 0; halving <= 5; ++halving) {
        MotionParams trial = p;
        for (int a = 0; a < n; ++a) trial.p[a] += step[a];
        FrameLinearization trial_lin = linearize_frame(x, trial, m, true);
        const double trial_cost = frame_cost(trial_lin, frames[k], m);
        if (trial_cost <= cost) {
          p = trial;
          cost = trial_cost;
          lin = std::move(trial_lin);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
    if (singular) {
      out.singular_frames.push_back(static_cast<int>(k));
    } else {
      out.motions[k] = p;
    }
  }
  return out;
}

SrEstimate hqs_solve(std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                     const ObservationModel& model, const Prior& prior, const HqsConfig& cfg) {
  cfg.validate();
  model.validate();
  check_inputs(frames, motions, model);
  SrEstimate est;
  est.motions.assign(motions.begin(), motions.end());
  auto op = std::make_unique<StackedOperator>(model, est.motions);
  std::vector<double> y = op->stack(frames);

  PixelGrid x = init_estimate(frames, est.motions, model).grid;
  PixelGrid z = x;
  for (int t = 0; t < cfg.outer_iters; ++t) {
    HqsIteration diag;
    diag.mu = cfg.mu(t);
    diag.energy_start = hqs_energy(*op, y, x, z, diag.mu, cfg.lambda, prior);
    CgResult cg;
    try {
      cg = z_step(*op, y, x, diag.mu, cfg.cg_iters, cfg.cg_tol, z);
    } catch (const NumericalError& e) {
      throw NumericalError("hqs iteration " + std::to_string(t) + ": " + e.what());
    }
    diag.cg_iterations = cg.iterations;
    diag.cg_residual = cg.relative_residual;
    diag.energy_after_z = hqs_energy(*op, y, x, z, diag.mu, cfg.lambda, prior);
    x = x_step(z, diag.mu, cfg.lambda, prior);
    require_finite(x, "hqs iteration " + std::to_string(t) + " x-step");
    diag.energy_after_x = hqs_energy(*op, y, x, z, diag.mu, cfg.lambda, prior);
    diag.energy_after_p = diag.energy_after_x;
    if (cfg.motion_refine && frames.size() > 1) {
      PStepResult ps = p_step(x, frames, est.motions, model, cfg.gn_iters);
      est.motions = std::move(ps.motions);
      diag.singular_frames = std::move(ps.singular_frames);
      op = std::make_unique<StackedOperator>(model, est.motions);
      y = op->stack(frames);
      diag.energy_after_p = hqs_energy(*op, y, x, z, diag.mu, cfg.lambda, prior);
    }
    diag.data_term = data_term(*op, y, x.vec());
    diag.prior_value = prior.value(x);
    est.diagnostics.hqs.push_back(std::move(diag));
  }
  est.x = RgbImage(std::move(x), ColorSpace::LinearSensor);
  return est;
}

SrEstimate hqs_solve(const Burst& burst, std::span<const MotionParams> motions, const ObservationModel& model,
                     const Prior& prior, const HqsConfig& cfg) {
  const auto frames = burst.grids();
  return hqs_solve(frames, motions, model, prior, cfg);
}

double power_iteration(const StackedOperator& op, int iters) {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> v(op.cols());
  for (double& e : v) e = unit(rng);
  std::vector<double> tmp(op.rows()), w(op.cols());
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    const double nv = norm(v);
    if (nv == 0.0) return 0.0;
    for (double& e : v) e /= nv;
    op.apply(v, tmp);
    op.adjoint(tmp, w);
    lambda = dot(v, w);
    v.swap(w);
  }
  return lambda;
}

double data_noise_variance(std::span<const PixelGrid> frames, const StackedOperator& op, const PgdConfig& cfg) {
  if (cfg.noise_var) return *cfg.noise_var;
  double sum = 0.0;
  long count = 0;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& mask = op.masks()[k];
    const PixelGrid& f = frames[k];
    for (int i = 0; i < f.rows(); ++i) {
      for (int j = 0; j < f.cols(); ++j) {
        if (!mask.at(i, j)) continue;
        for (int q = 0; q < f.channels(); ++q) {
          sum += f.at(i, j, q);
          ++count;
        }
      }
    }
  }
  const double mean = count > 0 ? sum / count : 0.0;
  return std::max(cfg.noise.shot_slope * std::max(mean, 0.0) + cfg.noise.read_var, 1e-8);
}

SrEstimate pgd_solve(std::span<const PixelGrid> frames, std::span<const MotionParams> motions,
                     const ObservationModel& model, const Prior& prior, const PgdConfig& cfg) {
  cfg.validate();
  model.validate();
  check_inputs(frames, motions, model);
  SrEstimate est;
  est.motions.assign(motions.begin(), motions.end());
  const StackedOperator op(model, est.motions);
  const std::vector<double> y = op.stack(frames);
  const double sigma2 = data_noise_variance(frames, op, cfg);
  const double weight = 1.0 / (sigma2 * static_cast<double>(frames.size()));

  auto& diag = est.diagnostics;
  diag.noise_var = sigma2;
  // 20 power iterations underestimate the top eigenvalue slightly; the 5%
  // margin keeps the step below 1/L.
  diag.lipschitz = 1.05 * weight * power_iteration(op, cfg.power_iters);
  diag.step = cfg.step ? *cfg.step : 1.0 / diag.lipschitz;

  auto objective = [&](const PixelGrid& x, double& data) {
    data = weight * data_term(op, y, x.vec());
    return data + (cfg.lambda > 0.0 ? cfg.lambda * prior.value(x) : 0.0);
  };

  PixelGrid x = init_estimate(frames, est.motions, model).grid;
  double data = 0.0;
  diag.initial_objective = objective(x, data);
  std::vector<double> resid(op.rows()), grad(op.cols());
  for (int j = 0; j < cfg.iters; ++j) {
    op.apply(x.vec(), resid);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] -= y[i];
    op.adjoint(resid, grad);
    PixelGrid moved = x;
    auto& mv = moved.vec();
    for (std::size_t i = 0; i < mv.size(); ++i) mv[i] -= diag.step * weight * grad[i];
    if (!moved.all_finite()) throw NumericalError("pgd iteration " + std::to_string(j) + ": non-finite gradient");
    x = (cfg.lambda > 0.0 && prior.kind() != PriorKind::None) ? prior.prox(moved, diag.step * cfg.lambda)
                                                               : std::move(moved);
    PgdIteration it;
    it.objective = objective(x, it.data_term);
    diag.pgd.push_back(it);
  }
  est.x = RgbImage(std::move(x), ColorSpace::LinearSensor);
  return est;
}

SrEstimate pgd_solve(const Burst& burst, std::span<const MotionParams> motions, const ObservationModel& model,
                     const Prior& prior, const PgdConfig& cfg) {
  const auto frames = burst.grids();
  return pgd_solve(frames, motions, model, prior, cfg);
}

}  // namespace bsr
