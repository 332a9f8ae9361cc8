#include "bsr/prior.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bsr/error.hpp"

namespace bsr {

std::string_view to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::None: return "none";
    case PriorKind::Tikhonov: return "tikhonov";
    case PriorKind::TV: return "tv";
  }
  return "?";
}

PriorKind parse_prior(std::string_view name) {
  for (auto k : {PriorKind::None, PriorKind::Tikhonov, PriorKind::TV}) {
    if (to_string(k) == name) return k;
  }
  throw ParameterError("unknown prior '" + std::string(name) + "'");
}

namespace {

// Plane view of one channel of an interleaved grid.
struct Plane {
  int rows, cols;
  std::vector<double> v;
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

Plane extract(const PixelGrid& g, int ch) {
  Plane p{g.rows(), g.cols(), std::vector<double>(static_cast<std::size_t>(g.rows()) * g.cols())};
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) p.at(r, c) = g.at(r, c, ch);
  }
  return p;
}

void insert(PixelGrid& g, int ch, const Plane& p) {
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) g.at(r, c, ch) = p.at(r, c);
  }
}

void grad(const Plane& x, Plane& gx, Plane& gy) {
  for (int r = 0; r < x.rows; ++r) {
    for (int c = 0; c < x.cols; ++c) {
      gx.at(r, c) = c + 1 < x.cols ? x.at(r, c + 1) - x.at(r, c) : 0.0;
      gy.at(r, c) = r + 1 < x.rows ? x.at(r + 1, c) - x.at(r, c) : 0.0;
    }
  }
}

// Adjoint of grad (= minus the divergence).
void grad_adjoint(const Plane& px, const Plane& py, Plane& out) {
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      double v = 0.0;
      if (c + 1 < out.cols) v -= px.at(r, c);
      if (c > 0) v += px.at(r, c - 1);
      if (r + 1 < out.rows) v -= py.at(r, c);
      if (r > 0) v += py.at(r - 1, c);
      out.at(r, c) = v;
    }
  }
}

double plane_tv(const Plane& x) {
  double tv = 0.0;
  for (int r = 0; r < x.rows; ++r) {
    for (int c = 0; c < x.cols; ++c) {
      const double dx = c + 1 < x.cols ? x.at(r, c + 1) - x.at(r, c) : 0.0;
      const double dy = r + 1 < x.rows ? x.at(r + 1, c) - x.at(r, c) : 0.0;
      tv += std::sqrt(dx * dx + dy * dy);
    }
  }
  return tv;
}

Plane tv_prox_plane(const Plane& z, double tau, int max_iters, double tol, TvProxStats& stats) {
  const int rows = z.rows, cols = z.cols;
  const std::size_t n = z.v.size();
  Plane qx{rows, cols, std::vector<double>(n, 0.0)}, qy = qx;
  Plane rx = qx, ry = qx;
  Plane x = z, gx = qx, gy = qx, tmp = qx;
  const double ztv = plane_tv(z);
  const double step = 1.0 / (8.0 * tau);
  double t = 1.0;

  auto primal = [&](const Plane& px, const Plane& py) {
    grad_adjoint(px, py, tmp);
    for (std::size_t i = 0; i < n; ++i) x.v[i] = z.v[i] - tau * tmp.v[i];
  };
  auto gap_of = [&]() {
    grad(x, gx, gy);
    double inner = 0.0;
    for (std::size_t i = 0; i < n; ++i) inner += gx.v[i] * qx.v[i] + gy.v[i] * qy.v[i];
    return tau * (plane_tv(x) - inner);
  };

  stats.iterations = 0;
  stats.gap = 0.0;
  if (ztv == 0.0) return z;
  for (int it = 0; it < max_iters; ++it) {
    primal(rx, ry);
    grad(x, gx, gy);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    for (std::size_t i = 0; i < n; ++i) {
      double ax = rx.v[i] + step * gx.v[i];
      double ay = ry.v[i] + step * gy.v[i];
      const double mag = std::max(1.0, std::sqrt(ax * ax + ay * ay));
      ax /= mag;
      ay /= mag;
      rx.v[i] = ax + beta * (ax - qx.v[i]);
      ry.v[i] = ay + beta * (ay - qy.v[i]);
      qx.v[i] = ax;
      qy.v[i] = ay;
    }
    t = t_next;
    stats.iterations = it + 1;
    if ((it + 1) % 10 == 0 || it + 1 == max_iters) {
      primal(qx, qy);
      stats.gap = gap_of();
      if (stats.gap <= tol * tau * ztv) return x;
    }
  }
  primal(qx, qy);
  stats.gap = gap_of();
  return x;
}

class NoPrior final : public Prior {
 public:
  PriorKind kind() const override { return PriorKind::None; }
  double value(const PixelGrid&) const override { return 0.0; }
  PixelGrid prox(const PixelGrid& z, double) const override { return z; }
};

class TvPrior final : public Prior {
 public:
  explicit TvPrior(TvOptions o) : opts_(o) {}
  PriorKind kind() const override { return PriorKind::TV; }
  double value(const PixelGrid& x) const override { return total_variation(x); }
  PixelGrid prox(const PixelGrid& z, double tau) const override {
    return tv_prox(z, tau, opts_.max_iters, opts_.tol);
  }

 private:
  TvOptions opts_;
};

class TikhonovPrior final : public Prior {
 public:
  explicit TikhonovPrior(TikhonovOptions o) : opts_(o) {}
  PriorKind kind() const override { return PriorKind::Tikhonov; }
  double value(const PixelGrid& x) const override { return gradient_energy(x); }

  // Solves (I + tau grad^T grad) x = z per channel by conjugate gradients.
  PixelGrid prox(const PixelGrid& z, double tau) const override {
    if (tau < 0.0) throw ParameterError("prox: tau must be >= 0");
    if (tau == 0.0) return z;
    PixelGrid out = z;
    for (int ch = 0; ch < z.channels(); ++ch) {
      const Plane b = extract(z, ch);
      const std::size_t n = b.v.size();
      Plane x = b, gx = b, gy = b, ax = b;
      auto apply = [&](const Plane& in, Plane& res) {
        grad(in, gx, gy);
        grad_adjoint(gx, gy, res);
        for (std::size_t i = 0; i < n; ++i) res.v[i] = in.v[i] + tau * res.v[i];
      };
      apply(x, ax);
      Plane r = b;
      for (std::size_t i = 0; i < n; ++i) r.v[i] = b.v[i] - ax.v[i];
      Plane p = r;
      double rr = 0.0, bb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        rr += r.v[i] * r.v[i];
        bb += b.v[i] * b.v[i];
      }
      for (int it = 0; it < opts_.cg_iters && rr > opts_.cg_tol * opts_.cg_tol * bb; ++it) {
        apply(p, ax);
        double pap = 0.0;
        for (std::size_t i = 0; i < n; ++i) pap += p.v[i] * ax.v[i];
        const double alpha = rr / pap;
        double rr_next = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          x.v[i] += alpha * p.v[i];
          r.v[i] -= alpha * ax.v[i];
          rr_next += r.v[i] * r.v[i];
        }
        const double beta = rr_next / rr;
        for (std::size_t i = 0; i < n; ++i) p.v[i] = r.v[i] + beta * p.v[i];
        rr = rr_next;
      }
      insert(out, ch, x);
    }
    return out;
  }

 private:
  TikhonovOptions opts_;
};

}  // namespace

std::unique_ptr<Prior> make_prior(PriorKind kind, const TvOptions& tv, const TikhonovOptions& tik) {
  switch (kind) {
    case PriorKind::None: return std::make_unique<NoPrior>();
    case PriorKind::Tikhonov: return std::make_unique<TikhonovPrior>(tik);
    case PriorKind::TV: return std::make_unique<TvPrior>(tv);
  }
  throw ParameterError("unknown prior kind");
}

double total_variation(const PixelGrid& x) {
  double tv = 0.0;
  for (int ch = 0; ch < x.channels(); ++ch) tv += plane_tv(extract(x, ch));
  return tv;
}

double gradient_energy(const PixelGrid& x) {
  double e = 0.0;
  for (int ch = 0; ch < x.channels(); ++ch) {
    const Plane p = extract(x, ch);
    Plane gx = p, gy = p;
    grad(p, gx, gy);
    for (std::size_t i = 0; i < p.v.size(); ++i) e += gx.v[i] * gx.v[i] + gy.v[i] * gy.v[i];
  }
  return 0.5 * e;
}

PixelGrid tv_prox(const PixelGrid& z, double tau, int inner_iters, double tol, TvProxStats* stats) {
  if (tau < 0.0) throw ParameterError("tv_prox: tau must be >= 0");
  if (tau == 0.0) return z;
  PixelGrid out(z.rows(), z.cols(), z.channels());
  TvProxStats total;
  for (int ch = 0; ch < z.channels(); ++ch) {
    TvProxStats s;
    insert(out, ch, tv_prox_plane(extract(z, ch), tau, inner_iters, tol, s));
    total.iterations = std::max(total.iterations, s.iterations);
    total.gap += s.gap;
  }
  if (stats) *stats = total;
  return out;
}

}  // namespace bsr
