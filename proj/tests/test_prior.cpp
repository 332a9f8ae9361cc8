#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "bsr/error.hpp"
#include "bsr/prior.hpp"
#include "scene.hpp"

using namespace bsr;

namespace {

double prox_objective(const PixelGrid& x, const PixelGrid& z, double tau) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d += (x.vec()[i] - z.vec()[i]) * (x.vec()[i] - z.vec()[i]);
  return 0.5 * d + tau * total_variation(x);
}

PixelGrid step_edge(int n, double lo, double hi) {
  PixelGrid z(n, n, 1);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) z.at(r, c) = c < n / 2 ? lo : hi;
  }
  return z;
}

// Plain subgradient descent with diminishing steps; returns the best
// objective seen. Slow but shares no code with the dual solver.
double subgradient_oracle(const PixelGrid& z, double tau, int iters) {
  const int rows = z.rows(), cols = z.cols();
  PixelGrid x = z, g(rows, cols, 1);
  double best = prox_objective(x, z, tau);
  for (int k = 0; k < iters; ++k) {
    for (std::size_t i = 0; i < x.size(); ++i) g.vec()[i] = x.vec()[i] - z.vec()[i];
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const double dx = c + 1 < cols ? x.at(r, c + 1) - x.at(r, c) : 0.0;
        const double dy = r + 1 < rows ? x.at(r + 1, c) - x.at(r, c) : 0.0;
        const double m = std::hypot(dx, dy);
        if (m < 1e-12) continue;
        if (c + 1 < cols) {
          g.at(r, c + 1) += tau * dx / m;
          g.at(r, c) -= tau * dx / m;
        }
        if (r + 1 < rows) {
          g.at(r + 1, c) += tau * dy / m;
          g.at(r, c) -= tau * dy / m;
        }
      }
    }
    const double a = 0.05 / std::sqrt(k + 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) x.vec()[i] -= a * g.vec()[i];
    best = std::min(best, prox_objective(x, z, tau));
  }
  return best;
}

double dist(const PixelGrid& a, const PixelGrid& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a.vec()[i] - b.vec()[i]) * (a.vec()[i] - b.vec()[i]);
  return std::sqrt(d);
}

}  // namespace

TEST(Prior, NamesRoundTrip) {
  for (auto k : {PriorKind::None, PriorKind::Tikhonov, PriorKind::TV}) EXPECT_EQ(parse_prior(to_string(k)), k);
  EXPECT_THROW(parse_prior("l1"), ParameterError);
}

TEST(TotalVariation, HandComputed) {
  PixelGrid x(2, 2, 1, std::vector<double>{0.0, 3.0, 4.0, 4.0});
  // (0,0): dx=3, dy=4 -> 5; (0,1): dy=1; (1,0): dx=0
  EXPECT_DOUBLE_EQ(total_variation(x), 6.0);
  EXPECT_DOUBLE_EQ(gradient_energy(x), 0.5 * (9 + 16 + 1));
}

TEST(TvProx, ZeroTauIsIdentity) {
  const PixelGrid z = test::random_grid(16, 16, 3, 1);
  EXPECT_EQ(tv_prox(z, 0.0, 100, 1e-6), z);
  EXPECT_THROW(tv_prox(z, -1.0, 100, 1e-6), ParameterError);
}

TEST(TvProx, ConstantIsFixedPoint) {
  const PixelGrid z(12, 9, 3, 0.37);
  for (double tau : {0.01, 1.0, 100.0}) EXPECT_EQ(tv_prox(z, tau, 100, 1e-6), z);
}

TEST(TvProx, StepEdgeClosedForm) {
  // Each side of a vertical edge between n/2-pixel halves moves toward the
  // other by tau / (n/2); the rows stay constant.
  const int n = 32;
  const double tau = 0.1;
  const PixelGrid z = step_edge(n, 0.2, 0.8);
  TvProxStats stats;
  const PixelGrid x = tv_prox(z, tau, 2000, 1e-8, &stats);
  const double delta = tau / (n / 2);
  const double expected = n * (0.5 * n * delta * delta + tau * (0.6 - 2 * delta));
  EXPECT_NEAR(prox_objective(x, z, tau), expected, 1e-3 * expected);
  EXPECT_NEAR(x.at(5, 0), 0.2 + delta, 1e-4);
  EXPECT_NEAR(x.at(5, n - 1), 0.8 - delta, 1e-4);
}

TEST(TvProx, MatchesSubgradientOracle) {
  const int n = 32;
  const double tau = 0.1;
  PixelGrid z = step_edge(n, 0.0, 1.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (double& v : z.vec()) v += noise(rng);
  const double ours = prox_objective(tv_prox(z, tau, 3000, 1e-7), z, tau);
  const double oracle = subgradient_oracle(z, tau, 40000);
  EXPECT_NEAR(ours, oracle, 1e-3 * oracle);
  // The exact minimizer can only be below any subgradient iterate.
  EXPECT_LE(ours, oracle * (1 + 1e-9));
}

TEST(TvProx, DefaultStopsOnGap) {
  const PixelGrid z = test::random_grid(24, 24, 1, 9);
  TvProxStats stats;
  tv_prox(z, 0.05, 300, 1e-5, &stats);
  EXPECT_LE(stats.gap, 1e-5 * 0.05 * total_variation(z));
  EXPECT_LT(stats.iterations, 300);
}

TEST(Tikhonov, MatchesDenseSolve) {
  const int n = 8;
  const double tau = 0.7;
  const PixelGrid z = test::random_grid(n, n, 1, 3);
  // Dense forward-difference operator G with zero past the last row/column.
  const int m = n * n;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2 * m, m);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int i = r * n + c;
      if (c + 1 < n) {
        G(i, i) = -1;
        G(i, i + 1) = 1;
      }
      if (r + 1 < n) {
        G(m + i, i) = -1;
        G(m + i, i + n) = 1;
      }
    }
  }
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m) + tau * G.transpose() * G;
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(z.vec().data(), m);
  const Eigen::VectorXd ref = A.ldlt().solve(b);
  const PixelGrid x = make_prior(PriorKind::Tikhonov)->prox(z, tau);
  for (int i = 0; i < m; ++i) EXPECT_NEAR(x.vec()[i], ref[i], 1e-8);
}

TEST(Prior, NoneIsIdentity) {
  const auto p = make_prior(PriorKind::None);
  const PixelGrid z = test::random_grid(5, 7, 3, 2);
  EXPECT_EQ(p->prox(z, 3.0), z);
  EXPECT_EQ(p->value(z), 0.0);
}

TEST(Prior, ProxZeroTauIsIdentity) {
  const PixelGrid z = test::random_grid(10, 10, 3, 4);
  for (auto k : {PriorKind::None, PriorKind::Tikhonov, PriorKind::TV}) EXPECT_EQ(make_prior(k)->prox(z, 0.0), z);
}

TEST(Prior, ProxIsNonExpansive) {
  for (auto k : {PriorKind::Tikhonov, PriorKind::TV}) {
    const auto prior = make_prior(k, TvOptions{2000, 1e-9});
    for (int trial = 0; trial < 20; ++trial) {
      const PixelGrid a = test::random_grid(12, 12, 3, 100 + trial);
      const PixelGrid b = test::random_grid(12, 12, 3, 200 + trial);
      const double tau = 0.02 * (trial + 1);
      EXPECT_LE(dist(prior->prox(a, tau), prior->prox(b, tau)), dist(a, b) * (1 + 1e-6)) << to_string(k);
    }
  }
}

TEST(Prior, ProxMinimizesItsObjective) {
  // prox(z) beats random perturbations of itself on 1/2||x-z||^2 + tau R(x).
  const auto prior = make_prior(PriorKind::TV, TvOptions{2000, 1e-9});
  const PixelGrid z = test::random_grid(10, 10, 1, 6);
  const double tau = 0.1;
  const PixelGrid x = prior->prox(z, tau);
  const double fx = prox_objective(x, z, tau);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (int t = 0; t < 50; ++t) {
    PixelGrid y = x;
    for (double& v : y.vec()) v += n(rng);
    EXPECT_GE(prox_objective(y, z, tau), fx - 1e-9);
  }
}
