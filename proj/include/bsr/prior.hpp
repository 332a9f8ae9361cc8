#pragma once

#include <memory>
#include <string_view>

#include "bsr/image.hpp"

namespace bsr {

enum class PriorKind { None, Tikhonov, TV };
std::string_view to_string(PriorKind kind);
PriorKind parse_prior(std::string_view name);

/// Regularizer R with its proximal map
///     prox(z, tau) = argmin_x 1/2 ||x - z||^2 + tau R(x).
/// Implementations act on each channel independently. A learned denoiser
/// would plug in here.
class Prior {
 public:
  virtual ~Prior() = default;
  virtual PriorKind kind() const = 0;
  virtual double value(const PixelGrid& x) const = 0;
  virtual PixelGrid prox(const PixelGrid& z, double tau) const = 0;
};

struct TvOptions {
  int max_iters = 300;
  /// Stop when the duality gap drops below tol * tau * TV(z).
  double tol = 1e-5;
};

struct TikhonovOptions {
  int cg_iters = 200;
  double cg_tol = 1e-10;
};

std::unique_ptr<Prior> make_prior(PriorKind kind, const TvOptions& tv = {}, const TikhonovOptions& tik = {});

/// Isotropic total variation with forward differences and a zero difference
/// past the last row/column, summed over channels.
double total_variation(const PixelGrid& x);

struct TvProxStats {
  int iterations = 0;
  double gap = 0.0;
};

/// min_x 1/2 ||x - z||^2 + tau TV(x) by accelerated projected gradient on
/// the dual (Beck-Teboulle), stopped on the duality gap.
PixelGrid tv_prox(const PixelGrid& z, double tau, int inner_iters, double tol, TvProxStats* stats = nullptr);

/// 1/2 ||grad x||^2 with the same difference operator as the TV.
double gradient_energy(const PixelGrid& x);

}  // namespace bsr
