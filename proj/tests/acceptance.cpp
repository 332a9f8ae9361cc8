// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "bsr/camera.hpp"
#include "bsr/cli.hpp"
#include "bsr/ensemble.hpp"
#include "bsr/error.hpp"
#include "bsr/evaluation.hpp"
#include "bsr/forward_model.hpp"
#include "bsr/registration.hpp"
#include "bsr/solver.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "scene.hpp"

using namespace bsr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs a command with its stdout table suppressed.
int quiet(const std::function<int()>& f) {
  std::ostringstream sink;
  auto* old = std::cout.rdbuf(sink.rdbuf());
  int rc = 1;
  try {
    rc = f();
  } catch (...) {
    std::cout.rdbuf(old);
    throw;
  }
  std::cout.rdbuf(old);
  return rc;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bsr_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void operators(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst_warp = 0, worst_blur = 0, worst_dm = 0, worst_stack = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto model = static_cast<MotionModel>(trial % 3);
    const PixelGrid x = test::random_grid(20, 18, 3, 1000 + trial, -1, 1);
    const PixelGrid y = test::random_grid(20, 18, 3, 2000 + trial, -1, 1);
    const MotionParams p = test::random_motion(rng, grid_center(20, 18), model);
    worst_warp = std::max(worst_warp,
                          test::rel_dot_gap(x, warp(x, p, Direction::Apply), y, warp(y, p, Direction::Adjoint)));

    const BlurKernel k = trial % 2 ? BlurKernel::box(4) : BlurKernel::gaussian(1.3);
    worst_blur = std::max(worst_blur,
                          test::rel_dot_gap(x, blur(x, k, Direction::Apply), y, blur(y, k, Direction::Adjoint)));

    ObservationModel m = ObservationModel::make(6, 4, trial % 2 ? 4 : 3, static_cast<CfaPattern>(trial % 4));
    m.mosaic = trial % 3 != 0;
    const PixelGrid hx = test::random_grid(m.hr_rows(), m.hr_cols(), 3, 3000 + trial, -1, 1);
    const PixelGrid ly = test::random_grid(m.lr_rows, m.lr_cols, m.lr_channels(), 4000 + trial, -1, 1);
    worst_dm = std::max(worst_dm, test::rel_dot_gap(hx, decimate_mosaic(hx, m, Direction::Apply), ly,
                                                    decimate_mosaic(ly, m, Direction::Adjoint)));

    const ObservationModel sm = ObservationModel::make(6, 6, 4, static_cast<CfaPattern>(trial % 4));
    std::vector<MotionParams> motions{MotionParams::identity(MotionModel::Euclidean, sm.hr_center())};
    for (int f = 0; f < 3; ++f) motions.push_back(test::random_motion(rng, sm.hr_center()));
    const StackedOperator op(sm, motions);
    const PixelGrid sx = test::random_grid(sm.hr_rows(), sm.hr_cols(), 3, 5000 + trial, -1, 1);
    const PixelGrid sy = test::random_grid(static_cast<int>(op.rows()), 1, 1, 6000 + trial, -1, 1);
    const std::vector<double> ux = op.apply(sx.values());
    const std::vector<double> uty = op.adjoint(sy.values());
    worst_stack = std::max(worst_stack, std::abs(dot(ux, sy.values()) - dot(sx.values(), uty)) /
                                            (norm(sx.values()) * norm(sy.values())));
  }
  const double secs = seconds_since(t0);
  o.detail << "worst rel gap warp " << worst_warp << ", blur " << worst_blur << ", decimate_mosaic " << worst_dm
           << ", stacked " << worst_stack << "; " << secs << " s";
  o.require(std::max({worst_warp, worst_blur, worst_dm, worst_stack}) <= 1e-5, "gap <= 1e-5");
  o.require(secs < 10.0, "runtime < 10 s");
}

void cfa_round_trip(Outcome& o) {
  long mismatches = 0, checked = 0;
  for (int phase = 0; phase < 4; ++phase) {
    const auto cfa = static_cast<CfaPattern>(phase);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const RgbImage x(test::random_grid(32, 32, 3, 100 + seed));
      const RgbImage d = demosaic_bilinear(mosaic(x, cfa));
      for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
          const int ch = cfa_channel(cfa, r, c);
          mismatches += d.grid.at(r, c, ch) != x.grid.at(r, c, ch);
          ++checked;
        }
      }
    }
  }
  o.detail << mismatches << " mismatches over " << checked << " sampled sites, 4 phases";
  o.require(mismatches == 0, "exact");
}

void registration(Outcome& o) {
  const int n = 96;
  const Vec2 c = grid_center(n, n);
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> t(-8.0, 8.0), th(-1.0, 1.0);
  std::normal_distribution<double> read(0.0, 0.02);
  double worst_t = 0, worst_r = 0, worst_noisy_t = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    // Keep |t| <= 8 as a vector, not just per component.
    double tx = t(rng), ty = t(rng);
    const double len = std::hypot(tx, ty);
    if (len > 8.0) tx *= 8.0 / len, ty *= 8.0 / len;
    const MotionParams truth = MotionParams::euclidean(tx, ty, th(rng) * kDeg, c);
    test::TextureOptions opt;
    const PixelGrid ref = test::smooth_texture(n, n, 50 + trial, opt);
    opt.warp = &truth;
    const PixelGrid mov = test::smooth_texture(n, n, 50 + trial, opt);
    const auto id = MotionParams::identity(MotionModel::Euclidean, c);

    const MotionParams est = lk_align(ref, mov, MotionModel::Euclidean, LkConfig{}, id).params;
    worst_t = std::max(worst_t, std::hypot(est.tx() - truth.tx(), est.ty() - truth.ty()));
    worst_r = std::max(worst_r, std::abs(est.angle() - truth.angle()) / kDeg);

    PixelGrid nref = ref, nmov = mov;
    for (double& v : nref.vec()) v += read(rng);
    for (double& v : nmov.vec()) v += read(rng);
    const MotionParams noisy = lk_align(nref, nmov, MotionModel::Euclidean, LkConfig{}, id).params;
    worst_noisy_t = std::max(worst_noisy_t, std::hypot(noisy.tx() - truth.tx(), noisy.ty() - truth.ty()));
  }
  o.detail << trials << " pairs " << n << "x" << n << ": worst translation error " << worst_t
           << " px, rotation " << worst_r << " deg; with sigma 0.02 noise " << worst_noisy_t << " px";
  o.require(worst_t < 0.1, "translation < 0.1 px");
  o.require(worst_r < 0.05, "rotation < 0.05 deg");
  o.require(worst_noisy_t < 0.3, "noisy translation < 0.3 px");
}

void solver_descent(Outcome& o) {
  double worst_hqs = 0.0, worst_pgd = 0.0, slowest = 0.0;
  int solves = 0;
  for (bool noisy : {false, true}) {
    const SyntheticBurstSample s = test::fixed_burst(24, noisy);
    for (auto kind : {PriorKind::TV, PriorKind::Tikhonov}) {
      auto t0 = Clock::now();
      const SrEstimate h = hqs_solve(s.burst, s.gt_motions, s.model, *make_prior(kind), HqsConfig{});
      slowest = std::max(slowest, seconds_since(t0));
      for (const auto& it : h.diagnostics.hqs) {
        worst_hqs = std::max(worst_hqs, (it.energy_after_z - it.energy_start) / it.energy_start);
        worst_hqs = std::max(worst_hqs, (it.energy_after_x - it.energy_after_z) / it.energy_after_z);
      }

      PgdConfig pc;
      pc.noise = NoiseParams::challenge();
      t0 = Clock::now();
      const SrEstimate p = pgd_solve(s.burst, s.gt_motions, s.model, *make_prior(kind, TvOptions{1000, 1e-8}), pc);
      slowest = std::max(slowest, seconds_since(t0));
      o.require(p.diagnostics.step <= 1.0 / p.diagnostics.lipschitz * (1 + 1e-12), "pgd step <= 1/L");
      double prev = p.diagnostics.initial_objective;
      for (const auto& it : p.diagnostics.pgd) {
        worst_pgd = std::max(worst_pgd, (it.objective - prev) / prev);
        prev = it.objective;
      }
      solves += 2;
    }
  }
  o.detail << solves << " solves at 24x24 -> 96x96: worst relative increase hqs " << worst_hqs << ", pgd "
           << worst_pgd << "; slowest solve " << slowest << " s";
  o.require(worst_hqs <= 1e-6, "hqs half-steps");
  o.require(worst_pgd <= 1e-6, "pgd iterations");
  o.require(slowest < 30.0, "each solve < 30 s");
}

// The fixed noisy benchmark sample, written once and shared by the gain and
// TTA criteria.
constexpr int kBenchLr = 48;

const fs::path& fixed_noisy_corpus() {
  static const fs::path dir = [] {
    const fs::path d = scratch("fixed");
    cli::write_burst(d / "fixed", test::fixed_burst(kBenchLr, true), 3);
    return d;
  }();
  return dir;
}

struct BenchSummary {
  std::map<std::string, double> psnr;
  int failures = 0;
};

BenchSummary bench(const fs::path& corpus, const std::string& methods) {
  cli::RunConfig cfg;
  cfg.set("bench_methods", methods);
  const int rc = quiet([&] { return cli::cmd_bench(corpus, cfg); });
  const auto report = nlohmann::json::parse(slurp(corpus / "bench_report.json"));
  BenchSummary out;
  out.failures = rc != 0;
  for (const auto& row : report["summary"]) {
    out.psnr[row["method"].get<std::string>()] = row["mean_psnr_db"].get<double>();
    out.failures += row["failures"].get<int>();
  }
  return out;
}

void multi_frame_gain(Outcome& o) {
  const SyntheticBurstSample clean = test::fixed_burst(kBenchLr, false);
  const double base = psnr(single_frame_baseline(clean.burst.frames[0].grid, clean.model), clean.gt_linear);
  const SrEstimate r = hqs_solve(clean.burst, clean.gt_motions, clean.model, *make_prior(PriorKind::TV), HqsConfig{});
  const double ours = psnr(r.x, clean.gt_linear);

  // Noisy case goes through the bench path: registered motions, TV prior.
  const BenchSummary b = bench(fixed_noisy_corpus(), "baseline,hqs");
  const double nbase = b.psnr.at("baseline"), nours = b.psnr.at("hqs");
  o.detail << "fixed scene " << kBenchLr << "x" << kBenchLr << " x4, 14 frames: clean known motions hqs " << ours
           << " dB vs baseline " << base << " dB (" << ours - base << "); noisy estimated motions hqs " << nours
           << " dB vs baseline " << nbase << " dB (" << nours - nbase << ")";
  o.require(b.failures == 0, "bench ran");
  o.require(ours - base >= 3.0, "clean gain >= 3 dB");
  o.require(nours - nbase >= 1.0, "noisy gain >= 1 dB");
}

void noise_model(Outcome& o) {
  const NoiseParams n = NoiseParams::challenge();
  double worst = 0.0;
  for (double level : {0.1, 0.5, 0.9}) {
    const RawBayerImage clean(PixelGrid(1000, 1000, 1, level), CfaPattern::RGGB);
    const RawBayerImage noisy = add_noise(clean, n, 77 + static_cast<std::uint64_t>(level * 10));
    double sum = 0.0, sq = 0.0;
    for (double v : noisy.grid.vec()) {
      sum += v - level;
      sq += (v - level) * (v - level);
    }
    const double N = static_cast<double>(noisy.grid.size());
    const double var = sq / N - (sum / N) * (sum / N);
    const double expected = n.shot_slope * level + n.read_var;
    const double rel = std::abs(var - expected) / expected;
    worst = std::max(worst, rel);
    o.detail << "x=" << level << " rel dev " << rel << "; ";
  }
  o.detail << "N=1e6 each";
  o.require(worst < 0.02, "within 2%");
}

void metrics(Outcome& o) {
  auto linear = [](PixelGrid g) { return RgbImage(std::move(g), ColorSpace::LinearSensor); };
  const RgbImage gt = linear(test::textured_scene(128, 128, 2).grid);

  o.require(psnr(gt, gt) == kPsnrCap, "psnr cap");
  const double zero = psnr(linear(PixelGrid(8, 8, 3, 1.0)), linear(PixelGrid(8, 8, 3, 0.0)));
  o.require(std::abs(zero) < 1e-12, "psnr 0 dB");
  RgbImage off = gt;
  for (double& v : off.grid.vec()) v += 0.1;
  const double twenty = psnr(off, gt);
  o.require(std::abs(twenty - 20.0) < 1e-9, "psnr 20 dB");
  const double self = ssim(gt, gt);
  o.require(std::abs(self - 1.0) < 1e-12, "ssim(x,x) = 1");

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  double worst_map = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    ColorMap3x3 m0;
    for (int i = 0; i < 9; ++i) m0[i] = (i % 4 == 0 ? 1.0 : 0.0) + u(rng);
    const RgbImage pred = linear(test::textured_scene(32, 32, 10 + trial).grid);
    const ColorFit fit = fit_color_map(pred, apply_color_map(pred, m0));
    for (int i = 0; i < 9; ++i) worst_map = std::max(worst_map, std::abs(fit.map[i] - m0[i]));
  }
  o.require(worst_map <= 1e-6, "color map to 1e-6");

  const RgbImage shifted = linear(warp(gt.grid, MotionParams::translation(1.5, -1.5), Direction::Apply));
  const double plain = psnr(shifted, gt);
  const double aligned = aligned_score(shifted, gt).psnr;
  o.require(aligned >= plain + 10.0, "aligned +10 dB");

  o.detail << "psnr 0 dB case " << zero << ", 20 dB case " << twenty << "; ssim(x,x) " << self
           << "; color map worst error " << worst_map << "; 1.5 px shift plain " << plain << " dB, aligned "
           << aligned << " dB";
}

void derivative_checks(Outcome& o) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> n(0.0, 1.0);
  const PixelGrid x = test::textured_scene(40, 40, 5).grid;
  double worst_order = 1e9, worst_rel = 0.0;
  for (auto model : {MotionModel::Translation, MotionModel::Euclidean, MotionModel::Affine}) {
    for (int trial = 0; trial < 3; ++trial) {
      const MotionParams p = test::random_motion(rng, grid_center(40, 40), model);
      std::vector<double> dir(p.count());
      for (double& d : dir) d = n(rng);
      for (int j = 2; j < p.count(); ++j) dir[j] *= 0.01;
      const test::FdSweep s = test::fd_sweep(x, p, dir, {1e-2, 1e-3, 1e-4});
      worst_order = std::min({worst_order, std::log10(s.remainders[0] / s.remainders[1]),
                              std::log10(s.remainders[1] / s.remainders[2])});
      worst_rel = std::max(worst_rel, s.rel_error_smallest);
    }
  }

  // Data term f(x) = 1/2 ||U x - y||^2 along a random direction.
  const SyntheticBurstSample s = test::fixed_burst(24, true);
  const StackedOperator op(s.model, s.gt_motions);
  const std::vector<double> y = op.stack(s.burst.grids());
  const std::vector<double> x0 = test::random_grid(s.model.hr_rows(), s.model.hr_cols(), 3, 6).vec();
  const std::vector<double> v = test::random_grid(s.model.hr_rows(), s.model.hr_cols(), 3, 7, -1, 1).vec();
  auto f = [&](double d) {
    std::vector<double> xs = x0;
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += d * v[i];
    const std::vector<double> u = op.apply(xs);
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += (u[i] - y[i]) * (u[i] - y[i]);
    return 0.5 * acc;
  };
  std::vector<double> r = op.apply(x0);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= y[i];
  const double gv = dot(op.adjoint(r), v);
  const double f0 = f(0.0);
  std::vector<double> rem;
  double grad_rel = 0.0;
  for (double d : {1e-2, 1e-3, 1e-4}) {
    const double fd = f(d);
    rem.push_back(std::abs(fd - f0 - d * gv));
    grad_rel = std::abs((fd - f0) / d - gv) / std::abs(gv);
  }
  const double grad_order = std::min(std::log10(rem[0] / rem[1]), std::log10(rem[1] / rem[2]));

  o.detail << "warp jacobian min order " << worst_order << ", rel error at 1e-4 " << worst_rel
           << "; data gradient order " << grad_order << ", rel error at 1e-4 " << grad_rel;
  o.require(worst_order >= 1.8 && grad_order >= 1.8, "order >= 1.8");
  o.require(worst_rel < 1e-3 && grad_rel < 1e-3, "rel error < 1e-3");
}

void tta_safety(Outcome& o) {
  int remosaic_checks = 0, remosaic_failures = 0, rejected = 0;
  for (int phase = 0; phase < 4; ++phase) {
    const auto cfa = static_cast<CfaPattern>(phase);
    std::vector<RawBayerImage> frames;
    for (int k = 0; k < 5; ++k) frames.emplace_back(test::random_grid(12, 16, 1, 40 + k), cfa);
    const Burst b(std::move(frames));
    for (const auto& d : default_descriptors(5, 9)) {
      try {
        for (const auto& f : augment(b, d).frames) {
          ++remosaic_checks;
          remosaic_failures += !(mosaic(demosaic_bilinear(f), cfa).grid == f.grid) || f.cfa != cfa;
        }
      } catch (const UnsupportedPhaseError&) {
        // Transpose swaps the two greens of these phases.
        rejected += !cfa_transpose_invariant(cfa) && d.transform == SpatialTransform::Transpose;
      }
    }
  }
  o.require(remosaic_failures == 0, "remosaic reproduces augmented raw");
  o.require(rejected == 2, "transpose rejected for GRBG and GBRG");

  const BenchSummary b = bench(fixed_noisy_corpus(), "hqs,hqs+tta");
  const double plain = b.psnr.at("hqs"), tta = b.psnr.at("hqs+tta");
  o.detail << remosaic_checks << " remosaic checks, " << remosaic_failures << " failures, " << rejected
           << " phases rejected for transpose; fixed noisy benchmark hqs " << plain << " dB, hqs+tta " << tta
           << " dB (difference " << std::scientific << tta - plain << std::defaultfloat << ")";
  o.require(b.failures == 0, "bench ran");
  o.require(tta >= plain - 0.05, "tta >= plain - 0.05 dB");
}

void determinism(Outcome& o) {
  const auto t0 = Clock::now();
  const fs::path corpus = scratch("determinism");
  SynthConfig sc;
  sc.lr_rows = sc.lr_cols = 24;
  const int side = 24 * sc.sr_factor + 2 * required_margin(sc);
  for (int i = 1; i <= 5; ++i) {
    sc.seed = derive_seed(42, i);
    const auto sample = synthesize_burst(test::textured_scene(side, side, i), ColorPipelineParams{}, sc);
    cli::write_burst(corpus / ("sample_" + std::to_string(i)), sample, sc.seed);
  }
  cli::RunConfig cfg;
  const int rc1 = quiet([&] { return cli::cmd_bench(corpus, cfg); });
  const std::string json1 = slurp(corpus / "bench_report.json"), txt1 = slurp(corpus / "bench_report.txt");
  fs::remove(corpus / "bench_report.json");
  fs::remove(corpus / "bench_report.txt");
  const int rc2 = quiet([&] { return cli::cmd_bench(corpus, cfg); });
  const std::string json2 = slurp(corpus / "bench_report.json"), txt2 = slurp(corpus / "bench_report.txt");
  const double secs = seconds_since(t0);
  fs::remove_all(corpus);

  o.detail << "5 samples 24x24 x4, methods " << cfg.get("bench_methods") << ", threads " << cfg.get("threads")
           << ": json " << (json1 == json2 ? "identical" : "differs") << ", table "
           << (txt1 == txt2 ? "identical" : "differs") << "; both runs " << secs << " s";
  o.require(rc1 == 0 && rc2 == 0, "bench exit 0");
  o.require(!json1.empty() && json1 == json2 && txt1 == txt2, "byte-identical reports");
  o.require(secs < 300.0, "runtime < 5 min");
}

}  // namespace

int main() {
  const std::vector<std::pair<int, void (*)(Outcome&)>> criteria{
      {1, operators},     {2, cfa_round_trip},    {3, registration}, {4, solver_descent}, {5, multi_frame_gain},
      {6, noise_model},   {7, metrics},           {8, derivative_checks}, {9, tta_safety}, {10, determinism}};
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    Outcome o;
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failed += !o.pass;
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    std::fflush(stdout);
  }
  fs::remove_all(fs::temp_directory_path() / "bsr_acceptance_fixed");
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
