#include <algorithm>
#include <charconv>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "bsr/cli.hpp"
#include "bsr/ensemble.hpp"
#include "bsr/error.hpp"
#include "json.hpp"

namespace bsr::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

ordered_json motions_json(std::span<const MotionParams> motions) {
  ordered_json arr = ordered_json::array();
  for (const auto& m : motions) arr.push_back(ordered_json::parse(motion_to_json(m)));
  return arr;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

RgbImage read_rgb(const fs::path& path) {
  PixelGrid g = read_png(path);
  if (g.channels() != 3) throw DimensionError(path.string() + ": expected an RGB image");
  return RgbImage(std::move(g), ColorSpace::LinearSensor);
}

ObservationModel model_for(const Burst& burst, const ObservationModel& base) {
  ObservationModel m = base;
  m.lr_rows = burst.rows();
  m.lr_cols = burst.cols();
  return m;
}

/// Uses the noise level recorded with the burst for the PGD data weight.
RunConfig with_noise(RunConfig cfg, const BurstOnDisk& disk) {
  auto text = [](double v) {
    char buf[64];
    return std::string(buf, std::to_chars(buf, buf + sizeof(buf), v).ptr);
  };
  cfg.set("shot_slope", text(disk.noise.shot_slope));
  cfg.set("read_var", text(disk.noise.read_var));
  return cfg;
}

/// Full pipeline for one burst: motions, then a plain, TTA or subset solve.
struct PipelineResult {
  RgbImage x;
  SrEstimate last;
};

PipelineResult run_pipeline(const BurstOnDisk& disk, const std::string& method, bool tta, const RunConfig& cfg) {
  const ObservationModel base = disk.model();
  const bool gt = cfg.get_bool("use_gt_motion");
  if (gt && !disk.gt_motions) throw Error("use_gt_motion requested but meta.json has no gt_motions");
  std::optional<SrEstimate> last;

  auto solve_with = [&](const Burst& b, std::optional<std::vector<MotionParams>> motions) {
    const ObservationModel m = model_for(b, base);
    const std::vector<MotionParams> mo = motions ? std::move(*motions) : estimate_motions(b, m, cfg);
    SrEstimate est = reconstruct(b, mo, m, method, cfg);
    RgbImage x = est.x;
    last = std::move(est);
    return x;
  };

  RgbImage x;
  const int subset = cfg.get_int("subset_size");
  if (tta) {
    auto solve = [&](const Burst& b, const AugDescriptor& d) {
      std::optional<std::vector<MotionParams>> mo;
      if (gt) mo = augment_motions(*disk.gt_motions, d);
      return solve_with(b, std::move(mo));
    };
    x = tta_solve(solve, disk.burst, default_descriptors(static_cast<int>(disk.burst.size()), cfg.get_u64("seed")));
  } else if (subset > 0) {
    auto solve = [&](const Burst& b, const std::vector<int>& idx) {
      std::optional<std::vector<MotionParams>> mo;
      if (gt) {
        mo.emplace();
        for (int k : idx) mo->push_back((*disk.gt_motions)[k]);
      }
      return solve_with(b, std::move(mo));
    };
    x = subset_ensemble(solve, disk.burst, subset);
  } else {
    x = solve_with(disk.burst, gt ? disk.gt_motions : std::nullopt);
  }
  return {std::move(x), std::move(*last)};
}

ordered_json diagnostics_json(const SrEstimate& est) {
  ordered_json d;
  d["motions"] = motions_json(est.motions);
  const auto& diag = est.diagnostics;
  if (!diag.hqs.empty()) {
    ordered_json arr = ordered_json::array();
    for (const auto& it : diag.hqs) {
      arr.push_back({{"mu", it.mu},
                     {"energy_start", it.energy_start},
                     {"energy_after_z", it.energy_after_z},
                     {"energy_after_x", it.energy_after_x},
                     {"energy_after_p", it.energy_after_p},
                     {"data_term", it.data_term},
                     {"prior_value", it.prior_value},
                     {"cg_iterations", it.cg_iterations},
                     {"cg_residual", it.cg_residual},
                     {"singular_frames", it.singular_frames}});
    }
    d["hqs"] = arr;
  }
  if (!diag.pgd.empty()) {
    ordered_json arr = ordered_json::array();
    for (const auto& it : diag.pgd) arr.push_back({{"objective", it.objective}, {"data_term", it.data_term}});
    d["pgd"] = arr;
    d["initial_objective"] = diag.initial_objective;
    d["step"] = diag.step;
    d["lipschitz"] = diag.lipschitz;
    d["noise_var"] = diag.noise_var;
  }
  return d;
}

std::vector<std::string> split_methods(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item != "baseline" && item != "hqs" && item != "pgd" && item != "hqs+tta" && item != "pgd+tta") {
      throw ParameterError("bench_methods: unknown method '" + item + "'");
    }
    out.push_back(item);
  }
  if (out.empty()) throw ParameterError("bench_methods: empty");
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

std::vector<MotionParams> estimate_motions(const Burst& burst, const ObservationModel& model, const RunConfig& cfg) {
  const auto results = align_burst(burst, cfg.motion_model(), cfg.lk());
  std::vector<MotionParams> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(model.to_hr(r.params));
  return out;
}

SrEstimate reconstruct(const Burst& burst, std::span<const MotionParams> motions, const ObservationModel& model,
                       const std::string& method, const RunConfig& cfg) {
  if (method == "baseline") {
    SrEstimate est;
    est.x = single_frame_baseline(burst.frames.front().grid, model);
    est.motions.assign(motions.begin(), motions.end());
    return est;
  }
  const auto prior = make_prior(cfg.prior(), cfg.tv());
  if (method == "hqs") return hqs_solve(burst, motions, model, *prior, cfg.hqs());
  if (method == "pgd") {
    PgdConfig pgd = cfg.pgd();
    pgd.noise = {cfg.get_double("shot_slope"), cfg.get_double("read_var")};
    return pgd_solve(burst, motions, model, *prior, pgd);
  }
  throw ParameterError("unknown method '" + method + "'; expected baseline, hqs or pgd");
}

int cmd_synth(const fs::path& hr_image, const fs::path& out_dir, const RunConfig& cfg) {
  PixelGrid src = read_png(hr_image);
  if (src.channels() == 1) {
    PixelGrid rgb(src.rows(), src.cols(), 3);
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (int q = 0; q < 3; ++q) rgb.vec()[i * 3 + q] = src.vec()[i];
    }
    src = std::move(rgb);
  }
  const SynthConfig sc = cfg.synth();
  const SyntheticBurstSample sample =
      synthesize_burst(RgbImage(std::move(src), ColorSpace::SRGB), ColorPipelineParams{}, sc);
  write_burst(out_dir, sample, sc.seed);
  std::cout << "wrote " << sample.burst.size() << " frames of " << sample.model.lr_rows << "x"
            << sample.model.lr_cols << " and a " << sample.model.hr_rows() << "x" << sample.model.hr_cols()
            << " ground truth to " << out_dir.string() << "\n";
  return 0;
}

int cmd_sr(const fs::path& burst_dir, const fs::path& out_path, const RunConfig& base_cfg) {
  const BurstOnDisk disk = read_burst(burst_dir);
  const RunConfig cfg = with_noise(base_cfg, disk);
  const std::string method = cfg.get("method");
  fs::path diag_path = cfg.get("diagnostics");
  if (diag_path.empty()) diag_path = fs::path(out_path).replace_extension(".json");

  ordered_json diag;
  diag["method"] = method;
  diag["prior"] = std::string(to_string(cfg.prior()));
  diag["motion_source"] = cfg.get_bool("use_gt_motion") ? "ground_truth" : "estimated";
  int status = 0;
  try {
    PipelineResult res = run_pipeline(disk, method, cfg.get_bool("tta"), cfg);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_png16(out_path, res.x.grid);
    const ordered_json solver_diag = diagnostics_json(res.last);
    for (const auto& [k, v] : solver_diag.items()) diag[k] = v;
    if (disk.gt) {
      diag["psnr_db"] = psnr(res.x, *disk.gt, cfg.get_double("peak"));
    }
    std::cout << "wrote " << res.x.rows() << "x" << res.x.cols() << " reconstruction to " << out_path.string()
              << "\n";
  } catch (const NumericalError& e) {
    diag["error"] = e.what();
    std::cerr << "error: " << e.what() << "\n";
    status = 1;
  }
  write_text(diag_path, diag.dump(2) + "\n");
  return status;
}

int cmd_eval(const fs::path& pred_path, const fs::path& gt_path, const RunConfig& cfg) {
  const RgbImage pred = read_rgb(pred_path);
  const RgbImage gt = read_rgb(gt_path);
  if (!pred.grid.same_shape(gt.grid)) {
    std::cerr << "error: prediction is " << pred.rows() << "x" << pred.cols() << " but ground truth is "
              << gt.rows() << "x" << gt.cols() << "\n";
    return 1;
  }
  const MetricReport rep = cfg.get_bool("aligned") ? aligned_score(pred, gt, cfg.aligned())
                                                   : plain_score(pred, gt, cfg.get_double("peak"));
  const std::string json = to_json(rep);
  std::cout << json << "\n";
  fs::path report = cfg.get("report");
  if (report.empty()) report = fs::path(pred_path).replace_extension(".metrics.json");
  write_text(report, json + "\n");
  return 0;
}

int cmd_bench(const fs::path& corpus, const RunConfig& cfg) {
  std::vector<fs::path> samples;
  if (fs::is_directory(corpus)) {
    for (const auto& entry : fs::directory_iterator(corpus)) {
      if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) samples.push_back(entry.path());
    }
  }
  std::sort(samples.begin(), samples.end());
  if (samples.empty()) {
    std::cerr << "error: no samples found in " << corpus.string() << "\n";
    return 1;
  }
  const std::vector<std::string> methods = split_methods(cfg.get("bench_methods"));

  struct Cell {
    double psnr = 0.0;
    double ssim = 0.0;
    double seconds = 0.0;
    std::string error;
  };
  std::vector<std::vector<Cell>> cells(samples.size(), std::vector<Cell>(methods.size()));

  auto run_sample = [&](std::size_t i) {
    std::optional<BurstOnDisk> disk;
    try {
      disk = read_burst(samples[i]);
      if (!disk->gt) throw Error("sample has no ground truth");
    } catch (const std::exception& e) {
      for (auto& c : cells[i]) c.error = e.what();
      return;
    }
    const RunConfig local = with_noise(cfg, *disk);
    for (std::size_t j = 0; j < methods.size(); ++j) {
      Cell& c = cells[i][j];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const bool tta = methods[j].size() > 4 && methods[j].ends_with("+tta");
        const std::string method = tta ? methods[j].substr(0, methods[j].size() - 4) : methods[j];
        const PipelineResult res = run_pipeline(*disk, method, tta, local);
        c.psnr = psnr(res.x, *disk->gt, local.get_double("peak"));
        c.ssim = ssim(res.x, *disk->gt);
      } catch (const std::exception& e) {
        c.error = e.what();
      }
      c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };

  const int threads = std::max(1, cfg.get_int("threads"));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) run_sample(i);
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ordered_json report;
  report["config"] = cfg.values();
  report["methods"] = methods;
  ordered_json per_sample = ordered_json::array();
  ordered_json timing = ordered_json::array();
  bool failed = false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ordered_json s;
    s["name"] = samples[i].filename().string();
    ordered_json t;
    t["name"] = s["name"];
    for (std::size_t j = 0; j < methods.size(); ++j) {
      const Cell& c = cells[i][j];
      if (c.error.empty()) {
        s["results"][methods[j]] = {{"psnr_db", c.psnr}, {"ssim", c.ssim}};
      } else {
        s["results"][methods[j]] = {{"error", c.error}};
        failed = true;
      }
      t["seconds"][methods[j]] = c.seconds;
    }
    per_sample.push_back(s);
    timing.push_back(t);
  }
  report["samples"] = per_sample;

  std::ostringstream table;
  table << std::left << std::setw(10) << "method" << std::right << std::setw(12) << "psnr_db" << std::setw(10)
        << "ssim" << std::setw(8) << "ok" << std::setw(8) << "failed" << "\n";
  ordered_json summary = ordered_json::array();
  ordered_json timing_summary;
  for (std::size_t j = 0; j < methods.size(); ++j) {
    double ps = 0.0, ss = 0.0, secs = 0.0;
    int ok = 0, bad = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      secs += cells[i][j].seconds;
      if (!cells[i][j].error.empty()) {
        ++bad;
        continue;
      }
      ps += cells[i][j].psnr;
      ss += cells[i][j].ssim;
      ++ok;
    }
    const double mp = ok ? ps / ok : 0.0, ms = ok ? ss / ok : 0.0;
    summary.push_back(
        {{"method", methods[j]}, {"mean_psnr_db", mp}, {"mean_ssim", ms}, {"samples", ok}, {"failures", bad}});
    timing_summary[methods[j]] = secs / samples.size();
    table << std::left << std::setw(10) << methods[j] << std::right << std::setw(12) << fixed(mp, 3) << std::setw(10)
          << fixed(ms, 4) << std::setw(8) << ok << std::setw(8) << bad << "\n";
  }
  report["summary"] = summary;

  fs::path out = cfg.get("report");
  if (out.empty()) out = corpus / "bench_report.json";
  write_text(out, report.dump(2) + "\n");
  write_text(fs::path(out).replace_extension(".txt"), table.str());
  ordered_json timing_doc;
  timing_doc["threads"] = threads;
  timing_doc["mean_seconds"] = timing_summary;
  timing_doc["samples"] = timing;
  write_text(fs::path(out).replace_extension(".timing.json"), timing_doc.dump(2) + "\n");
  std::cout << table.str();
  return failed ? 1 : 0;
}

int cmd_align(const fs::path& burst_dir, const RunConfig& cfg) {
  const BurstOnDisk disk = read_burst(burst_dir);
  const ObservationModel model = disk.model();
  const auto results = align_burst(disk.burst, cfg.motion_model(), cfg.lk());
  ordered_json doc = ordered_json::array();
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    ordered_json j;
    j["frame"] = k;
    j["status"] = std::string(to_string(r.status));
    j["fell_back"] = r.fell_back;
    j["lr"] = ordered_json::parse(motion_to_json(r.params));
    const MotionParams hr = model.to_hr(r.params);
    j["hr"] = ordered_json::parse(motion_to_json(hr));
    ordered_json levels = ordered_json::array();
    for (const auto& l : r.levels) {
      levels.push_back({{"level", l.level},
                        {"entry_cost", l.entry_cost},
                        {"exit_cost", l.exit_cost},
                        {"iterations", l.iterations}});
    }
    j["levels"] = levels;
    if (disk.gt_motions) {
      const MotionParams truth = (*disk.gt_motions)[k].recentered(hr.center);
      j["translation_error_hr"] = std::hypot(hr.tx() - truth.tx(), hr.ty() - truth.ty());
      j["rotation_error_deg"] = std::abs(hr.angle() - truth.angle()) * 180.0 / 3.14159265358979323846;
    }
    doc.push_back(j);
  }
  const std::string text = doc.dump(2);
  std::cout << text << "\n";
  if (!cfg.get("report").empty()) write_text(cfg.get("report"), text + "\n");
  return 0;
}

}  // namespace bsr::cli
