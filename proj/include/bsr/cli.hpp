#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bsr/camera.hpp"
#include "bsr/evaluation.hpp"
#include "bsr/prior.hpp"
#include "bsr/registration.hpp"
#include "bsr/solver.hpp"

namespace bsr::cli {

/// Flat key=value settings. Every key has a default; file values and then
/// command-line flags override them.
class RunConfig {
 public:
  RunConfig();

  /// Throws ParameterError naming the valid keys when `key` is unknown, or
  /// when `value` does not parse as the key's type.
  void set(const std::string& key, const std::string& value);
  /// Lines of `key = value`; '#' starts a comment.
  void load_file(const std::filesystem::path& path);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  static std::vector<std::string> keys();
  static std::string describe(const std::string& key);
  std::map<std::string, std::string> values() const { return values_; }

  SynthConfig synth() const;
  LkConfig lk() const;
  HqsConfig hqs() const;
  PgdConfig pgd() const;
  TvOptions tv() const;
  PriorKind prior() const;
  MotionModel motion_model() const;
  AlignedScoreConfig aligned() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Reads 8- or 16-bit gray or RGB PNG into [0,1].
PixelGrid read_png(const std::filesystem::path& path);
/// Writes 16-bit PNG; values are clamped to [0,1] and scaled by 65535.
void write_png16(const std::filesystem::path& path, const PixelGrid& grid);

struct BurstOnDisk {
  Burst burst;
  int sr_factor = 4;
  BlurKernel kernel;
  NoiseParams noise;
  std::optional<std::vector<MotionParams>> gt_motions;  // HR scale
  std::optional<RgbImage> gt;

  ObservationModel model() const;
};

void write_burst(const std::filesystem::path& dir, const SyntheticBurstSample& sample, std::uint64_t seed);
BurstOnDisk read_burst(const std::filesystem::path& dir);

std::string motion_to_json(const MotionParams& p);

/// Registered HR-scale motions for every frame.
std::vector<MotionParams> estimate_motions(const Burst& burst, const ObservationModel& model, const RunConfig& cfg);

/// Reconstruction with the configured method; `method` is one of
/// baseline, hqs, pgd.
SrEstimate reconstruct(const Burst& burst, std::span<const MotionParams> motions, const ObservationModel& model,
                       const std::string& method, const RunConfig& cfg);

int cmd_synth(const std::filesystem::path& hr_image, const std::filesystem::path& out_dir, const RunConfig& cfg);
int cmd_sr(const std::filesystem::path& burst_dir, const std::filesystem::path& out_path, const RunConfig& cfg);
int cmd_eval(const std::filesystem::path& pred, const std::filesystem::path& gt, const RunConfig& cfg);
int cmd_bench(const std::filesystem::path& corpus, const RunConfig& cfg);
int cmd_align(const std::filesystem::path& burst_dir, const RunConfig& cfg);

}  // namespace bsr::cli
