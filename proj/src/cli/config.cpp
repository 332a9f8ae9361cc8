#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "bsr/cli.hpp"
#include "bsr/error.hpp"

namespace bsr::cli {

namespace {

enum class Kind { Int, U64, Double, Bool, String };

struct KeySpec {
  const char* key;
  Kind kind;
  std::string fallback;
  const char* help;
};

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string num(long v) { return std::to_string(v); }

const std::vector<KeySpec>& table() {
  static const std::vector<KeySpec> specs = [] {
    const SynthConfig synth;
    const HqsConfig hqs;
    const PgdConfig pgd;
    const TvOptions tv;
    const LkConfig lk;
    const AlignedScoreConfig aligned;
    const NoiseParams challenge = NoiseParams::challenge();
    return std::vector<KeySpec>{
        {"seed", Kind::U64, "0", "base seed for synthesis and shuffles"},
        {"threads", Kind::Int, "1", "bench worker count"},
        {"frames", Kind::Int, num(long{synth.frames}), "burst length"},
        {"sr_factor", Kind::Int, num(long{synth.sr_factor}), "super-resolution factor"},
        {"lr_rows", Kind::Int, num(long{synth.lr_rows}), "RAW frame rows"},
        {"lr_cols", Kind::Int, num(long{synth.lr_cols}), "RAW frame columns"},
        {"max_translation", Kind::Double, num(synth.max_translation), "translation range, HR pixels"},
        {"max_rotation", Kind::Double, num(synth.max_rotation), "rotation range, degrees"},
        {"noise", Kind::Bool, "on", "add sensor noise when synthesizing"},
        {"shot_slope", Kind::Double, num(challenge.shot_slope), "shot noise slope"},
        {"read_var", Kind::Double, num(challenge.read_var), "read noise variance"},
        {"cfa", Kind::String, "RGGB", "Bayer phase: RGGB, GRBG, GBRG, BGGR"},
        {"method", Kind::String, "hqs", "reconstruction: baseline, hqs, pgd"},
        {"prior", Kind::String, "tv", "regularizer: none, tikhonov, tv"},
        {"hqs_lambda", Kind::Double, num(hqs.lambda), "HQS prior weight"},
        {"hqs_iters", Kind::Int, num(long{hqs.outer_iters}), "HQS outer iterations"},
        {"mu0", Kind::Double, num(hqs.mu0), "initial HQS penalty"},
        {"mu_growth", Kind::Double, num(hqs.mu_growth), "HQS penalty growth per iteration"},
        {"cg_iters", Kind::Int, num(long{hqs.cg_iters}), "CG iterations per z-step"},
        {"cg_tol", Kind::Double, num(hqs.cg_tol), "CG relative residual tolerance"},
        {"motion_refine", Kind::Bool, hqs.motion_refine ? "on" : "off", "refine motions inside HQS"},
        {"gn_iters", Kind::Int, num(long{hqs.gn_iters}), "Gauss-Newton steps per motion refinement"},
        {"pgd_lambda", Kind::Double, num(pgd.lambda), "PGD prior weight"},
        {"pgd_iters", Kind::Int, num(long{pgd.iters}), "PGD iterations"},
        {"pgd_step", Kind::Double, "0", "PGD step; 0 selects 1/L"},
        {"power_iters", Kind::Int, num(long{pgd.power_iters}), "power iterations for L"},
        {"tv_iters", Kind::Int, num(long{tv.max_iters}), "inner iterations of the TV prox"},
        {"tv_tol", Kind::Double, num(tv.tol), "relative duality gap of the TV prox"},
        {"motion_model", Kind::String, "euclidean", "registration model: translation, euclidean, affine"},
        {"lk_levels", Kind::Int, num(long{lk.pyramid_levels}), "pyramid levels"},
        {"lk_iters", Kind::Int, num(long{lk.iters_per_level}), "iterations per pyramid level"},
        {"lk_threshold", Kind::Double, num(lk.robust_threshold), "Huber threshold"},
        {"lk_tol", Kind::Double, num(lk.convergence_tol), "parameter update tolerance"},
        {"use_gt_motion", Kind::Bool, "off", "use ground-truth motions from meta.json"},
        {"flow_block", Kind::Int, num(long{aligned.block}), "block size of the evaluation flow"},
        {"peak", Kind::Double, num(aligned.peak), "PSNR peak value"},
        {"aligned", Kind::Bool, "off", "flow-aligned, color-corrected scoring"},
        {"tta", Kind::Bool, "off", "average over transpose and shuffle augmentations"},
        {"subset_size", Kind::Int, "0", "solve sub-bursts of this size and average; 0 disables"},
        {"bench_methods", Kind::String, "baseline,hqs,pgd,hqs+tta", "comma-separated bench methods"},
        {"report", Kind::String, "", "report output path (eval, bench)"},
        {"diagnostics", Kind::String, "", "diagnostics JSON path (sr)"},
    };
  }();
  return specs;
}

const KeySpec* find(const std::string& key) {
  for (const auto& s : table()) {
    if (key == s.key) return &s;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<bool> parse_bool(const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  return std::nullopt;
}

template <typename T>
bool parse_number(const std::string& v, T& out) {
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  return res.ec == std::errc() && res.ptr == v.data() + v.size();
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ParameterError("config: invalid value '" + value + "' for key '" + key + "'");
}

bool is_method(const std::string& m) { return m == "baseline" || m == "hqs" || m == "pgd"; }

// Enumerated string keys are checked when set, not when first used.
void check_choice(const std::string& key, const std::string& value) {
  try {
    if (key == "cfa") parse_cfa(value);
    if (key == "prior") parse_prior(value);
    if (key == "motion_model") parse_motion_model(value);
  } catch (const Error&) {
    bad_value(key, value);
  }
  if (key == "method" && !is_method(value)) bad_value(key, value);
  if (key == "bench_methods") {
    std::stringstream ss(value);
    std::string item;
    int count = 0;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      if (item == "hqs+tta" || item == "pgd+tta") item.resize(3);
      if (!is_method(item)) bad_value(key, value);
      ++count;
    }
    if (count == 0) bad_value(key, value);
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& s : table()) values_[s.key] = s.fallback;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& s : table()) out.emplace_back(s.key);
  return out;
}

std::string RunConfig::describe(const std::string& key) {
  const KeySpec* s = find(key);
  return s ? s->help : "";
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const KeySpec* spec = find(key);
  if (!spec) {
    std::string list;
    for (const auto& k : keys()) list += (list.empty() ? "" : ", ") + k;
    throw ParameterError("config: unknown key '" + key + "'; valid keys: " + list);
  }
  const std::string value = trim(raw);
  switch (spec->kind) {
    case Kind::Int: {
      int v = 0;
      if (!parse_number(value, v)) bad_value(key, value);
      break;
    }
    case Kind::U64: {
      std::uint64_t v = 0;
      if (!parse_number(value, v)) bad_value(key, value);
      break;
    }
    case Kind::Double: {
      double v = 0;
      if (!parse_number(value, v)) bad_value(key, value);
      break;
    }
    case Kind::Bool:
      if (!parse_bool(value)) bad_value(key, value);
      break;
    case Kind::String:
      check_choice(key, value);
      break;
  }
  values_[key] = value;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("config: " + path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ParameterError("config: unknown key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  int v = 0;
  if (!parse_number(get(key), v)) bad_value(key, get(key));
  return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_number(get(key), v)) bad_value(key, get(key));
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0;
  if (!parse_number(get(key), v)) bad_value(key, get(key));
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto v = parse_bool(get(key));
  if (!v) bad_value(key, get(key));
  return *v;
}

SynthConfig RunConfig::synth() const {
  SynthConfig c;
  c.frames = get_int("frames");
  c.sr_factor = get_int("sr_factor");
  c.lr_rows = get_int("lr_rows");
  c.lr_cols = get_int("lr_cols");
  c.max_translation = get_double("max_translation");
  c.max_rotation = get_double("max_rotation");
  c.add_noise = get_bool("noise");
  c.noise = {get_double("shot_slope"), get_double("read_var")};
  c.seed = get_u64("seed");
  c.cfa = parse_cfa(get("cfa"));
  return c;
}

LkConfig RunConfig::lk() const {
  LkConfig c;
  c.pyramid_levels = get_int("lk_levels");
  c.iters_per_level = get_int("lk_iters");
  c.robust_threshold = get_double("lk_threshold");
  c.convergence_tol = get_double("lk_tol");
  return c;
}

HqsConfig RunConfig::hqs() const {
  HqsConfig c;
  c.outer_iters = get_int("hqs_iters");
  c.mu0 = get_double("mu0");
  c.mu_growth = get_double("mu_growth");
  c.lambda = get_double("hqs_lambda");
  c.cg_iters = get_int("cg_iters");
  c.cg_tol = get_double("cg_tol");
  c.motion_refine = get_bool("motion_refine");
  c.gn_iters = get_int("gn_iters");
  return c;
}

PgdConfig RunConfig::pgd() const {
  PgdConfig c;
  c.iters = get_int("pgd_iters");
  c.lambda = get_double("pgd_lambda");
  if (get_double("pgd_step") > 0.0) c.step = get_double("pgd_step");
  c.power_iters = get_int("power_iters");
  return c;
}

TvOptions RunConfig::tv() const { return {get_int("tv_iters"), get_double("tv_tol")}; }

PriorKind RunConfig::prior() const { return parse_prior(get("prior")); }

MotionModel RunConfig::motion_model() const { return parse_motion_model(get("motion_model")); }

AlignedScoreConfig RunConfig::aligned() const {
  AlignedScoreConfig c;
  c.block = get_int("flow_block");
  c.peak = get_double("peak");
  return c;
}

}  // namespace bsr::cli
