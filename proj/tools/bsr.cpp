#include <exception>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "bsr/cli.hpp"

namespace {

std::string flag_name(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-frame RAW burst super-resolution toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "key = value settings file")->check(CLI::ExistingFile);
  std::map<std::string, std::string> flags;
  for (const auto& key : bsr::cli::RunConfig::keys()) {
    app.add_option(flag_name(key), flags[key], bsr::cli::RunConfig::describe(key));
  }

  std::string a, b;
  auto* synth = app.add_subcommand("synth", "synthesize a RAW burst from an sRGB image");
  synth->add_option("hr_image", a, "input 8- or 16-bit PNG")->required();
  synth->add_option("out_dir", b, "output burst directory")->required();
  auto* sr = app.add_subcommand("sr", "reconstruct a burst");
  sr->add_option("burst_dir", a, "burst directory written by synth")->required();
  sr->add_option("out", b, "16-bit PNG output")->required();
  auto* eval = app.add_subcommand("eval", "score a reconstruction");
  eval->add_option("pred", a, "reconstruction PNG")->required();
  eval->add_option("gt", b, "ground-truth PNG")->required();
  auto* bench = app.add_subcommand("bench", "register, solve and score every burst in a corpus");
  bench->add_option("corpus_dir", a, "directory of burst directories")->required();
  auto* align = app.add_subcommand("align", "dump per-frame registration results");
  align->add_option("burst_dir", a, "burst directory")->required();
  for (auto* sub : {synth, sr, eval, bench, align}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    bsr::cli::RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& key : bsr::cli::RunConfig::keys()) {
      if (app.count(flag_name(key)) > 0) cfg.set(key, flags[key]);
    }
    if (synth->parsed()) return bsr::cli::cmd_synth(a, b, cfg);
    if (sr->parsed()) return bsr::cli::cmd_sr(a, b, cfg);
    if (eval->parsed()) return bsr::cli::cmd_eval(a, b, cfg);
    if (bench->parsed()) return bsr::cli::cmd_bench(a, cfg);
    if (align->parsed()) return bsr::cli::cmd_align(a, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
