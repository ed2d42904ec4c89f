#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "plqr/harness.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::invalid_argument("cannot open config file: " + path);
  return nlohmann::json::parse(file);
}

// --out flag wins, then the config, both relocated by PLQR_OUT_DIR when set.
std::string resolve_output(const std::string& flag_out, const std::string& config_out) {
  std::filesystem::path path(flag_out.empty() ? config_out : flag_out);
  if (const char* dir = std::getenv("PLQR_OUT_DIR"); dir && *dir)
    path = std::filesystem::path(dir) / path.filename();
  return path.string();
}

void print_error(const std::string& kind, const std::string& message) {
  nlohmann::json err = {{"error", kind}, {"message", message}};
  std::cerr << err.dump() << "\n";
}

int run_traces(const std::string& config_path, const std::string& out_flag, int seeds_flag,
               const std::string& format_flag, plqr::ModeSelector selector) {
  plqr::ExperimentConfig cfg =
      plqr::parse_experiment_config(load_json(config_path), selector);
  if (seeds_flag > 0) cfg.replicas = seeds_flag;
  if (!format_flag.empty()) cfg.format = format_flag;
  cfg.output_path = resolve_output(out_flag, cfg.output_path);
  cfg.validate();

  auto traces = plqr::run_experiment(cfg);
  for (const std::string& file : plqr::emit(traces, cfg)) std::cout << file << "\n";
  return 0;
}

int run_calibrate(const std::string& config_path, const std::string& out_flag) {
  const nlohmann::json doc = load_json(config_path);
  plqr::ExperimentConfig cfg = plqr::parse_experiment_config(
      doc, doc.contains("sweep") ? plqr::ModeSelector::kSweep : plqr::ModeSelector::kRun);
  nlohmann::json report = nlohmann::json::array();
  for (const plqr::VariantSpec& v : cfg.variants)
    report.push_back(plqr::calibration_report(v, cfg));
  const std::string text = report.dump(2) + "\n";
  if (out_flag.empty()) {
    std::cout << text;
  } else {
    const std::string path = resolve_output(out_flag, out_flag);
    std::ofstream file(path);
    if (!file) throw std::runtime_error("cannot open output file: " + path);
    file << text;
    std::cout << path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive LQ control with optional joint differential privacy"};
  app.require_subcommand(1);
  app.set_version_flag("--version", plqr::kVersion);

  std::string config_path;
  std::string out_path;
  std::string format;
  int seeds = 0;

  auto add_common = [&](CLI::App* cmd, bool with_format) {
    cmd->add_option("--config", config_path, "JSON experiment config")->required();
    cmd->add_option("--out", out_path, "output path (overrides config)");
    if (with_format) {
      cmd->add_option("--seeds", seeds, "number of replica seeds (overrides config)");
      cmd->add_option("--format", format, "output format")
          ->check(CLI::IsMember({"csv", "json"}));
    }
  };
  add_common(app.add_subcommand("run", "run the variant in the config's `mode` block"), true);
  add_common(app.add_subcommand("sweep", "run every epsilon in the config's `sweep` block"),
             true);
  add_common(app.add_subcommand("calibrate", "print the privacy calibration report"), false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("run"))
      return run_traces(config_path, out_path, seeds, format, plqr::ModeSelector::kRun);
    if (app.got_subcommand("sweep"))
      return run_traces(config_path, out_path, seeds, format, plqr::ModeSelector::kSweep);
    return run_calibrate(config_path, out_path);
  } catch (const nlohmann::json::parse_error& e) {
    print_error("config_parse", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    print_error("config_invalid", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 3;
  }
}
