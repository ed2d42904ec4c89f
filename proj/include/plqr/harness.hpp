#pragma once

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <string>
#include <vector>

#include "plqr/ofu_agent.hpp"

namespace plqr {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kCsvHeader =
    "variant,seed,episode,episode_regret,cumulative_regret,epsilon,delta";

struct VariantSpec {
  std::string label;
  bool is_private = false;
  double lambda = 1.0;     // non-private ridge
  double epsilon = 0.0;    // private budget
  double delta = 0.0;
};

struct ExperimentConfig {
  InstanceConfig instance;
  double alpha = 0.1;
  int replicas = 1;
  int search_budget = 32;
  int workers = 0;  // 0 = hardware concurrency
  std::vector<VariantSpec> variants;
  std::string output_path = "results";
  std::string format = "csv";

  void validate() const;
};

// Which top-level mode block to resolve into variants.
enum class ModeSelector { kRun, kSweep };

ExperimentConfig parse_experiment_config(const nlohmann::json& doc, ModeSelector selector);
nlohmann::json instance_to_json(const InstanceConfig& cfg);
InstanceConfig instance_from_json(const nlohmann::json& doc);

struct RegretPoint {
  int episode = 0;
  double policy_cost = 0.0;
  double optimal_cost = 0.0;
  double regret = 0.0;
  double cumulative = 0.0;
};

struct RegretTrace {
  std::string variant;
  std::uint64_t seed = 0;
  std::optional<double> epsilon;
  std::optional<double> delta;
  std::vector<RegretPoint> points;
  int clamp_events = 0;
  int fallback_episodes = 0;
  double min_logdet_slack = 0.0;  // min over episodes of (bound - measured)

  double final_cumulative() const { return points.empty() ? 0.0 : points.back().cumulative; }
  double cumulative_at(int episode) const;
};

// Exact regret: expected costs of the recorded gains
// versus the optimal policy on the true system, both in closed form.
RegretTrace compute_regret(const std::vector<EpisodeRecord>& records, const Instance& instance,
                           int horizon);

std::vector<RegretTrace> run_experiment(const ExperimentConfig& cfg);

// Calibration report for one private variant (noise scales, zCDP budgets,
// regularizer constants, accountant output). Non-private variants report only
// the label and lambda.
nlohmann::json calibration_report(const VariantSpec& variant, const ExperimentConfig& cfg);

// Writes traces. format "csv": <path>.csv plus <path>.json sidecar carrying
// the config, calibration reports, and library version. format "json":
// everything in <path>.json. Returns the files written.
std::vector<std::string> emit(const std::vector<RegretTrace>& traces, const ExperimentConfig& cfg);

double median(std::vector<double> values);

}  // namespace plqr
