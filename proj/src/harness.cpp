#include "plqr/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace plqr {

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw std::invalid_argument("config field '" + field + "': " + why);
}

template <typename T>
T require(const nlohmann::json& doc, const std::string& field) {
  if (!doc.contains(field)) config_error(field, "missing");
  try {
    return doc.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    config_error(field, "wrong type");
  }
}

template <typename T>
T optional_field(const nlohmann::json& doc, const std::string& field, T fallback) {
  if (!doc.contains(field)) return fallback;
  try {
    return doc.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    config_error(field, "wrong type");
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_param(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

nlohmann::json instance_to_json(const InstanceConfig& cfg) {
  nlohmann::json doc{{"n", cfg.n},          {"d", cfg.d},
                     {"H", cfg.horizon},    {"K", cfg.episodes},
                     {"gamma", cfg.gamma},  {"c_a", cfg.c_a},
                     {"c_b", cfg.c_b},      {"c_w", cfg.c_w},
                     {"c_cost", cfg.c_cost}, {"seed", cfg.seed}};
  if (cfg.r_cost >= 0.0) doc["r_cost"] = cfg.r_cost;
  if (cfg.redraw_initial_state) doc["redraw_initial_state"] = true;
  return doc;
}

InstanceConfig instance_from_json(const nlohmann::json& doc) {
  InstanceConfig cfg;
  cfg.n = require<int>(doc, "n");
  cfg.d = require<int>(doc, "d");
  cfg.horizon = require<int>(doc, "H");
  cfg.episodes = require<int>(doc, "K");
  cfg.gamma = require<double>(doc, "gamma");
  cfg.c_a = require<double>(doc, "c_a");
  cfg.c_b = require<double>(doc, "c_b");
  cfg.c_w = require<double>(doc, "c_w");
  cfg.c_cost = require<double>(doc, "c_cost");
  cfg.r_cost = optional_field<double>(doc, "r_cost", -1.0);
  cfg.seed = require<std::uint64_t>(doc, "seed");
  cfg.redraw_initial_state = optional_field<bool>(doc, "redraw_initial_state", false);
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  instance.validate();
  if (alpha <= 0.0 || alpha > 1.0) config_error("alpha", "must be in (0, 1]");
  if (replicas < 1) config_error("replicas", "must be >= 1");
  if (search_budget < 1) config_error("search_budget", "must be >= 1");
  if (variants.empty()) config_error("mode", "no variant resolved");
  if (format != "csv" && format != "json") config_error("output.format", "must be csv or json");
  for (const VariantSpec& v : variants) {
    if (v.is_private) {
      if (v.epsilon <= 0.0) config_error("epsilon", "must be > 0");
      if (v.delta <= 0.0 || v.delta > 1.0) config_error("delta", "must be in (0, 1]");
    } else if (v.lambda <= 0.0) {
      config_error("lambda", "must be > 0");
    }
  }
}

ExperimentConfig parse_experiment_config(const nlohmann::json& doc, ModeSelector selector) {
  ExperimentConfig cfg;
  if (!doc.contains("instance")) config_error("instance", "missing");
  cfg.instance = instance_from_json(doc.at("instance"));
  cfg.alpha = optional_field<double>(doc, "alpha", 0.1);
  cfg.replicas = optional_field<int>(doc, "replicas", 1);
  cfg.search_budget = optional_field<int>(doc, "search_budget", 32);
  cfg.workers = optional_field<int>(doc, "workers", 0);
  if (doc.contains("output")) {
    const auto& out = doc.at("output");
    cfg.output_path = optional_field<std::string>(out, "path", cfg.output_path);
    cfg.format = optional_field<std::string>(out, "format", cfg.format);
  }

  if (selector == ModeSelector::kRun) {
    if (!doc.contains("mode")) config_error("mode", "missing (required by `run`)");
    const auto& mode = doc.at("mode");
    const auto type = require<std::string>(mode, "type");
    VariantSpec v;
    if (type == "non_private") {
      v.label = "non_private";
      v.lambda = optional_field<double>(mode, "lambda", 1.0);
    } else if (type == "private") {
      v.is_private = true;
      v.epsilon = require<double>(mode, "epsilon");
      v.delta = require<double>(mode, "delta");
      v.label = "eps=" + format_param(v.epsilon);
    } else {
      config_error("mode.type", "must be non_private or private");
    }
    cfg.variants.push_back(std::move(v));
  } else {
    if (!doc.contains("sweep")) config_error("sweep", "missing (required by `sweep`)");
    const auto& sweep = doc.at("sweep");
    const auto epsilons = require<std::vector<double>>(sweep, "epsilons");
    const double delta = require<double>(sweep, "delta");
    if (epsilons.empty()) config_error("sweep.epsilons", "must be nonempty");
    for (double eps : epsilons) {
      VariantSpec v;
      v.is_private = true;
      v.epsilon = eps;
      v.delta = delta;
      v.label = "eps=" + format_param(eps);
      cfg.variants.push_back(std::move(v));
    }
    if (optional_field<bool>(sweep, "include_non_private", true)) {
      VariantSpec v;
      v.label = "non_private";
      v.lambda = optional_field<double>(sweep, "lambda", 1.0);
      cfg.variants.push_back(std::move(v));
    }
  }
  cfg.validate();
  return cfg;
}

double RegretTrace::cumulative_at(int episode) const {
  for (const RegretPoint& p : points)
    if (p.episode == episode) return p.cumulative;
  throw std::out_of_range("cumulative_at: episode not recorded");
}

RegretTrace compute_regret(const std::vector<EpisodeRecord>& records, const Instance& instance,
                           int horizon) {
  RegretTrace trace;
  trace.points.reserve(records.size());
  const Mat sigma_w = instance.noise.covariance();
  const ValueMatrices optimal_vm =
      riccati_backward(instance.dynamics, instance.cost, horizon).value;

  double cumulative = 0.0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (const EpisodeRecord& rec : records) {
    RegretPoint p;
    p.episode = rec.episode;
    p.policy_cost =
        linear_policy_cost(instance.dynamics, instance.cost, instance.noise, rec.choice.gains,
                           rec.x1, 1);
    p.optimal_cost = optimal_cost(optimal_vm, sigma_w, rec.x1, 1);
    p.regret = p.policy_cost - p.optimal_cost;
    cumulative += p.regret;
    p.cumulative = cumulative;
    trace.points.push_back(p);
    trace.fallback_episodes += rec.choice.fallback ? 1 : 0;
    min_gap = std::min(min_gap, rec.logdet_bound - rec.measured_logdet);
  }
  trace.min_logdet_slack = min_gap;
  return trace;
}

namespace {

AgentSetup setup_for(const VariantSpec& variant, const ExperimentConfig& cfg) {
  const InstanceConfig& inst = cfg.instance;
  if (variant.is_private) {
    return make_setup(PrivateMode{variant.epsilon, variant.delta}, inst.n, inst.d, inst.episodes,
                      inst.horizon, inst.gamma, cfg.alpha);
  }
  return make_setup(NonPrivateMode{variant.lambda}, inst.episodes, inst.horizon, inst.gamma,
                    cfg.alpha);
}

std::uint64_t replica_seed(std::uint64_t base, int replica) {
  std::uint64_t z = base ^ (0x5851f42d4c957f2dULL + static_cast<std::uint64_t>(replica));
  z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
  z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
  return z ^ (z >> 33);
}

}  // namespace

std::vector<RegretTrace> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Instance instance = sample_instance(cfg.instance);

  struct Job {
    const VariantSpec* variant;
    int replica;
  };
  std::vector<Job> jobs;
  for (const VariantSpec& v : cfg.variants)
    for (int r = 0; r < cfg.replicas; ++r) jobs.push_back({&v, r});

  std::vector<RegretTrace> traces(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size() || failed.load()) return;
      const Job& job = jobs[i];
      try {
        const std::uint64_t seed = replica_seed(cfg.instance.seed, job.replica);
        Environment env(instance, cfg.instance, seed);
        OfuAgent agent(cfg.instance.n, cfg.instance.d, cfg.instance.horizon,
                       cfg.instance.episodes, cfg.instance.gamma, cfg.instance.c_w,
                       setup_for(*job.variant, cfg), seed);
        RunOptions options;
        options.search.budget = cfg.search_budget;
        options.keep_trajectories = false;
        auto records = run_ofu(env, agent, options);
        RegretTrace trace = compute_regret(records, instance, cfg.instance.horizon);
        trace.variant = job.variant->label;
        trace.seed = seed;
        trace.clamp_events = agent.clamp_events();
        if (job.variant->is_private) {
          trace.epsilon = job.variant->epsilon;
          trace.delta = job.variant->delta;
        }
        traces[i] = std::move(trace);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        failure = e.what();
        failed.store(true);
      }
    }
  };

  unsigned pool = cfg.workers > 0 ? static_cast<unsigned>(cfg.workers)
                                  : std::max(1u, std::thread::hardware_concurrency());
  pool = std::min<unsigned>(pool, static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < pool; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failed.load()) throw std::runtime_error("run_experiment: " + failure);

  std::sort(traces.begin(), traces.end(), [](const RegretTrace& a, const RegretTrace& b) {
    if (a.variant != b.variant) return a.variant < b.variant;
    return a.seed < b.seed;
  });
  return traces;
}

nlohmann::json calibration_report(const VariantSpec& variant, const ExperimentConfig& cfg) {
  nlohmann::json report;
  report["variant"] = variant.label;
  if (!variant.is_private) {
    report["lambda"] = variant.lambda;
    return report;
  }
  const InstanceConfig& inst = cfg.instance;
  const PrivacyBudget budget =
      make_privacy_budget(variant.epsilon, variant.delta, inst.episodes, inst.horizon, inst.gamma);
  const PrivateCalibration calib =
      calibrate(inst.n, inst.d, inst.episodes, cfg.alpha / 2.0, budget);
  report["epsilon"] = variant.epsilon;
  report["delta"] = variant.delta;
  report["m"] = budget.levels;
  report["delta1"] = budget.delta1;
  report["delta2"] = budget.delta2;
  report["sigma1"] = budget.sigma1;
  report["sigma2"] = budget.sigma2;
  report["rho1"] = budget.rho1;
  report["rho2"] = budget.rho2;
  report["epsilon_actual"] = budget.epsilon_actual(inst.episodes);
  report["Lambda"] = calib.noise_cap;
  report["eta"] = calib.eta;
  report["nu"] = calib.nu;
  report["lambda_min"] = calib.lambda_min;
  report["lambda_max"] = calib.lambda_max;
  return report;
}

namespace {

nlohmann::json sidecar_document(const std::vector<RegretTrace>& traces,
                                const ExperimentConfig& cfg) {
  nlohmann::json doc;
  doc["library_version"] = kVersion;
  doc["config"] = {{"instance", instance_to_json(cfg.instance)},
                   {"alpha", cfg.alpha},
                   {"replicas", cfg.replicas},
                   {"search_budget", cfg.search_budget},
                   {"format", cfg.format}};
  doc["calibration"] = nlohmann::json::array();
  for (const VariantSpec& v : cfg.variants) doc["calibration"].push_back(calibration_report(v, cfg));
  doc["summary"] = nlohmann::json::array();
  for (const RegretTrace& t : traces) {
    doc["summary"].push_back({{"variant", t.variant},
                              {"seed", t.seed},
                              {"final_cumulative_regret", t.final_cumulative()},
                              {"clamp_events", t.clamp_events},
                              {"fallback_episodes", t.fallback_episodes}});
  }
  return doc;
}

std::string trace_csv(const std::vector<RegretTrace>& traces) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const RegretTrace& t : traces) {
    const std::string eps = t.epsilon ? format_param(*t.epsilon) : "";
    const std::string del = t.delta ? format_param(*t.delta) : "";
    for (const RegretPoint& p : t.points) {
      out += t.variant;
      out += ',';
      out += std::to_string(t.seed);
      out += ',';
      out += std::to_string(p.episode);
      out += ',';
      out += format_double(p.regret);
      out += ',';
      out += format_double(p.cumulative);
      out += ',';
      out += eps;
      out += ',';
      out += del;
      out += '\n';
    }
  }
  return out;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open output file: " + path);
  file << contents;
  if (!file) throw std::runtime_error("write failed: " + path);
}

}  // namespace

std::vector<std::string> emit(const std::vector<RegretTrace>& traces,
                              const ExperimentConfig& cfg) {
  if (traces.empty()) throw std::invalid_argument("emit: no traces to write");
  std::filesystem::path base(cfg.output_path);
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());

  std::vector<std::string> written;
  nlohmann::json sidecar = sidecar_document(traces, cfg);
  if (cfg.format == "csv") {
    const std::string csv_path = base.string() + ".csv";
    write_file(csv_path, trace_csv(traces));
    written.push_back(csv_path);
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (const RegretTrace& t : traces) {
      nlohmann::json points = nlohmann::json::array();
      for (const RegretPoint& p : t.points)
        points.push_back({{"episode", p.episode},
                          {"episode_regret", p.regret},
                          {"cumulative_regret", p.cumulative}});
      nlohmann::json row = {{"variant", t.variant}, {"seed", t.seed}, {"points", points}};
      if (t.epsilon) row["epsilon"] = *t.epsilon;
      if (t.delta) row["delta"] = *t.delta;
      rows.push_back(std::move(row));
    }
    sidecar["traces"] = std::move(rows);
  }
  const std::string json_path = base.string() + ".json";
  write_file(json_path, sidecar.dump(2) + "\n");
  written.push_back(json_path);
  return written;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace plqr
