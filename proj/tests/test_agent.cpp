#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "plqr/ofu_agent.hpp"

using namespace plqr;

namespace {

InstanceConfig small_config(int n, int d, int horizon, int episodes, std::uint64_t seed) {
  InstanceConfig cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.horizon = horizon;
  cfg.episodes = episodes;
  cfg.gamma = 0.5;
  cfg.c_a = 0.5;
  cfg.c_b = 0.3;
  cfg.c_w = 0.1;
  cfg.seed = seed;
  return cfg;
}

OfuAgent make_agent(const InstanceConfig& cfg, const AgentSetup& setup, std::uint64_t seed) {
  return OfuAgent(cfg.n, cfg.d, cfg.horizon, cfg.episodes, cfg.gamma, cfg.c_w, setup, seed);
}

// Scalar finite-horizon recursion written independently of the library:
// P <- Q + a^2 P R / (R + b^2 P), gains k_h = -a b P / (R + b^2 P).
struct ScalarRiccati {
  double value = 0.0;     // J_1^*(theta, x1) including the noise trace term
  double max_gain = 0.0;
};

ScalarRiccati scalar_objective(double a, double b, double x1, double sigma_w, int horizon) {
  ScalarRiccati out;
  double p = 0.0;
  double trace_term = 0.0;
  for (int h = horizon; h >= 1; --h) {
    trace_term += p * sigma_w;
    const double gain = -a * b * p / (1.0 + b * b * p);
    out.max_gain = std::max(out.max_gain, std::abs(gain));
    p = 1.0 + a * a * p / (1.0 + b * b * p);
  }
  out.value = x1 * x1 * p + trace_term;
  return out;
}

}  // namespace

TEST_CASE("private calibration matches the closed forms") {
  PrivacyBudget budget;
  budget.sigma1 = 1.0;
  budget.sigma2 = 1.0;
  budget.levels = 3;
  PrivateCalibration c = calibrate(1, 1, 8, 0.1, budget);
  const double expected =
      std::sqrt(3.0) * (4.0 * std::sqrt(2.0) + std::sqrt(8.0 * std::log(4.0 * 8.0 / 0.1)));
  CHECK(c.noise_cap == doctest::Approx(expected).epsilon(1e-12));
  CHECK(c.noise_cap == doctest::Approx(21.563999252342466).epsilon(1e-12));
  CHECK(c.eta == doctest::Approx(2.0 * c.noise_cap));
  CHECK(c.lambda_max / c.lambda_min == doctest::Approx(3.0));
  const double nu_expected = std::sqrt(3.0 / c.noise_cap) *
                             (std::sqrt(4.0) + std::sqrt(4.0 * std::log(2.0 * 8.0 / 0.1)));
  CHECK(c.nu == doctest::Approx(nu_expected).epsilon(1e-12));

  SUBCASE("degenerate noise scales are rejected") {
    budget.sigma1 = 0.0;
    CHECK_THROWS_AS(calibrate(1, 1, 8, 0.1, budget), std::invalid_argument);
  }
}

TEST_CASE("lambda_max / lambda_min stays 3 across budgets") {
  Rng rng(3);
  std::uniform_real_distribution<double> unif(0.1, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    PrivacyBudget budget = make_privacy_budget(unif(rng), 0.05, 32, 4, 0.4);
    PrivateCalibration c = calibrate(2, 1, 32, 0.1, budget);
    CHECK(c.lambda_max / c.lambda_min == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_CASE("first-episode statistics are the pure regularizer") {
  InstanceConfig cfg = small_config(2, 1, 5, 8, 21);
  AgentSetup setup = make_setup(PrivateMode{1.0, 0.1}, cfg.n, cfg.d, cfg.episodes, cfg.horizon,
                                cfg.gamma, 0.1);
  OfuAgent agent = make_agent(cfg, setup, 5);
  GramStatistics stats = agent.build_statistics(1);
  CHECK(stats.V.isApprox(setup.ridge * Mat::Identity(3, 3), 1e-12));
  CHECK(stats.U.isZero(0.0));
  CHECK(estimate(stats).isZero(0.0));
}

TEST_CASE("zero-noise private statistics equal non-private ones bit for bit") {
  InstanceConfig cfg = small_config(2, 1, 5, 16, 33);
  Instance inst = sample_instance(cfg);

  AgentSetup non_private = make_setup(NonPrivateMode{1.0}, cfg.episodes, cfg.horizon, cfg.gamma,
                                      0.1);
  AgentSetup degenerate =
      degenerate_private_setup(1.0, cfg.episodes, cfg.horizon, cfg.gamma, 0.1);

  Environment env_a(inst, cfg, 900);
  Environment env_b(inst, cfg, 900);
  OfuAgent agent_a = make_agent(cfg, non_private, 900);
  OfuAgent agent_b = make_agent(cfg, degenerate, 900);

  auto records_a = run_ofu(env_a, agent_a);
  auto records_b = run_ofu(env_b, agent_b);
  REQUIRE(records_a.size() == records_b.size());
  for (std::size_t i = 0; i < records_a.size(); ++i) {
    CHECK(records_a[i].choice.theta.isApprox(records_b[i].choice.theta, 0.0));
    CHECK(records_a[i].beta == records_b[i].beta);
    for (std::size_t s = 0; s < records_a[i].trajectory.steps.size(); ++s) {
      CHECK(records_a[i].trajectory.steps[s].x_next.isApprox(
          records_b[i].trajectory.steps[s].x_next, 0.0));
    }
  }
}

TEST_CASE("private Gram deviation stays under the calibrated noise cap") {
  // The released Gram deviation is a sum of <= m node noises; the calibrated
  // cap bounds its spectral norm except with probability alpha/2K per episode.
  const int K = 8;
  const double sigma1 = 1.0;
  const double alpha = 0.1;
  PrivacyBudget budget;
  budget.sigma1 = sigma1;
  budget.sigma2 = sigma1;
  budget.levels = tree_levels(K);
  const double cap = calibrate(2, 1, K, alpha, budget).noise_cap;

  const int trials = 1000;
  int violations = 0;
  for (int trial = 0; trial < trials; ++trial) {
    BinaryCounter counter(K, 3, 3, sigma1, true, 40000 + static_cast<std::uint64_t>(trial));
    for (int t = 0; t < 7; ++t) counter.feed(Mat::Zero(3, 3));
    if (spectral_norm(counter.query(8)) > cap) ++violations;
  }
  CHECK(violations <= static_cast<int>(trials * alpha / (2.0 * K)));
}

TEST_CASE("collapsed ellipsoid returns the projected center") {
  ConfidenceEllipsoid ell;
  ell.center = (Mat(2, 1) << 1.2, 0.9).finished();  // outside the unit ball
  ell.V = Mat::Identity(2, 2);
  ell.beta = 1e-12;
  CostMatrices cost{Mat::Identity(1, 1), Mat::Identity(1, 1)};
  Rng rng(1);
  SearchOptions options;
  options.budget = 16;

  OptimisticChoice choice =
      optimistic_select(ell, Vec::Ones(1), cost, Mat::Zero(1, 1), 3, 0.5, rng, options);
  Mat projected = ell.center / ell.center.norm();
  CHECK(choice.theta.isApprox(projected, 1e-9));
  CHECK(choice.theta.norm() <= 1.0 + 1e-12);
}

TEST_CASE("forced truth candidate bounds the selected objective (optimism)") {
  InstanceConfig cfg = small_config(2, 1, 5, 24, 8);
  Instance inst = sample_instance(cfg);
  const Mat truth = inst.dynamics.theta();
  const Mat sigma_w = inst.noise.covariance();
  RiccatiSolution truth_sol = riccati_backward(inst.dynamics, inst.cost, cfg.horizon);
  REQUIRE(truth_sol.gains.max_gain_norm() <= cfg.gamma);  // instance chosen so truth passes

  AgentSetup setup = make_setup(NonPrivateMode{1.0}, cfg.episodes, cfg.horizon, cfg.gamma, 0.1);
  OfuAgent agent = make_agent(cfg, setup, 4);
  Environment env(inst, cfg, 4);
  SearchOptions options;
  options.forced_candidate = truth;

  int optimism_checks = 0;
  for (int k = 1; k <= cfg.episodes; ++k) {
    GramStatistics stats = agent.build_statistics(k);
    ConfidenceEllipsoid ell = agent.confidence_set(stats, k);
    Vec x1 = env.initial_state(k);
    OptimisticChoice choice = agent.select(ell, x1, inst.cost, sigma_w, options);
    CHECK(choice.theta.norm() <= 1.0 + 1e-12);
    if (contains(ell, truth)) {
      // Truth was a live candidate, so the winner can only be better.
      const double truth_value = optimal_cost(truth_sol.value, sigma_w, x1, 1);
      CHECK(choice.objective <= truth_value + 1e-9);
      ++optimism_checks;
    }
    EpisodeTrajectory traj = run_episode(env, choice.gains, x1, k, cfg.gamma);
    agent.observe(traj.gram_increment(), traj.cross_increment());
  }
  CHECK(optimism_checks > 0);
}

TEST_CASE("repeated conditioning failures abort the run") {
  InstanceConfig cfg = small_config(2, 1, 5, 24, 71);
  Instance inst = sample_instance(cfg);
  // A vanishing ridge leaves V below the PD floor on every early episode.
  AgentSetup setup = degenerate_private_setup(1e-12, cfg.episodes, cfg.horizon, cfg.gamma, 0.1);
  OfuAgent agent = make_agent(cfg, setup, 3);
  Environment env(inst, cfg, 3);
  CHECK_THROWS_AS(run_ofu(env, agent), std::runtime_error);
  CHECK(agent.clamp_events() > 0);
}

TEST_CASE("sampled search lands within 1e-3 of a fine grid optimum (1x1)") {
  InstanceConfig cfg = small_config(1, 1, 5, 16, 14);
  Instance inst = sample_instance(cfg);
  const Mat sigma_w = inst.noise.covariance();
  const double sw = sigma_w(0, 0);

  AgentSetup setup = make_setup(NonPrivateMode{1.0}, cfg.episodes, cfg.horizon, cfg.gamma, 0.1);
  OfuAgent agent = make_agent(cfg, setup, 6);
  Environment env(inst, cfg, 6);
  run_ofu(env, agent);  // populate statistics with 16 genuine episodes

  // Ellipsoid for the episode after the run (all data fed).
  const int k = cfg.episodes + 1;
  GramStatistics stats = agent.build_statistics(k);
  ConfidenceEllipsoid ell = agent.confidence_set(stats, k);
  const Vec x1 = env.initial_state(k);

  auto admissible = [&](double a, double b) {
    if (a * a + b * b > 1.0) return false;
    const Vec diff = (Vec(2) << a - ell.center(0, 0), b - ell.center(1, 0)).finished();
    return diff.dot(ell.V * diff) <= ell.beta * ell.beta;
  };

  // Two-stage grid oracle: coarse pass at 2e-3, fine local pass at 1e-4.
  double best_value = std::numeric_limits<double>::infinity();
  double best_a = 0.0, best_b = 0.0;
  auto scan = [&](double a_lo, double a_hi, double b_lo, double b_hi, double step) {
    for (double a = a_lo; a <= a_hi + 1e-15; a += step) {
      for (double b = b_lo; b <= b_hi + 1e-15; b += step) {
        if (!admissible(a, b)) continue;
        ScalarRiccati obj = scalar_objective(a, b, x1(0), sw, cfg.horizon);
        if (obj.max_gain > cfg.gamma) continue;
        if (obj.value < best_value) {
          best_value = obj.value;
          best_a = a;
          best_b = b;
        }
      }
    }
  };
  scan(-1.0, 1.0, -1.0, 1.0, 2e-3);
  REQUIRE(std::isfinite(best_value));
  scan(best_a - 2.5e-3, best_a + 2.5e-3, best_b - 2.5e-3, best_b + 2.5e-3, 1e-4);

  Rng search_rng(99);
  SearchOptions options;
  options.budget = 512;
  options.refine_elites = 4;
  options.refine_stages = 3;
  options.refine_samples = 64;
  OptimisticChoice choice =
      optimistic_select(ell, x1, inst.cost, sigma_w, cfg.horizon, cfg.gamma, search_rng, options);
  CHECK_FALSE(choice.fallback);
  CHECK(std::abs(choice.objective - best_value) <= 1e-3);
}

TEST_CASE("search is deterministic given the generator seed") {
  ConfidenceEllipsoid ell;
  ell.center = Mat::Zero(3, 2);
  ell.V = 4.0 * Mat::Identity(3, 3);
  ell.beta = 1.5;
  CostMatrices cost{Mat::Identity(2, 2), Mat::Identity(1, 1)};
  SearchOptions options;
  options.budget = 40;

  Rng rng_a(7), rng_b(7);
  OptimisticChoice a =
      optimistic_select(ell, Vec::Ones(2), cost, Mat::Zero(2, 2), 4, 0.6, rng_a, options);
  OptimisticChoice b =
      optimistic_select(ell, Vec::Ones(2), cost, Mat::Zero(2, 2), 4, 0.6, rng_b, options);
  CHECK(a.theta.isApprox(b.theta, 0.0));
  CHECK(a.objective == b.objective);
}

TEST_CASE("run with K = 1 selects from empty statistics and terminates") {
  InstanceConfig cfg = small_config(2, 1, 4, 1, 77);
  Instance inst = sample_instance(cfg);
  AgentSetup setup = make_setup(NonPrivateMode{1.0}, cfg.episodes, cfg.horizon, cfg.gamma, 0.1);
  OfuAgent agent = make_agent(cfg, setup, 2);
  Environment env(inst, cfg, 2);
  auto records = run_ofu(env, agent);
  REQUIRE(records.size() == 1);
  CHECK(records[0].trajectory.steps.size() == 4);
  CHECK(agent.gram_counter().episodes_fed() == 1);
}

TEST_CASE("oracle mode: knowing the truth yields zero regret contributions") {
  InstanceConfig cfg = small_config(2, 1, 5, 4, 15);
  Instance inst = sample_instance(cfg);
  const Mat sigma_w = inst.noise.covariance();
  RiccatiSolution truth_sol = riccati_backward(inst.dynamics, inst.cost, cfg.horizon);

  // Collapse the confidence set onto the truth; the agent must pick it.
  ConfidenceEllipsoid ell;
  ell.center = inst.dynamics.theta();
  ell.V = Mat::Identity(3, 3);
  ell.beta = 1e-10;
  Rng rng(3);
  SearchOptions options;
  OptimisticChoice choice =
      optimistic_select(ell, Vec::Ones(2).normalized(), inst.cost, sigma_w, cfg.horizon,
                        cfg.gamma, rng, options);
  Vec x1 = draw_initial_state(2, rng);
  const double chosen_cost =
      linear_policy_cost(inst.dynamics, inst.cost, inst.noise, choice.gains, x1, 1);
  const double best = optimal_cost(truth_sol.value, sigma_w, x1, 1);
  CHECK(chosen_cost == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("non-private estimates converge toward the truth (consistency)") {
  InstanceConfig cfg = small_config(1, 1, 5, 256, 19);
  Instance inst = sample_instance(cfg);
  const Mat truth = inst.dynamics.theta();

  std::vector<double> early_errors, late_errors;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    AgentSetup setup = make_setup(NonPrivateMode{1.0}, cfg.episodes, cfg.horizon, cfg.gamma, 0.1);
    OfuAgent agent = make_agent(cfg, setup, seed);
    Environment env(inst, cfg, seed);

    double early = 0.0;
    for (int k = 1; k <= cfg.episodes; ++k) {
      GramStatistics stats = agent.build_statistics(k);
      ConfidenceEllipsoid ell = agent.confidence_set(stats, k);
      if (k == cfg.episodes / 4) early = (ell.center - truth).norm();
      Vec x1 = env.initial_state(k);
      SearchOptions options;
      OptimisticChoice choice = agent.select(ell, x1, inst.cost, inst.noise.covariance(), options);
      EpisodeTrajectory traj = run_episode(env, choice.gains, x1, k, cfg.gamma);
      agent.observe(traj.gram_increment(), traj.cross_increment());
    }
    GramStatistics final_stats = agent.build_statistics(cfg.episodes + 1);
    early_errors.push_back(early);
    late_errors.push_back((estimate(final_stats) - truth).norm());
  }
  std::sort(early_errors.begin(), early_errors.end());
  std::sort(late_errors.begin(), late_errors.end());
  CHECK(late_errors[5] < early_errors[5]);
}

TEST_CASE("agent consumes episode data only through counter queries") {
  InstanceConfig cfg = small_config(2, 1, 5, 12, 51);
  Instance inst = sample_instance(cfg);
  AgentSetup setup = make_setup(NonPrivateMode{1.0}, cfg.episodes, cfg.horizon, cfg.gamma, 0.1);
  OfuAgent agent = make_agent(cfg, setup, 9);
  Environment env(inst, cfg, 9);
  run_ofu(env, agent);

  CHECK(agent.raw_data_accesses() == 0);
  CHECK(agent.gram_counter().episodes_fed() == cfg.episodes);
  CHECK(agent.cross_counter().episodes_fed() == cfg.episodes);
  // Statistics are rebuilt from queries alone: one Gram query per episode
  // plus one per confidence set in non-private mode.
  CHECK(agent.gram_counter().queries_served() >= 2 * cfg.episodes);
}

TEST_CASE("private mode runs end to end with the cap-based radius") {
  InstanceConfig cfg = small_config(2, 1, 5, 8, 61);
  Instance inst = sample_instance(cfg);
  AgentSetup setup = make_setup(PrivateMode{1.0, 0.1}, cfg.n, cfg.d, cfg.episodes, cfg.horizon,
                                cfg.gamma, 0.1);
  REQUIRE(setup.calibration.has_value());
  OfuAgent agent = make_agent(cfg, setup, 13);
  Environment env(inst, cfg, 13);
  auto records = run_ofu(env, agent);
  REQUIRE(records.size() == 8);
  // With the deterministic logdet cap the private radius is episode-invariant.
  for (const EpisodeRecord& rec : records) {
    CHECK(rec.beta == records.front().beta);
    CHECK(rec.choice.theta.norm() <= 1.0 + 1e-12);
    CHECK(rec.measured_logdet <= rec.logdet_bound);
  }
}
