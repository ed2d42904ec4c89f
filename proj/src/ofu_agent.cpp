#include "plqr/ofu_agent.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace plqr {

PrivateCalibration calibrate(int n, int d, int episodes, double alpha,
                             const PrivacyBudget& budget) {
  if (alpha <= 0.0 || alpha > 1.0) throw std::invalid_argument("calibrate: alpha not in (0, 1]");
  if (budget.sigma1 <= 0.0)
    throw std::invalid_argument("calibrate: private mode requires sigma1 > 0 (Lambda > 0)");
  if (budget.sigma2 < 0.0) throw std::invalid_argument("calibrate: sigma2 must be >= 0");
  const double m = budget.levels;
  const double p = n + d;
  const double K = episodes;

  PrivateCalibration c;
  c.noise_cap = budget.sigma1 * std::sqrt(m) *
                (4.0 * std::sqrt(p) + std::sqrt(8.0 * std::log(4.0 * K / alpha)));
  c.eta = 2.0 * c.noise_cap;
  c.lambda_min = c.noise_cap;
  c.lambda_max = 3.0 * c.noise_cap;
  c.nu = budget.sigma2 * std::sqrt(m / c.noise_cap) *
         (std::sqrt(2.0 * n * p) + std::sqrt(4.0 * std::log(2.0 * K / alpha)));
  return c;
}

AgentSetup make_setup(const NonPrivateMode& mode, int episodes, int horizon, double gamma,
                      double alpha) {
  if (mode.lambda <= 0.0) throw std::invalid_argument("non-private mode: lambda must be > 0");
  AgentSetup s;
  s.budget = zero_noise_budget(episodes, horizon, gamma);
  s.ridge = mode.lambda;
  s.bounds = {mode.lambda, mode.lambda, 0.0};
  s.alpha_confidence = alpha;
  s.use_logdet_cap = false;
  s.is_private = false;
  s.label = "non_private";
  return s;
}

AgentSetup make_setup(const PrivateMode& mode, int n, int d, int episodes, int horizon,
                      double gamma, double alpha) {
  AgentSetup s;
  s.budget = make_privacy_budget(mode.epsilon, mode.delta, episodes, horizon, gamma,
                                 mode.approximate_sigma);
  // alpha/2 to the confidence set, alpha/2 to the 2K noise-bound events.
  const PrivateCalibration c = calibrate(n, d, episodes, alpha / 2.0, s.budget);
  s.ridge = c.eta;
  s.bounds = {c.lambda_min, c.lambda_max, c.nu};
  s.alpha_confidence = alpha / 2.0;
  s.use_logdet_cap = true;
  s.is_private = true;
  s.calibration = c;
  s.label = "eps=" + std::to_string(mode.epsilon);
  return s;
}

AgentSetup degenerate_private_setup(double lambda, int episodes, int horizon, double gamma,
                                    double alpha) {
  AgentSetup s;
  s.budget = zero_noise_budget(episodes, horizon, gamma);
  s.ridge = lambda;
  s.bounds = {lambda, lambda, 0.0};
  s.alpha_confidence = alpha;
  s.use_logdet_cap = false;
  s.is_private = true;
  s.label = "private_degenerate";
  return s;
}

namespace {

Mat project_to_unit_ball(Mat theta) {
  const double f = theta.norm();
  if (f > 1.0) theta /= f;
  return theta;
}

Mat inverse_sqrt(const Mat& V) {
  Eigen::SelfAdjointEigenSolver<Mat> es(V);
  Vec inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

struct Candidate {
  Mat theta;
  RiccatiSolution solution;
  double objective = std::numeric_limits<double>::infinity();
  double max_gain = 0.0;
  bool in_ellipsoid = false;
  bool gain_ok = false;
};

}  // namespace

OptimisticChoice optimistic_select(const ConfidenceEllipsoid& ell, const Vec& x1,
                                   const CostMatrices& cost, const Mat& sigma_w, int horizon,
                                   double gamma, Rng& rng, const SearchOptions& options) {
  const Eigen::Index p = ell.center.rows();
  const Eigen::Index n = ell.center.cols();
  const Eigen::Index d = p - n;
  const Mat v_inv_sqrt = inverse_sqrt(ell.V);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  OptimisticChoice result;
  Candidate best;             // feasible incumbent
  Candidate least_gain;       // fallback when nothing passes the gain filter
  least_gain.max_gain = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, Mat>> feasible;  // global-phase pool for elites

  auto evaluate = [&](const Mat& raw, bool pool) {
    Candidate c;
    c.theta = project_to_unit_ball(raw);
    c.in_ellipsoid = contains(ell, c.theta);
    c.solution = riccati_backward(SystemDynamics::from_theta(c.theta, n, d), cost, horizon);
    c.max_gain = c.solution.gains.max_gain_norm();
    c.gain_ok = c.max_gain <= gamma;
    c.objective = optimal_cost(c.solution.value, sigma_w, x1, 1);
    ++result.candidates_evaluated;
    if (!c.gain_ok) ++result.gain_rejections;
    if (!c.in_ellipsoid) ++result.membership_rejections;
    if (c.max_gain < least_gain.max_gain) least_gain = c;
    if (c.in_ellipsoid && c.gain_ok) {
      if (pool) feasible.emplace_back(c.objective, c.theta);
      if (c.objective < best.objective) best = c;
    }
  };

  auto sample_around = [&](const Mat& base, double scale) {
    Mat dir = gaussian_matrix(p, n, rng);
    const double norm = dir.norm();
    if (norm > 0.0) dir /= norm;
    return Mat(base + (scale * unit(rng)) * (v_inv_sqrt * dir));
  };

  evaluate(ell.center, true);
  for (int i = 0; i < options.budget; ++i) evaluate(sample_around(ell.center, ell.beta), true);
  if (options.forced_candidate) evaluate(*options.forced_candidate, true);

  if (std::isfinite(best.objective)) {
    // Refine a few separated global candidates: local resampling whose radius
    // shrinks only when a batch fails to improve, so boundary minima and
    // secondary basins keep getting probed.
    std::sort(feasible.begin(), feasible.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Mat> elites;
    for (const auto& [value, theta] : feasible) {
      if (static_cast<int>(elites.size()) >= options.refine_elites) break;
      bool separated = true;
      for (const Mat& seen : elites)
        if ((theta - seen).norm() < 0.05) separated = false;
      if (separated) elites.push_back(theta);
    }
    for (const Mat& start : elites) {
      Candidate incumbent_backup = best;
      best = Candidate{};
      evaluate(start, false);
      double scale = ell.beta * options.refine_shrink;
      int remaining = options.refine_stages * options.refine_samples;
      while (remaining > 0 && scale > 1e-9 * ell.beta) {
        const double incumbent = best.objective;
        const int batch = std::min(options.refine_samples, remaining);
        for (int i = 0; i < batch; ++i) evaluate(sample_around(best.theta, scale), false);
        remaining -= batch;
        if (best.objective >= incumbent - 1e-12) scale *= options.refine_shrink;
      }
      if (incumbent_backup.objective < best.objective) best = incumbent_backup;
    }
  }

  if (!std::isfinite(best.objective)) {
    best = least_gain;
    result.fallback = true;
  }
  result.theta = std::move(best.theta);
  result.gains = std::move(best.solution.gains);
  result.objective = best.objective;
  result.max_gain_norm = best.max_gain;
  return result;
}

OfuAgent::OfuAgent(int n, int d, int horizon, int episodes, double gamma, double c_w,
                   AgentSetup setup, std::uint64_t seed)
    : n_(n),
      d_(d),
      horizon_(horizon),
      episodes_(episodes),
      gamma_(gamma),
      c_w_(c_w),
      setup_(std::move(setup)),
      gram_counter_(episodes, n + d, n + d, setup_.budget.sigma1, /*symmetric=*/true,
                    derive_seed(seed, StreamTag::kCounterGram)),
      cross_counter_(episodes, n + d, n, setup_.budget.sigma2, /*symmetric=*/false,
                     derive_seed(seed, StreamTag::kCounterCross)),
      search_rng_(make_rng(seed, StreamTag::kSearch)) {}

GramStatistics OfuAgent::build_statistics(int episode) {
  GramStatistics stats;
  stats.episode = episode;
  const Eigen::Index p = n_ + d_;
  stats.V = gram_counter_.query(episode) + setup_.ridge * Mat::Identity(p, p);
  stats.U = cross_counter_.query(episode);
  if (condition_to_pd(stats.V)) {
    stats.clamp_events = 1;
    ++clamp_events_;
  }
  return stats;
}

ConfidenceEllipsoid OfuAgent::confidence_set(const GramStatistics& stats, int episode) const {
  ConfidenceEllipsoid ell;
  ell.center = estimate(stats);
  ell.V = stats.V;
  ell.alpha = setup_.alpha_confidence;
  double logdet_term = 0.0;
  if (setup_.use_logdet_cap) {
    logdet_term = logdet_cap(n_, d_, horizon_, episodes_, gamma_, setup_.bounds.lambda_min);
  } else {
    // Zero-noise counters return the exact Gram matrix Z^T Z.
    logdet_term = logdet_ratio(gram_counter_.query(episode), setup_.bounds.lambda_min);
  }
  ell.beta = radius(logdet_term, setup_.bounds, c_w_, n_, setup_.alpha_confidence);
  return ell;
}

void OfuAgent::observe(const Mat& gram_increment, const Mat& cross_increment) {
  gram_counter_.feed(gram_increment);
  cross_counter_.feed(cross_increment);
}

EpisodeTrajectory run_episode(Environment& env, const GainSchedule& gains, const Vec& x1,
                              int episode, double gamma) {
  const bool gains_admissible = gains.max_gain_norm() <= gamma + 1e-9;
  EpisodeTrajectory traj;
  traj.episode = episode;
  traj.steps.reserve(static_cast<std::size_t>(gains.horizon()));
  Vec x = x1;
  for (int h = 1; h <= gains.horizon(); ++h) {
    Vec u = gains.at(h) * x;
    auto [next, cost] = env.advance(x, u);
    if (gains_admissible && next.norm() > 1.0 + 1e-9)
      throw std::logic_error("state bound violated under an admissible policy");
    traj.steps.push_back({std::move(x), std::move(u), cost, next});
    x = std::move(next);
  }
  return traj;
}

std::vector<EpisodeRecord> run_ofu(Environment& env, OfuAgent& agent, const RunOptions& options) {
  const InstanceConfig& cfg = env.config();
  const Mat sigma_w = env.instance().noise.covariance();
  const Mat truth = env.instance().dynamics.theta();
  const double lambda_min = agent.setup().bounds.lambda_min;
  const double cap =
      logdet_cap(cfg.n, cfg.d, cfg.horizon, cfg.episodes, cfg.gamma, lambda_min);

  Mat exact_gram = Mat::Zero(cfg.n + cfg.d, cfg.n + cfg.d);  // instrumentation only
  std::vector<EpisodeRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.episodes));

  for (int k = 1; k <= cfg.episodes; ++k) {
    EpisodeRecord rec;
    rec.episode = k;
    rec.x1 = env.initial_state(k);

    GramStatistics stats = agent.build_statistics(k);
    ConfidenceEllipsoid ell = agent.confidence_set(stats, k);
    SearchOptions search = options.search;
    if (options.force_truth_candidate) search.forced_candidate = truth;
    rec.choice = agent.select(ell, rec.x1, env.instance().cost, sigma_w, search);
    rec.beta = ell.beta;
    rec.measured_logdet = logdet_ratio(exact_gram, lambda_min);
    rec.logdet_bound = cap;

    EpisodeTrajectory traj = run_episode(env, rec.choice.gains, rec.x1, k, cfg.gamma);
    const Mat gram_increment = traj.gram_increment();
    agent.observe(gram_increment, traj.cross_increment());
    exact_gram += gram_increment;
    if (options.keep_trajectories) rec.trajectory = std::move(traj);
    records.push_back(std::move(rec));

    if (agent.clamp_events() > cfg.episodes / 10)
      throw std::runtime_error("run_ofu: repeated PD conditioning failures");
  }
  return records;
}

OptimisticChoice OfuAgent::select(const ConfidenceEllipsoid& ell, const Vec& x1,
                                  const CostMatrices& cost, const Mat& sigma_w,
                                  const SearchOptions& options) {
  return optimistic_select(ell, x1, cost, sigma_w, horizon_, gamma_, search_rng_, options);
}

}  // namespace plqr
