#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plqr/confidence.hpp"
#include "plqr/lq_system.hpp"
#include "plqr/private_counters.hpp"
#include "plqr/riccati.hpp"
#include "plqr/types.hpp"

namespace plqr {

struct NonPrivateMode {
  double lambda = 1.0;
};

struct PrivateMode {
  double epsilon = 1.0;
  double delta = 0.01;
  bool approximate_sigma = false;
};

// Constants for the private regularizer (accumulated counter noise + eta I):
//   Lambda = sigma1 sqrt(m) (4 sqrt(n+d) + sqrt(8 ln(4K/alpha)))
//   eta = 2 Lambda, lambda_min = Lambda, lambda_max = 3 Lambda,
//   nu = sigma2 sqrt(m/Lambda) (sqrt(2 n (n+d)) + sqrt(4 ln(2K/alpha))).
struct PrivateCalibration {
  double noise_cap = 0.0;  // Lambda
  double eta = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double nu = 0.0;
};

PrivateCalibration calibrate(int n, int d, int episodes, double alpha,
                             const PrivacyBudget& budget);

// Resolved wiring shared by both modes. The non-private path is the
// zero-noise, H_k = lambda I instantiation of the same machinery.
struct AgentSetup {
  PrivacyBudget budget;
  double ridge = 1.0;              // added to the queried Gram statistic
  RegularizerBounds bounds;
  double alpha_confidence = 0.1;   // alpha used inside the radius
  bool use_logdet_cap = false;
  bool is_private = false;
  std::optional<PrivateCalibration> calibration;
  std::string label = "non_private";
};

AgentSetup make_setup(const NonPrivateMode& mode, int episodes, int horizon, double gamma,
                      double alpha);
AgentSetup make_setup(const PrivateMode& mode, int n, int d, int episodes, int horizon,
                      double gamma, double alpha);
// Private plumbing with sigma1 = sigma2 = 0 and eta = lambda; behaves exactly
// like the non-private agent.
AgentSetup degenerate_private_setup(double lambda, int episodes, int horizon, double gamma,
                                    double alpha);

struct OptimisticChoice {
  Mat theta;
  GainSchedule gains;
  double objective = 0.0;
  double max_gain_norm = 0.0;
  int candidates_evaluated = 0;
  int gain_rejections = 0;
  int membership_rejections = 0;
  bool fallback = false;
};

struct SearchOptions {
  int budget = 32;            // ellipsoid samples before refinement
  int refine_elites = 2;      // separated global candidates refined locally
  int refine_stages = 2;
  int refine_samples = 12;
  double refine_shrink = 0.25;
  std::optional<Mat> forced_candidate;  // test hook, filtered like any other
};

// Approximate argmin of J_1^*(theta, x1) over C_k(alpha), the Frobenius unit
// ball, and the gain budget max_h ||K_h|| <= gamma. Seeded sampling: the
// projected center plus `budget` ellipsoid draws, then local resampling
// around the incumbent. If every candidate violates the gain budget, the one
// with the smallest max gain norm is returned with `fallback` set.
OptimisticChoice optimistic_select(const ConfidenceEllipsoid& ell, const Vec& x1,
                                   const CostMatrices& cost, const Mat& sigma_w, int horizon,
                                   double gamma, Rng& rng, const SearchOptions& options);

// Sequential decision state. Episode data enters only through the two binary
// counters; the agent holds no trajectory store.
class OfuAgent {
 public:
  OfuAgent(int n, int d, int horizon, int episodes, double gamma, double c_w, AgentSetup setup,
           std::uint64_t seed);

  GramStatistics build_statistics(int episode);
  ConfidenceEllipsoid confidence_set(const GramStatistics& stats, int episode) const;
  OptimisticChoice select(const ConfidenceEllipsoid& ell, const Vec& x1,
                          const CostMatrices& cost, const Mat& sigma_w,
                          const SearchOptions& options);
  void observe(const Mat& gram_increment, const Mat& cross_increment);

  const AgentSetup& setup() const { return setup_; }
  int clamp_events() const { return clamp_events_; }
  long raw_data_accesses() const { return raw_data_accesses_; }
  const BinaryCounter& gram_counter() const { return gram_counter_; }
  const BinaryCounter& cross_counter() const { return cross_counter_; }

 private:
  int n_;
  int d_;
  int horizon_;
  int episodes_;
  double gamma_;
  double c_w_;
  AgentSetup setup_;
  BinaryCounter gram_counter_;
  BinaryCounter cross_counter_;
  Rng search_rng_;
  int clamp_events_ = 0;
  long raw_data_accesses_ = 0;  // audit: stays 0 by construction
};

struct EpisodeRecord {
  int episode = 0;
  Vec x1;
  OptimisticChoice choice;
  double beta = 0.0;
  double measured_logdet = 0.0;  // harness instrumentation, not agent input
  double logdet_bound = 0.0;
  EpisodeTrajectory trajectory;
};

struct RunOptions {
  SearchOptions search;
  bool force_truth_candidate = false;  // optimism instrumentation
  bool keep_trajectories = true;
};

// Executes the chosen linear policy for one episode on the true system.
EpisodeTrajectory run_episode(Environment& env, const GainSchedule& gains, const Vec& x1,
                              int episode, double gamma);

// Full loop: per episode build statistics, confidence set, optimistic
// selection, rollout, counter update. Throws if PD conditioning is needed
// more than episodes/10 times.
std::vector<EpisodeRecord> run_ofu(Environment& env, OfuAgent& agent,
                                   const RunOptions& options = {});

}  // namespace plqr
