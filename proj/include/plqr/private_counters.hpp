#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "plqr/types.hpp"

namespace plqr {

// Number of P-sums any single episode can appear in: m = ceil(log2 K),
// floored at 1 so the degenerate K = 1 stream still gets a finite scale.
int tree_levels(int episodes);

// L2-sensitivities of the two episode aggregates when one episode changes:
//   Delta_1 = H (1+gamma)^2   for sum_h z z^T,
//   Delta_2 = H (1+gamma)     for sum_h z x_next^T.
std::pair<double, double> sensitivity_bounds(int horizon, double gamma);

// Gaussian scale giving one counter an (epsilon/2, delta/2)-DP guarantee.
// Exact mode solves rho + 2 sqrt(rho ln(2/delta)) = epsilon/2 for the zCDP
// budget and sets sigma^2 = m Delta^2 / (2 rho). Approximate mode uses
// sigma^2 = 8 m Delta^2 ln(2/delta) / epsilon^2.
double calibrate_sigma(double epsilon, double delta, int episodes, double sensitivity,
                       bool approximate = false);

// Inverse direction: rho = m Delta^2 / (2 sigma^2), converted to the DP
// epsilon rho + 2 sqrt(rho ln(2/delta)) spent by one counter.
double accountant_epsilon(double sigma, double sensitivity, int episodes, double delta);

// Budget for the pair of counters, split evenly: each counter gets
// (epsilon/2, delta/2) and the composition reports (epsilon, delta).
struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 1.0;
  double delta1 = 0.0;   // sensitivity of the Gram stream
  double delta2 = 0.0;   // sensitivity of the cross stream
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double rho1 = 0.0;
  double rho2 = 0.0;
  int levels = 1;        // m

  double epsilon_actual(int episodes) const;
};

PrivacyBudget make_privacy_budget(double epsilon, double delta, int episodes, int horizon,
                                  double gamma, bool approximate = false);

// Zero-noise budget used by the non-private path and degeneracy tests.
PrivacyBudget zero_noise_budget(int episodes, int horizon, double gamma);

// Binary counting mechanism over a stream of at most `capacity` matrices.
// Feeding episode t finalizes the dyadic node ending at t; per-node Gaussian
// noise is drawn exactly once at that moment and persisted. query(k) returns
// the noisy prefix [1, k-1] by summing the at most ceil(log2 K) retained
// nodes; nodes subsumed by a completed parent are dropped.
class BinaryCounter {
 public:
  BinaryCounter(int capacity, Eigen::Index rows, Eigen::Index cols, double sigma, bool symmetric,
                std::uint64_t noise_seed);

  void feed(const Mat& episode_sum);
  Mat query(int episode) const;
  int nodes_for_query(int episode) const;

  int capacity() const { return capacity_; }
  int episodes_fed() const { return fed_; }
  double sigma() const { return sigma_; }
  bool symmetric() const { return symmetric_; }
  int levels() const { return static_cast<int>(level_true_.size()); }
  long nodes_created() const { return nodes_created_; }
  long queries_served() const { return queries_served_; }

  // Ranges [lo, hi] of the retained noisy nodes, lowest level first.
  std::vector<std::pair<int, int>> active_ranges() const;

 private:
  struct Node {
    int lo = 0;
    int hi = 0;
    Mat noisy;
  };

  Mat draw_noise();

  int capacity_;
  Eigen::Index rows_;
  Eigen::Index cols_;
  double sigma_;
  bool symmetric_;
  int fed_ = 0;
  long nodes_created_ = 0;
  mutable long queries_served_ = 0;
  std::vector<Mat> level_true_;                 // accumulating true block sums
  std::vector<std::optional<Node>> active_;     // retained noisy node per level
  Rng rng_;
};

}  // namespace plqr
