#include "plqr/private_counters.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace plqr {

int tree_levels(int episodes) {
  if (episodes < 1) throw std::invalid_argument("tree_levels: episodes must be >= 1");
  int m = 0;
  while ((1LL << m) < episodes) ++m;
  return std::max(1, m);
}

std::pair<double, double> sensitivity_bounds(int horizon, double gamma) {
  if (horizon < 1) throw std::invalid_argument("sensitivity_bounds: horizon must be >= 1");
  if (gamma < 0.0) throw std::invalid_argument("sensitivity_bounds: gamma must be >= 0");
  const double h = static_cast<double>(horizon);
  return {h * (1.0 + gamma) * (1.0 + gamma), h * (1.0 + gamma)};
}

double calibrate_sigma(double epsilon, double delta, int episodes, double sensitivity,
                       bool approximate) {
  if (epsilon <= 0.0) throw std::invalid_argument("calibrate_sigma: epsilon must be > 0");
  if (delta <= 0.0 || delta > 1.0)
    throw std::invalid_argument("calibrate_sigma: delta must be in (0, 1]");
  const double m = tree_levels(episodes);
  const double log_term = std::log(2.0 / delta);
  if (approximate) return sensitivity * std::sqrt(8.0 * m * log_term) / epsilon;
  const double sqrt_rho = std::sqrt(log_term + epsilon / 2.0) - std::sqrt(log_term);
  const double rho = sqrt_rho * sqrt_rho;
  return sensitivity * std::sqrt(m / (2.0 * rho));
}

double accountant_epsilon(double sigma, double sensitivity, int episodes, double delta) {
  if (sigma <= 0.0) return std::numeric_limits<double>::infinity();
  const double m = tree_levels(episodes);
  const double rho = m * sensitivity * sensitivity / (2.0 * sigma * sigma);
  return rho + 2.0 * std::sqrt(rho * std::log(2.0 / delta));
}

double PrivacyBudget::epsilon_actual(int episodes) const {
  return accountant_epsilon(sigma1, delta1, episodes, delta) +
         accountant_epsilon(sigma2, delta2, episodes, delta);
}

PrivacyBudget make_privacy_budget(double epsilon, double delta, int episodes, int horizon,
                                  double gamma, bool approximate) {
  const auto [d1, d2] = sensitivity_bounds(horizon, gamma);
  PrivacyBudget b;
  b.epsilon = epsilon;
  b.delta = delta;
  b.delta1 = d1;
  b.delta2 = d2;
  b.levels = tree_levels(episodes);
  b.sigma1 = calibrate_sigma(epsilon, delta, episodes, d1, approximate);
  b.sigma2 = calibrate_sigma(epsilon, delta, episodes, d2, approximate);
  b.rho1 = b.levels * d1 * d1 / (2.0 * b.sigma1 * b.sigma1);
  b.rho2 = b.levels * d2 * d2 / (2.0 * b.sigma2 * b.sigma2);
  return b;
}

PrivacyBudget zero_noise_budget(int episodes, int horizon, double gamma) {
  const auto [d1, d2] = sensitivity_bounds(horizon, gamma);
  PrivacyBudget b;
  b.epsilon = std::numeric_limits<double>::infinity();
  b.delta = 1.0;
  b.delta1 = d1;
  b.delta2 = d2;
  b.levels = tree_levels(episodes);
  return b;
}

BinaryCounter::BinaryCounter(int capacity, Eigen::Index rows, Eigen::Index cols, double sigma,
                             bool symmetric, std::uint64_t noise_seed)
    : capacity_(capacity),
      rows_(rows),
      cols_(cols),
      sigma_(sigma),
      symmetric_(symmetric),
      rng_(noise_seed) {
  if (capacity < 1) throw std::invalid_argument("BinaryCounter: capacity must be >= 1");
  if (sigma < 0.0) throw std::invalid_argument("BinaryCounter: sigma must be >= 0");
  if (symmetric && rows != cols)
    throw std::invalid_argument("BinaryCounter: symmetric counter needs a square shape");
  const int m = tree_levels(capacity);
  level_true_.assign(static_cast<std::size_t>(m) + 1, Mat());
  active_.assign(static_cast<std::size_t>(m) + 1, std::nullopt);
}

Mat BinaryCounter::draw_noise() {
  if (sigma_ == 0.0) return Mat::Zero(rows_, cols_);
  Mat noise = sigma_ * gaussian_matrix(rows_, cols_, rng_);
  if (symmetric_) {
    // Tie (p,q) to (q,p); the diagonal keeps its own draw at the same sigma.
    for (Eigen::Index q = 0; q < cols_; ++q)
      for (Eigen::Index p = q + 1; p < rows_; ++p) noise(p, q) = noise(q, p);
  }
  return noise;
}

void BinaryCounter::feed(const Mat& episode_sum) {
  if (fed_ >= capacity_) throw std::overflow_error("BinaryCounter: stream capacity exceeded");
  if (episode_sum.rows() != rows_ || episode_sum.cols() != cols_)
    throw std::invalid_argument("BinaryCounter: shape mismatch");
  ++fed_;
  const int t = fed_;

  int level = 0;
  while (((t >> level) & 1) == 0) ++level;

  Mat block = episode_sum;
  for (int j = 0; j < level; ++j) {
    block += level_true_[static_cast<std::size_t>(j)];
    level_true_[static_cast<std::size_t>(j)] = Mat();
    active_[static_cast<std::size_t>(j)].reset();
  }
  Node node;
  node.lo = t - (1 << level) + 1;
  node.hi = t;
  node.noisy = block + draw_noise();
  level_true_[static_cast<std::size_t>(level)] = std::move(block);
  active_[static_cast<std::size_t>(level)] = std::move(node);
  ++nodes_created_;
}

Mat BinaryCounter::query(int episode) const {
  const int prefix = episode - 1;
  if (prefix < 0 || prefix > fed_)
    throw std::out_of_range("BinaryCounter: query beyond fed range");
  ++queries_served_;
  Mat total = Mat::Zero(rows_, cols_);
  int covered = 0;
  for (int level = static_cast<int>(active_.size()) - 1; level >= 0; --level) {
    if ((prefix >> level) & 1) {
      const auto& node = active_[static_cast<std::size_t>(level)];
      if (!node || node->lo != covered + 1)
        throw std::logic_error("BinaryCounter: required node was discarded");
      total += node->noisy;
      covered = node->hi;
    }
  }
  return total;
}

int BinaryCounter::nodes_for_query(int episode) const {
  int prefix = episode - 1;
  int count = 0;
  while (prefix > 0) {
    count += prefix & 1;
    prefix >>= 1;
  }
  return count;
}

std::vector<std::pair<int, int>> BinaryCounter::active_ranges() const {
  std::vector<std::pair<int, int>> ranges;
  for (const auto& node : active_)
    if (node) ranges.emplace_back(node->lo, node->hi);
  return ranges;
}

}  // namespace plqr
