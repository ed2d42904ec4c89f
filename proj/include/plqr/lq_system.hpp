#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "plqr/types.hpp"

namespace plqr {

// Unknown parameter of the linear dynamics x' = A x + B u + w, packed as
// theta = [A, B]^T of shape (n+d) x n so that x'^T = z^T theta for
// z = [x^T, u^T]^T.
struct SystemDynamics {
  Mat A;  // n x n
  Mat B;  // n x d

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index control_dim() const { return B.cols(); }

  Mat theta() const;
  static SystemDynamics from_theta(const Mat& theta, Eigen::Index n, Eigen::Index d);
};

struct CostMatrices {
  Mat Q;  // n x n, symmetric positive definite
  Mat R;  // d x d, symmetric positive definite

  double stage_cost(const Vec& x, const Vec& u) const {
    return x.dot(Q * x) + u.dot(R * u);
  }
};

// Process noise: radius * (uniform point on the unit sphere). Zero mean by
// symmetry, norm exactly `radius`, covariance (radius^2 / n) I in closed form.
// radius == 0 disables noise.
struct NoiseModel {
  Eigen::Index n = 0;
  double radius = 0.0;

  bool enabled() const { return radius > 0.0; }
  Mat covariance() const {
    if (!enabled()) return Mat::Zero(n, n);
    return (radius * radius / static_cast<double>(n)) * Mat::Identity(n, n);
  }
};

struct InstanceConfig {
  int n = 1;
  int d = 1;
  int horizon = 5;       // H
  int episodes = 16;     // K
  double gamma = 0.5;    // controller-norm budget
  double c_a = 0.5;
  double c_b = 0.3;
  double c_w = 0.1;
  double c_cost = 1.0;
  double r_cost = -1.0;  // control-cost scale; < 0 means "use c_cost"
  std::uint64_t seed = 0;
  bool redraw_initial_state = false;

  double control_cost_scale() const { return r_cost < 0.0 ? c_cost : r_cost; }

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct Transition {
  Vec x;
  Vec u;
  double cost = 0.0;
  Vec x_next;
};

struct EpisodeTrajectory {
  int episode = 0;
  std::vector<Transition> steps;

  // sum_h z_h z_h^T and sum_h z_h x_{h+1}^T, the per-episode counter inputs.
  Mat gram_increment() const;
  Mat cross_increment() const;
};

struct Instance {
  SystemDynamics dynamics;
  CostMatrices cost;
  NoiseModel noise;
};

// Draws an admissible instance: ||A|| = c_a, ||B|| = c_b (spectral), then the
// whole theta is shrunk by min(1, 1/||theta||_F). Deterministic in cfg.seed.
Instance sample_instance(const InstanceConfig& cfg);

Vec draw_noise(const NoiseModel& noise, Rng& rng);

// One step of the dynamics; returns (next state, stage cost).
std::pair<Vec, double> step(const SystemDynamics& dyn, const CostMatrices& cost,
                            const NoiseModel& noise, const Vec& x, const Vec& u, Rng& rng);

// Seeded unit-norm initial state (the ||x_1|| <= 1 requirement holds with equality).
Vec draw_initial_state(Eigen::Index n, Rng& rng);

// Owns the true dynamics and the simulation randomness. Initial states come
// from the instance seed (shared across replicas); process noise comes from
// the per-run seed.
class Environment {
 public:
  Environment(Instance instance, const InstanceConfig& cfg, std::uint64_t run_seed);

  const Instance& instance() const { return instance_; }
  const InstanceConfig& config() const { return cfg_; }

  Vec initial_state(int episode);
  std::pair<Vec, double> advance(const Vec& x, const Vec& u);

 private:
  Instance instance_;
  InstanceConfig cfg_;
  Vec fixed_x1_;
  Rng x1_rng_;
  Rng noise_rng_;
};

}  // namespace plqr
