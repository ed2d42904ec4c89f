#include "plqr/lq_system.hpp"

#include <cmath>
#include <string>

namespace plqr {

Mat SystemDynamics::theta() const {
  const Eigen::Index n = A.rows();
  const Eigen::Index d = B.cols();
  Mat theta(n + d, n);
  theta.topRows(n) = A.transpose();
  theta.bottomRows(d) = B.transpose();
  return theta;
}

SystemDynamics SystemDynamics::from_theta(const Mat& theta, Eigen::Index n, Eigen::Index d) {
  if (theta.rows() != n + d || theta.cols() != n)
    throw std::invalid_argument("from_theta: shape mismatch");
  SystemDynamics dyn;
  dyn.A = theta.topRows(n).transpose();
  dyn.B = theta.bottomRows(d).transpose();
  return dyn;
}

void InstanceConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config field '" + field + "': " + why);
  };
  if (n < 1) fail("n", "must be >= 1");
  if (d < 1) fail("d", "must be >= 1");
  if (horizon < 1) fail("H", "must be >= 1");
  if (episodes < 1) fail("K", "must be >= 1");
  if (gamma <= 0.0) fail("gamma", "must be > 0");
  if (c_a < 0.0 || c_a >= 1.0) fail("c_a", "must be in [0, 1)");
  if (c_b < 0.0 || c_b >= 1.0) fail("c_b", "must be in [0, 1)");
  if (c_w < 0.0 || c_w >= 1.0) fail("c_w", "must be in [0, 1)");
  if (c_cost <= 0.0) fail("c_cost", "must be > 0");
  if (r_cost >= 0.0 && (r_cost <= 0.0 || r_cost > c_cost))
    fail("r_cost", "must be in (0, c_cost]");
  if (c_a + gamma * c_b + c_w > 1.0 + 1e-12)
    fail("c_a", "c_a + gamma*c_b + c_w must be <= 1, got " +
                    std::to_string(c_a + gamma * c_b + c_w));
}

Mat EpisodeTrajectory::gram_increment() const {
  if (steps.empty()) return Mat();
  const Eigen::Index p = steps.front().x.size() + steps.front().u.size();
  Mat sum = Mat::Zero(p, p);
  Vec z(p);
  for (const Transition& t : steps) {
    z << t.x, t.u;
    sum.noalias() += z * z.transpose();
  }
  return sum;
}

Mat EpisodeTrajectory::cross_increment() const {
  if (steps.empty()) return Mat();
  const Eigen::Index n = steps.front().x.size();
  const Eigen::Index p = n + steps.front().u.size();
  Mat sum = Mat::Zero(p, n);
  Vec z(p);
  for (const Transition& t : steps) {
    z << t.x, t.u;
    sum.noalias() += z * t.x_next.transpose();
  }
  return sum;
}

namespace {

// Rescale to the requested spectral norm; zero target leaves a zero matrix.
Mat scaled_to_spectral(Mat m, double target) {
  if (target <= 0.0) return Mat::Zero(m.rows(), m.cols());
  const double norm = spectral_norm(m);
  if (norm == 0.0) return m;  // all-zero draw, probability zero
  return m * (target / norm);
}

}  // namespace

Instance sample_instance(const InstanceConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, StreamTag::kInstance);

  Mat a = scaled_to_spectral(gaussian_matrix(cfg.n, cfg.n, rng), cfg.c_a);
  Mat b = scaled_to_spectral(gaussian_matrix(cfg.n, cfg.d, rng), cfg.c_b);

  SystemDynamics dyn{std::move(a), std::move(b)};
  Mat theta = dyn.theta();
  const double fnorm = theta.norm();
  if (fnorm > 1.0) dyn = SystemDynamics::from_theta(theta / fnorm, cfg.n, cfg.d);

  const double cost_scale = std::min(1.0, cfg.c_cost);
  const double control_scale = std::min(1.0, cfg.control_cost_scale());
  CostMatrices cost{cost_scale * Mat::Identity(cfg.n, cfg.n),
                    control_scale * Mat::Identity(cfg.d, cfg.d)};
  NoiseModel noise{cfg.n, cfg.c_w};
  return Instance{std::move(dyn), std::move(cost), noise};
}

Vec draw_noise(const NoiseModel& noise, Rng& rng) {
  if (!noise.enabled()) return Vec::Zero(noise.n);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec w(noise.n);
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < noise.n; ++i) w(i) = normal(rng);
    norm = w.norm();
  } while (norm == 0.0);
  return (noise.radius / norm) * w;
}

std::pair<Vec, double> step(const SystemDynamics& dyn, const CostMatrices& cost,
                            const NoiseModel& noise, const Vec& x, const Vec& u, Rng& rng) {
  if (x.size() != dyn.state_dim() || u.size() != dyn.control_dim())
    throw std::invalid_argument("step: dimension mismatch");
  Vec next = dyn.A * x + dyn.B * u + draw_noise(noise, rng);
  return {std::move(next), cost.stage_cost(x, u)};
}

Vec draw_initial_state(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec x(n);
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < n; ++i) x(i) = normal(rng);
    norm = x.norm();
  } while (norm == 0.0);
  return x / norm;
}

Environment::Environment(Instance instance, const InstanceConfig& cfg, std::uint64_t run_seed)
    : instance_(std::move(instance)),
      cfg_(cfg),
      x1_rng_(make_rng(cfg.seed, StreamTag::kInitialState)),
      noise_rng_(make_rng(run_seed, StreamTag::kEnvNoise)) {
  fixed_x1_ = draw_initial_state(cfg.n, x1_rng_);
}

Vec Environment::initial_state(int) {
  if (cfg_.redraw_initial_state) return draw_initial_state(cfg_.n, x1_rng_);
  return fixed_x1_;
}

std::pair<Vec, double> Environment::advance(const Vec& x, const Vec& u) {
  return step(instance_.dynamics, instance_.cost, instance_.noise, x, u, noise_rng_);
}

}  // namespace plqr
