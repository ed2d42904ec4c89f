#include "plqr/riccati.hpp"

#include <stdexcept>

namespace plqr {

double GainSchedule::max_gain_norm() const {
  double worst = 0.0;
  for (const Mat& k : K) worst = std::max(worst, spectral_norm(k));
  return worst;
}

RiccatiSolution riccati_backward(const SystemDynamics& dyn, const CostMatrices& cost,
                                 int horizon) {
  if (horizon < 1) throw std::invalid_argument("riccati_backward: horizon must be >= 1");
  const Eigen::Index n = dyn.state_dim();
  const Eigen::Index d = dyn.control_dim();
  const Mat& A = dyn.A;
  const Mat& B = dyn.B;

  RiccatiSolution sol;
  sol.value.P.assign(static_cast<std::size_t>(horizon) + 1, Mat::Zero(n, n));
  sol.gains.K.assign(static_cast<std::size_t>(horizon), Mat::Zero(d, n));

  for (int h = horizon; h >= 1; --h) {
    const Mat& Pn = sol.value.P[static_cast<std::size_t>(h)];  // P_{h+1}
    Mat BtP = B.transpose() * Pn;
    Mat G = cost.R + BtP * B;  // PD: R PD, B^T P B PSD
    Mat K = -G.llt().solve(BtP * A);
    Mat P = cost.Q + A.transpose() * Pn * A + A.transpose() * BtP.transpose() * K;
    sol.value.P[static_cast<std::size_t>(h) - 1] = symmetrized(P);
    sol.gains.K[static_cast<std::size_t>(h) - 1] = std::move(K);
  }
  return sol;
}

namespace {

double value_sequence_cost(const ValueMatrices& vm, const Mat& sigma_w, const Vec& x, int h) {
  const int H = vm.horizon();
  if (h < 1 || h > H + 1) throw std::out_of_range("cost-to-go: step index out of range");
  if (h == H + 1) return 0.0;
  double cost = x.dot(vm.at(h) * x);
  if (sigma_w.size() > 0 && !sigma_w.isZero(0.0)) {
    for (int hp = h; hp <= H; ++hp) cost += (vm.at(hp + 1) * sigma_w).trace();
  }
  return cost;
}

}  // namespace

double optimal_cost(const ValueMatrices& vm, const Mat& sigma_w, const Vec& x, int h) {
  return value_sequence_cost(vm, sigma_w, x, h);
}

double optimal_cost(const SystemDynamics& dyn, const CostMatrices& cost, const NoiseModel& noise,
                    int horizon, const Vec& x, int h) {
  return value_sequence_cost(riccati_backward(dyn, cost, horizon).value, noise.covariance(), x, h);
}

ValueMatrices closed_loop_value(const SystemDynamics& dyn, const CostMatrices& cost,
                                const GainSchedule& gains) {
  const Eigen::Index n = dyn.state_dim();
  const int H = gains.horizon();
  ValueMatrices vm;
  vm.P.assign(static_cast<std::size_t>(H) + 1, Mat::Zero(n, n));
  for (int h = H; h >= 1; --h) {
    const Mat& Mn = vm.P[static_cast<std::size_t>(h)];
    const Mat& K = gains.at(h);
    Mat closed = dyn.A + dyn.B * K;
    Mat M = cost.Q + K.transpose() * cost.R * K + closed.transpose() * Mn * closed;
    vm.P[static_cast<std::size_t>(h) - 1] = symmetrized(M);
  }
  return vm;
}

double linear_policy_cost(const SystemDynamics& dyn, const CostMatrices& cost,
                          const NoiseModel& noise, const GainSchedule& gains, const Vec& x,
                          int h) {
  return value_sequence_cost(closed_loop_value(dyn, cost, gains), noise.covariance(), x, h);
}

}  // namespace plqr
