#pragma once

#include <vector>

#include "plqr/lq_system.hpp"
#include "plqr/types.hpp"

namespace plqr {

// Backward value matrices P_1..P_{H+1}, stored so that at(h) is P_h and
// at(H+1) is the zero terminal matrix.
struct ValueMatrices {
  std::vector<Mat> P;  // size H+1

  int horizon() const { return static_cast<int>(P.size()) - 1; }
  const Mat& at(int h) const { return P.at(static_cast<std::size_t>(h) - 1); }
};

struct GainSchedule {
  std::vector<Mat> K;  // size H, d x n each

  int horizon() const { return static_cast<int>(K.size()); }
  const Mat& at(int h) const { return K.at(static_cast<std::size_t>(h) - 1); }

  // max_h of the spectral norm; the quantity the gamma budget constrains.
  double max_gain_norm() const;
};

struct RiccatiSolution {
  ValueMatrices value;
  GainSchedule gains;
};

// Finite-horizon Riccati recursion from P_{H+1} = 0, with
//   K_h = -(R + B^T P_{h+1} B)^{-1} B^T P_{h+1} A.
// Each P_h is symmetrized after the update.
RiccatiSolution riccati_backward(const SystemDynamics& dyn, const CostMatrices& cost, int horizon);

// x^T P_h x + sum_{h'=h..H} trace(P_{h'+1} Sigma_w). h = H+1 gives 0.
double optimal_cost(const ValueMatrices& vm, const Mat& sigma_w, const Vec& x, int h);
double optimal_cost(const SystemDynamics& dyn, const CostMatrices& cost, const NoiseModel& noise,
                    int horizon, const Vec& x, int h);

// Cost-to-go matrices of a fixed linear policy u = K_h x:
//   M_h = Q + K_h^T R K_h + (A + B K_h)^T M_{h+1} (A + B K_h),  M_{H+1} = 0.
ValueMatrices closed_loop_value(const SystemDynamics& dyn, const CostMatrices& cost,
                                const GainSchedule& gains);

// Exact expected cost of the linear policy from (x, h); equals optimal_cost
// when the gains come from riccati_backward.
double linear_policy_cost(const SystemDynamics& dyn, const CostMatrices& cost,
                          const NoiseModel& noise, const GainSchedule& gains, const Vec& x, int h);

}  // namespace plqr
