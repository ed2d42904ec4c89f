#pragma once

#include "plqr/types.hpp"

namespace plqr {

// Regression statistics V = Z^T Z + H_k and U = Z^T X_next + L_k, possibly
// privatized. V is kept symmetric PD; clamp_events counts eigenvalue floors
// applied by condition_to_pd.
struct GramStatistics {
  Mat V;
  Mat U;
  int episode = 0;
  int clamp_events = 0;
};

// Bounds assumed of the regularizer sequence: ||H_k|| <= lambda_max,
// ||H_k^{-1}|| <= 1/lambda_min, ||L_k||_{H_k^{-1}} <= nu.
struct RegularizerBounds {
  double lambda_min = 1.0;
  double lambda_max = 1.0;
  double nu = 0.0;
};

struct ConfidenceEllipsoid {
  Mat center;   // (n+d) x n
  Mat V;        // (n+d) x (n+d), symmetric PD
  double beta = 0.0;
  double alpha = 1.0;
};

// Eigenvalue-floors V in place so its smallest eigenvalue is >= floor.
// Returns true when a clamp was applied.
bool condition_to_pd(Mat& V, double floor = 1e-8);

// Ridge estimate solving V theta_hat = U by symmetric-PD factorization.
Mat estimate(const GramStatistics& stats);

// Confidence radius
//   beta = c_w * sqrt(2 ln(2/alpha) + n * logdet_term) + sqrt(lambda_max) + nu,
// where logdet_term is ln det(I + lambda_min^{-1} Z^T Z) or its deterministic
// upper bound (see logdet_cap).
double radius(double logdet_term, const RegularizerBounds& bounds, double c_w, int n,
              double alpha);

// Membership test trace((theta - center)^T V (theta - center)) <= beta^2.
bool contains(const ConfidenceEllipsoid& ell, const Mat& theta);

// Deterministic bound (n+d) ln(1 + H K (1+gamma)^2 / ((n+d) lambda_min)).
double logdet_cap(int n, int d, int horizon, int episodes, double gamma, double lambda_min);

// ln det(I + gram / lambda) for symmetric PSD gram.
double logdet_ratio(const Mat& gram, double lambda);

}  // namespace plqr
