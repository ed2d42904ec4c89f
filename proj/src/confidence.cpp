#include "plqr/confidence.hpp"

#include <cmath>
#include <stdexcept>

namespace plqr {

bool condition_to_pd(Mat& V, double floor) {
  V = symmetrized(V);
  Eigen::SelfAdjointEigenSolver<Mat> es(V);
  if (es.eigenvalues().minCoeff() >= floor) return false;
  Vec clamped = es.eigenvalues().cwiseMax(floor);
  V = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  V = symmetrized(V);
  return true;
}

Mat estimate(const GramStatistics& stats) {
  Eigen::LLT<Mat> llt(stats.V);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("estimate: V is not positive definite");
  Mat theta = llt.solve(stats.U);
  if (!theta.allFinite()) throw std::runtime_error("estimate: non-finite solution");
  return theta;
}

double radius(double logdet_term, const RegularizerBounds& bounds, double c_w, int n,
              double alpha) {
  if (logdet_term < 0.0) throw std::invalid_argument("radius: logdet_term must be >= 0");
  return c_w * std::sqrt(2.0 * std::log(2.0 / alpha) + n * logdet_term) +
         std::sqrt(bounds.lambda_max) + bounds.nu;
}

bool contains(const ConfidenceEllipsoid& ell, const Mat& theta) {
  if (theta.rows() != ell.center.rows() || theta.cols() != ell.center.cols())
    throw std::invalid_argument("contains: shape mismatch");
  Mat diff = theta - ell.center;
  const double dist2 = (diff.transpose() * ell.V * diff).trace();
  return dist2 <= ell.beta * ell.beta;
}

double logdet_cap(int n, int d, int horizon, int episodes, double gamma, double lambda_min) {
  const double p = n + d;
  const double load = static_cast<double>(horizon) * static_cast<double>(episodes) *
                      (1.0 + gamma) * (1.0 + gamma);
  return p * std::log1p(load / (p * lambda_min));
}

double logdet_ratio(const Mat& gram, double lambda) {
  Mat m = Mat::Identity(gram.rows(), gram.cols()) + gram / lambda;
  Eigen::LLT<Mat> llt(symmetrized(m));
  if (llt.info() != Eigen::Success) throw std::runtime_error("logdet_ratio: matrix not PD");
  return 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
}

}  // namespace plqr
