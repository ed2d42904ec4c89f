#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace plqr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Stream tags for deriving independent generators from one master seed.
enum class StreamTag : std::uint64_t {
  kInstance = 1,
  kInitialState = 2,
  kEnvNoise = 3,
  kCounterGram = 4,
  kCounterCross = 5,
  kSearch = 6,
};

// SplitMix64 step; decorrelates (seed, tag) pairs into stream seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(tag) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, StreamTag tag) { return Rng(derive_seed(seed, tag)); }

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline double spectral_norm(const Mat& m) {
  if (m.rows() == m.cols() && m.isApprox(m.transpose(), 1e-12)) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  return Eigen::JacobiSVD<Mat>(m).singularValues()(0);
}

inline double min_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(sym), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Matrix of i.i.d. standard normals.
inline Mat gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace plqr
