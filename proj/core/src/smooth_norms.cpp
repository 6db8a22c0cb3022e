#include "smrec/smooth_norms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smrec {

SmoothedEval smoothed_nuclear(const Eigen::MatrixXd& a, double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) {
    throw std::invalid_argument("smoothed_nuclear: mu must be positive");
  }
  if (!a.allFinite()) throw std::invalid_argument("smoothed_nuclear: NaN/Inf entries");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd sv = svd.singularValues();
  // treat tiny singular values as zero rank
  const double floor_cut = sv.size() > 0 ? 1e-12 * sv(0) : 0.0;

  Eigen::VectorXd clipped(sv.size());
  double value = 0.0;
  for (Eigen::Index j = 0; j < sv.size(); ++j) {
    const double z = sv(j) <= floor_cut ? 0.0 : sv(j);
    const double c = std::min(z / mu, 1.0);
    clipped(j) = c;
    value += z * c - 0.5 * mu * c * c;
  }
  SmoothedEval out;
  out.value = value;
  out.gradient = svd.matrixU() * clipped.asDiagonal() * svd.matrixV().transpose();
  return out;
}

SmoothedEval smoothed_l1(const Eigen::MatrixXd& s, double nu) {
  if (!(nu > 0.0) || !std::isfinite(nu)) {
    throw std::invalid_argument("smoothed_l1: nu must be positive");
  }
  if (!s.allFinite()) throw std::invalid_argument("smoothed_l1: NaN/Inf entries");

  SmoothedEval out;
  out.gradient = (s / nu).cwiseMax(-1.0).cwiseMin(1.0);
  // <S, beta> - (nu/2)||beta||^2, i.e. the Huber value of each entry
  out.value = (s.cwiseProduct(out.gradient)).sum() - 0.5 * nu * out.gradient.squaredNorm();
  return out;
}

}  // namespace smrec
