#pragma once

#include <Eigen/Dense>

namespace smrec {

struct SmoothedEval {
  double value = 0.0;
  Eigen::MatrixXd gradient;
};

// Smooth surrogate of the nuclear norm: the attained maximum of
// <A, alpha> - (mu/2)||alpha||_F^2 over spectral-norm-ball matrices alpha.
// The maximizer clips each singular value ratio at one, so the returned
// gradient is U * diag(min(s_j/mu, 1)) * V^T with 1/mu-Lipschitz continuity.
SmoothedEval smoothed_nuclear(const Eigen::MatrixXd& a, double mu);

// Smooth surrogate of the entrywise l1 norm (per-entry Huber).  The
// gradient clamps s/nu into [-1, 1] entrywise.
SmoothedEval smoothed_l1(const Eigen::MatrixXd& s, double nu);

}  // namespace smrec
