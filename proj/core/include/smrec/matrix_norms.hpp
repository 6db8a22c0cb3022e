#pragma once

#include <Eigen/Dense>

namespace smrec {

// Sum of singular values.
double nuclear_norm(const Eigen::MatrixXd& a);

// Sum of absolute entries.
double entrywise_l1(const Eigen::MatrixXd& a);

double frobenius_norm(const Eigen::MatrixXd& a);

// <A,B> = sum_ij A(i,j)*B(i,j).  Throws std::invalid_argument on shape mismatch.
double frobenius_inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Number of singular values strictly above `fraction` of the largest one.
// The zero matrix has effective rank 0.
int effective_rank(const Eigen::MatrixXd& a, double fraction = 0.01);

}  // namespace smrec
