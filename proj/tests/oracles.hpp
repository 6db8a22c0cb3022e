#pragma once

// Independent reference implementations used only by the tests.  Each one
// deliberately takes a different algorithmic route than the library code it
// checks.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "smrec/feeder.hpp"

namespace oracles {

// nuclear norm via the eigen-decomposition of A^T A
double nuclear_norm_eig(const Eigen::MatrixXd& a);

// common-path impedance sums by explicit root-path enumeration and
// intersection, no LCA shortcuts
Eigen::MatrixXd path_intersection_sums(const smrec::FeederModel& feeder,
                                       const std::vector<std::string>& meters,
                                       bool use_reactance);

// maximum of <A, alpha> - (mu/2)||alpha||_F^2 over ||alpha||_2 <= 1 by
// projected gradient ascent on alpha
double smoothed_nuclear_pga(const Eigen::MatrixXd& a, double mu, int iters = 4000);

// per-entry scalar maximization of s*b - (nu/2) b^2 over b in [-1, 1] by
// golden-section search
double smoothed_l1_scan(const Eigen::MatrixXd& s, double nu);

// central finite differences of a scalar function of a matrix
Eigen::MatrixXd fd_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                            const Eigen::MatrixXd& at, double step = 1e-6);

// Generic small QCQP solver (log-barrier interior point with equality
// elimination):
//   minimize   0.5 x^T H x + g^T x
//   subject to A_eq x = b_eq
//              ||P_i x - r_i||_2 <= eps_i
// Requires a strictly feasible start.
struct Qcqp {
  Eigen::MatrixXd hess;
  Eigen::VectorXd lin;
  Eigen::MatrixXd a_eq;  // may have zero rows
  Eigen::VectorXd b_eq;
  std::vector<Eigen::MatrixXd> ball_ops;
  std::vector<Eigen::VectorXd> ball_centers;
  std::vector<double> ball_radii;
};

Eigen::VectorXd solve_qcqp(const Qcqp& prob, const Eigen::VectorXd& strictly_feasible,
                           double tol = 1e-9);

// inexact augmented-Lagrange-multiplier robust PCA:
//   minimize ||A||_* + lam ||E||_1  s.t.  D = A + E
void ialm_rpca(const Eigen::MatrixXd& d, double lam, Eigen::MatrixXd& low_rank,
               Eigen::MatrixXd& sparse, int max_iter = 500);

}  // namespace oracles
