#pragma once

#include <array>

namespace smrec {

// Hyperparameters of the recovery solver.  Per-quantity values are ordered
// (voltage-squared, active power, reactive power) throughout.
struct SolverConfig {
  // sparsity trade-off per quantity
  double lambda_u = 0.1;
  double lambda_p = 0.1;
  double lambda_q = 0.1;

  // smoothing of the nuclear-norm surrogate
  double mu_u = 1e-3;
  double mu_p = 1e-3;
  double mu_q = 1e-3;

  // smoothing of the l1 surrogate
  double nu_u = 1e-3;
  double nu_p = 1e-3;
  double nu_q = 1e-3;

  // scalarization weights; must sum to 1
  std::array<double, 3> omega{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  // proximity weight of the prox subproblems
  double L = 1e3;

  // per-entry noise standard deviation per quantity (observation units)
  double delta_u = 0.0;
  double delta_p = 0.0;
  double delta_q = 0.0;

  int max_outer_iters = 300;
  int max_inner_iters = 200;
  double inner_tol = 1e-8;

  // stop outer iterations early once the iterate displacement falls below
  // this Frobenius norm; 0 disables the early stop
  double early_stop_tol = 1e-7;

  // throws std::invalid_argument when a field is out of range
  void validate() const;
};

}  // namespace smrec
