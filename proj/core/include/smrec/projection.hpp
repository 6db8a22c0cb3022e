#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace smrec {

// The three per-quantity matrices handled together throughout the recovery
// stage, ordered (voltage-squared, active power, reactive power).
struct MatrixTriple {
  Eigen::MatrixXd u, p, q;
};

bool same_shape(const MatrixTriple& a, const MatrixTriple& b);
MatrixTriple zeros_like(const MatrixTriple& a);
// Frobenius distance over all three blocks
double triple_distance(const MatrixTriple& a, const MatrixTriple& b);

// Affine voltage coupling mu = mp*R^T + mq*X^T + u0.
struct LinearCoupling {
  Eigen::MatrixXd resistance;
  Eigen::MatrixXd reactance;
  double u0 = 1.0;
};

// Feasible set of the recovery problem: one Frobenius ball
// ||raw - M - S||_F <= radius per quantity, intersected (optionally) with
// the affine voltage coupling on the refined matrices.  The coupling
// projection reduces to one SPD solve per call whose factorization is
// prepared once here and reused for every subproblem of a window.
class FeasibleSetSpec {
 public:
  FeasibleSetSpec(MatrixTriple raw, double radius_u, double radius_p, double radius_q,
                  std::optional<LinearCoupling> coupling);

  const MatrixTriple& raw() const { return raw_; }
  double radius_u() const { return radius_u_; }
  double radius_p() const { return radius_p_; }
  double radius_q() const { return radius_q_; }
  bool has_coupling() const { return coupling_.has_value(); }
  const LinearCoupling& coupling() const { return *coupling_; }

  // overwrites (mu, mp, mq) with the nearest coupled triple; no-op without coupling
  void project_coupling(Eigen::MatrixXd& mu, Eigen::MatrixXd& mp, Eigen::MatrixXd& mq) const;

  // largest violation across the balls (excess over the radius) and, when
  // present, the coupling equation (Frobenius norm of the defect)
  double max_constraint_violation(const MatrixTriple& refined, const MatrixTriple& sparse) const;

 private:
  MatrixTriple raw_;
  double radius_u_, radius_p_, radius_q_;
  std::optional<LinearCoupling> coupling_;
  Eigen::LLT<Eigen::MatrixXd> coupling_llt_;  //  I + J^T J with J = [R X]
};

// Linear-plus-proximity subproblem over the feasible set: minimize
//   <grad_refined, M> + <grad_sparse, S>
//     + (L/2) (||M - center_refined||_F^2 + ||S - center_sparse||_F^2).
struct ProxSubproblem {
  MatrixTriple grad_refined;
  MatrixTriple grad_sparse;
  MatrixTriple center_refined;
  MatrixTriple center_sparse;
  double proximity_weight = 1.0;  // L
};

struct ProxSolution {
  MatrixTriple refined;
  MatrixTriple sparse;
  int sweeps = 0;
  double gap = 0.0;  // displacement of the final sweep
};

class ProxConvergenceError : public std::runtime_error {
 public:
  ProxConvergenceError(const std::string& msg, ProxSolution last)
      : std::runtime_error(msg), last_(std::move(last)) {}
  const ProxSolution& last_iterate() const { return last_; }

 private:
  ProxSolution last_;
};

// Euclidean projection of (m_center, s_center) onto
// {(M, S) : ||m_raw - M - S||_F <= eps}.  Interior points are returned
// unchanged; otherwise both blocks shift along the violation direction.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> project_ball_pair(const Eigen::MatrixXd& m_center,
                                                              const Eigen::MatrixXd& s_center,
                                                              const Eigen::MatrixXd& m_raw,
                                                              double eps);

// Exact minimizer of the subproblem via Dykstra alternating projections:
// completing the square turns the objective into the projection of the prox
// point (center - grad/L) onto the feasible intersection.  Sweeps end with
// the coupling set so the returned refined triple satisfies the voltage
// equation to solver precision.  Throws ProxConvergenceError when the sweep
// displacement has not fallen below tol after max_iter sweeps.
ProxSolution solve_prox(const ProxSubproblem& sub, const FeasibleSetSpec& feas, double tol = 1e-8,
                        int max_iter = 200);

}  // namespace smrec
