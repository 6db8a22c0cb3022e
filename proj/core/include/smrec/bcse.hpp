#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smrec/feeder.hpp"

namespace smrec::bcse {

// Branch-current state in rectangular coordinates, one entry per feeder
// branch in canonical (declaration) order.
struct StateVector {
  Eigen::VectorXd current_re;
  Eigen::VectorXd current_im;
};

StateVector flat_start(const FeederModel& feeder);
Eigen::VectorXd flatten(const StateVector& x);  // [re; im]

enum class MeasurementKind {
  VoltageSquaredAtNode,     // |V_node|^2, pu^2
  ActiveInjectionAtNode,    // consumption-positive P, pu
  ReactiveInjectionAtNode,  // consumption-positive Q, pu
  BranchCurrentRe,          // synchronized sensor on a branch, pu
  BranchCurrentIm,
};

struct Measurement {
  MeasurementKind kind = MeasurementKind::VoltageSquaredAtNode;
  int index = 0;  // node index for nodal kinds, branch index otherwise
  double value = 0.0;
  double sigma = 1.0;  // weight = 1/sigma^2
};

class MeasurementSet {
 public:
  explicit MeasurementSet(std::vector<Measurement> entries);

  const std::vector<Measurement>& entries() const { return entries_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(entries_.size()); }
  Eigen::VectorXd z() const;
  Eigen::VectorXd weights() const;

 private:
  std::vector<Measurement> entries_;
};

struct MeasurementEval {
  double value = 0.0;
  Eigen::VectorXd gradient;  // over [re; im]
};

// Evaluates one measurement function and its analytic partials.  Node
// voltages come from the substation voltage minus accumulated impedance
// drops along the root path; injections from the Kirchhoff balance at the
// node times the conjugate voltage.
MeasurementEval eval_measurement(const FeederModel& feeder, const StateVector& x,
                                 MeasurementKind kind, int index);

class ObservabilityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EstimateResult {
  StateVector state;
  std::vector<double> residual_trace;  // weighted sum of squared residuals per iteration
  int iterations = 0;
  bool converged = false;
};

// WLS Gauss-Newton with gain matrix H^T W H.  `init` defaults to the flat
// start (zero currents); pass the previous window's solution to warm start.
// Throws ObservabilityError when the gain matrix is numerically singular,
// naming the dominant unobservable state components.
EstimateResult estimate(const MeasurementSet& meas, const FeederModel& feeder,
                        const std::optional<StateVector>& init = std::nullopt, int k_max = 50,
                        double step_tol = 1e-9);

struct MpeOptions {
  bool exclude_small_true = false;  // skip |x_true| <= small_tol instead of throwing
  double small_tol = 0.0;
  bool signed_sum = false;  // legacy signed-sum variant
};

// Mean percentage error between true and estimated vectors:
// 100 * mean |x_true - x_est| / |x_true|.  A zero (or sub-tolerance) true
// entry throws unless exclude_small_true is set.
double mpe(const Eigen::VectorXd& x_true, const Eigen::VectorXd& x_est,
           const MpeOptions& opts = {});

}  // namespace smrec::bcse
