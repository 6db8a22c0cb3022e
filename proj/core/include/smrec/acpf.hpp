#pragma once

#include <Eigen/Dense>

#include "smrec/feeder.hpp"

namespace smrec::acpf {

struct Solution {
  Eigen::VectorXcd node_voltage;    // per node index, pu
  Eigen::VectorXcd branch_current;  // per branch index, parent->child flow, pu
  int iterations = 0;
};

// Newton power flow on the radial feeder.  p and q hold per-node
// consumptions in pu indexed by feeder node (the root entry is ignored);
// the substation is the slack bus at sqrt(u0), angle zero.  Throws when the
// iteration does not reach `tol` maximum power mismatch within `max_iter`.
Solution solve(const FeederModel& feeder, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
               double tol = 1e-10, int max_iter = 30);

}  // namespace smrec::acpf
