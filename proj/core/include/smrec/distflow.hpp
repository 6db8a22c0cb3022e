#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smrec/feeder.hpp"

namespace smrec {

// Voltage sensitivity matrices of the linearized power flow on a radial
// feeder.  Entry (i,j) is -2 times the summed branch resistance (reactance)
// on the common root-path of meter nodes i and j; with consumption-positive
// powers the squared voltage magnitudes then satisfy
//   mu = mp * R^T + mq * X^T + u0.
struct DistflowSensitivity {
  Eigen::MatrixXd resistance;  // N x N, symmetric, entrywise <= 0
  Eigen::MatrixXd reactance;
};

DistflowSensitivity sensitivity_matrices(const FeederModel& feeder,
                                         const std::vector<std::string>& meter_nodes);

// mp*R^T + mq*X^T + u0 (applied to every entry)
Eigen::MatrixXd lin_distflow_voltage(const Eigen::MatrixXd& mp, const Eigen::MatrixXd& mq,
                                     const Eigen::MatrixXd& r, const Eigen::MatrixXd& x,
                                     double u0);

// RMS per-entry violation of the linearized voltage equation:
// ||mu - lin_distflow_voltage(mp, mq)||_F / sqrt(m*N)
double distflow_residual(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& mp,
                         const Eigen::MatrixXd& mq, const Eigen::MatrixXd& r,
                         const Eigen::MatrixXd& x, double u0);

}  // namespace smrec
