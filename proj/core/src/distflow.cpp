#include "smrec/distflow.hpp"

#include <cmath>
#include <stdexcept>

namespace smrec {

namespace {

// lowest common ancestor by walking parents of the deeper node first
int common_ancestor(const FeederModel& feeder, int a, int b) {
  while (a != b) {
    if (feeder.depth(a) >= feeder.depth(b)) {
      a = feeder.parent_index(a);
    } else {
      b = feeder.parent_index(b);
    }
  }
  return a;
}

void check_shapes(const Eigen::MatrixXd& mp, const Eigen::MatrixXd& mq,
                  const Eigen::MatrixXd& r, const Eigen::MatrixXd& x) {
  const Eigen::Index n = mp.cols();
  if (mq.rows() != mp.rows() || mq.cols() != n) {
    throw std::invalid_argument("lin_distflow_voltage: mp/mq shape mismatch");
  }
  if (r.rows() != n || r.cols() != n || x.rows() != n || x.cols() != n) {
    throw std::invalid_argument("lin_distflow_voltage: sensitivity matrices must be NxN");
  }
}

}  // namespace

DistflowSensitivity sensitivity_matrices(const FeederModel& feeder,
                                         const std::vector<std::string>& meter_nodes) {
  if (meter_nodes.empty()) throw std::invalid_argument("sensitivity_matrices: no meter nodes");
  const auto n = static_cast<Eigen::Index>(meter_nodes.size());
  std::vector<int> idx(meter_nodes.size());
  for (std::size_t i = 0; i < meter_nodes.size(); ++i) {
    idx[i] = feeder.node_index(meter_nodes[i]);  // throws for unknown nodes
  }

  DistflowSensitivity s;
  s.resistance.setZero(n, n);
  s.reactance.setZero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const int lca = common_ancestor(feeder, idx[static_cast<std::size_t>(i)],
                                      idx[static_cast<std::size_t>(j)]);
      const double rr = -2.0 * feeder.path_resistance(lca);
      const double xx = -2.0 * feeder.path_reactance(lca);
      s.resistance(i, j) = rr;
      s.resistance(j, i) = rr;
      s.reactance(i, j) = xx;
      s.reactance(j, i) = xx;
    }
  }
  return s;
}

Eigen::MatrixXd lin_distflow_voltage(const Eigen::MatrixXd& mp, const Eigen::MatrixXd& mq,
                                     const Eigen::MatrixXd& r, const Eigen::MatrixXd& x,
                                     double u0) {
  check_shapes(mp, mq, r, x);
  return (mp * r.transpose() + mq * x.transpose()).array() + u0;
}

double distflow_residual(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& mp,
                         const Eigen::MatrixXd& mq, const Eigen::MatrixXd& r,
                         const Eigen::MatrixXd& x, double u0) {
  if (mu.rows() != mp.rows() || mu.cols() != mp.cols()) {
    throw std::invalid_argument("distflow_residual: mu/mp shape mismatch");
  }
  const Eigen::MatrixXd pred = lin_distflow_voltage(mp, mq, r, x, u0);
  const double denom = std::sqrt(static_cast<double>(mu.rows() * mu.cols()));
  return (mu - pred).norm() / denom;
}

}  // namespace smrec
