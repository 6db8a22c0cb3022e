#include "smrec/acpf.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

namespace smrec::acpf {

Solution solve(const FeederModel& feeder, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
               double tol, int max_iter) {
  const int nn = feeder.node_count();
  const int nb = feeder.branch_count();
  if (p.size() != nn || q.size() != nn) {
    throw std::invalid_argument("acpf: consumption vectors must have one entry per node");
  }

  // bus admittance matrix
  Eigen::MatrixXcd ybus = Eigen::MatrixXcd::Zero(nn, nn);
  for (int b = 0; b < nb; ++b) {
    const FeederBranch& br = feeder.branch(b);
    const std::complex<double> z(br.resistance_pu, br.reactance_pu);
    if (std::abs(z) <= 0.0) {
      throw std::invalid_argument("acpf: zero-impedance branch " + br.parent + "->" + br.child);
    }
    const std::complex<double> y = 1.0 / z;
    const int pi = feeder.node_index(br.parent);
    const int ci = b + 1;
    ybus(pi, pi) += y;
    ybus(ci, ci) += y;
    ybus(pi, ci) -= y;
    ybus(ci, pi) -= y;
  }
  const Eigen::MatrixXd g = ybus.real();
  const Eigen::MatrixXd bb = ybus.imag();

  // slack at node 0, everything else PQ with injection = -consumption
  const int n = nn - 1;
  const double v0 = std::sqrt(feeder.substation_voltage_sq());
  Eigen::VectorXd vm = Eigen::VectorXd::Constant(nn, v0);
  Eigen::VectorXd va = Eigen::VectorXd::Zero(nn);

  Eigen::VectorXd p_spec(nn), q_spec(nn);
  for (int i = 0; i < nn; ++i) {
    p_spec(i) = -p(i);
    q_spec(i) = -q(i);
  }

  auto injections = [&](Eigen::VectorXd& pc, Eigen::VectorXd& qc) {
    pc.setZero(nn);
    qc.setZero(nn);
    for (int i = 0; i < nn; ++i) {
      for (int k = 0; k < nn; ++k) {
        if (g(i, k) == 0.0 && bb(i, k) == 0.0) continue;
        const double th = va(i) - va(k);
        const double c = std::cos(th), s = std::sin(th);
        pc(i) += vm(i) * vm(k) * (g(i, k) * c + bb(i, k) * s);
        qc(i) += vm(i) * vm(k) * (g(i, k) * s - bb(i, k) * c);
      }
    }
  };

  Solution sol;
  Eigen::VectorXd pc(nn), qc(nn);
  int it = 0;
  for (;; ++it) {
    injections(pc, qc);
    Eigen::VectorXd mism(2 * n);
    for (int i = 1; i < nn; ++i) {
      mism(i - 1) = p_spec(i) - pc(i);
      mism(n + i - 1) = q_spec(i) - qc(i);
    }
    if (mism.cwiseAbs().maxCoeff() < tol) break;
    if (it >= max_iter) {
      throw std::runtime_error("acpf: Newton iteration did not converge (mismatch " +
                               std::to_string(mism.cwiseAbs().maxCoeff()) + ")");
    }

    Eigen::MatrixXd jac(2 * n, 2 * n);
    for (int i = 1; i < nn; ++i) {
      for (int j = 1; j < nn; ++j) {
        const int r = i - 1, c = j - 1;
        if (i == j) {
          jac(r, c) = -qc(i) - bb(i, i) * vm(i) * vm(i);                // dP/dtheta
          jac(r, n + c) = pc(i) / vm(i) + g(i, i) * vm(i);              // dP/dV
          jac(n + r, c) = pc(i) - g(i, i) * vm(i) * vm(i);              // dQ/dtheta
          jac(n + r, n + c) = qc(i) / vm(i) - bb(i, i) * vm(i);         // dQ/dV
        } else {
          const double th = va(i) - va(j);
          const double cth = std::cos(th), sth = std::sin(th);
          jac(r, c) = vm(i) * vm(j) * (g(i, j) * sth - bb(i, j) * cth);
          jac(r, n + c) = vm(i) * (g(i, j) * cth + bb(i, j) * sth);
          jac(n + r, c) = -vm(i) * vm(j) * (g(i, j) * cth + bb(i, j) * sth);
          jac(n + r, n + c) = vm(i) * (g(i, j) * sth - bb(i, j) * cth);
        }
      }
    }

    const Eigen::VectorXd dx = jac.partialPivLu().solve(mism);
    for (int i = 1; i < nn; ++i) {
      va(i) += dx(i - 1);
      vm(i) += dx(n + i - 1);
      if (vm(i) <= 0.0) {
        throw std::runtime_error("acpf: voltage collapsed at node " + feeder.node_names()[static_cast<std::size_t>(i)]);
      }
    }
  }

  sol.iterations = it;
  sol.node_voltage.resize(nn);
  for (int i = 0; i < nn; ++i) {
    sol.node_voltage(i) = std::polar(vm(i), va(i));
  }
  sol.branch_current.resize(nb);
  for (int b = 0; b < nb; ++b) {
    const FeederBranch& br = feeder.branch(b);
    const std::complex<double> z(br.resistance_pu, br.reactance_pu);
    const int pi = feeder.node_index(br.parent);
    sol.branch_current(b) = (sol.node_voltage(pi) - sol.node_voltage(b + 1)) / z;
  }
  return sol;
}

}  // namespace smrec::acpf
