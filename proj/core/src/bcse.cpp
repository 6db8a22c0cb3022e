#include "smrec/bcse.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

namespace smrec::bcse {

StateVector flat_start(const FeederModel& feeder) {
  return StateVector{Eigen::VectorXd::Zero(feeder.branch_count()),
                     Eigen::VectorXd::Zero(feeder.branch_count())};
}

Eigen::VectorXd flatten(const StateVector& x) {
  Eigen::VectorXd out(x.current_re.size() + x.current_im.size());
  out << x.current_re, x.current_im;
  return out;
}

MeasurementSet::MeasurementSet(std::vector<Measurement> entries) : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (!(e.sigma > 0.0) || !std::isfinite(e.sigma)) {
      throw std::invalid_argument("MeasurementSet: sigma must be finite and > 0");
    }
    if (!std::isfinite(e.value)) throw std::invalid_argument("MeasurementSet: non-finite value");
    if (e.index < 0) throw std::invalid_argument("MeasurementSet: negative index");
  }
}

Eigen::VectorXd MeasurementSet::z() const {
  Eigen::VectorXd v(size());
  for (Eigen::Index i = 0; i < size(); ++i) v(i) = entries_[static_cast<std::size_t>(i)].value;
  return v;
}

Eigen::VectorXd MeasurementSet::weights() const {
  Eigen::VectorXd v(size());
  for (Eigen::Index i = 0; i < size(); ++i) {
    const double s = entries_[static_cast<std::size_t>(i)].sigma;
    v(i) = 1.0 / (s * s);
  }
  return v;
}

namespace {

using Complex = std::complex<double>;

Complex branch_impedance(const FeederModel& feeder, int b) {
  const auto& br = feeder.branch(b);
  return Complex(br.resistance_pu, br.reactance_pu);
}

Complex node_voltage(const FeederModel& feeder, const StateVector& x, int node) {
  Complex v(std::sqrt(feeder.substation_voltage_sq()), 0.0);
  for (int b : feeder.root_path(node)) {
    v -= branch_impedance(feeder, b) * Complex(x.current_re(b), x.current_im(b));
  }
  return v;
}

// current drawn by the load at `node`: parent branch inflow minus child outflows
Complex load_current(const FeederModel& feeder, const StateVector& x, int node) {
  Complex i(0.0, 0.0);
  if (node != 0) {
    const int pb = feeder.branch_of_node(node);
    i += Complex(x.current_re(pb), x.current_im(pb));
  }
  for (int cb : feeder.child_branches(node)) {
    i -= Complex(x.current_re(cb), x.current_im(cb));
  }
  return i;
}

}  // namespace

MeasurementEval eval_measurement(const FeederModel& feeder, const StateVector& x,
                                 MeasurementKind kind, int index) {
  const int nb = feeder.branch_count();
  if (x.current_re.size() != nb || x.current_im.size() != nb) {
    throw std::invalid_argument("eval_measurement: state size does not match feeder");
  }
  MeasurementEval out;
  out.gradient = Eigen::VectorXd::Zero(2 * nb);

  switch (kind) {
    case MeasurementKind::BranchCurrentRe:
    case MeasurementKind::BranchCurrentIm: {
      if (index < 0 || index >= nb) {
        throw std::invalid_argument("eval_measurement: branch index out of range");
      }
      if (kind == MeasurementKind::BranchCurrentRe) {
        out.value = x.current_re(index);
        out.gradient(index) = 1.0;
      } else {
        out.value = x.current_im(index);
        out.gradient(nb + index) = 1.0;
      }
      return out;
    }
    case MeasurementKind::VoltageSquaredAtNode: {
      if (index < 0 || index >= feeder.node_count()) {
        throw std::invalid_argument("eval_measurement: node index out of range");
      }
      const Complex v = node_voltage(feeder, x, index);
      out.value = std::norm(v);
      for (int b : feeder.root_path(index)) {
        const Complex z = branch_impedance(feeder, b);
        // d|v|^2/dx = 2 Re(conj(v) dv/dx), with dv/dre = -z and dv/dim = -jz
        out.gradient(b) = 2.0 * std::real(std::conj(v) * (-z));
        out.gradient(nb + b) = 2.0 * std::real(std::conj(v) * (-z * Complex(0.0, 1.0)));
      }
      return out;
    }
    case MeasurementKind::ActiveInjectionAtNode:
    case MeasurementKind::ReactiveInjectionAtNode: {
      if (index <= 0 || index >= feeder.node_count()) {
        throw std::invalid_argument(
            "eval_measurement: injection measurements need a non-substation node");
      }
      const Complex v = node_voltage(feeder, x, index);
      const Complex il = load_current(feeder, x, index);
      const Complex s = v * std::conj(il);
      const bool active = kind == MeasurementKind::ActiveInjectionAtNode;
      out.value = active ? s.real() : s.imag();

      auto add = [&](int slot, Complex ds) {
        out.gradient(slot) += active ? ds.real() : ds.imag();
      };
      // voltage part: dS = dv * conj(il)
      for (int b : feeder.root_path(index)) {
        const Complex z = branch_impedance(feeder, b);
        add(b, -z * std::conj(il));
        add(nb + b, -z * Complex(0.0, 1.0) * std::conj(il));
      }
      // balance part: dS = v * conj(dil)
      const int pb = feeder.branch_of_node(index);
      add(pb, v);                              // dil/dre = +1
      add(nb + pb, v * Complex(0.0, -1.0));    // conj(j) = -j
      for (int cb : feeder.child_branches(index)) {
        add(cb, -v);
        add(nb + cb, v * Complex(0.0, 1.0));
      }
      return out;
    }
  }
  throw std::invalid_argument("eval_measurement: unknown measurement kind");
}

EstimateResult estimate(const MeasurementSet& meas, const FeederModel& feeder,
                        const std::optional<StateVector>& init, int k_max, double step_tol) {
  const int nb = feeder.branch_count();
  const Eigen::Index n_state = 2 * nb;
  if (k_max < 1) throw std::invalid_argument("estimate: k_max must be >= 1");
  if (meas.size() < n_state) {
    throw ObservabilityError("estimate: " + std::to_string(meas.size()) + " measurements cannot observe " +
                             std::to_string(n_state) + " states (singular gain)");
  }

  EstimateResult res;
  res.state = init.value_or(flat_start(feeder));
  if (res.state.current_re.size() != nb || res.state.current_im.size() != nb) {
    throw std::invalid_argument("estimate: init state size does not match feeder");
  }

  const Eigen::VectorXd z = meas.z();
  const Eigen::VectorXd w = meas.weights();

  for (int k = 0; k < k_max; ++k) {
    Eigen::MatrixXd h(meas.size(), n_state);
    Eigen::VectorXd hx(meas.size());
    for (Eigen::Index i = 0; i < meas.size(); ++i) {
      const auto& e = meas.entries()[static_cast<std::size_t>(i)];
      const MeasurementEval ev = eval_measurement(feeder, res.state, e.kind, e.index);
      hx(i) = ev.value;
      h.row(i) = ev.gradient.transpose();
    }
    const Eigen::VectorXd resid = z - hx;
    res.residual_trace.push_back(resid.cwiseProduct(w.cwiseProduct(resid)).sum());

    const Eigen::MatrixXd gain = h.transpose() * w.asDiagonal() * h;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(gain, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(0) <= 0.0 || sv(sv.size() - 1) < 1e-10 * sv(0)) {
      std::ostringstream msg;
      msg << "estimate: singular gain matrix; unobservable directions:";
      for (Eigen::Index j = 0; j < sv.size(); ++j) {
        if (sv(j) >= 1e-10 * sv(0)) continue;
        Eigen::Index comp;
        svd.matrixV().col(j).cwiseAbs().maxCoeff(&comp);
        const int b = static_cast<int>(comp < nb ? comp : comp - nb);
        msg << " " << feeder.branch(b).child << (comp < nb ? ":re" : ":im");
      }
      throw ObservabilityError(msg.str());
    }

    const Eigen::VectorXd dx =
        svd.solve(h.transpose() * w.cwiseProduct(resid).eval());
    res.state.current_re += dx.head(nb);
    res.state.current_im += dx.tail(nb);
    res.iterations = k + 1;
    if (dx.norm() < step_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

double mpe(const Eigen::VectorXd& x_true, const Eigen::VectorXd& x_est, const MpeOptions& opts) {
  if (x_true.size() != x_est.size()) {
    throw std::invalid_argument("mpe: vectors must have equal length");
  }
  if (x_true.size() == 0) throw std::invalid_argument("mpe: empty vectors");
  double acc = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < x_true.size(); ++i) {
    const double t = x_true(i);
    if (std::abs(t) <= opts.small_tol || t == 0.0) {
      if (opts.exclude_small_true) continue;
      throw std::invalid_argument("mpe: zero (or sub-tolerance) true entry at index " +
                                  std::to_string(i));
    }
    const double rel = (t - x_est(i)) / t;
    acc += opts.signed_sum ? rel : std::abs(rel);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("mpe: no usable entries");
  if (opts.signed_sum) return 100.0 * acc;  // legacy variant sums signed errors
  return 100.0 * acc / static_cast<double>(used);
}

}  // namespace smrec::bcse
