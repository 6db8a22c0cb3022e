#include "smrec/recovery.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "smrec/distflow.hpp"
#include "smrec/matrix_norms.hpp"
#include "smrec/smooth_norms.hpp"

namespace smrec {

SolverState init_solver_state(const MatrixTriple& raw) {
  SolverState st;
  st.refined = raw;
  st.sparse = zeros_like(raw);
  st.anchor_refined = st.refined;
  st.anchor_sparse = st.sparse;
  st.grad_sum_refined = zeros_like(raw);
  st.grad_sum_sparse = zeros_like(raw);
  return st;
}

namespace {

Eigen::MatrixXd weighted_nuclear_grad(const Eigen::MatrixXd& a, double omega, double mu) {
  if (omega == 0.0) return Eigen::MatrixXd::Zero(a.rows(), a.cols());
  return omega * smoothed_nuclear(a, mu).gradient;
}

Eigen::MatrixXd weighted_l1_grad(const Eigen::MatrixXd& s, double omega, double lambda, double nu) {
  if (omega == 0.0 || lambda == 0.0) return Eigen::MatrixXd::Zero(s.rows(), s.cols());
  return omega * lambda * smoothed_l1(s, nu).gradient;
}

}  // namespace

std::pair<MatrixTriple, MatrixTriple> aggregate_gradients(const SolverState& state,
                                                          const SolverConfig& config) {
  MatrixTriple gm{weighted_nuclear_grad(state.refined.u, config.omega[0], config.mu_u),
                  weighted_nuclear_grad(state.refined.p, config.omega[1], config.mu_p),
                  weighted_nuclear_grad(state.refined.q, config.omega[2], config.mu_q)};
  MatrixTriple gs{weighted_l1_grad(state.sparse.u, config.omega[0], config.lambda_u, config.nu_u),
                  weighted_l1_grad(state.sparse.p, config.omega[1], config.lambda_p, config.nu_p),
                  weighted_l1_grad(state.sparse.q, config.omega[2], config.lambda_q, config.nu_q)};
  return {std::move(gm), std::move(gs)};
}

double smoothed_objective(const MatrixTriple& refined, const MatrixTriple& sparse,
                          const SolverConfig& c) {
  double v = 0.0;
  if (c.omega[0] != 0.0) {
    v += c.omega[0] * (smoothed_nuclear(refined.u, c.mu_u).value +
                       c.lambda_u * smoothed_l1(sparse.u, c.nu_u).value);
  }
  if (c.omega[1] != 0.0) {
    v += c.omega[1] * (smoothed_nuclear(refined.p, c.mu_p).value +
                       c.lambda_p * smoothed_l1(sparse.p, c.nu_p).value);
  }
  if (c.omega[2] != 0.0) {
    v += c.omega[2] * (smoothed_nuclear(refined.q, c.mu_q).value +
                       c.lambda_q * smoothed_l1(sparse.q, c.nu_q).value);
  }
  return v;
}

double exact_objective(const MatrixTriple& refined, const MatrixTriple& sparse,
                       const SolverConfig& c) {
  double v = 0.0;
  if (c.omega[0] != 0.0) {
    v += c.omega[0] * (nuclear_norm(refined.u) + c.lambda_u * entrywise_l1(sparse.u));
  }
  if (c.omega[1] != 0.0) {
    v += c.omega[1] * (nuclear_norm(refined.p) + c.lambda_p * entrywise_l1(sparse.p));
  }
  if (c.omega[2] != 0.0) {
    v += c.omega[2] * (nuclear_norm(refined.q) + c.lambda_q * entrywise_l1(sparse.q));
  }
  return v;
}

void nesterov_step(SolverState& state, const SolverConfig& config, const FeasibleSetSpec& feas,
                   const LinearCoupling* reference_coupling) {
  auto [grad_m, grad_s] = aggregate_gradients(state, config);

  state.grad_sum_refined.u += grad_m.u;
  state.grad_sum_refined.p += grad_m.p;
  state.grad_sum_refined.q += grad_m.q;
  state.grad_sum_sparse.u += grad_s.u;
  state.grad_sum_sparse.p += grad_s.p;
  state.grad_sum_sparse.q += grad_s.q;

  ProxSubproblem latest{grad_m, grad_s, state.refined, state.sparse, config.L};
  ProxSubproblem averaged{state.grad_sum_refined, state.grad_sum_sparse, state.anchor_refined,
                          state.anchor_sparse, config.L};

  ProxSolution y, z;
  try {
    y = solve_prox(latest, feas, config.inner_tol, config.max_inner_iters);
    z = solve_prox(averaged, feas, config.inner_tol, config.max_inner_iters);
  } catch (const ProxConvergenceError& e) {
    throw std::runtime_error("nesterov_step: subproblem failed at outer iteration " +
                             std::to_string(state.k) + ": " + e.what());
  }

  const double wy = static_cast<double>(state.k + 1) / static_cast<double>(state.k + 3);
  const double wz = 2.0 / static_cast<double>(state.k + 3);

  MatrixTriple next_refined{wy * y.refined.u + wz * z.refined.u,
                            wy * y.refined.p + wz * z.refined.p,
                            wy * y.refined.q + wz * z.refined.q};
  MatrixTriple next_sparse{wy * y.sparse.u + wz * z.sparse.u, wy * y.sparse.p + wz * z.sparse.p,
                           wy * y.sparse.q + wz * z.sparse.q};

  const double step = std::sqrt(std::pow(triple_distance(next_refined, state.refined), 2) +
                                std::pow(triple_distance(next_sparse, state.sparse), 2));
  state.refined = std::move(next_refined);
  state.sparse = std::move(next_sparse);
  state.k += 1;

  TraceRow row;
  row.iteration = state.k;
  row.smoothed_objective = smoothed_objective(state.refined, state.sparse, config);
  row.exact_objective = exact_objective(state.refined, state.sparse, config);
  row.step_norm = step;
  if (reference_coupling != nullptr) {
    row.distflow_residual =
        distflow_residual(state.refined.u, state.refined.p, state.refined.q,
                          reference_coupling->resistance, reference_coupling->reactance,
                          reference_coupling->u0);
  } else {
    row.distflow_residual = std::numeric_limits<double>::quiet_NaN();
  }
  state.trace.push_back(row);
}

RecoveryResult recover(const ObservationMatrix& mu, const ObservationMatrix& mp,
                       const ObservationMatrix& mq, const FeederModel& feeder,
                       const SolverConfig& config, bool enable_coupling) {
  config.validate();
  if (mu.quantity() != Quantity::VoltageSquared || mp.quantity() != Quantity::ActivePower ||
      mq.quantity() != Quantity::ReactivePower) {
    throw std::invalid_argument("recover: matrices must be (voltage-squared, active, reactive)");
  }
  if (mu.rows() != mp.rows() || mu.rows() != mq.rows() || mu.cols() != mp.cols() ||
      mu.cols() != mq.cols()) {
    throw std::invalid_argument("recover: observation matrices must share one shape");
  }
  if (mu.meter_ids() != mp.meter_ids() || mu.meter_ids() != mq.meter_ids()) {
    throw std::invalid_argument("recover: meter orderings differ between quantities");
  }
  if (mu.resolution_s() != mp.resolution_s() || mu.resolution_s() != mq.resolution_s() ||
      mu.window().start_s != mp.window().start_s || mu.window().start_s != mq.window().start_s) {
    throw std::invalid_argument("recover: windows/resolutions differ between quantities");
  }

  const DistflowSensitivity sens = sensitivity_matrices(feeder, mu.meter_ids());
  const LinearCoupling coupling{sens.resistance, sens.reactance, feeder.substation_voltage_sq()};

  const double m = static_cast<double>(mu.rows());
  const double n = static_cast<double>(mu.cols());
  const double scale = std::sqrt(m * n);

  MatrixTriple raw{mu.values(), mp.values(), mq.values()};
  FeasibleSetSpec feas(raw, config.delta_u * scale, config.delta_p * scale,
                       config.delta_q * scale,
                       enable_coupling ? std::optional<LinearCoupling>(coupling) : std::nullopt);

  SolverState state = init_solver_state(raw);
  bool early = false;
  while (state.k < config.max_outer_iters) {
    nesterov_step(state, config, feas, &coupling);
    if (config.early_stop_tol > 0.0 && state.trace.back().step_norm < config.early_stop_tol) {
      early = true;
      break;
    }
  }

  RecoveryResult result;
  result.triple.refined = state.refined;
  result.triple.sparse = state.sparse;
  result.triple.noise = MatrixTriple{raw.u - state.refined.u - state.sparse.u,
                                     raw.p - state.refined.p - state.sparse.p,
                                     raw.q - state.refined.q - state.sparse.q};
  result.trace = std::move(state.trace);
  result.iterations = state.k;
  result.early_stopped = early;
  return result;
}

SolverConfig default_config(const ObservationMatrix& mu, const ObservationMatrix& mp,
                            const ObservationMatrix& mq) {
  const double m = static_cast<double>(mu.rows());
  const double n = static_cast<double>(mu.cols());
  const double lambda = 1.0 / std::sqrt(std::max(m, n));

  auto top_sv = [](const Eigen::MatrixXd& a) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  };
  auto floor_pos = [](double v) { return std::max(v, 1e-12); };

  SolverConfig c;
  c.lambda_u = c.lambda_p = c.lambda_q = lambda;
  c.mu_u = floor_pos(1e-3 * top_sv(mu.values()));
  c.mu_p = floor_pos(1e-3 * top_sv(mp.values()));
  c.mu_q = floor_pos(1e-3 * top_sv(mq.values()));
  c.nu_u = floor_pos(1e-3 * mu.values().cwiseAbs().maxCoeff());
  c.nu_p = floor_pos(1e-3 * mp.values().cwiseAbs().maxCoeff());
  c.nu_q = floor_pos(1e-3 * mq.values().cwiseAbs().maxCoeff());
  c.L = 1.0 / std::min({c.mu_u, c.mu_p, c.mu_q, c.nu_u, c.nu_p, c.nu_q});

  auto rms = [](const Eigen::MatrixXd& a) {
    return std::sqrt(a.squaredNorm() / static_cast<double>(a.size()));
  };
  c.delta_u = 0.01 * rms(mu.values());
  c.delta_p = 0.01 * rms(mp.values());
  c.delta_q = 0.01 * rms(mq.values());
  return c;
}

void write_trace(const std::vector<TraceRow>& trace, const std::string& path,
                 const std::string& config_json) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file '" + path + "'");
  out << "# schema smrec-trace-v1\n";
  if (!config_json.empty()) out << "# config " << config_json << "\n";
  out << "iteration,smoothed_objective,exact_objective,distflow_residual,step_norm\n";
  out.precision(17);
  for (const auto& r : trace) {
    out << r.iteration << "," << r.smoothed_objective << "," << r.exact_objective << ","
        << r.distflow_residual << "," << r.step_norm << "\n";
  }
}

}  // namespace smrec
