#pragma once

#include <utility>
#include <vector>

#include "smrec/feeder.hpp"
#include "smrec/observation.hpp"
#include "smrec/projection.hpp"
#include "smrec/solver_config.hpp"

namespace smrec {

// Decomposition of the three observation matrices into refined (low-rank)
// data, asynchrony error and residual measurement noise.  The noise block
// is never a solver variable; it is the post-hoc residual raw - refined -
// sparse.
struct RecoveryTriple {
  MatrixTriple refined;
  MatrixTriple sparse;
  MatrixTriple noise;
};

struct TraceRow {
  int iteration = 0;
  double smoothed_objective = 0.0;  // scalarized surrogate value
  double exact_objective = 0.0;     // nuclear + lambda*l1 under the same weights
  double distflow_residual = 0.0;   // vs the reference coupling; NaN when none given
  double step_norm = 0.0;           // Frobenius displacement of the full iterate
};

struct SolverState {
  int k = 0;
  MatrixTriple refined;  // current refined iterate
  MatrixTriple sparse;   // current asynchrony-error iterate
  // initialization anchors: the raw data and the zero matrices
  MatrixTriple anchor_refined;
  MatrixTriple anchor_sparse;
  // running sums of the aggregate gradients, for the averaging subproblem
  MatrixTriple grad_sum_refined;
  MatrixTriple grad_sum_sparse;
  std::vector<TraceRow> trace;
};

SolverState init_solver_state(const MatrixTriple& raw);

// Scalarized gradient blocks at the current iterate.  The refined blocks
// carry omega-weighted smoothed-nuclear gradients, the sparse blocks
// omega*lambda-weighted smoothed-l1 gradients; a zero weight zeroes the
// block without touching its data.
std::pair<MatrixTriple, MatrixTriple> aggregate_gradients(const SolverState& state,
                                                          const SolverConfig& config);

double smoothed_objective(const MatrixTriple& refined, const MatrixTriple& sparse,
                          const SolverConfig& config);
double exact_objective(const MatrixTriple& refined, const MatrixTriple& sparse,
                       const SolverConfig& config);

// One accelerated step: evaluates the aggregate gradients, solves the
// proximal subproblem anchored at the current iterate and the averaging
// subproblem anchored at the initialization (with the accumulated gradient
// sum as linear term), then combines them with weights
// ((k+1)/(k+3), 2/(k+3)) and appends a trace row.  `reference_coupling`
// is only used to record the physics residual; pass nullptr to skip.
void nesterov_step(SolverState& state, const SolverConfig& config, const FeasibleSetSpec& feas,
                   const LinearCoupling* reference_coupling);

struct RecoveryResult {
  RecoveryTriple triple;
  std::vector<TraceRow> trace;
  int iterations = 0;
  bool early_stopped = false;
};

// Full recovery of one window.  The three matrices must share shape, meter
// ordering, window and resolution, and every meter id must name a feeder
// node.  Ball radii are delta * sqrt(m*N) per quantity.  When
// `enable_coupling` is false the voltage equation is dropped from the
// feasible set (ablation mode) but still reported in the trace.
RecoveryResult recover(const ObservationMatrix& mu, const ObservationMatrix& mp,
                       const ObservationMatrix& mq, const FeederModel& feeder,
                       const SolverConfig& config, bool enable_coupling = true);

// Data-driven defaults: lambda = 1/sqrt(max(m, N)), smoothing at 1e-3 of
// the top singular value (nuclear) and largest entry magnitude (l1) of the
// raw matrices, L = 1/min(mu, nu), uniform omega, delta at 1% of each
// quantity's RMS.
SolverConfig default_config(const ObservationMatrix& mu, const ObservationMatrix& mp,
                            const ObservationMatrix& mq);

void write_trace(const std::vector<TraceRow>& trace, const std::string& path,
                 const std::string& config_json);

}  // namespace smrec
