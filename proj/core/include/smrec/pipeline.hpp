#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smrec/bcse.hpp"
#include "smrec/recovery.hpp"
#include "smrec/synthesis.hpp"

namespace smrec::pipeline {

struct AblationFlags {
  bool disable_coupling = false;  // drop the voltage equation from the feasible set
  bool independent_pcp = false;   // run one single-matrix recovery per quantity
  bool skip_recovery = false;     // passthrough: estimate straight from raw data
};

// Rolling-window configuration.  Exactly one data source must be set:
// an inline synthetic spec, a scenario bundle directory, or a measured
// dataset directory (manifest + per-meter CSV files).
struct PipelineConfig {
  std::optional<synth::ScenarioSpec> synth_spec;
  std::string scenario_dir;
  std::string data_dir;

  std::int64_t window_length_s = 86400;
  std::int64_t stride_s = 86400;
  int max_windows = 0;  // 0 = as many as fit the data span

  // solver knobs layered on the per-window data-driven defaults
  int max_outer_iters = 300;
  // per-quantity sparsity scales: the voltage error matrix absorbs dense
  // asynchrony drift cheaply while the power matrices only shed clear
  // spike entries
  double lambda_scale = 1.0;
  double lambda_u_scale = 1.0;
  double lambda_pq_scale = 6.0;
  double mu_scale = 1.0;
  double nu_scale = 1.0;
  double L_scale = 1.0;
  std::array<double, 3> omega{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  // per-quantity scales on the noise-ball radii (sensor-accuracy deltas)
  double delta_u_scale = 1.0;
  double delta_p_scale = 0.5;
  double delta_q_scale = 0.5;

  // Power base used inside the recovery solver, relative to the data's
  // declared base.  Powers are re-per-unitized so that their magnitudes are
  // comparable to the squared voltages (order one); otherwise the voltage
  // coupling distributes defects into the numerically tiny power matrices.
  // 0 = auto: scale the active-power RMS to 0.5.
  double power_base_scale = 0.0;

  // reactive power from active power when measured Q is absent or ignored
  double pseudo_q_power_factor = 0.0;  // 0 = use measured Q
  double pseudo_sigma_scale = 10.0;

  AblationFlags ablation;
  int bcse_max_iters = 30;
  // estimation weight scales applied to recovered streams: recovery leaves
  // voltage far more accurate than the sensor noise while the refined
  // powers still carry residual asynchrony error, so their sigmas are
  // recalibrated before entering the WLS weights (1.0 = sensor sigma,
  // as used for passthrough runs)
  double bcse_voltage_sigma_scale = 1.0;
  double bcse_power_sigma_scale = 1.0;

  std::string output_dir = "out";
  int workers = 1;
};

struct WindowMetrics {
  int window_index = 0;
  std::int64_t start_s = 0;
  // percent errors vs ground truth (sum |err| / sum |truth|); NaN without truth
  double raw_err_u = 0.0, raw_err_p = 0.0, raw_err_q = 0.0;
  double recovery_err_u = 0.0, recovery_err_p = 0.0, recovery_err_q = 0.0;
  double distflow_residual_raw = 0.0;
  double distflow_residual_recovered = 0.0;
  int effective_rank_raw = 0;
  int effective_rank_recovered = 0;
  double bcse_mpe = 0.0;  // mean over window rows; NaN without truth
  double bcse_mean_residual = 0.0;  // mean final weighted residual J
  int outer_iterations = 0;
  int bcse_total_iterations = 0;
};

struct PipelineResult {
  std::vector<WindowMetrics> windows;
  std::string metrics_path;
};

// Executes recover -> estimate over rolling windows, writes metrics,
// recovered matrices, solver traces, estimated states and plot data under
// config.output_dir.  Deterministic for a fixed config and seed; wall-clock
// timings go to a separate timings file so the metrics table stays
// byte-reproducible.
PipelineResult run_pipeline(const PipelineConfig& config);

// percent total absolute deviation: 100 * sum|est-truth| / sum|truth|
double wape_pct(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth);

std::string config_json(const PipelineConfig& config);

struct GridSearchResult {
  std::map<std::string, double> best;
  double best_score = 0.0;
  // every grid point with its mean BCSE weighted residual, ranked ascending
  std::vector<std::pair<std::map<std::string, double>, double>> ranked;
};

// Cartesian sweep over solver knobs (supported keys: lambda_scale,
// mu_scale, nu_scale, L_scale, max_outer_iters); scores each point by the
// mean final BCSE weighted residual over the pipeline windows and returns
// the minimizer, ties broken by lexicographic parameter order.
GridSearchResult grid_search(const PipelineConfig& base,
                             const std::map<std::string, std::vector<double>>& grid,
                             const std::string& report_path);

// Measured dataset: manifest.json mapping meters to feeder nodes plus one
// (timestamp_s, value) CSV per meter.
struct MeterDataset {
  FeederModel feeder;
  std::vector<std::string> meter_nodes;  // ordered by feeder node index
  std::vector<MeterSeries> series_u, series_p, series_q;  // series_q may be empty
  TimeWindow window;
  std::int64_t resolution_s = 900;
  double sigma_u = 0.01, sigma_p = 0.01, sigma_q = 0.01;
};

MeterDataset load_meter_dataset(const std::string& dir);

}  // namespace smrec::pipeline
