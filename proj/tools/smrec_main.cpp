// smrec: asynchronous smart-meter data recovery and branch-current state
// estimation on radial feeders.
//
// Subcommands:
//   synth            generate a synthetic scenario bundle
//   recover          run the recovery solver on one window
//   pipeline         rolling-window recovery + state estimation
//   rank-experiment  effective rank of the raw voltage matrix vs asynchrony
//   grid-search      sweep solver knobs, score by mean BCSE residual
//
// Exit codes: 0 success, 1 input/config error, 2 solver failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "smrec/pipeline.hpp"
#include "smrec/synthesis.hpp"

namespace {

using smrec::pipeline::PipelineConfig;
using smrec::synth::ScenarioSpec;

struct SynthFlags {
  int nodes = 20;
  int depth = 6;
  std::uint64_t seed = 1;
  double pv = 0.3;
  double days = 1.0;
  std::int64_t start_s = 0;
  std::int64_t resolution_s = 900;
  double noise = 0.01;
  double load_scale = 0.015;
  double max_offset = 900.0;
  std::string offset_dist = "uniform";
  double offset_std = 300.0;
  double mid_band = 0.01;
  double step_rate = 11.0;
  std::vector<double> step_amp{0.10, 0.30};
  bool proportional = false;

  ScenarioSpec to_spec() const {
    ScenarioSpec s;
    s.node_count = nodes;
    s.max_depth = depth;
    s.seed = seed;
    s.pv_penetration = pv;
    s.window.start_s = start_s;
    s.window.end_s = start_s + static_cast<std::int64_t>(days * 86400.0);
    s.resolution_s = resolution_s;
    s.noise_level = noise;
    s.load_scale = load_scale;
    s.proportional_loads = proportional;
    s.asynchrony.max_offset_s = max_offset;
    s.asynchrony.distribution = offset_dist == "gaussian"
                                    ? smrec::synth::OffsetDistribution::TruncatedGaussian
                                    : smrec::synth::OffsetDistribution::Uniform;
    s.asynchrony.gaussian_std_s = offset_std;
    s.mid_band_weight = mid_band;
    s.step_rate_per_day = step_rate;
    s.step_amp_lo = step_amp.at(0);
    s.step_amp_hi = step_amp.at(1);
    return s;
  }
};

void add_synth_flags(CLI::App* cmd, SynthFlags& f, bool required_source) {
  auto* nodes = cmd->add_option("--synth-nodes", f.nodes, "Generate a synthetic feeder with this many nodes");
  cmd->add_option("--synth-depth", f.depth, "Maximum feeder depth")->needs(nodes);
  cmd->add_option("--seed", f.seed, "Scenario seed");
  cmd->add_option("--synth-pv", f.pv, "PV penetration fraction")->needs(nodes);
  cmd->add_option("--synth-days", f.days, "Length of the generated horizon in days")->needs(nodes);
  cmd->add_option("--synth-noise", f.noise, "Measurement noise as a fraction of per-quantity RMS")->needs(nodes);
  cmd->add_option("--synth-load-scale", f.load_scale, "Mean per-node base load, pu")->needs(nodes);
  cmd->add_option("--resolution", f.resolution_s, "Meter resolution, seconds");
  cmd->add_option("--max-offset", f.max_offset, "Largest meter clock offset, seconds");
  cmd->add_option("--offset-dist", f.offset_dist, "Offset distribution: uniform|gaussian")
      ->check(CLI::IsMember({"uniform", "gaussian"}));
  cmd->add_option("--offset-std", f.offset_std, "Std of the truncated-gaussian offsets, seconds");
  cmd->add_option("--synth-mid-band", f.mid_band, "Weight of the shared mid-period fluctuation factor")->needs(nodes);
  cmd->add_option("--synth-step-rate", f.step_rate, "Appliance step events per meter per day")->needs(nodes);
  cmd->add_option("--synth-step-amp", f.step_amp, "Step amplitude range relative to base load")
      ->expected(2)
      ->needs(nodes);
  cmd->add_flag("--synth-proportional", f.proportional,
                "Loads as exact scalar multiples of one shape (rank-1 ground truth)");
  if (required_source) nodes->required();
}

void add_pipeline_flags(CLI::App* cmd, PipelineConfig& pc) {
  cmd->add_option("--scenario-dir", pc.scenario_dir, "Scenario bundle directory");
  cmd->add_option("--data-dir", pc.data_dir, "Measured dataset directory (manifest.json)");
  cmd->add_option("--window-length", pc.window_length_s, "Rolling window length, seconds");
  cmd->add_option("--stride", pc.stride_s, "Rolling stride, seconds");
  cmd->add_option("--max-windows", pc.max_windows, "Process at most this many windows (0 = all)");
  cmd->add_option("--max-iters", pc.max_outer_iters, "Outer solver iterations per window");
  cmd->add_option("--lambda-scale", pc.lambda_scale, "Scale on the sparsity trade-off");
  cmd->add_option("--lambda-u-scale", pc.lambda_u_scale, "Extra sparsity scale for voltage");
  cmd->add_option("--lambda-pq-scale", pc.lambda_pq_scale, "Extra sparsity scale for powers");
  cmd->add_option("--mu-scale", pc.mu_scale, "Scale on the nuclear smoothing");
  cmd->add_option("--nu-scale", pc.nu_scale, "Scale on the l1 smoothing");
  cmd->add_option("--L-scale", pc.L_scale, "Scale on the proximity weight");
  cmd->add_option("--power-base-scale", pc.power_base_scale,
                  "Solver-stage power re-per-unitization (0 = auto)");
  cmd->add_option("--delta-u-scale", pc.delta_u_scale, "Scale on the voltage noise-ball radius");
  cmd->add_option("--delta-p-scale", pc.delta_p_scale, "Scale on the active-power noise-ball radius");
  cmd->add_option("--delta-q-scale", pc.delta_q_scale, "Scale on the reactive-power noise-ball radius");
  cmd->add_option("--omega", pc.omega, "Scalarization weights (three values summing to 1)")
      ->expected(3);
  cmd->add_option("--pseudo-pf", pc.pseudo_q_power_factor,
                  "Build reactive power as pseudo-measurements at this power factor");
  cmd->add_option("--bcse-max-iters", pc.bcse_max_iters, "Gauss-Newton iteration cap");
  cmd->add_option("--bcse-voltage-sigma-scale", pc.bcse_voltage_sigma_scale,
                  "Sigma shrink for recovered voltage entries in the estimator");
  cmd->add_option("--bcse-power-sigma-scale", pc.bcse_power_sigma_scale,
                  "Sigma growth for recovered power entries in the estimator");
  cmd->add_flag("--disable-distflow", pc.ablation.disable_coupling,
                "Ablation: drop the voltage coupling constraint");
  cmd->add_flag("--independent-pcp", pc.ablation.independent_pcp,
                "Ablation: recover each matrix independently");
  cmd->add_flag("--passthrough", pc.ablation.skip_recovery,
                "Ablation: skip recovery, estimate from raw data");
  cmd->add_option("--workers", pc.workers, "Parallel window workers (env SMREC_WORKERS overrides)");
  cmd->add_option("--out", pc.output_dir, "Output directory (env SMREC_OUT overrides)");
}

int source_count(const PipelineConfig& pc, bool synth_given) {
  return (synth_given ? 1 : 0) + (pc.scenario_dir.empty() ? 0 : 1) + (pc.data_dir.empty() ? 0 : 1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asynchronous smart-meter data recovery and grid monitoring"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scenario bundle");
  SynthFlags synth_flags;
  std::string synth_out = "scenario";
  add_synth_flags(synth_cmd, synth_flags, false);
  synth_cmd->add_option("--out", synth_out, "Bundle directory to write");

  // --- recover ---
  auto* recover_cmd = app.add_subcommand("recover", "Recover one window");
  PipelineConfig recover_pc;
  SynthFlags recover_synth;
  bool recover_synth_given = false;
  add_pipeline_flags(recover_cmd, recover_pc);
  add_synth_flags(recover_cmd, recover_synth, false);
  recover_cmd->callback([&]() {
    recover_synth_given = recover_cmd->count("--synth-nodes") > 0;
  });

  // --- pipeline ---
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Rolling-window recovery + estimation");
  PipelineConfig pipeline_pc;
  SynthFlags pipeline_synth;
  bool pipeline_synth_given = false;
  add_pipeline_flags(pipeline_cmd, pipeline_pc);
  add_synth_flags(pipeline_cmd, pipeline_synth, false);
  pipeline_cmd->callback([&]() {
    pipeline_synth_given = pipeline_cmd->count("--synth-nodes") > 0;
  });

  // --- rank-experiment ---
  auto* rank_cmd = app.add_subcommand("rank-experiment",
                                      "Mean effective rank of raw voltage data vs asynchrony");
  SynthFlags rank_synth;
  std::vector<double> rank_levels{0.0, 4000.0, 16000.0, 36000.0, 64000.0};
  int rank_replicates = 20;
  std::string rank_out = "rank_vs_asynchrony.csv";
  add_synth_flags(rank_cmd, rank_synth, false);
  rank_cmd->add_option("--levels", rank_levels, "Offset-distribution variances, s^2")
      ->expected(-2);
  rank_cmd->add_option("--replicates", rank_replicates, "Windows per level");
  rank_cmd->add_option("--out", rank_out, "Output table");

  // --- grid-search ---
  auto* grid_cmd = app.add_subcommand("grid-search", "Sweep solver knobs");
  PipelineConfig grid_pc;
  SynthFlags grid_synth;
  bool grid_synth_given = false;
  std::string grid_file;
  std::string grid_report = "grid_report.csv";
  add_pipeline_flags(grid_cmd, grid_pc);
  add_synth_flags(grid_cmd, grid_synth, false);
  grid_cmd->add_option("--grid", grid_file, "JSON file: {\"lambda_scale\": [..], ...}")
      ->required();
  grid_cmd->add_option("--report", grid_report, "Ranked report path");
  grid_cmd->callback([&]() { grid_synth_given = grid_cmd->count("--synth-nodes") > 0; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      const smrec::synth::Scenario sc = smrec::synth::generate_scenario(synth_flags.to_spec());
      smrec::synth::write_scenario(sc, synth_out);
      std::cout << "wrote scenario bundle to " << synth_out << " (" << sc.feeder().node_count()
                << " nodes, window " << sc.spec().window.start_s << ".." << sc.spec().window.end_s
                << ")\n";
      return 0;
    }

    if (recover_cmd->parsed()) {
      if (recover_synth_given) recover_pc.synth_spec = recover_synth.to_spec();
      if (source_count(recover_pc, recover_synth_given) != 1) {
        std::cerr << "recover: give exactly one of --synth-nodes, --scenario-dir, --data-dir\n";
        return 1;
      }
      recover_pc.max_windows = 1;
      const auto result = smrec::pipeline::run_pipeline(recover_pc);
      const auto& w = result.windows.front();
      std::cout << "window 0: distflow residual " << w.distflow_residual_raw << " -> "
                << w.distflow_residual_recovered << ", effective rank " << w.effective_rank_raw
                << " -> " << w.effective_rank_recovered;
      if (std::isfinite(w.recovery_err_u)) {
        std::cout << ", recovery error % (u,p,q) = (" << w.recovery_err_u << ", "
                  << w.recovery_err_p << ", " << w.recovery_err_q << ")";
      }
      std::cout << "\nmetrics: " << result.metrics_path << "\n";
      return 0;
    }

    if (pipeline_cmd->parsed()) {
      if (pipeline_synth_given) pipeline_pc.synth_spec = pipeline_synth.to_spec();
      if (source_count(pipeline_pc, pipeline_synth_given) != 1) {
        std::cerr << "pipeline: give exactly one of --synth-nodes, --scenario-dir, --data-dir\n";
        return 1;
      }
      const auto result = smrec::pipeline::run_pipeline(pipeline_pc);
      std::cout << "processed " << result.windows.size() << " windows; metrics: "
                << result.metrics_path << "\n";
      return 0;
    }

    if (rank_cmd->parsed()) {
      const auto rows = smrec::synth::rank_experiment(rank_synth.to_spec(), rank_levels,
                                                      rank_replicates);
      std::ofstream out(rank_out);
      if (!out) {
        std::cerr << "cannot write " << rank_out << "\n";
        return 1;
      }
      out << "# schema smrec-rank-experiment-v1\n";
      out << "# seed " << rank_synth.seed << " replicates " << rank_replicates << "\n";
      out << "variance_s2,mean_effective_rank\n";
      out.precision(17);
      for (const auto& r : rows) {
        out << r.variance_s2 << "," << r.mean_effective_rank << "\n";
        std::cout << "variance " << r.variance_s2 << " s^2 -> mean effective rank "
                  << r.mean_effective_rank << "\n";
      }
      std::cout << "table: " << rank_out << "\n";
      return 0;
    }

    if (grid_cmd->parsed()) {
      if (grid_synth_given) grid_pc.synth_spec = grid_synth.to_spec();
      if (source_count(grid_pc, grid_synth_given) != 1) {
        std::cerr << "grid-search: give exactly one of --synth-nodes, --scenario-dir, --data-dir\n";
        return 1;
      }
      std::ifstream gf(grid_file);
      if (!gf) {
        std::cerr << "cannot open grid file " << grid_file << "\n";
        return 1;
      }
      nlohmann::json gj;
      try {
        gf >> gj;
      } catch (const nlohmann::json::exception& e) {
        std::cerr << "grid file parse error: " << e.what() << "\n";
        return 1;
      }
      std::map<std::string, std::vector<double>> grid;
      for (const auto& [key, values] : gj.items()) {
        grid[key] = values.get<std::vector<double>>();
      }
      const auto result = smrec::pipeline::grid_search(grid_pc, grid, grid_report);
      std::cout << "best point (mean BCSE residual " << result.best_score << "):";
      for (const auto& [k, v] : result.best) std::cout << " " << k << "=" << v;
      std::cout << "\nreport: " << grid_report << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
