#include "smrec/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "smrec/distflow.hpp"
#include "smrec/matrix_norms.hpp"
#include "smrec/rng.hpp"

namespace smrec::pipeline {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string format_csv_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

void write_matrix_csv(const std::string& path, const ObservationMatrix& m,
                      const std::string& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# schema smrec-matrix-v1\n";
  out << "# quantity " << quantity_name(m.quantity()) << "\n";
  out << "# window " << m.window().start_s << " " << m.window().end_s << " " << m.resolution_s()
      << "\n";
  out << "# meters";
  for (const auto& id : m.meter_ids()) out << " " << id;
  out << "\n";
  if (!cfg.empty()) out << "# config " << cfg << "\n";
  out.precision(17);
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
      out << m.values()(j, i) << (i + 1 < m.cols() ? "," : "\n");
    }
  }
}

struct WindowData {
  int index = 0;
  TimeWindow win;
  std::optional<synth::SampledWindow> raw;
  std::optional<synth::WindowTruth> truth;
};

struct WindowOutcome {
  WindowMetrics metrics;
  MatrixTriple recovered;
  std::vector<TraceRow> trace;
  double recover_ms = 0.0;
  double bcse_ms = 0.0;
  bool done = false;
};

// shared, read-only context for the window workers
struct RunContext {
  PipelineConfig config;
  std::optional<synth::Scenario> scenario;
  std::optional<MeterDataset> dataset;
  const FeederModel* feeder = nullptr;
  std::vector<std::string> meter_nodes;
  DistflowSensitivity sens;
  double sigma_u = 0.0, sigma_p = 0.0, sigma_q = 0.0;
  TimeWindow data_span;
  std::int64_t resolution = 900;
  std::string cfg_json;
};

synth::SampledWindow build_measured_window(const MeterDataset& ds, TimeWindow win,
                                           double pseudo_pf) {
  ObservationMatrix u =
      build_observation_matrix(ds.series_u, win, ds.resolution_s, Quantity::VoltageSquared);
  ObservationMatrix p =
      build_observation_matrix(ds.series_p, win, ds.resolution_s, Quantity::ActivePower);
  if (!ds.series_q.empty() && pseudo_pf <= 0.0) {
    ObservationMatrix q =
        build_observation_matrix(ds.series_q, win, ds.resolution_s, Quantity::ReactivePower);
    return synth::SampledWindow{std::move(u), std::move(p), std::move(q)};
  }
  if (pseudo_pf <= 0.0) {
    throw std::invalid_argument(
        "pipeline: dataset has no reactive series; set pseudo_q_power_factor");
  }
  ObservationMatrix q = synth::pseudo_reactive(p, pseudo_pf);
  return synth::SampledWindow{std::move(u), std::move(p), std::move(q)};
}

SolverConfig window_solver_config(const PipelineConfig& pc, const synth::SampledWindow& raw,
                                  double sigma_u, double sigma_p, double sigma_q) {
  SolverConfig c = default_config(raw.u, raw.p, raw.q);
  c.omega = pc.omega;
  c.max_outer_iters = pc.max_outer_iters;
  c.delta_u = sigma_u * pc.delta_u_scale;
  c.delta_p = sigma_p * pc.delta_p_scale;
  c.delta_q = sigma_q * pc.delta_q_scale *
              (pc.pseudo_q_power_factor > 0.0 ? pc.pseudo_sigma_scale : 1.0);
  c.lambda_u *= pc.lambda_scale * pc.lambda_u_scale;
  c.lambda_p *= pc.lambda_scale * pc.lambda_pq_scale;
  c.lambda_q *= pc.lambda_scale * pc.lambda_pq_scale;
  c.mu_u *= pc.mu_scale;
  c.mu_p *= pc.mu_scale;
  c.mu_q *= pc.mu_scale;
  // the l1 Huber width has nothing to resolve below the sensor noise floor
  c.nu_u = std::max(c.nu_u, c.delta_u) * pc.nu_scale;
  c.nu_p = std::max(c.nu_p, c.delta_p) * pc.nu_scale;
  c.nu_q = std::max(c.nu_q, c.delta_q) * pc.nu_scale;
  // tight per-block Lipschitz bound of the aggregate gradient map
  const double lip = std::max({c.omega[0] / c.mu_u, c.omega[1] / c.mu_p, c.omega[2] / c.mu_q,
                               c.omega[0] * c.lambda_u / c.nu_u,
                               c.omega[1] * c.lambda_p / c.nu_p,
                               c.omega[2] * c.lambda_q / c.nu_q, 1e-6});
  c.L = pc.L_scale * lip;
  return c;
}

RecoveryResult run_recovery(const RunContext& ctx, const synth::SampledWindow& raw) {
  const PipelineConfig& pc = ctx.config;

  // Re-per-unitize powers to order one inside the solver (equivalent to
  // declaring the power base at feeder scale) and shrink the coupling
  // matrices accordingly, so the physics equation is unchanged while the
  // Frobenius geometry treats all three quantities comparably.
  double k = pc.power_base_scale;
  if (k <= 0.0) {
    const double rms_p =
        std::sqrt(raw.p.values().squaredNorm() / static_cast<double>(raw.p.values().size()));
    k = rms_p > 1e-12 ? 0.5 / rms_p : 1.0;
  }

  auto scaled = [&](const ObservationMatrix& src) {
    return ObservationMatrix(src.quantity(), src.values() * k, src.window(), src.meter_ids(),
                             src.resolution_s());
  };
  std::vector<FeederBranch> branches = ctx.feeder->branches();
  for (auto& b : branches) {
    b.resistance_pu /= k;
    b.reactance_pu /= k;
  }
  const FeederModel feeder_scaled(ctx.feeder->root(), std::move(branches),
                                  ctx.feeder->substation_voltage_sq(),
                                  ctx.feeder->base_power_kva() * k, ctx.feeder->base_voltage_kv());
  const synth::SampledWindow scaled_raw{raw.u, scaled(raw.p), scaled(raw.q)};

  const SolverConfig base = window_solver_config(pc, scaled_raw, ctx.sigma_u, ctx.sigma_p * k,
                                                 ctx.sigma_q * k);

  RecoveryResult result;
  if (pc.ablation.independent_pcp) {
    RecoveryResult merged;
    int iters = 0;
    std::vector<TraceRow> trace;
    MatrixTriple refined, sparse, noise;
    for (int which = 0; which < 3; ++which) {
      SolverConfig c = base;
      c.omega = {which == 0 ? 1.0 : 0.0, which == 1 ? 1.0 : 0.0, which == 2 ? 1.0 : 0.0};
      RecoveryResult r = recover(scaled_raw.u, scaled_raw.p, scaled_raw.q, feeder_scaled, c,
                                 /*enable_coupling=*/false);
      iters += r.iterations;
      if (which == 0) {
        refined.u = r.triple.refined.u;
        sparse.u = r.triple.sparse.u;
        noise.u = r.triple.noise.u;
        trace = r.trace;
      } else if (which == 1) {
        refined.p = r.triple.refined.p;
        sparse.p = r.triple.sparse.p;
        noise.p = r.triple.noise.p;
      } else {
        refined.q = r.triple.refined.q;
        sparse.q = r.triple.sparse.q;
        noise.q = r.triple.noise.q;
      }
    }
    merged.triple = RecoveryTriple{std::move(refined), std::move(sparse), std::move(noise)};
    merged.trace = std::move(trace);
    merged.iterations = iters;
    result = std::move(merged);
  } else {
    result = recover(scaled_raw.u, scaled_raw.p, scaled_raw.q, feeder_scaled, base,
                     /*enable_coupling=*/!pc.ablation.disable_coupling);
  }

  const double inv = 1.0 / k;
  for (MatrixTriple* t : {&result.triple.refined, &result.triple.sparse, &result.triple.noise}) {
    t->p *= inv;
    t->q *= inv;
  }
  return result;
}

WindowOutcome process_window(const RunContext& ctx, const WindowData& wd) {
  const auto t0 = std::chrono::steady_clock::now();
  const synth::SampledWindow& raw = *wd.raw;

  WindowOutcome out;
  WindowMetrics& m = out.metrics;
  m.window_index = wd.index;
  m.start_s = wd.win.start_s;

  m.distflow_residual_raw =
      distflow_residual(raw.u.values(), raw.p.values(), raw.q.values(), ctx.sens.resistance,
                        ctx.sens.reactance, ctx.feeder->substation_voltage_sq());
  m.effective_rank_raw = effective_rank(raw.u.values());

  if (ctx.config.ablation.skip_recovery) {
    out.recovered = MatrixTriple{raw.u.values(), raw.p.values(), raw.q.values()};
    m.outer_iterations = 0;
  } else {
    RecoveryResult rec = run_recovery(ctx, raw);
    out.recovered = std::move(rec.triple.refined);
    out.trace = std::move(rec.trace);
    m.outer_iterations = rec.iterations;
  }

  m.distflow_residual_recovered =
      distflow_residual(out.recovered.u, out.recovered.p, out.recovered.q, ctx.sens.resistance,
                        ctx.sens.reactance, ctx.feeder->substation_voltage_sq());
  m.effective_rank_recovered = effective_rank(out.recovered.u);

  if (wd.truth) {
    m.raw_err_u = wape_pct(raw.u.values(), wd.truth->u.values());
    m.raw_err_p = wape_pct(raw.p.values(), wd.truth->p.values());
    m.raw_err_q = wape_pct(raw.q.values(), wd.truth->q.values());
    m.recovery_err_u = wape_pct(out.recovered.u, wd.truth->u.values());
    m.recovery_err_p = wape_pct(out.recovered.p, wd.truth->p.values());
    m.recovery_err_q = wape_pct(out.recovered.q, wd.truth->q.values());
  } else {
    m.raw_err_u = m.raw_err_p = m.raw_err_q = kNan;
    m.recovery_err_u = m.recovery_err_p = m.recovery_err_q = kNan;
  }

  out.recover_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
  out.done = true;
  return out;
}

// sequential pass: warm-started WLS estimation row by row
void run_bcse(const RunContext& ctx, const WindowData& wd, WindowOutcome& out,
              std::optional<bcse::StateVector>& warm) {
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineConfig& pc = ctx.config;
  WindowMetrics& m = out.metrics;

  const Eigen::Index rows = out.recovered.u.rows();
  const Eigen::Index n = out.recovered.u.cols();
  double sig_u = std::max(ctx.sigma_u, 1e-9);
  double sig_p = std::max(ctx.sigma_p, 1e-9);
  double sig_q = std::max(ctx.sigma_q, 1e-9);
  if (!pc.ablation.skip_recovery) {
    sig_u *= pc.bcse_voltage_sigma_scale;
    sig_p *= pc.bcse_power_sigma_scale;
    sig_q *= pc.bcse_power_sigma_scale;
  }
  if (pc.pseudo_q_power_factor > 0.0) sig_q *= pc.pseudo_sigma_scale;

  double mpe_sum = 0.0;
  int mpe_rows = 0;
  double j_sum = 0.0;
  int iters = 0;

  std::ofstream states;
  if (!pc.output_dir.empty()) {
    const fs::path dir = fs::path(pc.output_dir) / ("window_" + std::to_string(wd.index));
    fs::create_directories(dir);
    states.open(dir / "states.csv");
    states << "# schema smrec-states-v1\n# config " << ctx.cfg_json << "\n";
    states << "row,branch,i_re,i_im\n";
    states.precision(17);
  }

  for (Eigen::Index j = 0; j < rows; ++j) {
    std::vector<bcse::Measurement> entries;
    entries.reserve(static_cast<std::size_t>(3 * n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const int node = ctx.feeder->node_index(ctx.meter_nodes[static_cast<std::size_t>(i)]);
      entries.push_back({bcse::MeasurementKind::VoltageSquaredAtNode, node,
                         out.recovered.u(j, i), sig_u});
      entries.push_back({bcse::MeasurementKind::ActiveInjectionAtNode, node,
                         out.recovered.p(j, i), sig_p});
      entries.push_back({bcse::MeasurementKind::ReactiveInjectionAtNode, node,
                         out.recovered.q(j, i), sig_q});
    }
    const bcse::MeasurementSet meas(std::move(entries));
    bcse::EstimateResult est = bcse::estimate(meas, *ctx.feeder, warm, pc.bcse_max_iters);
    warm = est.state;
    iters += est.iterations;
    j_sum += est.residual_trace.back();

    if (states.is_open()) {
      for (int b = 0; b < ctx.feeder->branch_count(); ++b) {
        states << j << "," << ctx.feeder->branch(b).child << "," << est.state.current_re(b) << ","
               << est.state.current_im(b) << "\n";
      }
    }

    if (wd.truth) {
      const Eigen::Index nb = wd.truth->branch_current.cols();
      Eigen::VectorXd x_true(2 * nb);
      for (Eigen::Index b = 0; b < nb; ++b) {
        x_true(b) = wd.truth->branch_current(j, b).real();
        x_true(nb + b) = wd.truth->branch_current(j, b).imag();
      }
      bcse::MpeOptions opts;
      opts.exclude_small_true = true;
      opts.small_tol = 1e-3;  // branch currents below 0.1% of base are noise
      mpe_sum += bcse::mpe(x_true, bcse::flatten(est.state), opts);
      ++mpe_rows;
    }
  }

  m.bcse_total_iterations = iters;
  m.bcse_mean_residual = j_sum / static_cast<double>(rows);
  m.bcse_mpe = mpe_rows > 0 ? mpe_sum / mpe_rows : kNan;
  out.bcse_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void write_metrics_file(const std::string& path, const std::vector<WindowMetrics>& rows,
                        const std::string& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# schema smrec-metrics-v1\n";
  out << "# config " << cfg << "\n";
  out << "window_index,start_s,raw_err_u_pct,raw_err_p_pct,raw_err_q_pct,"
         "recovery_err_u_pct,recovery_err_p_pct,recovery_err_q_pct,"
         "distflow_residual_raw,distflow_residual_recovered,"
         "effective_rank_raw,effective_rank_recovered,"
         "bcse_mpe_pct,bcse_mean_residual,outer_iterations,bcse_total_iterations\n";
  for (const auto& r : rows) {
    out << r.window_index << "," << r.start_s << "," << format_csv_double(r.raw_err_u) << ","
        << format_csv_double(r.raw_err_p) << "," << format_csv_double(r.raw_err_q) << ","
        << format_csv_double(r.recovery_err_u) << "," << format_csv_double(r.recovery_err_p)
        << "," << format_csv_double(r.recovery_err_q) << ","
        << format_csv_double(r.distflow_residual_raw) << ","
        << format_csv_double(r.distflow_residual_recovered) << "," << r.effective_rank_raw << ","
        << r.effective_rank_recovered << "," << format_csv_double(r.bcse_mpe) << ","
        << format_csv_double(r.bcse_mean_residual) << "," << r.outer_iterations << ","
        << r.bcse_total_iterations << "\n";
  }
}

void write_plot_data(const std::string& dir, const std::vector<WindowData>& windows,
                     const std::vector<WindowOutcome>& outcomes, const std::string& cfg) {
  fs::create_directories(fs::path(dir));

  {
    std::ofstream out(fs::path(dir) / "residual_comparison.csv");
    out << "# schema smrec-residuals-v1\n# config " << cfg << "\n";
    out << "window_index,distflow_residual_raw,distflow_residual_recovered\n";
    out.precision(17);
    for (const auto& o : outcomes) {
      out << o.metrics.window_index << "," << o.metrics.distflow_residual_raw << ","
          << o.metrics.distflow_residual_recovered << "\n";
    }
  }
  {
    std::ofstream out(fs::path(dir) / "rank_per_window.csv");
    out << "# schema smrec-ranks-v1\n# config " << cfg << "\n";
    out << "window_index,effective_rank_raw,effective_rank_recovered\n";
    for (const auto& o : outcomes) {
      out << o.metrics.window_index << "," << o.metrics.effective_rank_raw << ","
          << o.metrics.effective_rank_recovered << "\n";
    }
  }

  // per-entry error histograms (percent of each column's RMS), raw vs recovered
  const int bins = 41;
  const double lo = -10.0, hi = 10.0;
  for (int which = 0; which < 3; ++which) {
    std::vector<long> count_raw(static_cast<std::size_t>(bins) + 2, 0);
    std::vector<long> count_rec(static_cast<std::size_t>(bins) + 2, 0);
    bool any = false;
    for (std::size_t w = 0; w < windows.size(); ++w) {
      if (!windows[w].truth) continue;
      any = true;
      const Eigen::MatrixXd& truth = which == 0   ? windows[w].truth->u.values()
                                     : which == 1 ? windows[w].truth->p.values()
                                                  : windows[w].truth->q.values();
      const Eigen::MatrixXd& raw = which == 0   ? windows[w].raw->u.values()
                                   : which == 1 ? windows[w].raw->p.values()
                                                : windows[w].raw->q.values();
      const Eigen::MatrixXd& rec = which == 0   ? outcomes[w].recovered.u
                                   : which == 1 ? outcomes[w].recovered.p
                                                : outcomes[w].recovered.q;
      for (Eigen::Index i = 0; i < truth.cols(); ++i) {
        const double rms =
            std::max(std::sqrt(truth.col(i).squaredNorm() / truth.rows()), 1e-12);
        for (Eigen::Index j = 0; j < truth.rows(); ++j) {
          auto slot = [&](double err) {
            const double pct = 100.0 * err / rms;
            if (pct < lo) return std::size_t{0};
            if (pct >= hi) return static_cast<std::size_t>(bins) + 1;
            return static_cast<std::size_t>((pct - lo) / (hi - lo) * bins) + 1;
          };
          count_raw[slot(raw(j, i) - truth(j, i))]++;
          count_rec[slot(rec(j, i) - truth(j, i))]++;
        }
      }
    }
    if (!any) continue;
    const char* tag = which == 0 ? "u" : which == 1 ? "p" : "q";
    std::ofstream out(fs::path(dir) / ("hist_recovery_error_" + std::string(tag) + ".csv"));
    out << "# schema smrec-error-hist-v1\n# config " << cfg << "\n";
    out << "# per-entry error as percent of the column RMS; first/last bins are outliers\n";
    out << "bin_lo_pct,bin_hi_pct,count_raw,count_recovered\n";
    out.precision(17);
    out << "-inf," << lo << "," << count_raw[0] << "," << count_rec[0] << "\n";
    for (int b = 0; b < bins; ++b) {
      const double l = lo + (hi - lo) * b / bins;
      const double h = lo + (hi - lo) * (b + 1) / bins;
      out << l << "," << h << "," << count_raw[static_cast<std::size_t>(b) + 1] << ","
          << count_rec[static_cast<std::size_t>(b) + 1] << "\n";
    }
    out << hi << ",inf," << count_raw[static_cast<std::size_t>(bins) + 1] << ","
        << count_rec[static_cast<std::size_t>(bins) + 1] << "\n";
  }
}

}  // namespace

double wape_pct(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols()) {
    throw std::invalid_argument("wape_pct: shape mismatch");
  }
  const double denom = truth.cwiseAbs().sum();
  if (denom <= 0.0) throw std::invalid_argument("wape_pct: zero reference");
  return 100.0 * (est - truth).cwiseAbs().sum() / denom;
}

std::string config_json(const PipelineConfig& c) {
  json j;
  if (c.synth_spec) {
    const auto& s = *c.synth_spec;
    j["synth"] = {{"node_count", s.node_count},
                  {"max_depth", s.max_depth},
                  {"seed", s.seed},
                  {"pv_penetration", s.pv_penetration},
                  {"window", {{"start_s", s.window.start_s}, {"end_s", s.window.end_s}}},
                  {"resolution_s", s.resolution_s},
                  {"noise_level", s.noise_level},
                  {"load_scale", s.load_scale},
                  {"proportional_loads", s.proportional_loads},
                  {"asynchrony",
                   {{"max_offset_s", s.asynchrony.max_offset_s},
                    {"distribution",
                     s.asynchrony.distribution == synth::OffsetDistribution::Uniform
                         ? "uniform"
                         : "truncated_gaussian"},
                    {"gaussian_std_s", s.asynchrony.gaussian_std_s},
                    {"seed", s.asynchrony.seed}}}};
  }
  if (!c.scenario_dir.empty()) j["scenario_dir"] = c.scenario_dir;
  if (!c.data_dir.empty()) j["data_dir"] = c.data_dir;
  j["window_length_s"] = c.window_length_s;
  j["stride_s"] = c.stride_s;
  j["max_windows"] = c.max_windows;
  j["max_outer_iters"] = c.max_outer_iters;
  j["lambda_scale"] = c.lambda_scale;
  j["lambda_u_scale"] = c.lambda_u_scale;
  j["lambda_pq_scale"] = c.lambda_pq_scale;
  j["mu_scale"] = c.mu_scale;
  j["nu_scale"] = c.nu_scale;
  j["L_scale"] = c.L_scale;
  j["delta_scale"] = {{"u", c.delta_u_scale}, {"p", c.delta_p_scale}, {"q", c.delta_q_scale}};
  j["omega"] = c.omega;
  j["pseudo_q_power_factor"] = c.pseudo_q_power_factor;
  j["pseudo_sigma_scale"] = c.pseudo_sigma_scale;
  j["ablation"] = {{"disable_coupling", c.ablation.disable_coupling},
                   {"independent_pcp", c.ablation.independent_pcp},
                   {"skip_recovery", c.ablation.skip_recovery}};
  j["bcse_max_iters"] = c.bcse_max_iters;
  j["bcse_voltage_sigma_scale"] = c.bcse_voltage_sigma_scale;
  j["power_base_scale"] = c.power_base_scale;
  j["bcse_power_sigma_scale"] = c.bcse_power_sigma_scale;
  return j.dump();
}

PipelineResult run_pipeline(const PipelineConfig& config_in) {
  PipelineConfig config = config_in;
  if (const char* env = std::getenv("SMREC_OUT"); env != nullptr && *env != '\0') {
    config.output_dir = env;
  }
  if (const char* env = std::getenv("SMREC_WORKERS"); env != nullptr && *env != '\0') {
    config.workers = std::max(1, std::atoi(env));
  }

  const int sources = (config.synth_spec ? 1 : 0) + (config.scenario_dir.empty() ? 0 : 1) +
                      (config.data_dir.empty() ? 0 : 1);
  if (sources != 1) {
    throw std::invalid_argument("pipeline: exactly one data source must be configured");
  }

  RunContext ctx;
  ctx.config = config;

  if (config.synth_spec) {
    ctx.scenario = synth::generate_scenario(*config.synth_spec);
  } else if (!config.scenario_dir.empty()) {
    ctx.scenario = synth::load_scenario(config.scenario_dir);
  } else {
    ctx.dataset = load_meter_dataset(config.data_dir);
  }

  if (ctx.scenario) {
    ctx.feeder = &ctx.scenario->feeder();
    ctx.meter_nodes = ctx.scenario->meter_nodes();
    ctx.sigma_u = ctx.scenario->noise_std_u();
    ctx.sigma_p = ctx.scenario->noise_std_p();
    ctx.sigma_q = ctx.scenario->noise_std_q();
    ctx.data_span = ctx.scenario->spec().window;
    ctx.resolution = ctx.scenario->spec().resolution_s;
  } else {
    ctx.feeder = &ctx.dataset->feeder;
    ctx.meter_nodes = ctx.dataset->meter_nodes;
    ctx.sigma_u = ctx.dataset->sigma_u;
    ctx.sigma_p = ctx.dataset->sigma_p;
    ctx.sigma_q = ctx.dataset->sigma_q;
    ctx.data_span = ctx.dataset->window;
    ctx.resolution = ctx.dataset->resolution_s;
  }
  ctx.sens = sensitivity_matrices(*ctx.feeder, ctx.meter_nodes);
  ctx.cfg_json = config_json(config);

  if (config.window_length_s <= 0 || config.window_length_s % ctx.resolution != 0) {
    throw std::invalid_argument("pipeline: window length must be a positive multiple of the resolution");
  }
  if (config.stride_s < ctx.resolution) {
    throw std::invalid_argument("pipeline: stride must be >= resolution");
  }

  // enumerate rolling windows
  std::vector<WindowData> windows;
  for (std::int64_t start = ctx.data_span.start_s;
       start + config.window_length_s <= ctx.data_span.end_s; start += config.stride_s) {
    WindowData wd;
    wd.index = static_cast<int>(windows.size());
    wd.win = TimeWindow{start, start + config.window_length_s};
    windows.push_back(std::move(wd));
    if (config.max_windows > 0 && static_cast<int>(windows.size()) >= config.max_windows) break;
  }
  if (windows.empty()) throw std::invalid_argument("pipeline: no full window fits the data span");

  if (!config.output_dir.empty()) fs::create_directories(config.output_dir);
  const std::string metrics_path =
      config.output_dir.empty() ? "" : (fs::path(config.output_dir) / "metrics.csv").string();

  std::vector<WindowOutcome> outcomes(windows.size());

  auto flush_partial = [&]() {
    if (metrics_path.empty()) return;
    std::vector<WindowMetrics> rows;
    for (const auto& o : outcomes) {
      if (!o.done) break;  // contiguous completed prefix only
      rows.push_back(o.metrics);
    }
    write_metrics_file(metrics_path, rows, ctx.cfg_json);
  };

  // phase 1: assemble + recover, parallel over windows
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    while (!failed.load()) {
      const std::size_t w = next.fetch_add(1);
      if (w >= windows.size()) return;
      try {
        if (ctx.scenario) {
          windows[w].raw = synth::sample_asynchronous(*ctx.scenario, windows[w].win);
          windows[w].truth = synth::ground_truth(*ctx.scenario, windows[w].win);
        } else {
          windows[w].raw = build_measured_window(*ctx.dataset, windows[w].win,
                                                 config.pseudo_q_power_factor);
        }
        outcomes[w] = process_window(ctx, windows[w]);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failed.exchange(true)) {
          failure = "window " + std::to_string(w) + " (start " +
                    std::to_string(windows[w].win.start_s) + "): " + e.what();
        }
        return;
      }
    }
  };

  const int worker_count = std::max(1, std::min<int>(config.workers,
                                                     static_cast<int>(windows.size())));
  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(worker_count));
    for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) {
    flush_partial();
    throw std::runtime_error("pipeline: " + failure);
  }

  // phase 2: sequential estimation, warm-started across rows and windows
  std::optional<bcse::StateVector> warm;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    try {
      run_bcse(ctx, windows[w], outcomes[w], warm);
    } catch (const std::exception& e) {
      flush_partial();
      throw std::runtime_error("pipeline: window " + std::to_string(w) + " estimation failed: " +
                               e.what());
    }
  }

  // artifacts
  std::vector<WindowMetrics> rows;
  rows.reserve(outcomes.size());
  for (const auto& o : outcomes) rows.push_back(o.metrics);

  if (!config.output_dir.empty()) {
    write_metrics_file(metrics_path, rows, ctx.cfg_json);

    std::ofstream timings(fs::path(config.output_dir) / "timings.csv");
    timings << "# schema smrec-timings-v1\n";
    timings << "window_index,recover_ms,bcse_ms\n";
    for (const auto& o : outcomes) {
      timings << o.metrics.window_index << "," << o.recover_ms << "," << o.bcse_ms << "\n";
    }

    for (std::size_t w = 0; w < windows.size(); ++w) {
      const fs::path dir = fs::path(config.output_dir) / ("window_" + std::to_string(w));
      fs::create_directories(dir);
      const auto& win = windows[w];
      const auto& rec = outcomes[w].recovered;
      write_matrix_csv((dir / "recovered_u.csv").string(),
                       ObservationMatrix(Quantity::VoltageSquared, rec.u, win.win,
                                         ctx.meter_nodes, ctx.resolution),
                       ctx.cfg_json);
      write_matrix_csv((dir / "recovered_p.csv").string(),
                       ObservationMatrix(Quantity::ActivePower, rec.p, win.win, ctx.meter_nodes,
                                         ctx.resolution),
                       ctx.cfg_json);
      write_matrix_csv((dir / "recovered_q.csv").string(),
                       ObservationMatrix(Quantity::ReactivePower, rec.q, win.win,
                                         ctx.meter_nodes, ctx.resolution),
                       ctx.cfg_json);
      if (!outcomes[w].trace.empty()) {
        write_trace(outcomes[w].trace, (dir / "trace.csv").string(), ctx.cfg_json);
      }
    }

    write_plot_data((fs::path(config.output_dir) / "plots").string(), windows, outcomes,
                    ctx.cfg_json);
  }

  return PipelineResult{std::move(rows), metrics_path};
}

GridSearchResult grid_search(const PipelineConfig& base,
                             const std::map<std::string, std::vector<double>>& grid,
                             const std::string& report_path) {
  if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
  for (const auto& [key, values] : grid) {
    if (values.empty()) throw std::invalid_argument("grid_search: no values for '" + key + "'");
    if (key != "lambda_scale" && key != "mu_scale" && key != "nu_scale" && key != "L_scale" &&
        key != "max_outer_iters") {
      throw std::invalid_argument("grid_search: unsupported parameter '" + key + "'");
    }
  }

  // held-out scenario for synthetic sources
  PipelineConfig eval = base;
  if (eval.synth_spec) {
    eval.synth_spec->seed = derive_seed(eval.synth_spec->seed, 0xEE);
  }

  std::vector<std::string> keys;
  for (const auto& [key, _] : grid) keys.push_back(key);

  GridSearchResult result;
  std::vector<std::size_t> odo(keys.size(), 0);
  bool carry = false;
  int point_idx = 0;
  while (!carry) {
    std::map<std::string, double> point;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      point[keys[k]] = grid.at(keys[k])[odo[k]];
    }

    PipelineConfig pc = eval;
    pc.output_dir = base.output_dir.empty()
                        ? ""
                        : (fs::path(base.output_dir) / ("grid_point_" + std::to_string(point_idx)))
                              .string();
    if (auto it = point.find("lambda_scale"); it != point.end()) pc.lambda_scale = it->second;
    if (auto it = point.find("mu_scale"); it != point.end()) pc.mu_scale = it->second;
    if (auto it = point.find("nu_scale"); it != point.end()) pc.nu_scale = it->second;
    if (auto it = point.find("L_scale"); it != point.end()) pc.L_scale = it->second;
    if (auto it = point.find("max_outer_iters"); it != point.end()) {
      pc.max_outer_iters = static_cast<int>(it->second);
    }

    const PipelineResult run = run_pipeline(pc);
    double score = 0.0;
    for (const auto& w : run.windows) score += w.bcse_mean_residual;
    score /= static_cast<double>(run.windows.size());

    result.ranked.emplace_back(point, score);
    ++point_idx;

    // advance the odometer (lexicographic order over the sorted keys)
    carry = true;
    for (std::size_t k = keys.size(); k-- > 0;) {
      if (++odo[k] < grid.at(keys[k]).size()) {
        carry = false;
        break;
      }
      odo[k] = 0;
    }
  }

  std::stable_sort(result.ranked.begin(), result.ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second < b.second;
                     return a.first < b.first;  // deterministic tie-break
                   });
  result.best = result.ranked.front().first;
  result.best_score = result.ranked.front().second;

  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write grid report '" + report_path + "'");
    out << "# schema smrec-gridsearch-v1\n";
    out << "rank";
    for (const auto& k : keys) out << "," << k;
    out << ",mean_bcse_residual\n";
    out.precision(17);
    int rank = 0;
    for (const auto& [point, score] : result.ranked) {
      out << rank++;
      for (const auto& k : keys) out << "," << point.at(k);
      out << "," << score << "\n";
    }
  }
  return result;
}

MeterDataset load_meter_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::invalid_argument("cannot open meter-data manifest under '" + dir + "'");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw std::invalid_argument("meter-data manifest parse error: " + std::string(e.what()));
  }
  if (manifest.value("schema", "") != "smrec-meterdata-v1") {
    throw std::invalid_argument("meter-data manifest: unsupported schema");
  }

  FeederModel feeder =
      load_feeder_file((fs::path(dir) / manifest.value("feeder_file", "feeder.txt")).string());

  std::map<int, std::string> files_u, files_p, files_q;
  for (const auto& m : manifest.at("meters")) {
    const std::string node = m.at("node").get<std::string>();
    const int idx = feeder.node_index(node);
    const std::string quantity = m.at("quantity").get<std::string>();
    const std::string file = m.at("file").get<std::string>();
    if (quantity == "voltage") {
      files_u[idx] = file;
    } else if (quantity == "active_power") {
      files_p[idx] = file;
    } else if (quantity == "reactive_power") {
      files_q[idx] = file;
    } else {
      throw std::invalid_argument("meter-data manifest: unknown quantity '" + quantity + "'");
    }
  }
  if (files_u.empty() || files_u.size() != files_p.size()) {
    throw std::invalid_argument(
        "meter-data manifest: every metered node needs voltage and active power series");
  }
  if (!files_q.empty() && files_q.size() != files_u.size()) {
    throw std::invalid_argument(
        "meter-data manifest: reactive series must cover all metered nodes or none");
  }

  MeterDataset ds{std::move(feeder),
                  {},
                  {},
                  {},
                  {},
                  TimeWindow{manifest.at("window").at("start_s").get<std::int64_t>(),
                             manifest.at("window").at("end_s").get<std::int64_t>()},
                  manifest.at("resolution_s").get<std::int64_t>(),
                  manifest.value("sigma_u", 0.01),
                  manifest.value("sigma_p", 0.01),
                  manifest.value("sigma_q", 0.01)};

  auto read_series = [&](int node, const std::string& file, Quantity q) {
    MeterSeries s;
    s.meter_id = ds.feeder.node_names()[static_cast<std::size_t>(node)];
    s.quantity = q;
    std::ifstream in(fs::path(dir) / file);
    if (!in) throw std::invalid_argument("cannot open meter file '" + file + "'");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("t_s", 0) == 0) continue;
      std::istringstream ss(line);
      std::string tok;
      std::getline(ss, tok, ',');
      s.times_s.push_back(std::stoll(tok));
      std::getline(ss, tok, ',');
      s.values.push_back(std::stod(tok));
    }
    if (s.times_s.empty()) throw std::invalid_argument("meter file '" + file + "' holds no samples");
    return s;
  };

  for (const auto& [node, file] : files_u) {
    ds.meter_nodes.push_back(ds.feeder.node_names()[static_cast<std::size_t>(node)]);
    ds.series_u.push_back(read_series(node, file, Quantity::VoltageSquared));
    if (files_p.find(node) == files_p.end()) {
      throw std::invalid_argument("meter-data manifest: node '" + ds.meter_nodes.back() +
                                  "' lacks an active-power series");
    }
    ds.series_p.push_back(read_series(node, files_p.at(node), Quantity::ActivePower));
    if (!files_q.empty()) {
      ds.series_q.push_back(read_series(node, files_q.at(node), Quantity::ReactivePower));
    }
  }
  return ds;
}

}  // namespace smrec::pipeline
