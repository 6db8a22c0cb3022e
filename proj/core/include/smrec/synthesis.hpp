#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smrec/acpf.hpp"
#include "smrec/feeder.hpp"
#include "smrec/observation.hpp"

namespace smrec::synth {

enum class OffsetDistribution { Uniform, TruncatedGaussian };

// Per-meter constant clock offsets, drawn once per scenario and rounded to
// whole seconds (the ground truth is a 1-second series).
struct AsynchronyModel {
  double max_offset_s = 900.0;
  OffsetDistribution distribution = OffsetDistribution::Uniform;
  double gaussian_std_s = 300.0;  // only used by TruncatedGaussian
  std::uint64_t seed = 0;
  std::vector<std::int64_t> per_meter_offsets;  // filled by draw_offsets
};

// populates model.per_meter_offsets; same seed, same offsets
void draw_offsets(AsynchronyModel& model, std::size_t meter_count);

// Where the true 1-second consumption series come from: generated profiles
// or an imported bundle.  Values are per-node consumptions in pu at any
// whole second of the covered range.
class SeriesSource {
 public:
  virtual ~SeriesSource() = default;
  virtual double p_at(int node, std::int64_t t_s) const = 0;
  virtual double q_at(int node, std::int64_t t_s) const = 0;
  virtual TimeWindow coverage() const = 0;
};

struct ScenarioSpec {
  int node_count = 20;
  int max_depth = 6;
  std::uint64_t seed = 1;
  double pv_penetration = 0.3;  // PV peak relative to aggregate peak load
  TimeWindow window{0, 86400};
  std::int64_t resolution_s = 900;
  double noise_level = 0.01;  // entry noise as a fraction of per-quantity RMS
  AsynchronyModel asynchrony;
  double load_scale = 0.015;  // mean per-node base load, pu
  // weight of the shared mid-period (25 min - 2.5 h) fluctuation factor;
  // this is the smooth component that meter offsets decorrelate
  double mid_band_weight = 0.01;
  // appliance step events per meter; amplitudes are relative to the node
  // base load.  Meters that aggregate several customers (service
  // transformers) see lower, smoother event activity
  double step_rate_per_day = 11.0;
  double step_amp_lo = 0.10;
  double step_amp_hi = 0.30;
  // test hook: make every load an exact scalar multiple of one shape
  bool proportional_loads = false;
};

// A complete synthetic ground truth: feeder, true series, noise levels and
// the drawn meter offsets.  Meters sit at every non-root node.
class Scenario {
 public:
  Scenario(FeederModel feeder, std::shared_ptr<const SeriesSource> series, ScenarioSpec spec,
           double noise_std_u, double noise_std_p, double noise_std_q);

  const FeederModel& feeder() const { return feeder_; }
  const ScenarioSpec& spec() const { return spec_; }
  const std::vector<std::string>& meter_nodes() const { return meter_nodes_; }
  const AsynchronyModel& asynchrony() const { return spec_.asynchrony; }
  const SeriesSource& series() const { return *series_; }
  std::shared_ptr<const SeriesSource> series_ptr() const { return series_; }

  double noise_std_u() const { return noise_std_u_; }
  double noise_std_p() const { return noise_std_p_; }
  double noise_std_q() const { return noise_std_q_; }

  double true_p(int node, std::int64_t t_s) const { return series_->p_at(node, t_s); }
  double true_q(int node, std::int64_t t_s) const { return series_->q_at(node, t_s); }

  // consumption vectors over all feeder nodes (root entry zero)
  Eigen::VectorXd consumption_p(std::int64_t t_s) const;
  Eigen::VectorXd consumption_q(std::int64_t t_s) const;

  // copy of this scenario with the meter offsets replaced (one per meter);
  // used for controlled asynchrony experiments
  Scenario with_offsets(std::vector<std::int64_t> offsets) const;

 private:
  FeederModel feeder_;
  std::shared_ptr<const SeriesSource> series_;
  ScenarioSpec spec_;
  std::vector<std::string> meter_nodes_;
  double noise_std_u_, noise_std_p_, noise_std_q_;
};

// Random radial feeder, daily load shapes with shared and per-node
// fluctuation plus appliance step events, clear-sky PV with cloud dips on a
// random node subset, all reproducible from the seed.
Scenario generate_scenario(const ScenarioSpec& spec);

struct SampledWindow {
  ObservationMatrix u, p, q;
};

// Asynchronous smart-meter view of one window: meter i's row-j sample is
// the true series at t_j + offset_i, with entrywise gaussian noise added in
// observation units (after voltage squaring).  Voltages come from the exact
// AC power flow at the shifted instants.
SampledWindow sample_asynchronous(const Scenario& scenario);
SampledWindow sample_asynchronous(const Scenario& scenario, TimeWindow window);

struct WindowTruth {
  ObservationMatrix u, p, q;          // synchronized, noiseless
  Eigen::MatrixXcd branch_current;    // m x branch_count, AC truth per row
};

WindowTruth ground_truth(const Scenario& scenario);
WindowTruth ground_truth(const Scenario& scenario, TimeWindow window);

// Q = P * tan(acos(power_factor)), entrywise; power_factor in (0, 1]
Eigen::MatrixXd pseudo_reactive(const Eigen::MatrixXd& mp, double power_factor);
ObservationMatrix pseudo_reactive(const ObservationMatrix& mp, double power_factor);

struct RankExperimentRow {
  double variance_s2 = 0.0;        // offset-distribution variance
  double mean_effective_rank = 0.0;
};

// Sweeps asynchrony strength: for each variance level, draws `replicates`
// fresh scenarios (uniform offsets of matching variance), samples the raw
// voltage matrix and averages its effective rank.
std::vector<RankExperimentRow> rank_experiment(const ScenarioSpec& base,
                                               const std::vector<double>& variances_s2,
                                               int replicates);

// Replayable scenario bundles: feeder.txt + manifest.json + per-node
// 1-second series CSVs under series/.
void write_scenario(const Scenario& scenario, const std::string& dir);
Scenario load_scenario(const std::string& dir);

}  // namespace smrec::synth
