#include "smrec/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "smrec/matrix_norms.hpp"
#include "smrec/rng.hpp"

namespace smrec::synth {

void draw_offsets(AsynchronyModel& model, std::size_t meter_count) {
  if (model.max_offset_s < 0.0) {
    throw std::invalid_argument("asynchrony: max_offset_s must be >= 0");
  }
  RandomStream rng(model.seed);
  model.per_meter_offsets.clear();
  model.per_meter_offsets.reserve(meter_count);
  for (std::size_t i = 0; i < meter_count; ++i) {
    double off = 0.0;
    if (model.max_offset_s > 0.0) {
      if (model.distribution == OffsetDistribution::Uniform) {
        off = rng.uniform(0.0, model.max_offset_s);
      } else {
        // half-normal, rejected beyond the cap
        do {
          off = std::abs(rng.gaussian(0.0, model.gaussian_std_s));
        } while (off > model.max_offset_s);
      }
    }
    model.per_meter_offsets.push_back(static_cast<std::int64_t>(std::llround(off)));
  }
}

namespace {

struct SinusoidBank {
  std::vector<double> amp, omega, phase;

  double eval(double t_s) const {
    double v = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k) {
      v += amp[k] * std::sin(omega[k] * t_s + phase[k]);
    }
    return v;
  }
};

// 1/f-ish fluctuation bank, normalized to roughly unit standard deviation.
// Periods stay slow so that sub-resolution drift is small; the fast signal
// content comes from the step events instead.
SinusoidBank make_bank(RandomStream& rng, int components, double period_lo_s,
                       double period_hi_s) {
  SinusoidBank b;
  const double f_lo = 1.0 / period_hi_s;
  const double f_hi = 1.0 / period_lo_s;
  double power = 0.0;
  for (int k = 0; k < components; ++k) {
    const double f = f_lo * std::pow(f_hi / f_lo, (k + rng.uniform01()) / components);
    const double a = std::pow(f / f_lo, -0.45);
    b.amp.push_back(a);
    b.omega.push_back(2.0 * M_PI * f);
    b.phase.push_back(rng.uniform(0.0, 2.0 * M_PI));
    power += 0.5 * a * a;
  }
  const double scale = 1.0 / std::sqrt(power);
  for (auto& a : b.amp) a *= scale;
  return b;
}

struct StepEvent {
  double start_s = 0.0;
  double duration_s = 0.0;
  double amplitude = 0.0;
};

double steps_at(const std::vector<StepEvent>& events, double max_duration, double t) {
  // events are sorted by start; only those with start in (t - max_dur, t] matter
  double v = 0.0;
  auto it = std::upper_bound(events.begin(), events.end(), t,
                             [](double tt, const StepEvent& e) { return tt < e.start_s; });
  while (it != events.begin()) {
    --it;
    if (it->start_s <= t - max_duration) break;
    if (t >= it->start_s && t < it->start_s + it->duration_s) v += it->amplitude;
  }
  return v;
}

double daily_shape(double t_s) {
  const double h = std::fmod(t_s, 86400.0) / 3600.0;
  auto bump = [](double h0, double center, double width) {
    const double d = h0 - center;
    return std::exp(-0.5 * d * d / (width * width));
  };
  return 0.42 + 0.22 * bump(h, 8.0, 2.8) + 0.45 * bump(h, 19.5, 3.2);
}

double clear_sky(double t_s) {
  const double h = std::fmod(t_s, 86400.0) / 3600.0;
  if (h <= 6.0 || h >= 18.0) return 0.0;
  return std::pow(std::sin(M_PI * (h - 6.0) / 12.0), 1.3);
}

// Loads are mixtures of a few feeder-wide temporal factors (daily shape,
// slow and mid-period weather/behavior banks) plus a small per-node bank
// and small appliance step events.  The shared mid-period factor is what
// meter clock offsets decorrelate, so synchronized data stays close to
// low-rank while asynchronous sampling is not.
struct NodeProfile {
  double base = 0.01;
  double shape_gain = 1.0;
  double slow_gain = 1.0;
  double mid_gain = 1.0;
  double own_gain = 0.0;
  SinusoidBank own;
  std::vector<StepEvent> steps;
  double step_max_duration = 0.0;
  double pv_capacity = 0.0;
  std::vector<StepEvent> clouds;
  double cloud_max_duration = 0.0;
  double tan_phi = 0.3;
};

class ProfileSeries : public SeriesSource {
 public:
  ProfileSeries(std::vector<NodeProfile> profiles, SinusoidBank slow, SinusoidBank mid,
                TimeWindow coverage)
      : profiles_(std::move(profiles)),
        slow_(std::move(slow)),
        mid_(std::move(mid)),
        coverage_(coverage) {}

  double p_at(int node, std::int64_t t_s) const override {
    return load_at(node, t_s) - pv_at(node, t_s);
  }

  double q_at(int node, std::int64_t t_s) const override {
    const auto& np = profile(node, t_s);
    return load_at(node, t_s) * np.tan_phi;
  }

  TimeWindow coverage() const override { return coverage_; }

 private:
  const NodeProfile& profile(int node, std::int64_t t_s) const {
    if (node < 0 || node >= static_cast<int>(profiles_.size())) {
      throw std::out_of_range("series: node index out of range");
    }
    if (t_s < coverage_.start_s || t_s > coverage_.end_s) {
      throw std::out_of_range("series: t=" + std::to_string(t_s) +
                              " outside coverage [" + std::to_string(coverage_.start_s) + ", " +
                              std::to_string(coverage_.end_s) + "]");
    }
    return profiles_[static_cast<std::size_t>(node)];
  }

  double load_at(int node, std::int64_t t_s) const {
    const auto& np = profile(node, t_s);
    if (np.base == 0.0) return 0.0;  // substation
    const double t = static_cast<double>(t_s);
    double level = np.shape_gain * daily_shape(t) + np.slow_gain * slow_.eval(t) +
                   np.mid_gain * mid_.eval(t);
    if (np.own_gain != 0.0) level += np.own_gain * np.own.eval(t);
    double load = np.base * level + steps_at(np.steps, np.step_max_duration, t);
    return std::max(load, 0.02 * np.base);
  }

  double pv_at(int node, std::int64_t t_s) const {
    const auto& np = profile(node, t_s);
    if (np.pv_capacity == 0.0) return 0.0;
    const double t = static_cast<double>(t_s);
    const double dip = steps_at(np.clouds, np.cloud_max_duration, t);
    const double factor = std::max(1.0 - dip, 0.05);
    return np.pv_capacity * clear_sky(t) * factor;
  }

  std::vector<NodeProfile> profiles_;
  SinusoidBank slow_, mid_;
  TimeWindow coverage_;
};

}  // namespace

Scenario::Scenario(FeederModel feeder, std::shared_ptr<const SeriesSource> series,
                   ScenarioSpec spec, double noise_std_u, double noise_std_p, double noise_std_q)
    : feeder_(std::move(feeder)),
      series_(std::move(series)),
      spec_(std::move(spec)),
      noise_std_u_(noise_std_u),
      noise_std_p_(noise_std_p),
      noise_std_q_(noise_std_q) {
  const auto& names = feeder_.node_names();
  meter_nodes_.assign(names.begin() + 1, names.end());
  if (spec_.asynchrony.per_meter_offsets.size() != meter_nodes_.size()) {
    throw std::invalid_argument("scenario: offsets not drawn for every meter");
  }
}

Eigen::VectorXd Scenario::consumption_p(std::int64_t t_s) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(feeder_.node_count());
  for (int i = 1; i < feeder_.node_count(); ++i) v(i) = series_->p_at(i, t_s);
  return v;
}

Eigen::VectorXd Scenario::consumption_q(std::int64_t t_s) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(feeder_.node_count());
  for (int i = 1; i < feeder_.node_count(); ++i) v(i) = series_->q_at(i, t_s);
  return v;
}

Scenario Scenario::with_offsets(std::vector<std::int64_t> offsets) const {
  ScenarioSpec spec = spec_;
  spec.asynchrony.per_meter_offsets = std::move(offsets);
  return Scenario(feeder_, series_, std::move(spec), noise_std_u_, noise_std_p_, noise_std_q_);
}

Scenario generate_scenario(const ScenarioSpec& spec) {
  if (spec.node_count < 2) throw std::invalid_argument("generate_scenario: need >= 2 nodes");
  if (spec.max_depth < 1) throw std::invalid_argument("generate_scenario: depth must be >= 1");
  if (spec.pv_penetration < 0.0 || spec.pv_penetration > 1.5) {
    throw std::invalid_argument("generate_scenario: pv_penetration out of range");
  }
  const std::int64_t span = spec.window.end_s - spec.window.start_s;
  if (span <= 0 || spec.resolution_s <= 0 || span % spec.resolution_s != 0) {
    throw std::invalid_argument("generate_scenario: window must be a positive multiple of the resolution");
  }

  // topology
  RandomStream topo(derive_seed(spec.seed, 1));
  std::vector<FeederBranch> branches;
  std::vector<int> depth{0};
  std::vector<std::string> names{"sub"};
  for (int i = 1; i < spec.node_count; ++i) {
    std::vector<int> eligible;
    for (int j = 0; j < i; ++j) {
      if (depth[static_cast<std::size_t>(j)] < spec.max_depth) eligible.push_back(j);
    }
    const int parent = eligible[static_cast<std::size_t>(
        topo.uniform_int(0, static_cast<std::int64_t>(eligible.size()) - 1))];
    const double r = topo.uniform(0.01, 0.06);
    const double x = std::min(r * topo.uniform(0.8, 1.6), 0.3);
    names.push_back("n" + std::to_string(i));
    branches.push_back(FeederBranch{names[static_cast<std::size_t>(parent)], names.back(), r, x});
    depth.push_back(depth[static_cast<std::size_t>(parent)] + 1);
  }
  FeederModel feeder("sub", branches, 1.0404, 1000.0, 12.47);

  // load profiles
  RandomStream prof(derive_seed(spec.seed, 2));
  SinusoidBank slow = make_bank(prof, 14, 2.5 * 3600.0, 10.0 * 3600.0);
  SinusoidBank mid = make_bank(prof, 12, 1500.0, 2.5 * 3600.0);
  std::vector<NodeProfile> profiles(static_cast<std::size_t>(spec.node_count));
  double aggregate_base = 0.0;
  for (int i = 1; i < spec.node_count; ++i) {
    RandomStream rng(derive_seed(spec.seed, 100 + static_cast<std::uint64_t>(i)));
    NodeProfile np;
    np.base = spec.load_scale * rng.uniform(0.5, 1.5);
    aggregate_base += np.base;
    np.shape_gain = rng.uniform(0.9, 1.1);
    np.slow_gain = 0.10 * rng.uniform(0.7, 1.3);
    np.mid_gain = spec.mid_band_weight * rng.uniform(0.6, 1.4);
    np.tan_phi = std::tan(std::acos(rng.uniform(0.92, 0.98)));
    if (spec.proportional_loads) {
      np.shape_gain = 1.0;
      np.slow_gain = 0.10;
      np.mid_gain = spec.mid_band_weight;
      np.tan_phi = 0.35;
      profiles[static_cast<std::size_t>(i)] = np;
      continue;
    }
    np.own_gain = 0.012 * rng.uniform(0.5, 1.5);
    np.own = make_bank(rng, 10, 2700.0, 6.0 * 3600.0);
    // appliance step events; their boundaries are what asynchrony turns
    // into sparse errors, while the events themselves span several rows
    const double horizon_start = static_cast<double>(spec.window.start_s);
    const double horizon_end =
        static_cast<double>(spec.window.end_s) + spec.asynchrony.max_offset_s + 1.0;
    double t = horizon_start;
    const double interarrival = 86400.0 / std::max(spec.step_rate_per_day, 1e-3);
    while (true) {
      t += -std::log(1.0 - rng.uniform01()) * interarrival;
      if (t >= horizon_end) break;
      StepEvent e;
      e.start_s = t;
      e.duration_s = rng.uniform(1800.0, 9000.0);
      e.amplitude = np.base * rng.uniform(spec.step_amp_lo, spec.step_amp_hi);
      np.step_max_duration = std::max(np.step_max_duration, e.duration_s);
      np.steps.push_back(e);
    }
    profiles[static_cast<std::size_t>(i)] = np;
  }

  // PV on a random subset, scaled to the requested penetration
  if (spec.pv_penetration > 0.0 && !spec.proportional_loads) {
    RandomStream pv(derive_seed(spec.seed, 3));
    std::vector<int> pv_nodes;
    std::vector<double> raw_caps;
    double cap_sum = 0.0;
    for (int i = 1; i < spec.node_count; ++i) {
      if (pv.uniform01() < 0.5) {
        pv_nodes.push_back(i);
        raw_caps.push_back(pv.uniform(0.5, 1.5));
        cap_sum += raw_caps.back();
      }
    }
    if (pv_nodes.empty()) {  // force at least one PV site
      pv_nodes.push_back(1);
      raw_caps.push_back(1.0);
      cap_sum = 1.0;
    }
    const double target = spec.pv_penetration * aggregate_base * 0.9;  // ~peak-shape level
    for (std::size_t k = 0; k < pv_nodes.size(); ++k) {
      auto& np = profiles[static_cast<std::size_t>(pv_nodes[k])];
      np.pv_capacity = target * raw_caps[k] / cap_sum;
      // cloud transits
      const double horizon_start = static_cast<double>(spec.window.start_s);
      const double horizon_end =
          static_cast<double>(spec.window.end_s) + spec.asynchrony.max_offset_s + 1.0;
      double t = horizon_start;
      while (true) {
        t += -std::log(1.0 - pv.uniform01()) * 9000.0;
        if (t >= horizon_end) break;
        StepEvent e;
        e.start_s = t;
        e.duration_s = pv.uniform(600.0, 3600.0);
        e.amplitude = pv.uniform(0.3, 0.85);  // dip depth
        np.cloud_max_duration = std::max(np.cloud_max_duration, e.duration_s);
        np.clouds.push_back(e);
      }
    }
  }

  const std::int64_t guard = static_cast<std::int64_t>(std::ceil(spec.asynchrony.max_offset_s)) + 1;
  TimeWindow coverage{spec.window.start_s, spec.window.end_s + guard};
  auto series =
      std::make_shared<ProfileSeries>(std::move(profiles), std::move(slow), std::move(mid), coverage);

  // meter clock offsets, one per non-root node
  ScenarioSpec filled = spec;
  if (filled.asynchrony.seed == 0) filled.asynchrony.seed = derive_seed(spec.seed, 4);
  draw_offsets(filled.asynchrony, static_cast<std::size_t>(spec.node_count - 1));

  // per-quantity RMS probe for the noise levels
  double ss_u = 0.0, ss_p = 0.0, ss_q = 0.0;
  int cnt = 0;
  const int probes = 48;
  for (int k = 0; k < probes; ++k) {
    const std::int64_t t = spec.window.start_s + span * k / probes;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(spec.node_count);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(spec.node_count);
    for (int i = 1; i < spec.node_count; ++i) {
      p(i) = series->p_at(i, t);
      q(i) = series->q_at(i, t);
    }
    const acpf::Solution sol = acpf::solve(feeder, p, q);
    for (int i = 1; i < spec.node_count; ++i) {
      ss_u += std::pow(std::norm(sol.node_voltage(i)), 2);
      ss_p += p(i) * p(i);
      ss_q += q(i) * q(i);
      ++cnt;
    }
  }
  const double rms_u = std::sqrt(ss_u / cnt);
  const double rms_p = std::sqrt(ss_p / cnt);
  const double rms_q = std::sqrt(ss_q / cnt);

  return Scenario(std::move(feeder), std::move(series), std::move(filled),
                  spec.noise_level * rms_u, spec.noise_level * rms_p, spec.noise_level * rms_q);
}

namespace {

// AC node voltages at each requested instant, solved once per distinct time
std::map<std::int64_t, Eigen::VectorXcd> solve_times(const Scenario& sc,
                                                     const std::vector<std::int64_t>& times) {
  std::map<std::int64_t, Eigen::VectorXcd> out;
  for (std::int64_t t : times) {
    if (out.count(t)) continue;
    const acpf::Solution sol = acpf::solve(sc.feeder(), sc.consumption_p(t), sc.consumption_q(t));
    out.emplace(t, sol.node_voltage);
  }
  return out;
}

void check_coverage(const Scenario& sc, std::int64_t t, std::int64_t offset) {
  const TimeWindow cov = sc.series().coverage();
  if (t < cov.start_s || t > cov.end_s) {
    throw std::out_of_range("sample_asynchronous: offset " + std::to_string(offset) +
                            "s pushes sample to t=" + std::to_string(t) +
                            ", past the series end " + std::to_string(cov.end_s));
  }
}

}  // namespace

SampledWindow sample_asynchronous(const Scenario& scenario) {
  return sample_asynchronous(scenario, scenario.spec().window);
}

SampledWindow sample_asynchronous(const Scenario& scenario, TimeWindow window) {
  const auto& offsets = scenario.asynchrony().per_meter_offsets;
  const auto n = static_cast<Eigen::Index>(scenario.meter_nodes().size());
  const std::int64_t res = scenario.spec().resolution_s;
  const std::int64_t span = window.end_s - window.start_s;
  if (span <= 0 || span % res != 0) {
    throw std::invalid_argument("sample_asynchronous: window not aligned with resolution");
  }
  const auto m = static_cast<Eigen::Index>(span / res);

  std::vector<std::int64_t> times;
  times.reserve(static_cast<std::size_t>(m) * offsets.size());
  for (Eigen::Index j = 0; j < m; ++j) {
    const std::int64_t tj = window.start_s + j * res;
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::int64_t t = tj + offsets[static_cast<std::size_t>(i)];
      check_coverage(scenario, t, offsets[static_cast<std::size_t>(i)]);
      times.push_back(t);
    }
  }
  const auto voltages = solve_times(scenario, times);

  Eigen::MatrixXd u(m, n), p(m, n), q(m, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int node = static_cast<int>(i) + 1;
    const std::int64_t off = offsets[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m; ++j) {
      const std::int64_t t = window.start_s + j * res + off;
      u(j, i) = std::norm(voltages.at(t)(node));
      p(j, i) = scenario.true_p(node, t);
      q(j, i) = scenario.true_q(node, t);
    }
  }

  // measurement noise in observation units (voltage noise after squaring)
  auto add_noise = [&](Eigen::MatrixXd& a, double std_dev, std::uint64_t tag) {
    if (std_dev <= 0.0) return;
    RandomStream rng(derive_seed(scenario.spec().seed,
                                 0xA000 + tag * 131 + static_cast<std::uint64_t>(window.start_s)));
    for (Eigen::Index j = 0; j < a.rows(); ++j) {
      for (Eigen::Index i = 0; i < a.cols(); ++i) {
        a(j, i) += rng.gaussian(0.0, std_dev);
      }
    }
  };
  add_noise(u, scenario.noise_std_u(), 1);
  add_noise(p, scenario.noise_std_p(), 2);
  add_noise(q, scenario.noise_std_q(), 3);

  SampledWindow out{
      ObservationMatrix(Quantity::VoltageSquared, std::move(u), window, scenario.meter_nodes(), res),
      ObservationMatrix(Quantity::ActivePower, std::move(p), window, scenario.meter_nodes(), res),
      ObservationMatrix(Quantity::ReactivePower, std::move(q), window, scenario.meter_nodes(), res)};
  return out;
}

WindowTruth ground_truth(const Scenario& scenario) {
  return ground_truth(scenario, scenario.spec().window);
}

WindowTruth ground_truth(const Scenario& scenario, TimeWindow window) {
  const auto n = static_cast<Eigen::Index>(scenario.meter_nodes().size());
  const std::int64_t res = scenario.spec().resolution_s;
  const std::int64_t span = window.end_s - window.start_s;
  if (span <= 0 || span % res != 0) {
    throw std::invalid_argument("ground_truth: window not aligned with resolution");
  }
  const auto m = static_cast<Eigen::Index>(span / res);

  Eigen::MatrixXd u(m, n), p(m, n), q(m, n);
  Eigen::MatrixXcd branch(m, scenario.feeder().branch_count());
  for (Eigen::Index j = 0; j < m; ++j) {
    const std::int64_t t = window.start_s + j * res;
    const acpf::Solution sol =
        acpf::solve(scenario.feeder(), scenario.consumption_p(t), scenario.consumption_q(t));
    for (Eigen::Index i = 0; i < n; ++i) {
      const int node = static_cast<int>(i) + 1;
      u(j, i) = std::norm(sol.node_voltage(node));
      p(j, i) = scenario.true_p(node, t);
      q(j, i) = scenario.true_q(node, t);
    }
    branch.row(j) = sol.branch_current.transpose();
  }

  WindowTruth out{
      ObservationMatrix(Quantity::VoltageSquared, std::move(u), window, scenario.meter_nodes(), res),
      ObservationMatrix(Quantity::ActivePower, std::move(p), window, scenario.meter_nodes(), res),
      ObservationMatrix(Quantity::ReactivePower, std::move(q), window, scenario.meter_nodes(), res),
      std::move(branch)};
  return out;
}

Eigen::MatrixXd pseudo_reactive(const Eigen::MatrixXd& mp, double power_factor) {
  if (!(power_factor > 0.0) || power_factor > 1.0) {
    throw std::invalid_argument("pseudo_reactive: power factor must be in (0, 1]");
  }
  const double tan_phi = std::tan(std::acos(power_factor));
  return mp * tan_phi;
}

ObservationMatrix pseudo_reactive(const ObservationMatrix& mp, double power_factor) {
  if (mp.quantity() != Quantity::ActivePower) {
    throw std::invalid_argument("pseudo_reactive: input must be an active-power matrix");
  }
  return ObservationMatrix(Quantity::ReactivePower, pseudo_reactive(mp.values(), power_factor),
                           mp.window(), mp.meter_ids(), mp.resolution_s());
}

std::vector<RankExperimentRow> rank_experiment(const ScenarioSpec& base,
                                               const std::vector<double>& variances_s2,
                                               int replicates) {
  if (variances_s2.size() < 2) throw std::invalid_argument("rank_experiment: need >= 2 levels");
  if (replicates < 1) throw std::invalid_argument("rank_experiment: need >= 1 replicate");

  std::vector<RankExperimentRow> rows;
  for (std::size_t li = 0; li < variances_s2.size(); ++li) {
    const double var = variances_s2[li];
    if (var < 0.0) throw std::invalid_argument("rank_experiment: negative variance");
    const double width = std::sqrt(12.0 * var);  // uniform [0, w] has variance w^2/12
    double rank_sum = 0.0;
    for (int rep = 0; rep < replicates; ++rep) {
      ScenarioSpec spec = base;
      // paired scenarios across levels, independent offsets per level
      spec.seed = derive_seed(base.seed, 50 + static_cast<std::uint64_t>(rep));
      spec.asynchrony.distribution = OffsetDistribution::Uniform;
      spec.asynchrony.max_offset_s = width;
      spec.asynchrony.seed =
          derive_seed(base.seed, 7000 + li * 1009 + static_cast<std::uint64_t>(rep));
      const Scenario sc = generate_scenario(spec);
      const SampledWindow w = sample_asynchronous(sc);
      rank_sum += effective_rank(w.u.values());
    }
    rows.push_back(RankExperimentRow{var, rank_sum / replicates});
  }
  return rows;
}

}  // namespace smrec::synth
