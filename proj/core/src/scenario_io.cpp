#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "smrec/synthesis.hpp"

namespace smrec::synth {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class ArraySeries : public SeriesSource {
 public:
  ArraySeries(std::int64_t t0, std::vector<std::vector<double>> p,
              std::vector<std::vector<double>> q)
      : t0_(t0), p_(std::move(p)), q_(std::move(q)) {}

  double p_at(int node, std::int64_t t_s) const override { return at(p_, node, t_s); }
  double q_at(int node, std::int64_t t_s) const override { return at(q_, node, t_s); }

  TimeWindow coverage() const override {
    const auto len = p_.size() > 1 ? static_cast<std::int64_t>(p_[1].size()) : 0;
    return TimeWindow{t0_, t0_ + len - 1};
  }

 private:
  double at(const std::vector<std::vector<double>>& store, int node, std::int64_t t_s) const {
    if (node <= 0 || node >= static_cast<int>(store.size())) {
      throw std::out_of_range("series: node index out of range");
    }
    const auto& v = store[static_cast<std::size_t>(node)];
    const std::int64_t k = t_s - t0_;
    if (k < 0 || k >= static_cast<std::int64_t>(v.size())) {
      throw std::out_of_range("series: t=" + std::to_string(t_s) + " outside stored range");
    }
    return v[static_cast<std::size_t>(k)];
  }

  std::int64_t t0_;
  std::vector<std::vector<double>> p_, q_;
};

const char* distribution_name(OffsetDistribution d) {
  return d == OffsetDistribution::Uniform ? "uniform" : "truncated_gaussian";
}

OffsetDistribution distribution_from_name(const std::string& s) {
  if (s == "uniform") return OffsetDistribution::Uniform;
  if (s == "truncated_gaussian") return OffsetDistribution::TruncatedGaussian;
  throw std::invalid_argument("scenario manifest: unknown offset distribution '" + s + "'");
}

}  // namespace

void write_scenario(const Scenario& scenario, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "series");
  write_feeder_file(scenario.feeder(), (fs::path(dir) / "feeder.txt").string());

  const ScenarioSpec& spec = scenario.spec();
  json manifest;
  manifest["schema"] = "smrec-scenario-v1";
  manifest["seed"] = spec.seed;
  manifest["node_count"] = spec.node_count;
  manifest["max_depth"] = spec.max_depth;
  manifest["pv_penetration"] = spec.pv_penetration;
  manifest["load_scale"] = spec.load_scale;
  manifest["mid_band_weight"] = spec.mid_band_weight;
  manifest["step_rate_per_day"] = spec.step_rate_per_day;
  manifest["step_amp_lo"] = spec.step_amp_lo;
  manifest["step_amp_hi"] = spec.step_amp_hi;
  manifest["noise_level"] = spec.noise_level;
  manifest["proportional_loads"] = spec.proportional_loads;
  manifest["window"] = {{"start_s", spec.window.start_s}, {"end_s", spec.window.end_s}};
  manifest["resolution_s"] = spec.resolution_s;
  manifest["noise_std"] = {{"u", scenario.noise_std_u()},
                           {"p", scenario.noise_std_p()},
                           {"q", scenario.noise_std_q()}};
  manifest["asynchrony"] = {{"max_offset_s", spec.asynchrony.max_offset_s},
                            {"distribution", distribution_name(spec.asynchrony.distribution)},
                            {"gaussian_std_s", spec.asynchrony.gaussian_std_s},
                            {"seed", spec.asynchrony.seed},
                            {"per_meter_offsets", spec.asynchrony.per_meter_offsets}};
  manifest["meter_nodes"] = scenario.meter_nodes();
  manifest["feeder_file"] = "feeder.txt";
  manifest["series_dir"] = "series";

  std::ofstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write scenario manifest under '" + dir + "'");
  mf << manifest.dump(2) << "\n";

  const TimeWindow cov = scenario.series().coverage();
  for (int node = 1; node < scenario.feeder().node_count(); ++node) {
    const std::string& name = scenario.feeder().node_names()[static_cast<std::size_t>(node)];
    std::ofstream out(fs::path(dir) / "series" / (name + ".csv"));
    if (!out) throw std::runtime_error("cannot write series file for node '" + name + "'");
    out << "# schema smrec-series-v1\n";
    out << "t_s,p_pu,q_pu\n";
    out.precision(17);
    for (std::int64_t t = cov.start_s; t <= cov.end_s; ++t) {
      out << t << "," << scenario.true_p(node, t) << "," << scenario.true_q(node, t) << "\n";
    }
  }
}

Scenario load_scenario(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::invalid_argument("cannot open scenario manifest under '" + dir + "'");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw std::invalid_argument("scenario manifest parse error: " + std::string(e.what()));
  }
  if (manifest.value("schema", "") != "smrec-scenario-v1") {
    throw std::invalid_argument("scenario manifest: unsupported schema");
  }

  FeederModel feeder =
      load_feeder_file((fs::path(dir) / manifest.value("feeder_file", "feeder.txt")).string());

  ScenarioSpec spec;
  spec.seed = manifest.at("seed").get<std::uint64_t>();
  spec.node_count = manifest.at("node_count").get<int>();
  spec.max_depth = manifest.at("max_depth").get<int>();
  spec.pv_penetration = manifest.at("pv_penetration").get<double>();
  spec.load_scale = manifest.at("load_scale").get<double>();
  spec.mid_band_weight = manifest.value("mid_band_weight", 0.01);
  spec.step_rate_per_day = manifest.value("step_rate_per_day", 11.0);
  spec.step_amp_lo = manifest.value("step_amp_lo", 0.10);
  spec.step_amp_hi = manifest.value("step_amp_hi", 0.30);
  spec.noise_level = manifest.at("noise_level").get<double>();
  spec.proportional_loads = manifest.value("proportional_loads", false);
  spec.window.start_s = manifest.at("window").at("start_s").get<std::int64_t>();
  spec.window.end_s = manifest.at("window").at("end_s").get<std::int64_t>();
  spec.resolution_s = manifest.at("resolution_s").get<std::int64_t>();
  const auto& asyn = manifest.at("asynchrony");
  spec.asynchrony.max_offset_s = asyn.at("max_offset_s").get<double>();
  spec.asynchrony.distribution = distribution_from_name(asyn.at("distribution").get<std::string>());
  spec.asynchrony.gaussian_std_s = asyn.at("gaussian_std_s").get<double>();
  spec.asynchrony.seed = asyn.at("seed").get<std::uint64_t>();
  spec.asynchrony.per_meter_offsets = asyn.at("per_meter_offsets").get<std::vector<std::int64_t>>();

  const int nn = feeder.node_count();
  std::vector<std::vector<double>> p(static_cast<std::size_t>(nn));
  std::vector<std::vector<double>> q(static_cast<std::size_t>(nn));
  std::int64_t t0 = 0;
  std::size_t len = 0;
  for (int node = 1; node < nn; ++node) {
    const std::string& name = feeder.node_names()[static_cast<std::size_t>(node)];
    const fs::path file = fs::path(dir) / manifest.value("series_dir", "series") / (name + ".csv");
    std::ifstream in(file);
    if (!in) throw std::invalid_argument("missing series file '" + file.string() + "'");
    std::string line;
    bool first_data = true;
    auto& pv = p[static_cast<std::size_t>(node)];
    auto& qv = q[static_cast<std::size_t>(node)];
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("t_s", 0) == 0) continue;
      std::istringstream ss(line);
      std::string tok;
      std::getline(ss, tok, ',');
      const std::int64_t t = std::stoll(tok);
      std::getline(ss, tok, ',');
      const double pval = std::stod(tok);
      std::getline(ss, tok, ',');
      const double qval = std::stod(tok);
      if (first_data) {
        if (node == 1) {
          t0 = t;
        } else if (t != t0) {
          throw std::invalid_argument("series files do not share a start time");
        }
        first_data = false;
      }
      pv.push_back(pval);
      qv.push_back(qval);
    }
    if (node == 1) {
      len = pv.size();
    } else if (pv.size() != len) {
      throw std::invalid_argument("series files do not share a length");
    }
  }

  auto series = std::make_shared<ArraySeries>(t0, std::move(p), std::move(q));
  const auto& ns = manifest.at("noise_std");
  return Scenario(std::move(feeder), std::move(series), std::move(spec),
                  ns.at("u").get<double>(), ns.at("p").get<double>(), ns.at("q").get<double>());
}

}  // namespace smrec::synth
