#include "smrec/observation.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace smrec {

const char* quantity_name(Quantity q) {
  switch (q) {
    case Quantity::VoltageSquared: return "voltage_squared";
    case Quantity::ActivePower: return "active_power";
    case Quantity::ReactivePower: return "reactive_power";
  }
  return "unknown";
}

Quantity quantity_from_name(const std::string& name) {
  if (name == "voltage_squared" || name == "voltage") return Quantity::VoltageSquared;
  if (name == "active_power" || name == "p") return Quantity::ActivePower;
  if (name == "reactive_power" || name == "q") return Quantity::ReactivePower;
  throw std::invalid_argument("unknown quantity name: " + name);
}

ObservationMatrix::ObservationMatrix(Quantity quantity, Eigen::MatrixXd values,
                                     TimeWindow window, std::vector<std::string> meter_ids,
                                     std::int64_t resolution_s)
    : quantity_(quantity),
      values_(std::move(values)),
      window_(window),
      meter_ids_(std::move(meter_ids)),
      resolution_(resolution_s) {
  if (resolution_ <= 0) throw std::invalid_argument("observation: resolution must be positive");
  if (meter_ids_.empty()) throw std::invalid_argument("observation: no meters");
  if (values_.cols() != static_cast<Eigen::Index>(meter_ids_.size())) {
    throw std::invalid_argument("observation: column count " + std::to_string(values_.cols()) +
                                " does not match meter count " +
                                std::to_string(meter_ids_.size()));
  }
  const std::int64_t span = window_.end_s - window_.start_s;
  if (span <= 0 || span % resolution_ != 0) {
    throw std::invalid_argument("observation: window span must be a positive multiple of the resolution");
  }
  const std::int64_t m = span / resolution_;
  if (m < 2) throw std::invalid_argument("observation: need at least 2 rows");
  if (values_.rows() != static_cast<Eigen::Index>(m)) {
    throw std::invalid_argument("observation: row count " + std::to_string(values_.rows()) +
                                " does not match window/resolution (" + std::to_string(m) + ")");
  }
  if (!values_.allFinite()) {
    throw std::invalid_argument("observation: NaN/Inf entries");
  }
  if (quantity_ == Quantity::VoltageSquared && (values_.array() <= 0.0).any()) {
    throw std::invalid_argument("observation: voltage-squared entries must be strictly positive");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : meter_ids_) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("observation: duplicate meter id '" + id + "'");
    }
  }
}

ObservationMatrix build_observation_matrix(const std::vector<MeterSeries>& readings,
                                           TimeWindow window, std::int64_t resolution_s,
                                           Quantity quantity) {
  if (readings.empty()) throw std::invalid_argument("build_observation_matrix: no meters");
  if (resolution_s <= 0) throw std::invalid_argument("build_observation_matrix: resolution must be positive");
  const std::int64_t span = window.end_s - window.start_s;
  if (span <= 0 || span % resolution_s != 0) {
    throw std::invalid_argument("build_observation_matrix: window span must be a positive multiple of the resolution");
  }
  const auto m = static_cast<Eigen::Index>(span / resolution_s);
  const auto n = static_cast<Eigen::Index>(readings.size());

  Eigen::MatrixXd values(m, n);
  std::vector<std::string> ids;
  ids.reserve(readings.size());

  for (Eigen::Index i = 0; i < n; ++i) {
    const MeterSeries& s = readings[i];
    if (s.quantity != quantity) {
      throw std::invalid_argument("build_observation_matrix: meter '" + s.meter_id +
                                  "' holds " + quantity_name(s.quantity) + ", expected " +
                                  quantity_name(quantity));
    }
    if (s.times_s.size() != s.values.size()) {
      throw std::invalid_argument("build_observation_matrix: meter '" + s.meter_id +
                                  "' has mismatched time/value lengths");
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      const std::int64_t t = window.start_s + j * resolution_s;
      const auto it = std::lower_bound(s.times_s.begin(), s.times_s.end(), t);
      if (it == s.times_s.end() || *it != t) {
        throw std::invalid_argument("build_observation_matrix: missing sample for meter '" +
                                    s.meter_id + "' at t=" + std::to_string(t));
      }
      const double v = s.values[static_cast<std::size_t>(it - s.times_s.begin())];
      values(j, i) = quantity == Quantity::VoltageSquared ? v * v : v;
    }
    ids.push_back(s.meter_id);
  }
  return ObservationMatrix(quantity, std::move(values), window, std::move(ids), resolution_s);
}

}  // namespace smrec
