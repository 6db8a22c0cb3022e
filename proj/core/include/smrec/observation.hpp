#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace smrec {

enum class Quantity { VoltageSquared, ActivePower, ReactivePower };

const char* quantity_name(Quantity q);
Quantity quantity_from_name(const std::string& name);

// One meter's readings, timestamps in whole seconds, values in per-unit.
// Voltage series carry magnitudes; squaring happens once, when the
// observation matrix is built.
struct MeterSeries {
  std::string meter_id;
  Quantity quantity = Quantity::ActivePower;
  std::vector<std::int64_t> times_s;  // ascending
  std::vector<double> values;
};

struct TimeWindow {
  std::int64_t start_s = 0;
  std::int64_t end_s = 0;
};

// Time-window x meter matrix of one measured quantity (voltage magnitude
// squared in pu^2, powers in pu on a declared base).  Row j holds the
// samples at start_s + j*resolution_s; columns follow meter_ids.
class ObservationMatrix {
 public:
  ObservationMatrix(Quantity quantity, Eigen::MatrixXd values, TimeWindow window,
                    std::vector<std::string> meter_ids, std::int64_t resolution_s);

  Quantity quantity() const { return quantity_; }
  const Eigen::MatrixXd& values() const { return values_; }
  const TimeWindow& window() const { return window_; }
  const std::vector<std::string>& meter_ids() const { return meter_ids_; }
  std::int64_t resolution_s() const { return resolution_; }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  std::int64_t row_time(Eigen::Index j) const { return window_.start_s + j * resolution_; }

 private:
  Quantity quantity_;
  Eigen::MatrixXd values_;
  TimeWindow window_;
  std::vector<std::string> meter_ids_;
  std::int64_t resolution_;
};

// Assembles the matrix from per-meter series.  Every meter must hold a
// reading at every sample instant start_s + j*resolution_s, j = 0..m-1 with
// m = (end_s - start_s)/resolution_s; a missing sample is an error naming
// the meter and timestamp.  Column order follows `readings` order.
ObservationMatrix build_observation_matrix(const std::vector<MeterSeries>& readings,
                                           TimeWindow window, std::int64_t resolution_s,
                                           Quantity quantity);

}  // namespace smrec
