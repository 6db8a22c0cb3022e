#include <doctest.h>

#include <complex>

#include "oracles.hpp"
#include "smrec/acpf.hpp"
#include "smrec/bcse.hpp"
#include "smrec/rng.hpp"

using namespace smrec;
using bcse::Measurement;
using bcse::MeasurementKind;
using bcse::MeasurementSet;
using bcse::StateVector;

namespace {

FeederModel two_bus() { return FeederModel("sub", {{"sub", "n1", 0.04, 0.03}}, 1.0404); }

FeederModel small_tree() {
  return FeederModel("sub",
                     {{"sub", "a", 0.03, 0.02},
                      {"a", "b", 0.05, 0.04},
                      {"a", "c", 0.02, 0.03},
                      {"sub", "d", 0.06, 0.02}},
                     1.0404);
}

StateVector random_state(const FeederModel& f, std::uint64_t seed, double scale = 0.05) {
  RandomStream rng(seed);
  StateVector x{Eigen::VectorXd(f.branch_count()), Eigen::VectorXd(f.branch_count())};
  for (int b = 0; b < f.branch_count(); ++b) {
    x.current_re(b) = scale * rng.uniform(-1.0, 1.0);
    x.current_im(b) = scale * rng.uniform(-1.0, 1.0);
  }
  return x;
}

// consistent measurement set generated from a state, unit sigmas
std::vector<Measurement> consistent_measurements(const FeederModel& f, const StateVector& x) {
  std::vector<Measurement> ms;
  for (int node = 1; node < f.node_count(); ++node) {
    for (MeasurementKind kind :
         {MeasurementKind::VoltageSquaredAtNode, MeasurementKind::ActiveInjectionAtNode,
          MeasurementKind::ReactiveInjectionAtNode}) {
      ms.push_back({kind, node, bcse::eval_measurement(f, x, kind, node).value, 1.0});
    }
  }
  return ms;
}

}  // namespace

TEST_CASE("zero currents give flat voltage and zero injections") {
  const FeederModel f = small_tree();
  const StateVector x = bcse::flat_start(f);
  for (int node = 0; node < f.node_count(); ++node) {
    CHECK(bcse::eval_measurement(f, x, MeasurementKind::VoltageSquaredAtNode, node).value ==
          doctest::Approx(1.0404));
  }
  for (int node = 1; node < f.node_count(); ++node) {
    CHECK(bcse::eval_measurement(f, x, MeasurementKind::ActiveInjectionAtNode, node).value ==
          doctest::Approx(0.0));
    CHECK(bcse::eval_measurement(f, x, MeasurementKind::ReactiveInjectionAtNode, node).value ==
          doctest::Approx(0.0));
  }
}

TEST_CASE("two-bus measurement functions match direct complex arithmetic") {
  const FeederModel f = two_bus();
  StateVector x{Eigen::VectorXd(1), Eigen::VectorXd(1)};
  x.current_re(0) = 0.31;
  x.current_im(0) = -0.12;

  const std::complex<double> v0(std::sqrt(1.0404), 0.0);
  const std::complex<double> z(0.04, 0.03);
  const std::complex<double> i(0.31, -0.12);
  const std::complex<double> v1 = v0 - z * i;
  const std::complex<double> s = v1 * std::conj(i);

  CHECK(bcse::eval_measurement(f, x, MeasurementKind::VoltageSquaredAtNode, 1).value ==
        doctest::Approx(std::norm(v1)).epsilon(1e-12));
  CHECK(bcse::eval_measurement(f, x, MeasurementKind::ActiveInjectionAtNode, 1).value ==
        doctest::Approx(s.real()).epsilon(1e-12));
  CHECK(bcse::eval_measurement(f, x, MeasurementKind::ReactiveInjectionAtNode, 1).value ==
        doctest::Approx(s.imag()).epsilon(1e-12));
  CHECK(bcse::eval_measurement(f, x, MeasurementKind::BranchCurrentRe, 0).value ==
        doctest::Approx(0.31));
  CHECK(bcse::eval_measurement(f, x, MeasurementKind::BranchCurrentIm, 0).value ==
        doctest::Approx(-0.12));
}

TEST_CASE("analytic partials match central finite differences") {
  const FeederModel f = small_tree();
  const StateVector x = random_state(f, 3);
  const int nb = f.branch_count();

  for (int node = 1; node < f.node_count(); ++node) {
    for (MeasurementKind kind :
         {MeasurementKind::VoltageSquaredAtNode, MeasurementKind::ActiveInjectionAtNode,
          MeasurementKind::ReactiveInjectionAtNode}) {
      const Eigen::VectorXd grad = bcse::eval_measurement(f, x, kind, node).gradient;
      Eigen::VectorXd fd(2 * nb);
      const double h = 1e-7;
      for (int k = 0; k < 2 * nb; ++k) {
        StateVector xp = x, xm = x;
        if (k < nb) {
          xp.current_re(k) += h;
          xm.current_re(k) -= h;
        } else {
          xp.current_im(k - nb) += h;
          xm.current_im(k - nb) -= h;
        }
        fd(k) = (bcse::eval_measurement(f, xp, kind, node).value -
                 bcse::eval_measurement(f, xm, kind, node).value) /
                (2.0 * h);
      }
      const double denom = std::max(fd.cwiseAbs().maxCoeff(), 1e-6);
      CHECK((grad - fd).cwiseAbs().maxCoeff() / denom < 1e-5);
    }
  }
}

TEST_CASE("unknown kinds and bad indices are rejected") {
  const FeederModel f = two_bus();
  const StateVector x = bcse::flat_start(f);
  CHECK_THROWS_AS(bcse::eval_measurement(f, x, MeasurementKind::BranchCurrentRe, 5),
                  std::invalid_argument);
  CHECK_THROWS_AS(bcse::eval_measurement(f, x, MeasurementKind::ActiveInjectionAtNode, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(bcse::eval_measurement(f, x, MeasurementKind::VoltageSquaredAtNode, 7),
                  std::invalid_argument);
}

TEST_CASE("consistent measurements are fit exactly") {
  const FeederModel f = small_tree();
  const StateVector truth = random_state(f, 9);
  const MeasurementSet meas(consistent_measurements(f, truth));

  const auto res = bcse::estimate(meas, f);
  CHECK(res.converged);
  CHECK(res.iterations <= 15);
  CHECK((bcse::flatten(res.state) - bcse::flatten(truth)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(res.residual_trace.back() < 1e-16);
}

TEST_CASE("estimation is invariant to a common weight scale") {
  const FeederModel f = small_tree();
  const StateVector truth = random_state(f, 21);
  auto entries = consistent_measurements(f, truth);
  RandomStream rng(22);
  for (auto& e : entries) e.value += 1e-3 * rng.gaussian();

  auto scaled = entries;
  for (auto& e : scaled) e.sigma *= 7.5;  // scales every weight by the same factor

  const auto res_a = bcse::estimate(MeasurementSet(entries), f, std::nullopt, 8, 0.0);
  const auto res_b = bcse::estimate(MeasurementSet(scaled), f, std::nullopt, 8, 0.0);
  CHECK((bcse::flatten(res_a.state) - bcse::flatten(res_b.state)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("a duplicated high-weight measurement pulls the fit") {
  // one branch, two conflicting direct current readings: the WLS answer is
  // the weighted mean, reproduced by a closed-form weighted regression
  const FeederModel f = two_bus();
  std::vector<Measurement> ms{
      {MeasurementKind::BranchCurrentRe, 0, 0.10, 1.0},
      {MeasurementKind::BranchCurrentRe, 0, 0.40, 1.0 / std::sqrt(10.0)},  // weight 10x
      {MeasurementKind::BranchCurrentIm, 0, -0.05, 1.0},
  };
  const auto res = bcse::estimate(MeasurementSet(ms), f);
  const double expect = (1.0 * 0.10 + 10.0 * 0.40) / 11.0;
  CHECK(res.state.current_re(0) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(res.state.current_im(0) == doctest::Approx(-0.05).epsilon(1e-9));
}

TEST_CASE("rank deficiency raises an observability error") {
  const FeederModel f = small_tree();
  const StateVector truth = random_state(f, 33);
  auto entries = consistent_measurements(f, truth);
  entries.resize(5);  // fewer than 8 states
  CHECK_THROWS_AS(bcse::estimate(MeasurementSet(entries), f), bcse::ObservabilityError);

  // enough rows but a degenerate set: repeating one measurement 8 times
  std::vector<Measurement> degenerate(
      8, Measurement{MeasurementKind::BranchCurrentRe, 0, 0.1, 1.0});
  try {
    bcse::estimate(MeasurementSet(degenerate), f);
    FAIL("expected ObservabilityError");
  } catch (const bcse::ObservabilityError& e) {
    CHECK(std::string(e.what()).find("unobservable") != std::string::npos);
  }
}

TEST_CASE("gain matrix is symmetric") {
  const FeederModel f = small_tree();
  const StateVector x = random_state(f, 41);
  const auto entries = consistent_measurements(f, x);
  Eigen::MatrixXd h(entries.size(), 2 * f.branch_count());
  Eigen::VectorXd w(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    h.row(static_cast<Eigen::Index>(i)) =
        bcse::eval_measurement(f, x, entries[i].kind, entries[i].index).gradient.transpose();
    w(static_cast<Eigen::Index>(i)) = 1.0 / (entries[i].sigma * entries[i].sigma);
  }
  const Eigen::MatrixXd gain = h.transpose() * w.asDiagonal() * h;
  CHECK((gain - gain.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("warm starts agree with cold starts on consistent data") {
  const FeederModel f = small_tree();
  const StateVector truth = random_state(f, 55);
  const MeasurementSet meas(consistent_measurements(f, truth));
  const auto cold = bcse::estimate(meas, f);
  const auto warm = bcse::estimate(meas, f, truth);
  CHECK(warm.iterations <= cold.iterations);
  CHECK((bcse::flatten(warm.state) - bcse::flatten(truth)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("states estimated from AC truth match the AC branch currents") {
  const FeederModel f = small_tree();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(f.node_count());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(f.node_count());
  RandomStream rng(66);
  for (int i = 1; i < f.node_count(); ++i) {
    p(i) = rng.uniform(0.01, 0.04);
    q(i) = rng.uniform(0.003, 0.015);
  }
  const auto sol = acpf::solve(f, p, q);

  std::vector<Measurement> ms;
  for (int node = 1; node < f.node_count(); ++node) {
    ms.push_back({MeasurementKind::VoltageSquaredAtNode, node, std::norm(sol.node_voltage(node)),
                  1.0});
    ms.push_back({MeasurementKind::ActiveInjectionAtNode, node, p(node), 1.0});
    ms.push_back({MeasurementKind::ReactiveInjectionAtNode, node, q(node), 1.0});
  }
  const auto res = bcse::estimate(MeasurementSet(ms), f);
  for (int b = 0; b < f.branch_count(); ++b) {
    CHECK(res.state.current_re(b) == doctest::Approx(sol.branch_current(b).real()).epsilon(1e-7));
    CHECK(res.state.current_im(b) == doctest::Approx(sol.branch_current(b).imag()).epsilon(1e-7));
  }
}

TEST_CASE("mpe definition, zero handling and the signed legacy variant") {
  Eigen::VectorXd t(2), e(2);
  t << 1.0, 2.0;
  e << 1.0, 2.0;
  CHECK(bcse::mpe(t, e) == doctest::Approx(0.0));

  e << 1.01, 1.98;
  CHECK(bcse::mpe(t, e) == doctest::Approx(1.0));

  RandomStream rng(77);
  Eigen::VectorXd ts(6), es(6);
  for (int i = 0; i < 6; ++i) {
    ts(i) = rng.uniform(0.5, 2.0);
    es(i) = ts(i) + rng.uniform(-0.2, 0.2);
  }
  double acc = 0.0;
  for (int i = 0; i < 6; ++i) acc += std::abs((ts(i) - es(i)) / ts(i));
  CHECK(bcse::mpe(ts, es) == doctest::Approx(100.0 * acc / 6.0).epsilon(1e-12));

  Eigen::VectorXd tz(2), ez(2);
  tz << 1.0, 0.0;
  ez << 1.0, 0.5;
  CHECK_THROWS_AS(bcse::mpe(tz, ez), std::invalid_argument);
  bcse::MpeOptions opts;
  opts.exclude_small_true = true;
  CHECK(bcse::mpe(tz, ez, opts) == doctest::Approx(0.0));

  // signed variant sums the raw relative errors, cancellation included
  Eigen::VectorXd t2(2), e2(2);
  t2 << 1.0, 1.0;
  e2 << 1.1, 0.9;
  bcse::MpeOptions signed_opts;
  signed_opts.signed_sum = true;
  CHECK(bcse::mpe(t2, e2, signed_opts) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(bcse::mpe(t2, e2) == doctest::Approx(10.0));
}
