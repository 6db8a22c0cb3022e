#include <doctest.h>

#include <complex>

#include "smrec/acpf.hpp"

using namespace smrec;

TEST_CASE("zero load is the flat solution") {
  const FeederModel f("sub", {{"sub", "a", 0.05, 0.03}, {"a", "b", 0.02, 0.01}}, 1.0404);
  const auto sol = acpf::solve(f, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3));
  CHECK(std::abs(sol.node_voltage(2) - std::sqrt(1.0404)) < 1e-12);
  CHECK(sol.branch_current.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two-bus solution matches an independent sweep iteration") {
  const FeederModel f("sub", {{"sub", "a", 0.05, 0.03}}, 1.0);
  Eigen::VectorXd p(2), q(2);
  p << 0.0, 0.10;
  q << 0.0, 0.05;
  const auto sol = acpf::solve(f, p, q);

  // backward/forward sweep as the reference route
  const std::complex<double> z(0.05, 0.03);
  std::complex<double> v(1.0, 0.0);
  for (int it = 0; it < 200; ++it) {
    const std::complex<double> i = std::conj(std::complex<double>(0.10, 0.05) / v);
    v = 1.0 - z * i;
  }
  CHECK(std::abs(sol.node_voltage(1) - v) < 1e-9);

  // consumption-positive loads pull the voltage below the substation
  CHECK(std::abs(sol.node_voltage(1)) < 1.0);

  // the solved injection reproduces the specified consumption
  const std::complex<double> s = sol.node_voltage(1) * std::conj(sol.branch_current(0));
  CHECK(s.real() == doctest::Approx(0.10).epsilon(1e-9));
  CHECK(s.imag() == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("branch currents satisfy kirchhoff balances on a tree") {
  const FeederModel f("sub",
                      {{"sub", "a", 0.03, 0.02}, {"a", "b", 0.04, 0.02}, {"a", "c", 0.02, 0.05}},
                      1.0404);
  Eigen::VectorXd p(4), q(4);
  p << 0.0, 0.02, 0.03, 0.015;
  q << 0.0, 0.008, 0.012, 0.004;
  const auto sol = acpf::solve(f, p, q);

  // current into `a` equals its own load current plus both child flows
  const std::complex<double> load_a =
      std::conj(std::complex<double>(p(1), q(1)) / sol.node_voltage(1));
  CHECK(std::abs(sol.branch_current(0) - (load_a + sol.branch_current(1) + sol.branch_current(2))) <
        1e-9);
}

TEST_CASE("infeasible loads are reported") {
  const FeederModel f("sub", {{"sub", "a", 0.5, 0.4}}, 1.0);
  Eigen::VectorXd p(2), q(2);
  p << 0.0, 3.0;  // far beyond the deliverable power
  q << 0.0, 1.5;
  CHECK_THROWS_AS(acpf::solve(f, p, q), std::runtime_error);
}
