#include <doctest.h>

#include "oracles.hpp"
#include "smrec/matrix_norms.hpp"
#include "smrec/rng.hpp"
#include "smrec/smooth_norms.hpp"

using namespace smrec;

namespace {
Eigen::MatrixXd seeded_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
  RandomStream rng(seed);
  Eigen::MatrixXd a(rows, cols);
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) a(j, i) = scale * rng.uniform(-1.0, 1.0);
  }
  return a;
}
}  // namespace

TEST_CASE("smoothed nuclear zero case and parameter checks") {
  const auto ev = smoothed_nuclear(Eigen::MatrixXd::Zero(3, 2), 0.5);
  CHECK(ev.value == doctest::Approx(0.0));
  CHECK(ev.gradient.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK_THROWS_AS(smoothed_nuclear(Eigen::MatrixXd::Zero(2, 2), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(smoothed_nuclear(Eigen::MatrixXd::Zero(2, 2), -1.0), std::invalid_argument);
}

TEST_CASE("smoothed nuclear on a diagonal matrix") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 3.0;
  a(1, 1) = 0.5;
  const auto ev = smoothed_nuclear(a, 1.0);
  CHECK(ev.gradient(0, 0) == doctest::Approx(1.0));
  CHECK(ev.gradient(1, 1) == doctest::Approx(0.5));
  CHECK(ev.value == doctest::Approx(2.625));
  // projected-gradient-ascent oracle on the dual problem
  CHECK(ev.value == doctest::Approx(oracles::smoothed_nuclear_pga(a, 1.0)).epsilon(1e-6));
}

TEST_CASE("smoothed nuclear equals the dual maximum on seeded matrices") {
  const Eigen::MatrixXd a = seeded_matrix(4, 3, 21);
  for (double mu : {0.3, 1.0}) {
    CHECK(smoothed_nuclear(a, mu).value ==
          doctest::Approx(oracles::smoothed_nuclear_pga(a, mu)).epsilon(1e-6));
  }
}

TEST_CASE("all singular values above mu give the rank-capped correction") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 1.5;
  const double mu = 0.4;  // both singular values exceed mu
  const auto ev = smoothed_nuclear(a, mu);
  CHECK(ev.value == doctest::Approx(nuclear_norm(a) - 0.5 * mu * 2.0));
  CHECK(ev.value >= nuclear_norm(a) - 0.5 * mu * 2.0 - 1e-12);
}

TEST_CASE("smoothed l1 zero case, clamping and asymptotics") {
  const auto z = smoothed_l1(Eigen::MatrixXd::Zero(2, 2), 0.7);
  CHECK(z.value == doctest::Approx(0.0));
  CHECK(z.gradient.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK_THROWS_AS(smoothed_l1(Eigen::MatrixXd::Zero(2, 2), 0.0), std::invalid_argument);

  Eigen::MatrixXd s(1, 2);
  s << 2.0, -0.3;
  const auto ev = smoothed_l1(s, 1.0);
  CHECK(ev.gradient(0, 0) == doctest::Approx(1.0));
  CHECK(ev.gradient(0, 1) == doctest::Approx(-0.3));
  CHECK(ev.value == doctest::Approx(1.545));
  CHECK(ev.value == doctest::Approx(oracles::smoothed_l1_scan(s, 1.0)).epsilon(1e-9));

  // far from the origin the surrogate approaches l1 minus the fixed gap
  const double nu = 0.01;
  const Eigen::MatrixXd big = 100.0 * nu * seeded_matrix(3, 4, 2).cwiseSign();
  CHECK(smoothed_l1(big, nu).value ==
        doctest::Approx(entrywise_l1(big) - 0.5 * nu * 12).epsilon(1e-9));
}

TEST_CASE("closed-form gradients match central finite differences") {
  // the acceptance suite runs 50 seeds; keep a quick spot check here
  for (std::uint64_t seed : {101, 102, 103, 104, 105}) {
    const Eigen::MatrixXd a = seeded_matrix(4, 3, seed);
    const double mu = 0.2, nu = 0.15;

    const Eigen::MatrixXd g_nuc = smoothed_nuclear(a, mu).gradient;
    const Eigen::MatrixXd fd_nuc = oracles::fd_gradient(
        [mu](const Eigen::MatrixXd& x) { return smoothed_nuclear(x, mu).value; }, a);
    CHECK((g_nuc - fd_nuc).cwiseAbs().maxCoeff() / fd_nuc.cwiseAbs().maxCoeff() < 1e-5);

    const Eigen::MatrixXd g_l1 = smoothed_l1(a, nu).gradient;
    const Eigen::MatrixXd fd_l1 = oracles::fd_gradient(
        [nu](const Eigen::MatrixXd& x) { return smoothed_l1(x, nu).value; }, a);
    CHECK((g_l1 - fd_l1).cwiseAbs().maxCoeff() / fd_l1.cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("gradient norms respect the dual-ball bounds") {
  for (std::uint64_t seed : {31, 32, 33}) {
    const Eigen::MatrixXd a = seeded_matrix(5, 3, seed, 2.0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(smoothed_nuclear(a, 0.3).gradient);
    CHECK(svd.singularValues()(0) <= 1.0 + 1e-10);
    CHECK(smoothed_l1(a, 0.3).gradient.cwiseAbs().maxCoeff() <= 1.0 + 1e-10);
  }
}

TEST_CASE("uniform approximation bounds") {
  for (std::uint64_t seed : {41, 42, 43, 44}) {
    const Eigen::MatrixXd a = seeded_matrix(4, 3, seed, 1.5);
    for (double mu : {0.05, 0.5, 2.0}) {
      const double gap = nuclear_norm(a) - smoothed_nuclear(a, mu).value;
      CHECK(gap >= -1e-10);
      CHECK(gap <= 0.5 * mu * 3 + 1e-10);

      const double gap1 = entrywise_l1(a) - smoothed_l1(a, mu).value;
      CHECK(gap1 >= -1e-10);
      CHECK(gap1 <= 0.5 * mu * 12 + 1e-10);
    }
  }
}

TEST_CASE("smoothed values are nonincreasing in the smoothing parameter") {
  const Eigen::MatrixXd a = seeded_matrix(4, 4, 55);
  double prev_nuc = smoothed_nuclear(a, 0.01).value;
  double prev_l1 = smoothed_l1(a, 0.01).value;
  for (double m : {0.05, 0.2, 1.0, 5.0}) {
    const double nuc = smoothed_nuclear(a, m).value;
    const double l1 = smoothed_l1(a, m).value;
    CHECK(nuc <= prev_nuc + 1e-12);
    CHECK(l1 <= prev_l1 + 1e-12);
    prev_nuc = nuc;
    prev_l1 = l1;
  }
}

TEST_CASE("convexity midpoint spot check") {
  const Eigen::MatrixXd a = seeded_matrix(4, 3, 61);
  const Eigen::MatrixXd b = seeded_matrix(4, 3, 62);
  const Eigen::MatrixXd mid = 0.5 * (a + b);
  CHECK(smoothed_nuclear(mid, 0.3).value <=
        0.5 * (smoothed_nuclear(a, 0.3).value + smoothed_nuclear(b, 0.3).value) + 1e-10);
  CHECK(smoothed_l1(mid, 0.3).value <=
        0.5 * (smoothed_l1(a, 0.3).value + smoothed_l1(b, 0.3).value) + 1e-10);
}
