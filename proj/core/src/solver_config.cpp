#include "smrec/solver_config.hpp"

#include <cmath>
#include <stdexcept>

namespace smrec {

void SolverConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("SolverConfig: ") + name + " must be finite and >= 0");
    }
  };
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("SolverConfig: ") + name + " must be finite and > 0");
    }
  };
  nonneg(lambda_u, "lambda_u");
  nonneg(lambda_p, "lambda_p");
  nonneg(lambda_q, "lambda_q");
  positive(mu_u, "mu_u");
  positive(mu_p, "mu_p");
  positive(mu_q, "mu_q");
  positive(nu_u, "nu_u");
  positive(nu_p, "nu_p");
  positive(nu_q, "nu_q");
  positive(L, "L");
  nonneg(delta_u, "delta_u");
  nonneg(delta_p, "delta_p");
  nonneg(delta_q, "delta_q");
  nonneg(early_stop_tol, "early_stop_tol");
  positive(inner_tol, "inner_tol");
  if (max_outer_iters < 0) throw std::invalid_argument("SolverConfig: max_outer_iters must be >= 0");
  if (max_inner_iters <= 0) throw std::invalid_argument("SolverConfig: max_inner_iters must be > 0");
  double sum = 0.0;
  for (double w : omega) {
    nonneg(w, "omega");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("SolverConfig: omega must sum to 1");
  }
}

}  // namespace smrec
