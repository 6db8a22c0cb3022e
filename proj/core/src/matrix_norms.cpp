#include "smrec/matrix_norms.hpp"

#include <stdexcept>

namespace smrec {

namespace {
void require_finite(const Eigen::MatrixXd& a, const char* who) {
  if (!a.allFinite()) {
    throw std::invalid_argument(std::string(who) + ": matrix has NaN/Inf entries");
  }
}
}  // namespace

double nuclear_norm(const Eigen::MatrixXd& a) {
  require_finite(a, "nuclear_norm");
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues().sum();
}

double entrywise_l1(const Eigen::MatrixXd& a) {
  require_finite(a, "entrywise_l1");
  return a.cwiseAbs().sum();
}

double frobenius_norm(const Eigen::MatrixXd& a) {
  require_finite(a, "frobenius_norm");
  return a.norm();
}

double frobenius_inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("frobenius_inner: shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
  require_finite(a, "frobenius_inner");
  require_finite(b, "frobenius_inner");
  return a.cwiseProduct(b).sum();
}

int effective_rank(const Eigen::MatrixXd& a, double fraction) {
  require_finite(a, "effective_rank");
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  const double top = sv(0);
  if (top <= 0.0) return 0;
  const double cut = fraction * top;
  int count = 0;
  for (Eigen::Index j = 0; j < sv.size(); ++j) {
    if (sv(j) > cut) ++count;
  }
  return count;
}

}  // namespace smrec
