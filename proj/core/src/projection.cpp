#include "smrec/projection.hpp"

#include <cmath>

namespace smrec {

bool same_shape(const MatrixTriple& a, const MatrixTriple& b) {
  return a.u.rows() == b.u.rows() && a.u.cols() == b.u.cols() && a.p.rows() == b.p.rows() &&
         a.p.cols() == b.p.cols() && a.q.rows() == b.q.rows() && a.q.cols() == b.q.cols();
}

MatrixTriple zeros_like(const MatrixTriple& a) {
  return MatrixTriple{Eigen::MatrixXd::Zero(a.u.rows(), a.u.cols()),
                      Eigen::MatrixXd::Zero(a.p.rows(), a.p.cols()),
                      Eigen::MatrixXd::Zero(a.q.rows(), a.q.cols())};
}

double triple_distance(const MatrixTriple& a, const MatrixTriple& b) {
  return std::sqrt((a.u - b.u).squaredNorm() + (a.p - b.p).squaredNorm() +
                   (a.q - b.q).squaredNorm());
}

FeasibleSetSpec::FeasibleSetSpec(MatrixTriple raw, double radius_u, double radius_p,
                                 double radius_q, std::optional<LinearCoupling> coupling)
    : raw_(std::move(raw)),
      radius_u_(radius_u),
      radius_p_(radius_p),
      radius_q_(radius_q),
      coupling_(std::move(coupling)) {
  if (radius_u_ < 0.0 || radius_p_ < 0.0 || radius_q_ < 0.0) {
    throw std::invalid_argument("FeasibleSetSpec: radii must be >= 0");
  }
  const Eigen::Index m = raw_.u.rows();
  const Eigen::Index n = raw_.u.cols();
  if (raw_.p.rows() != m || raw_.p.cols() != n || raw_.q.rows() != m || raw_.q.cols() != n) {
    throw std::invalid_argument("FeasibleSetSpec: raw matrices must share one shape");
  }
  if (coupling_) {
    const auto& c = *coupling_;
    if (c.resistance.rows() != n || c.resistance.cols() != n || c.reactance.rows() != n ||
        c.reactance.cols() != n) {
      throw std::invalid_argument("FeasibleSetSpec: coupling matrices must be NxN");
    }
    // normal equations of the coupled least-squares projection
    Eigen::MatrixXd k = Eigen::MatrixXd::Identity(2 * n, 2 * n);
    k.topLeftCorner(n, n) += c.resistance.transpose() * c.resistance;
    k.topRightCorner(n, n) = c.resistance.transpose() * c.reactance;
    k.bottomLeftCorner(n, n) = c.reactance.transpose() * c.resistance;
    k.bottomRightCorner(n, n) += c.reactance.transpose() * c.reactance;
    coupling_llt_.compute(k);
    if (coupling_llt_.info() != Eigen::Success) {
      throw std::invalid_argument("FeasibleSetSpec: coupling normal equations not SPD");
    }
  }
}

void FeasibleSetSpec::project_coupling(Eigen::MatrixXd& mu, Eigen::MatrixXd& mp,
                                       Eigen::MatrixXd& mq) const {
  if (!coupling_) return;
  const auto& c = *coupling_;
  const Eigen::Index n = mu.cols();
  const Eigen::MatrixXd b = (mu.array() - c.u0).matrix();  // target minus offset

  Eigen::MatrixXd rhs(2 * n, mu.rows());
  rhs.topRows(n) = mp.transpose() + c.resistance.transpose() * b.transpose();
  rhs.bottomRows(n) = mq.transpose() + c.reactance.transpose() * b.transpose();
  const Eigen::MatrixXd sol = coupling_llt_.solve(rhs);
  mp = sol.topRows(n).transpose();
  mq = sol.bottomRows(n).transpose();
  mu = (mp * c.resistance.transpose() + mq * c.reactance.transpose()).array() + c.u0;
}

double FeasibleSetSpec::max_constraint_violation(const MatrixTriple& refined,
                                                 const MatrixTriple& sparse) const {
  double v = 0.0;
  v = std::max(v, (raw_.u - refined.u - sparse.u).norm() - radius_u_);
  v = std::max(v, (raw_.p - refined.p - sparse.p).norm() - radius_p_);
  v = std::max(v, (raw_.q - refined.q - sparse.q).norm() - radius_q_);
  if (coupling_) {
    const auto& c = *coupling_;
    const Eigen::MatrixXd defect =
        refined.u - ((refined.p * c.resistance.transpose() +
                      refined.q * c.reactance.transpose()).array() + c.u0).matrix();
    v = std::max(v, defect.norm());
  }
  return std::max(v, 0.0);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> project_ball_pair(const Eigen::MatrixXd& m_center,
                                                              const Eigen::MatrixXd& s_center,
                                                              const Eigen::MatrixXd& m_raw,
                                                              double eps) {
  if (eps < 0.0) throw std::invalid_argument("project_ball_pair: eps must be >= 0");
  const Eigen::MatrixXd d = m_raw - m_center - s_center;
  const double dn = d.norm();
  if (dn <= eps) return {m_center, s_center};
  const double shift = (dn - eps) / (2.0 * dn);
  return {m_center + shift * d, s_center + shift * d};
}

ProxSolution solve_prox(const ProxSubproblem& sub, const FeasibleSetSpec& feas, double tol,
                        int max_iter) {
  if (!(sub.proximity_weight > 0.0)) {
    throw std::invalid_argument("solve_prox: proximity weight must be positive");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("solve_prox: tol must be positive");
  if (!same_shape(sub.grad_refined, sub.center_refined) ||
      !same_shape(sub.grad_sparse, sub.center_sparse) ||
      !same_shape(sub.center_refined, feas.raw())) {
    throw std::invalid_argument("solve_prox: subproblem shapes do not conform");
  }

  const double invl = 1.0 / sub.proximity_weight;
  // prox point: the subproblem is the projection of center - grad/L
  MatrixTriple m{sub.center_refined.u - invl * sub.grad_refined.u,
                 sub.center_refined.p - invl * sub.grad_refined.p,
                 sub.center_refined.q - invl * sub.grad_refined.q};
  MatrixTriple s{sub.center_sparse.u - invl * sub.grad_sparse.u,
                 sub.center_sparse.p - invl * sub.grad_sparse.p,
                 sub.center_sparse.q - invl * sub.grad_sparse.q};

  // Dykstra corrections, one pair per ball plus one triple for the coupling
  MatrixTriple ball_em = zeros_like(m), ball_es = zeros_like(s);
  MatrixTriple couple_e = zeros_like(m);

  auto project_ball = [&feas](Eigen::MatrixXd& mb, Eigen::MatrixXd& sb, Eigen::MatrixXd& em,
                              Eigen::MatrixXd& es, const Eigen::MatrixXd& raw, double eps) {
    const Eigen::MatrixXd ym = mb + em;
    const Eigen::MatrixXd ys = sb + es;
    auto proj = project_ball_pair(ym, ys, raw, eps);
    mb = std::move(proj.first);
    sb = std::move(proj.second);
    em = ym - mb;
    es = ys - sb;
  };

  ProxSolution out;
  MatrixTriple prev_m = m, prev_s = s;
  for (int sweep = 1; sweep <= max_iter; ++sweep) {
    project_ball(m.u, s.u, ball_em.u, ball_es.u, feas.raw().u, feas.radius_u());
    project_ball(m.p, s.p, ball_em.p, ball_es.p, feas.raw().p, feas.radius_p());
    project_ball(m.q, s.q, ball_em.q, ball_es.q, feas.raw().q, feas.radius_q());

    if (feas.has_coupling()) {
      Eigen::MatrixXd yu = m.u + couple_e.u;
      Eigen::MatrixXd yp = m.p + couple_e.p;
      Eigen::MatrixXd yq = m.q + couple_e.q;
      m.u = yu;
      m.p = yp;
      m.q = yq;
      feas.project_coupling(m.u, m.p, m.q);
      couple_e.u = yu - m.u;
      couple_e.p = yp - m.p;
      couple_e.q = yq - m.q;
    }

    const double disp = std::sqrt(std::pow(triple_distance(m, prev_m), 2) +
                                  std::pow(triple_distance(s, prev_s), 2));
    out.sweeps = sweep;
    out.gap = disp;
    if (disp < tol) {
      out.refined = std::move(m);
      out.sparse = std::move(s);
      return out;
    }
    prev_m = m;
    prev_s = s;
  }

  out.refined = std::move(m);
  out.sparse = std::move(s);
  throw ProxConvergenceError("solve_prox: Dykstra did not converge in " +
                                 std::to_string(max_iter) + " sweeps (gap " +
                                 std::to_string(out.gap) + ")",
                             std::move(out));
}

}  // namespace smrec
