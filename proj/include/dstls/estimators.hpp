#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dstls/battery.hpp"

namespace dstls {

inline Eigen::Vector3d to_vector(const ArxTheta& t) { return {t.theta1, t.theta2, t.theta3}; }
inline ArxTheta to_theta(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

// ---------------------------------------------------------------------------
// Recursive least squares with exponential forgetting

struct RlsState {
  Eigen::Vector3d theta_hat = Eigen::Vector3d::Zero();
  Eigen::Matrix3d p = Eigen::Matrix3d::Identity();

  static RlsState initial(const ArxTheta& theta0, const Eigen::Vector3d& p0_diag) {
    if ((p0_diag.array() <= 0.0).any()) throw std::invalid_argument("RLS: P0 diagonal must be positive");
    return {to_vector(theta0), p0_diag.asDiagonal()};
  }
};

inline RlsState rls_step(const RlsState& state, double vbar_k, const Eigen::Vector3d& phi_k, double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("RLS: forgetting factor must be in (0, 1]");
  const Eigen::Vector3d p_phi = state.p * phi_k;
  const Eigen::Vector3d gain = p_phi / (lambda + phi_k.dot(p_phi));
  RlsState next;
  next.theta_hat = state.theta_hat + gain * (vbar_k - state.theta_hat.dot(phi_k));
  const Eigen::Matrix3d p = (Eigen::Matrix3d::Identity() - gain * phi_k.transpose()) * state.p / lambda;
  next.p = 0.5 * (p + p.transpose());
  return next;
}

// ---------------------------------------------------------------------------
// Regression system for a segment of L samples, newest row first:
//   y(r)    = vbar[L-1-r]
//   x(r, :) = [vbar[L-2-r], I[L-1-r], I[L-2-r]]      r = 0 .. L-2

struct Regression {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
};

inline constexpr std::size_t kMinSegmentLength = 5;

inline Regression build_regression(std::span<const double> vbar, std::span<const double> current) {
  if (vbar.size() != current.size()) throw std::invalid_argument("regression: length mismatch");
  const std::size_t len = vbar.size();
  if (len < kMinSegmentLength)
    throw std::invalid_argument("regression: segment too short (" + std::to_string(len) + " < " +
                                std::to_string(kMinSegmentLength) + ")");
  const auto rows = static_cast<Eigen::Index>(len - 1);
  Regression reg{Eigen::VectorXd(rows), Eigen::MatrixXd(rows, 3)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::size_t k = len - 1 - static_cast<std::size_t>(r);
    reg.y(r) = vbar[k];
    reg.x(r, 0) = vbar[k - 1];
    reg.x(r, 1) = current[k];
    reg.x(r, 2) = current[k - 1];
  }
  return reg;
}

// ---------------------------------------------------------------------------
// Thin SVD by one-sided (Hestenes) Jacobi: h = u * diag(sigma) * v^T with
// u m x n, v n x n, sigma descending.

struct SvdResult {
  Eigen::MatrixXd u;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd v;
};

inline SvdResult svd(const Eigen::MatrixXd& h) {
  const Eigen::Index m = h.rows();
  const Eigen::Index n = h.cols();
  if (n < 1 || m < n) throw std::invalid_argument("svd: need rows >= cols >= 1");
  if (!h.allFinite()) throw std::invalid_argument("svd: non-finite input");

  Eigen::MatrixXd a = h;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(m);

  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < m; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Eigen::VectorXd norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms(j) = a.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return norms(i) > norms(j); });

  SvdResult out{Eigen::MatrixXd::Zero(m, n), Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  std::vector<Eigen::Index> to_complete;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.sigma(j) = norms(src);
    out.v.col(j) = v.col(src);
    if (norms(src) > std::numeric_limits<double>::min())
      out.u.col(j) = a.col(src) / norms(src);
    else
      to_complete.push_back(j);
  }
  // Zero singular values: extend u with unit vectors orthogonal to the others.
  Eigen::Index basis = 0;
  for (Eigen::Index j : to_complete) {
    for (; basis < m; ++basis) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(m, basis);
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index k = 0; k < n; ++k)
          if (k != j) e -= out.u.col(k).dot(e) * out.u.col(k);
      const double norm = e.norm();
      if (norm > 1e-8) {
        out.u.col(j) = e / norm;
        ++basis;
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Total least squares on [X y]

class UninformativeSegment : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMinVqq = 1e-12;
inline constexpr double kSingularGap = 1e-9;

inline ArxTheta tls_solve(const Regression& reg) {
  const Eigen::Index rows = reg.x.rows();
  if (reg.x.cols() != 3 || reg.y.size() != rows) throw std::invalid_argument("tls: malformed regression");
  if (rows < 4) throw std::invalid_argument("tls: need at least 4 rows");
  Eigen::MatrixXd h(rows, 4);
  h << reg.x, reg.y;
  const SvdResult s = svd(h);
  if (s.sigma(2) - s.sigma(3) <= kSingularGap * s.sigma(0))
    throw UninformativeSegment("uninformative segment: smallest singular value not unique");
  const Eigen::Vector4d v_min = s.v.col(3);
  if (std::abs(v_min(3)) < kMinVqq) throw UninformativeSegment("uninformative segment: v_qq vanishes");
  return to_theta(-v_min.head<3>() / v_min(3));
}

}  // namespace dstls
