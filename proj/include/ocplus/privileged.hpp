#pragma once

// One-class models whose slacks are modelled in a privileged space,
//   xi_i = (w* . phi*(x*_i)) + b*,
// with w* regularized by gamma / 2 |w*|^2. Both duals run over z = [alpha; delta]:
//
//   OC-SVM+:  minimize 1/(2 nu l) a'Ka + 1/(2 gamma) (a - d)'K*(a - d)
//   SVDD+:    minimize 1/(nu l)   a'Ka - sum a_i K_ii + 1/(2 gamma) (a - d)'K*(a - d)
//   s.t. sum a = nu l, sum d = nu l, 0 <= d <= 1, a >= 0.
//
// Stationarity gives w = a / (nu l) in the kernel expansion (OC-SVM+), the
// center a / (nu l) (SVDD+), and w* = (a - d) / gamma. The decision functions
// use the scaled coefficients abar = a / (nu l) and never read privileged data.
//
// Offsets come from complementary slackness: for 0 < d_i < 1 both the slack
// model's nonnegativity multiplier and its instrumental variable's multiplier
// are positive, so xi_i = 0 there and b* = -(w* . phi*(x*_i)). Every a_i > 0
// makes the first constraint active, which yields rho (or R).

#include "ocplus/kernel.hpp"
#include "ocplus/oneclass.hpp"
#include "ocplus/qp.hpp"

#include <algorithm>
#include <concepts>
#include <string>
#include <vector>

namespace ocplus {

inline constexpr double kInteriorDeltaThreshold = 1e-6;
inline constexpr double kAlphaCap = 1e6;

struct PlusDiagnostics {
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  bool bstar_fallback = false;  // no strictly interior delta was available
  double bstar_spread = 0.0;
  double offset_spread = 0.0;   // spread of the per-index rho / R estimates
};

struct OcSvmPlusModel {
  Matrix support_vectors;
  Vector alphas_scaled;  // alpha / (nu l) for the support vectors
  Vector raw_alphas;     // all l dual variables
  Vector raw_deltas;
  double rho = 0.0;
  double b_star = 0.0;
  double nu = 0.5;
  double gamma = 1.0;
  KernelSpec kernel;
  KernelSpec kernel_star;
  Matrix privileged_vectors;  // training x*, for slack evaluation
  PlusDiagnostics diagnostics;
};

struct SvddPlusModel {
  Matrix support_vectors;
  Vector alphas_scaled;
  Vector raw_alphas;
  Vector raw_deltas;
  double radius_sq = 0.0;
  double center_norm_sq = 0.0;
  double b_star = 0.0;
  double nu = 0.5;
  double gamma = 1.0;
  KernelSpec kernel;
  KernelSpec kernel_star;
  Matrix privileged_vectors;
  PlusDiagnostics diagnostics;
};

struct BStarRho {
  double b_star = 0.0;
  double rho = 0.0;
  bool fallback = false;
  double b_star_spread = 0.0;
  double rho_spread = 0.0;
};

namespace detail {

inline void check_plus_inputs(const Matrix& X, const Matrix& Xs, double nu,
                              double gamma) {
  check_nu(nu);
  require(gamma > 0.0 && std::isfinite(gamma), "gamma must be positive and finite");
  require_dims(X.rows() == Xs.rows(),
               "feature and privileged matrices differ in row count");
  require(X.rows() >= 2, "training needs at least two patterns");
}

inline QpProblem plus_dual(const Matrix& K, const Matrix& Ks, double nu_l,
                           double gamma, double k_weight, const Vector& alpha_linear) {
  const Eigen::Index l = K.rows();
  QpProblem p;
  p.hessian.resize(2 * l, 2 * l);
  const Matrix Ksg = Ks / gamma;
  p.hessian.topLeftCorner(l, l) = (k_weight / nu_l) * K + Ksg;
  p.hessian.topRightCorner(l, l) = -Ksg;
  p.hessian.bottomLeftCorner(l, l) = -Ksg;
  p.hessian.bottomRightCorner(l, l) = Ksg;
  p.linear = Vector::Zero(2 * l);
  p.linear.head(l) = alpha_linear;
  Vector a = Vector::Zero(2 * l), d = Vector::Zero(2 * l);
  a.head(l).setOnes();
  d.tail(l).setOnes();
  p.equalities = {{a, nu_l}, {d, nu_l}};
  p.lower = Vector::Zero(2 * l);
  p.upper = Vector::Ones(2 * l);
  p.upper.head(l).setConstant(kAlphaCap);
  return p;
}

inline void check_cap(const Vector& alphas) {
  if (alphas.maxCoeff() >= kAlphaCap * (1.0 - 1e-12))
    throw Error("an alpha coefficient reached the implementation cap; the dual is "
                "badly conditioned");
}

// w* . phi*(x*_i) for every training index.
inline Vector privileged_projection(const Vector& alphas, const Vector& deltas,
                                    const Matrix& gram_star, double gamma) {
  return gram_star * (alphas - deltas) / gamma;
}

inline OffsetEstimate recover_bstar(const Vector& deltas, const Vector& proj) {
  std::vector<double> interior, positive;
  for (Eigen::Index i = 0; i < deltas.size(); ++i) {
    if (deltas(i) > kSupportThreshold) positive.push_back(-proj(i));
    if (deltas(i) > kInteriorDeltaThreshold && deltas(i) < 1.0 - kInteriorDeltaThreshold)
      interior.push_back(-proj(i));
  }
  if (!interior.empty()) return mean_of(interior, false);
  require(!positive.empty(), "no positive delta to recover b* from");
  OffsetEstimate e = mean_of(positive, true);
  std::sort(positive.begin(), positive.end());
  const std::size_t n = positive.size();
  e.value = n % 2 ? positive[n / 2] : 0.5 * (positive[n / 2 - 1] + positive[n / 2]);
  return e;
}

}  // namespace detail

/// b* from the strictly interior deltas, then rho averaged over every index
/// with a positive alpha.
inline BStarRho recover_bstar_rho(const Vector& raw_alphas, const Vector& raw_deltas,
                                  const Matrix& gram, const Matrix& gram_star,
                                  double nu, double gamma) {
  const double nu_l = nu * static_cast<double>(raw_alphas.size());
  const Vector proj = detail::privileged_projection(raw_alphas, raw_deltas, gram_star, gamma);
  const auto bstar = detail::recover_bstar(raw_deltas, proj);
  const Vector Ka = gram * raw_alphas / nu_l;
  std::vector<double> est;
  for (Eigen::Index i = 0; i < raw_alphas.size(); ++i)
    if (raw_alphas(i) > kSupportThreshold) est.push_back(Ka(i) + proj(i) + bstar.value);
  detail::require(!est.empty(), "no positive alpha to recover rho from");
  const auto rho = detail::mean_of(est, false);
  return {bstar.value, rho.value, bstar.fallback, bstar.spread, rho.spread};
}

inline OcSvmPlusModel train_ocsvm_plus(const Matrix& X, const Matrix& Xstar, double nu,
                                       double gamma, const KernelSpec& kernel,
                                       const KernelSpec& kernel_star,
                                       const QpSettings& settings = {}) {
  detail::check_plus_inputs(X, Xstar, nu, gamma);
  const Eigen::Index l = X.rows();
  const double nu_l = nu * static_cast<double>(l);
  const Matrix K = gram(kernel, X);
  const Matrix Ks = gram(kernel_star, Xstar);
  const auto p = detail::plus_dual(K, Ks, nu_l, gamma, 1.0, Vector::Zero(l));
  const auto sol = detail::solve_or_throw(p, settings, "one-class SVM+");

  OcSvmPlusModel m;
  m.raw_alphas = sol.z.head(l);
  m.raw_deltas = sol.z.tail(l);
  detail::check_cap(m.raw_alphas);
  const auto off = recover_bstar_rho(m.raw_alphas, m.raw_deltas, K, Ks, nu, gamma);
  std::tie(m.support_vectors, m.alphas_scaled) =
      detail::keep_support(X, m.raw_alphas, 1.0 / nu_l);
  m.rho = off.rho;
  m.b_star = off.b_star;
  m.nu = nu;
  m.gamma = gamma;
  m.kernel = kernel;
  m.kernel_star = kernel_star;
  m.privileged_vectors = Xstar;
  m.diagnostics = {sol.kkt_residual, sol.iterations, off.fallback, off.b_star_spread,
                   off.rho_spread};
  return m;
}

inline SvddPlusModel train_svdd_plus(const Matrix& X, const Matrix& Xstar, double nu,
                                     double gamma, const KernelSpec& kernel,
                                     const KernelSpec& kernel_star,
                                     const QpSettings& settings = {}) {
  detail::check_plus_inputs(X, Xstar, nu, gamma);
  const Eigen::Index l = X.rows();
  const double nu_l = nu * static_cast<double>(l);
  const Matrix K = gram(kernel, X);
  const Matrix Ks = gram(kernel_star, Xstar);
  const auto p = detail::plus_dual(K, Ks, nu_l, gamma, 2.0, -K.diagonal());
  const auto sol = detail::solve_or_throw(p, settings, "SVDD+");

  SvddPlusModel m;
  m.raw_alphas = sol.z.head(l);
  m.raw_deltas = sol.z.tail(l);
  detail::check_cap(m.raw_alphas);

  const Vector proj = detail::privileged_projection(m.raw_alphas, m.raw_deltas, Ks, gamma);
  const auto bstar = detail::recover_bstar(m.raw_deltas, proj);
  const Vector abar = m.raw_alphas / nu_l;
  const Vector Ka = K * abar;
  const double center_norm_sq = abar.dot(Ka);
  std::vector<double> est;
  for (Eigen::Index i = 0; i < l; ++i)
    if (m.raw_alphas(i) > kSupportThreshold)
      est.push_back(K(i, i) - 2.0 * Ka(i) + center_norm_sq - (proj(i) + bstar.value));
  detail::require(!est.empty(), "no positive alpha to recover R from");
  const auto radius = detail::mean_of(est, false);

  std::tie(m.support_vectors, m.alphas_scaled) =
      detail::keep_support(X, m.raw_alphas, 1.0 / nu_l);
  m.radius_sq = radius.value;
  m.center_norm_sq = center_norm_sq;
  m.b_star = bstar.value;
  m.nu = nu;
  m.gamma = gamma;
  m.kernel = kernel;
  m.kernel_star = kernel_star;
  m.privileged_vectors = Xstar;
  m.diagnostics = {sol.kkt_residual, sol.iterations, bstar.fallback, bstar.spread,
                   radius.spread};
  return m;
}

template <typename V>
double decision_ocsvm_plus(const OcSvmPlusModel& m, const Eigen::MatrixBase<V>& x) {
  return detail::kernel_expansion(m.kernel, m.support_vectors, m.alphas_scaled, x) - m.rho;
}

template <typename V>
double decision_svdd_plus(const SvddPlusModel& m, const Eigen::MatrixBase<V>& x) {
  const double cross =
      detail::kernel_expansion(m.kernel, m.support_vectors, m.alphas_scaled, x);
  return eval_kernel(m.kernel, x, x) - 2.0 * cross + m.center_norm_sq - m.radius_sq;
}

template <typename V>
double score(const OcSvmPlusModel& m, const Eigen::MatrixBase<V>& x) {
  return -decision_ocsvm_plus(m, x);
}

template <typename V>
double score(const SvddPlusModel& m, const Eigen::MatrixBase<V>& x) {
  return decision_svdd_plus(m, x);
}

/// Slack estimate (w* . phi*(x*)) + b* for a pattern with privileged
/// description x*.
template <typename Model, typename V>
  requires std::same_as<Model, OcSvmPlusModel> || std::same_as<Model, SvddPlusModel>
double privileged_slack(const Model& m, const Eigen::MatrixBase<V>& x_star) {
  detail::require_dims(x_star.size() == m.privileged_vectors.cols(),
                       "privileged pattern dimension differs from the model's");
  double s = 0.0;
  for (Eigen::Index j = 0; j < m.privileged_vectors.rows(); ++j) {
    const double c = m.raw_alphas(j) - m.raw_deltas(j);
    if (c != 0.0) s += c * eval_kernel(m.kernel_star, m.privileged_vectors.row(j), x_star);
  }
  return s / m.gamma + m.b_star;
}

}  // namespace ocplus
