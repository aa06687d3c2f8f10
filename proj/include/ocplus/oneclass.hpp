#pragma once

// Baseline one-class models.
//
// One-class SVM: minimize 0.5 a'Ka  s.t.  sum a = 1, 0 <= a_i <= 1/(nu l).
//   f(x) = sum_i a_i k(x_i, x) - rho, f > 0 on the normal side.
// SVDD:          minimize a'Ka - sum a_i k(x_i, x_i)  under the same constraints.
//   f(x) = k(x, x) - 2 sum_i a_i k(x, x_i) + |a|^2 - R, f > 0 outside the sphere.
//
// Both models also expose score(x), positive exactly when x is anomalous.

#include "ocplus/kernel.hpp"
#include "ocplus/qp.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace ocplus {

inline constexpr double kSupportThreshold = 1e-8;

struct TrainDiagnostics {
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  // True when no coefficient sat strictly inside its box and the offset was
  // averaged over every support vector instead.
  bool offset_fallback = false;
  // max - min of the per-index offset estimates that were averaged.
  double offset_spread = 0.0;
};

struct OcSvmModel {
  Matrix support_vectors;
  Vector alphas;
  double rho = 0.0;
  double nu = 0.5;
  KernelSpec kernel;
  TrainDiagnostics diagnostics;
};

struct SvddModel {
  Matrix support_vectors;
  Vector alphas;
  double radius_sq = 0.0;
  double center_norm_sq = 0.0;
  double nu = 0.5;
  KernelSpec kernel;
  TrainDiagnostics diagnostics;
};

struct OffsetEstimate {
  double value = 0.0;
  double spread = 0.0;
  bool fallback = false;
};

namespace detail {

inline void check_nu(double nu) {
  require(nu > 0.0 && nu < 1.0, "nu must lie in the open interval (0, 1)");
}

inline OffsetEstimate mean_of(const std::vector<double>& v, bool fallback) {
  OffsetEstimate e;
  e.fallback = fallback;
  if (v.empty()) return e;
  double s = 0.0;
  for (double x : v) s += x;
  e.value = s / static_cast<double>(v.size());
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  e.spread = *mx - *mn;
  return e;
}

// Indices strictly inside (eps, upper - eps); all indices above eps when
// there are none.
inline std::pair<std::vector<Eigen::Index>, bool> margin_indices(
    const Vector& alphas, double upper) {
  std::vector<Eigen::Index> margin, support;
  for (Eigen::Index i = 0; i < alphas.size(); ++i) {
    if (alphas(i) <= kSupportThreshold) continue;
    support.push_back(i);
    if (alphas(i) < upper - kSupportThreshold) margin.push_back(i);
  }
  if (!margin.empty()) return {margin, false};
  return {support, true};
}

inline QpProblem simplex_box_dual(const Matrix& H, const Vector& c, double upper) {
  const Eigen::Index l = c.size();
  QpProblem p;
  p.hessian = H;
  p.linear = c;
  p.equalities.push_back({Vector::Ones(l), 1.0});
  p.lower = Vector::Zero(l);
  p.upper = Vector::Constant(l, upper);
  return p;
}

inline QpSolution solve_or_throw(const QpProblem& p, const QpSettings& s,
                                 const char* what) {
  auto sol = solve_qp(p, s);
  if (!sol.converged)
    throw ConvergenceError(std::string(what) + " dual did not converge (KKT residual " +
                               std::to_string(sol.kkt_residual) + ")",
                           sol.kkt_residual);
  return sol;
}

inline std::pair<Matrix, Vector> keep_support(const Matrix& X, const Vector& a,
                                              double scale = 1.0) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a(i) > kSupportThreshold) idx.push_back(i);
  Matrix sv(static_cast<Eigen::Index>(idx.size()), X.cols());
  Vector coef(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    sv.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
    coef(static_cast<Eigen::Index>(k)) = a(idx[k]) * scale;
  }
  return {sv, coef};
}

template <typename V>
double kernel_expansion(const KernelSpec& k, const Matrix& sv, const Vector& coef,
                        const Eigen::MatrixBase<V>& x) {
  require_dims(x.size() == sv.cols(),
               "pattern dimension differs from the model's feature dimension");
  double s = 0.0;
  for (Eigen::Index i = 0; i < sv.rows(); ++i)
    s += coef(i) * eval_kernel(k, sv.row(i), x);
  return s;
}

}  // namespace detail

/// Offset of a trained one-class SVM: the mean of (K alpha)_i over margin
/// support vectors, falling back to every support vector when none is margin.
inline OffsetEstimate recover_rho(const Vector& alphas, const Matrix& gram,
                                  double upper) {
  const auto [idx, fallback] = detail::margin_indices(alphas, upper);
  detail::require(!idx.empty(), "no support vectors to recover rho from");
  const Vector Ka = gram * alphas;
  std::vector<double> est;
  for (Eigen::Index i : idx) est.push_back(Ka(i));
  return detail::mean_of(est, fallback);
}

inline OcSvmModel train_ocsvm(const Matrix& X, double nu, const KernelSpec& kernel,
                              const QpSettings& settings = {}) {
  detail::check_nu(nu);
  detail::require(X.rows() >= 2, "training needs at least two patterns");
  const Eigen::Index l = X.rows();
  const double upper = 1.0 / (nu * static_cast<double>(l));
  const Matrix K = gram(kernel, X);
  const auto p = detail::simplex_box_dual(K, Vector::Zero(l), upper);
  const auto sol = detail::solve_or_throw(p, settings, "one-class SVM");

  const auto rho = recover_rho(sol.z, K, upper);
  OcSvmModel m;
  std::tie(m.support_vectors, m.alphas) = detail::keep_support(X, sol.z);
  m.rho = rho.value;
  m.nu = nu;
  m.kernel = kernel;
  m.diagnostics = {sol.kkt_residual, sol.iterations, rho.fallback, rho.spread};
  return m;
}

template <typename V>
double decision_ocsvm(const OcSvmModel& m, const Eigen::MatrixBase<V>& x) {
  return detail::kernel_expansion(m.kernel, m.support_vectors, m.alphas, x) - m.rho;
}

inline SvddModel train_svdd(const Matrix& X, double nu, const KernelSpec& kernel,
                            const QpSettings& settings = {}) {
  detail::check_nu(nu);
  detail::require(X.rows() >= 2, "training needs at least two patterns");
  const Eigen::Index l = X.rows();
  const double upper = 1.0 / (nu * static_cast<double>(l));
  const Matrix K = gram(kernel, X);
  const auto p = detail::simplex_box_dual(2.0 * K, -K.diagonal(), upper);
  const auto sol = detail::solve_or_throw(p, settings, "SVDD");

  const Vector Ka = K * sol.z;
  const double center_norm_sq = sol.z.dot(Ka);
  const auto [idx, fallback] = detail::margin_indices(sol.z, upper);
  std::vector<double> est;
  for (Eigen::Index j : idx) est.push_back(K(j, j) - 2.0 * Ka(j) + center_norm_sq);
  const auto radius = detail::mean_of(est, fallback);

  SvddModel m;
  std::tie(m.support_vectors, m.alphas) = detail::keep_support(X, sol.z);
  m.radius_sq = radius.value;
  m.center_norm_sq = center_norm_sq;
  m.nu = nu;
  m.kernel = kernel;
  m.diagnostics = {sol.kkt_residual, sol.iterations, radius.fallback, radius.spread};
  return m;
}

template <typename V>
double decision_svdd(const SvddModel& m, const Eigen::MatrixBase<V>& x) {
  const double cross = detail::kernel_expansion(m.kernel, m.support_vectors, m.alphas, x);
  return eval_kernel(m.kernel, x, x) - 2.0 * cross + m.center_norm_sq - m.radius_sq;
}

template <typename V>
double score(const OcSvmModel& m, const Eigen::MatrixBase<V>& x) {
  return -decision_ocsvm(m, x);
}

template <typename V>
double score(const SvddModel& m, const Eigen::MatrixBase<V>& x) {
  return decision_svdd(m, x);
}

/// Anomaly scores of every row of X.
template <typename Model>
Vector scores(const Model& m, const Matrix& X) {
  Vector out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = score(m, X.row(i));
  return out;
}

}  // namespace ocplus
