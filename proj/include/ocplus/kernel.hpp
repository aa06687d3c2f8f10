#pragma once

#include "ocplus/core.hpp"

#include <cmath>
#include <string>
#include <string_view>

namespace ocplus {

enum class KernelKind { gaussian, linear };

// Gaussian kernel is exp(-|x - y|^2 / sigma_sq); sigma_sq is the stored width.
struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  double sigma_sq = 1.0;

  static KernelSpec gaussian(double sigma_sq) {
    detail::require(sigma_sq > 0.0 && std::isfinite(sigma_sq),
                    "gaussian kernel requires a positive finite sigma_sq");
    return {KernelKind::gaussian, sigma_sq};
  }
  static KernelSpec linear() { return {KernelKind::linear, 1.0}; }

  void validate() const {
    if (kind == KernelKind::gaussian) {
      detail::require(sigma_sq > 0.0 && std::isfinite(sigma_sq),
                      "gaussian kernel requires a positive finite sigma_sq");
    }
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline std::string_view to_string(KernelKind kind) {
  return kind == KernelKind::gaussian ? "gaussian" : "linear";
}

inline KernelKind kernel_kind_from_string(std::string_view name) {
  if (name == "gaussian") return KernelKind::gaussian;
  if (name == "linear") return KernelKind::linear;
  throw Error("unknown kernel kind '" + std::string(name) + "'");
}

template <typename A, typename B>
double eval_kernel(const KernelSpec& spec, const Eigen::MatrixBase<A>& x,
                   const Eigen::MatrixBase<B>& y) {
  detail::require_dims(x.size() == y.size(),
                       "kernel arguments differ in dimension");
  if (spec.kind == KernelKind::linear) {
    double dot = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) dot += x(k) * y(k);
    return dot;
  }
  double dist_sq = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double d = x(k) - y(k);
    dist_sq += d * d;
  }
  return std::exp(-dist_sq / spec.sigma_sq);
}

/// Symmetric Gram matrix of the rows of X. Each unordered pair is evaluated
/// once, so the result is exactly symmetric and a Gaussian diagonal is exactly 1.
inline Matrix gram(const KernelSpec& spec, const Matrix& X) {
  spec.validate();
  detail::require_dims(X.rows() >= 1, "gram matrix of an empty sample");
  const Eigen::Index l = X.rows();
  Matrix K(l, l);
  for (Eigen::Index j = 0; j < l; ++j) {
    K(j, j) = eval_kernel(spec, X.row(j), X.row(j));
    for (Eigen::Index i = j + 1; i < l; ++i) {
      const double v = eval_kernel(spec, X.row(i), X.row(j));
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

/// Entry (i, j) is k(X row i, Z row j).
inline Matrix cross_gram(const KernelSpec& spec, const Matrix& X,
                         const Matrix& Z) {
  spec.validate();
  detail::require_dims(X.cols() == Z.cols(),
                       "cross_gram operands differ in column count");
  Matrix out(X.rows(), Z.rows());
  for (Eigen::Index j = 0; j < Z.rows(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out(i, j) = eval_kernel(spec, X.row(i), Z.row(j));
  return out;
}

}  // namespace ocplus
