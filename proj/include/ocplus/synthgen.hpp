#pragma once

// Synthetic one-class benchmarks with privileged coordinates:
//   gauss-mixture  x ~ N((2,2), I) or N((-2,-2), I) with equal odds,
//                  x* = x minus the nearest of the two means
//   circles        two concentric rings, radius N(5, 0.5) or N(0.5, 0.5)
//                  truncated at 0, angle U[0, 2pi); x* = (r, phi)
//   arc            phi ~ N(0, 0.04), tau = eta (0.1 - |phi|),
//                  eta ~ N(-1/2, 1), radius 10 - tau; x* = (10 - tau, phi)
// Normal-distribution parameters are (mean, variance).

#include "ocplus/dataset.hpp"
#include "ocplus/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

namespace ocplus {

enum class SyntheticKind { gauss_mixture, circles, arc };

inline std::string_view to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::gauss_mixture: return "gauss-mixture";
    case SyntheticKind::circles: return "circles";
    case SyntheticKind::arc: return "arc";
  }
  return "?";
}

inline SyntheticKind synthetic_kind_from_string(std::string_view s) {
  if (s == "gauss-mixture") return SyntheticKind::gauss_mixture;
  if (s == "circles") return SyntheticKind::circles;
  if (s == "arc") return SyntheticKind::arc;
  throw Error("unknown dataset kind '" + std::string(s) +
              "' (expected gauss-mixture, circles or arc)");
}

namespace detail {

inline Dataset polar_dataset(Eigen::Index l, std::uint64_t seed) {
  Dataset ds;
  ds.seed = seed;
  ds.features.resize(l, 2);
  ds.privileged = Matrix(l, 2);
  ds.labels = std::vector<int>(static_cast<std::size_t>(l), kNormal);
  return ds;
}

inline void set_polar(Dataset& ds, Eigen::Index i, double r, double phi) {
  ds.features(i, 0) = r * std::cos(phi);
  ds.features(i, 1) = r * std::sin(phi);
  (*ds.privileged)(i, 0) = r;
  (*ds.privileged)(i, 1) = phi;
}

}  // namespace detail

inline Dataset gen_gauss_mixture(Eigen::Index l, std::uint64_t seed) {
  detail::require(l >= 1, "gauss-mixture needs at least one point");
  Rng rng(seed, "gauss-mixture");
  Dataset ds;
  ds.seed = seed;
  ds.features.resize(l, 2);
  ds.privileged = Matrix(l, 2);
  ds.labels = std::vector<int>(static_cast<std::size_t>(l), kNormal);
  for (Eigen::Index i = 0; i < l; ++i) {
    const double c = rng.bernoulli(0.5) ? 2.0 : -2.0;
    const double x0 = c + rng.normal();
    const double x1 = c + rng.normal();
    ds.features(i, 0) = x0;
    ds.features(i, 1) = x1;
    const double d1 = (x0 - 2.0) * (x0 - 2.0) + (x1 - 2.0) * (x1 - 2.0);
    const double d2 = (x0 + 2.0) * (x0 + 2.0) + (x1 + 2.0) * (x1 + 2.0);
    const double nearest = d1 <= d2 ? 2.0 : -2.0;
    (*ds.privileged)(i, 0) = x0 - nearest;
    (*ds.privileged)(i, 1) = x1 - nearest;
  }
  return ds;
}

inline Dataset gen_circles(Eigen::Index l, std::uint64_t seed) {
  detail::require(l >= 2, "circles needs at least two points");
  Rng rng(seed, "circles");
  Dataset ds = detail::polar_dataset(l, seed);
  for (Eigen::Index i = 0; i < l; ++i) {
    const double r0 = rng.bernoulli(0.5) ? 5.0 : 0.5;
    const double eta = rng.normal(r0, 0.5);
    const double r = eta > 0.0 ? eta : 0.0;
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    detail::set_polar(ds, i, r, phi);
  }
  return ds;
}

inline Dataset gen_arc(Eigen::Index l, std::uint64_t seed) {
  detail::require(l >= 1, "arc needs at least one point");
  Rng rng(seed, "arc");
  Dataset ds = detail::polar_dataset(l, seed);
  for (Eigen::Index i = 0; i < l; ++i) {
    const double phi = rng.normal(0.0, 0.04);
    const double eta = rng.normal(-0.5, 1.0);
    const double tau = eta * (0.1 - std::abs(phi));
    detail::set_polar(ds, i, 10.0 - tau, phi);
  }
  return ds;
}

inline Dataset generate(SyntheticKind kind, Eigen::Index l, std::uint64_t seed) {
  switch (kind) {
    case SyntheticKind::gauss_mixture: return gen_gauss_mixture(l, seed);
    case SyntheticKind::circles: return gen_circles(l, seed);
    case SyntheticKind::arc: return gen_arc(l, seed);
  }
  throw Error("unknown dataset kind");
}

/// Number of noise rows that makes `fraction` of the augmented sample noise.
inline Eigen::Index noise_count(Eigen::Index l, double fraction) {
  const double raw = fraction * static_cast<double>(l) / (1.0 - fraction);
  // Guard ceil against representation error in e.g. 0.1 * 900 / 0.9.
  return static_cast<Eigen::Index>(std::ceil(raw - 1e-9));
}

/// Per-coordinate box [min - range/2, max + range/2] of the rows of M.
inline std::pair<Vector, Vector> expanded_box(const Matrix& M) {
  const Vector lo = M.colwise().minCoeff();
  const Vector hi = M.colwise().maxCoeff();
  const Vector half = 0.5 * (hi - lo);
  return {lo - half, hi + half};
}

/// n x n grid of 2-D points spanning the expanded box of the rows of M.
inline Matrix evaluation_grid(const Matrix& M, Eigen::Index n = 50) {
  detail::require_dims(M.cols() == 2, "evaluation grids are two-dimensional");
  detail::require(n >= 2 && M.rows() >= 1, "grid needs n >= 2 and data");
  const auto [lo, hi] = expanded_box(M);
  Matrix G(n * n, 2);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      const double s = static_cast<double>(a) / static_cast<double>(n - 1);
      const double t = static_cast<double>(b) / static_cast<double>(n - 1);
      G(a * n + b, 0) = lo(0) + s * (hi(0) - lo(0));
      G(a * n + b, 1) = lo(1) + t * (hi(1) - lo(1));
    }
  return G;
}

/// Appends uniform outliers (label -1) drawn from the expanded bounding box of
/// the features, and of the privileged coordinates when present, then shuffles
/// all rows. Original rows are carried over unchanged.
inline Dataset add_uniform_noise(const Dataset& ds, double fraction,
                                 std::uint64_t seed) {
  detail::require(fraction > 0.0 && fraction < 1.0,
                  "noise fraction must lie in (0, 1)");
  ds.validate();
  detail::require(ds.size() >= 1, "cannot add noise to an empty dataset");
  if (ds.labels)
    for (int y : *ds.labels)
      detail::require(y == kNormal, "noise is injected into all-normal data only");

  const Eigen::Index l = ds.size();
  const Eigen::Index extra = noise_count(l, fraction);
  const Eigen::Index total = l + extra;
  Rng rng(seed, "uniform-noise");

  Dataset out;
  out.seed = ds.seed;
  out.features.resize(total, ds.features.cols());
  out.features.topRows(l) = ds.features;
  if (ds.privileged) {
    out.privileged = Matrix(total, ds.privileged->cols());
    out.privileged->topRows(l) = *ds.privileged;
  }
  out.labels = std::vector<int>(static_cast<std::size_t>(total), kNormal);

  const auto [flo, fhi] = expanded_box(ds.features);
  std::pair<Vector, Vector> pbox;
  if (ds.privileged) pbox = expanded_box(*ds.privileged);
  for (Eigen::Index i = l; i < total; ++i) {
    for (Eigen::Index k = 0; k < out.features.cols(); ++k)
      out.features(i, k) = rng.uniform(flo(k), fhi(k));
    if (ds.privileged)
      for (Eigen::Index k = 0; k < out.privileged->cols(); ++k)
        (*out.privileged)(i, k) = rng.uniform(pbox.first(k), pbox.second(k));
    (*out.labels)[static_cast<std::size_t>(i)] = kAnomaly;
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  for (Eigen::Index i = 0; i < total; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  return out.subset(order);
}

}  // namespace ocplus
