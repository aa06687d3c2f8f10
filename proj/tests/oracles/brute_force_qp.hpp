#pragma once

// Test-only oracle for small QPs. It never looks at gradients or KKT
// conditions: it enumerates a grid over the feasible set (coarse-to-fine
// windows down to the requested resolution) and then runs a derivative-free
// pattern search along the feasible edge directions e_i - e_j (inside an
// equality row) and +-e_i (rowless variables). Those directions generate every
// tangent cone of a box intersected with sum constraints, so the pattern
// search cannot stall at a non-optimal vertex of a convex problem.

#include "ocplus/qp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace ocplus::oracle {

inline QpSolution brute_force_qp(const QpProblem& p, double resolution) {
  const Eigen::Index d = p.dim();
  if (d > 6) throw Error("brute_force_qp supports at most 6 variables");
  if (!(resolution > 0.0)) throw Error("resolution must be positive");

  // Group variables; the last member of each row is the dependent one.
  std::vector<int> group(static_cast<std::size_t>(d), -1);
  std::vector<std::vector<Eigen::Index>> rows(p.equalities.size());
  for (std::size_t r = 0; r < p.equalities.size(); ++r)
    for (Eigen::Index i = 0; i < d; ++i)
      if (p.equalities[r].coeffs(i) != 0.0) {
        if (group[i] >= 0) throw Error("overlapping equality rows");
        group[i] = static_cast<int>(r);
        rows[r].push_back(i);
      }

  // Finite search bounds, tightened by the row sums.
  Vector lo = p.lower, hi = p.upper;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = p.equalities[r];
    if (rows[r].empty()) {
      if (row.rhs != 0.0) throw InfeasibleError("empty equality row");
      continue;
    }
    for (Eigen::Index i : rows[r])
      if (row.coeffs(i) != 1.0)
        throw Error("brute_force_qp expects unit equality coefficients");
    double lo_sum = 0.0, hi_sum = 0.0;
    for (Eigen::Index i : rows[r]) {
      lo_sum += lo(i);
      hi_sum += hi(i);
    }
    if (lo_sum > row.rhs + 1e-12 || hi_sum < row.rhs - 1e-12)
      throw InfeasibleError("equality row cannot be met within the box");
    for (Eigen::Index i : rows[r]) {
      const double others_lo = lo_sum - lo(i);
      hi(i) = std::min(hi(i), row.rhs - others_lo);
    }
  }
  for (Eigen::Index i = 0; i < d; ++i)
    if (!std::isfinite(lo(i)) || !std::isfinite(hi(i)))
      throw Error("brute_force_qp needs a bounded feasible set");

  std::vector<Eigen::Index> free_vars;
  for (Eigen::Index i = 0; i < d; ++i) {
    const int g = group[i];
    if (g < 0 || rows[static_cast<std::size_t>(g)].back() != i)
      free_vars.push_back(i);
  }

  auto complete = [&](Vector& z) -> bool {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].empty()) continue;
      double s = 0.0;
      for (std::size_t k = 0; k + 1 < rows[r].size(); ++k) s += z(rows[r][k]);
      const Eigen::Index last = rows[r].back();
      z(last) = p.equalities[r].rhs - s;
      if (z(last) < lo(last) - 1e-12 || z(last) > hi(last) + 1e-12)
        return false;
      z(last) = std::clamp(z(last), lo(last), hi(last));
    }
    return true;
  };

  Vector best_z;
  double best_f = kInf;
  auto consider = [&](Vector& z) {
    if (!complete(z)) return;
    const double f = p.objective(z);
    if (f < best_f) {
      best_f = f;
      best_z = z;
    }
  };

  // Coarse-to-fine enumeration: each level scans a window of `half` steps on
  // either side of the incumbent for every free coordinate.
  const std::size_t nf = free_vars.size();
  const int half = nf <= 2 ? 60 : (nf <= 3 ? 12 : (nf <= 4 ? 6 : 3));
  double step = 0.0;
  for (Eigen::Index i : free_vars) step = std::max(step, hi(i) - lo(i));
  step /= static_cast<double>(2 * half);

  Vector center(d);
  for (Eigen::Index i = 0; i < d; ++i) center(i) = 0.5 * (lo(i) + hi(i));
  if (nf == 0) {
    Vector z = center;
    consider(z);
  }
  while (nf > 0) {
    Vector z = center;
    std::function<void(std::size_t)> scan = [&](std::size_t k) {
      if (k == nf) {
        consider(z);
        return;
      }
      const Eigen::Index i = free_vars[k];
      for (int s = -half; s <= half; ++s) {
        const double v = center(i) + s * step;
        if (v < lo(i) - 1e-15 || v > hi(i) + 1e-15) continue;
        z(i) = std::clamp(v, lo(i), hi(i));
        scan(k + 1);
      }
      z(i) = center(i);
    };
    scan(0);
    if (best_z.size() == 0) {
      step *= 0.5;
      if (step < 1e-12) break;
      continue;
    }
    center = best_z;
    if (step <= resolution) break;
    step = std::max(step / static_cast<double>(half) * 2.0, resolution);
  }
  if (best_z.size() == 0) throw InfeasibleError("no feasible grid point found");

  // Pattern search along feasible edges.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> dirs;
  for (const auto& row : rows)
    for (Eigen::Index a : row)
      for (Eigen::Index b : row)
        if (a != b) dirs.emplace_back(a, b);
  for (Eigen::Index i = 0; i < d; ++i)
    if (group[i] < 0) {
      dirs.emplace_back(i, -1);
      dirs.emplace_back(-1, i);
    }

  Vector z = best_z;
  double f = best_f;
  std::size_t evals = 0;
  for (double h = std::max(step, resolution); h > 1e-13; h *= 0.5) {
    bool improved = true;
    while (improved && evals < 2000000) {
      improved = false;
      for (const auto& [up, down] : dirs) {
        Vector trial = z;
        double t = h;
        if (up >= 0) t = std::min(t, hi(up) - trial(up));
        if (down >= 0) t = std::min(t, trial(down) - lo(down));
        if (!(t > 0.0)) continue;
        if (up >= 0) trial(up) += t;
        if (down >= 0) trial(down) -= t;
        const double ft = p.objective(trial);
        ++evals;
        if (ft < f) {
          f = ft;
          z = trial;
          improved = true;
        }
      }
    }
  }

  QpSolution out;
  out.z = z;
  out.objective = f;
  out.kkt_residual = kkt_residual(p, z);
  out.iterations = evals;
  out.converged = true;
  return out;
}

}  // namespace ocplus::oracle
