#pragma once

// Dense convex QP with box bounds and a few equality rows:
//
//   minimize   0.5 z'Hz + c'z
//   subject to a_r'z = b_r   (r = 0..R-1, rows with disjoint supports)
//              lower <= z <= upper
//
// The solver works in scaled coordinates w_i = a_ri z_i so that every
// equality row becomes a plain sum. Variables outside every row keep w = z.
// Iterations are two-coordinate exchanges inside a row (one-coordinate moves
// for unconstrained variables) chosen by second-order working-set selection.
// With two rows, the best exchange of each row is optimized jointly.
// When exchanges stall, an interior-point solve is rounded onto its active
// set and polished by Newton steps on the free face plus further exchanges.
// Accepted iterates never increase the ridged objective.
//
// The ridge 0.5 lambda |z - c|^2 starts centered at c = 0. Convergence is
// certified on the unridged residual; if the ridge bias alone exceeds tol
// the center moves to the current iterate (a proximal step).

#include "ocplus/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ocplus {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct EqualityRow {
  Vector coeffs;
  double rhs = 0.0;
};

struct QpProblem {
  Matrix hessian;
  Vector linear;
  std::vector<EqualityRow> equalities;
  Vector lower;
  Vector upper;

  [[nodiscard]] Eigen::Index dim() const { return linear.size(); }

  [[nodiscard]] double objective(const Vector& z) const {
    return 0.5 * z.dot(hessian * z) + linear.dot(z);
  }
};

struct QpSettings {
  double tol = 1e-8;
  std::size_t max_iter = 0;  // 0 selects 100 * d
  double ridge_factor = 1e-10;
  bool record_trace = false;
};

struct QpSolution {
  Vector z;
  double objective = 0.0;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  // Objective of the ridge-regularized problem after every accepted step.
  std::vector<double> trace;
};

namespace detail {

// Layout of the scaled problem shared by the solver and the residual check.
struct ScaledLayout {
  std::vector<int> group;  // equality row of each variable, -1 if none
  Vector scale;            // a_ri for row members, 1 otherwise
  Vector lo;               // bounds of w = scale .* z
  Vector hi;
  std::vector<std::vector<Eigen::Index>> members;
};

inline ScaledLayout make_layout(const QpProblem& p) {
  const Eigen::Index d = p.dim();
  require_dims(d >= 1, "QP has no variables");
  require_dims(p.hessian.rows() == d && p.hessian.cols() == d,
               "QP Hessian shape does not match the linear term");
  require_dims(p.lower.size() == d && p.upper.size() == d,
               "QP bound vectors do not match the variable count");

  ScaledLayout lay;
  lay.group.assign(static_cast<std::size_t>(d), -1);
  lay.scale = Vector::Ones(d);
  lay.members.resize(p.equalities.size());
  for (std::size_t r = 0; r < p.equalities.size(); ++r) {
    const auto& row = p.equalities[r];
    require_dims(row.coeffs.size() == d,
                 "equality row length does not match the variable count");
    require(std::isfinite(row.rhs), "equality right-hand side is not finite");
    for (Eigen::Index i = 0; i < d; ++i) {
      if (row.coeffs(i) == 0.0) continue;
      require(std::isfinite(row.coeffs(i)),
              "equality coefficient is not finite");
      require(lay.group[i] < 0,
              "equality rows must have disjoint supports (variable " +
                  std::to_string(i) + " appears twice)");
      lay.group[i] = static_cast<int>(r);
      lay.scale(i) = row.coeffs(i);
      lay.members[r].push_back(i);
    }
  }

  lay.lo.resize(d);
  lay.hi.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    require(!std::isnan(p.lower(i)) && !std::isnan(p.upper(i)),
            "QP bound is NaN");
    require(p.lower(i) <= p.upper(i), "QP lower bound exceeds upper bound at " +
                                          std::to_string(i));
    const double s = lay.scale(i);
    const double a = s * p.lower(i);
    const double b = s * p.upper(i);
    lay.lo(i) = std::min(a, b);
    lay.hi(i) = std::max(a, b);
  }
  return lay;
}

inline void check_symmetric(const Matrix& H) {
  const double scale = 1.0 + H.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < H.cols(); ++j)
    for (Eigen::Index i = j + 1; i < H.rows(); ++i)
      if (std::abs(H(i, j) - H(j, i)) > 1e-12 * scale)
        throw Error("QP Hessian is not symmetric");
}

struct Violation {
  double residual = 0.0;
  // Group to work on: row index, or -(i + 2) for a rowless variable i.
  int group = -1;
  Eigen::Index up = -1;    // index to increase
  Eigen::Index down = -1;  // index to decrease
};

inline bool below_hi(double w, double hi, double slack) { return w < hi - slack; }
inline bool above_lo(double w, double lo, double slack) { return w > lo + slack; }

// Scaled gradient u = g ./ scale. Rows contribute half the maximal violating
// gap, rowless variables their projected gradient.
inline Violation worst_violation(const ScaledLayout& lay, const Vector& w,
                                 const Vector& u, double bound_slack) {
  Violation worst;
  for (std::size_t r = 0; r < lay.members.size(); ++r) {
    double m = kInf, M = -kInf;
    Eigen::Index im = -1, iM = -1;
    for (Eigen::Index i : lay.members[r]) {
      const double sl = bound_slack * (1.0 + std::abs(w(i)));
      if (below_hi(w(i), lay.hi(i), sl) && u(i) < m) {
        m = u(i);
        im = i;
      }
      if (above_lo(w(i), lay.lo(i), sl) && u(i) > M) {
        M = u(i);
        iM = i;
      }
    }
    if (im >= 0 && iM >= 0 && M > m) {
      const double res = 0.5 * (M - m);
      if (res > worst.residual) worst = {res, static_cast<int>(r), im, iM};
    }
  }
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (lay.group[i] >= 0) continue;
    const double sl = bound_slack * (1.0 + std::abs(w(i)));
    double res = 0.0;
    Eigen::Index up = -1, down = -1;
    if (u(i) < 0.0 && below_hi(w(i), lay.hi(i), sl)) {
      res = -u(i);
      up = i;
    } else if (u(i) > 0.0 && above_lo(w(i), lay.lo(i), sl)) {
      res = u(i);
      down = i;
    }
    if (res > worst.residual)
      worst = {res, -static_cast<int>(i) - 2, up, down};
  }
  return worst;
}

}  // namespace detail

/// Projected-gradient stationarity residual of z for the unregularized
/// problem: the smallest achievable max-norm of the reduced gradient after
/// choosing one multiplier per equality row, with bound sign conditions
/// respected. Measured in row-scaled units (g_i / a_ri).
inline double kkt_residual(const QpProblem& problem, const Vector& z) {
  const auto lay = detail::make_layout(problem);
  detail::require_dims(z.size() == problem.dim(),
                       "point has the wrong dimension");
  const Vector g = problem.hessian * z + problem.linear;
  const Vector w = lay.scale.cwiseProduct(z);
  const Vector u = g.cwiseQuotient(lay.scale);
  return detail::worst_violation(lay, w, u, 1e-12).residual;
}

namespace detail {

// Feasible start: each row is filled uniformly with b / |row| in scaled
// coordinates, clipped to the boxes, then the remainder is pushed through the
// members in index order. Rowless variables start at the projection of 0.
inline Vector feasible_start(const QpProblem& p, const ScaledLayout& lay) {
  const Eigen::Index d = p.dim();
  Vector w(d);
  for (Eigen::Index i = 0; i < d; ++i)
    if (lay.group[i] < 0) w(i) = std::clamp(0.0, lay.lo(i), lay.hi(i));

  for (std::size_t r = 0; r < lay.members.size(); ++r) {
    const auto& idx = lay.members[r];
    const double b = p.equalities[r].rhs;
    if (idx.empty()) {
      if (b != 0.0)
        throw InfeasibleError("equality row " + std::to_string(r) +
                              " has no variables but a nonzero right-hand side");
      continue;
    }
    double lo_sum = 0.0, hi_sum = 0.0;
    for (Eigen::Index i : idx) {
      lo_sum += lay.lo(i);
      hi_sum += lay.hi(i);
    }
    const double slack = 1e-12 * (1.0 + std::abs(b));
    if (lo_sum > b + slack || hi_sum < b - slack)
      throw InfeasibleError("equality row " + std::to_string(r) +
                            " cannot be met within the box bounds");

    const double share = b / static_cast<double>(idx.size());
    double total = 0.0;
    for (Eigen::Index i : idx) {
      w(i) = std::clamp(share, lay.lo(i), lay.hi(i));
      total += w(i);
    }
    double deficit = b - total;
    for (Eigen::Index i : idx) {
      if (deficit == 0.0) break;
      const double room = deficit > 0.0 ? lay.hi(i) - w(i) : lay.lo(i) - w(i);
      const double move = deficit > 0.0 ? std::min(deficit, room)
                                        : std::max(deficit, room);
      w(i) += move;
      deficit -= move;
    }
    if (std::abs(deficit) > slack)
      throw InfeasibleError("feasibility restoration failed for equality row " +
                            std::to_string(r));
  }
  return w;
}

class ScaledSolver {
 public:
  ScaledSolver(const QpProblem& p, const ScaledLayout& lay, double ridge)
      : p_(p), lay_(lay), ridge_(ridge), inv_s_(lay.scale.cwiseInverse()) {}

  // Hessian of the ridged problem in scaled coordinates.
  double h(Eigen::Index i, Eigen::Index j) const {
    double v = p_.hessian(i, j);
    if (i == j) v += ridge_;
    return v * inv_s_(i) * inv_s_(j);
  }

  void reset_gradient(const Vector& w) {
    const Vector z = w.cwiseProduct(inv_s_);
    Vector g = p_.hessian * z + p_.linear;
    if (center_.size() > 0)
      g += ridge_ * (z - center_);
    else
      g += ridge_ * z;
    u_ = g.cwiseProduct(inv_s_);
  }

  // Moves the ridge center to w (proximal step); returns the drop in the
  // ridged objective.
  double recenter(const Vector& w) {
    const double before = ridged_objective(w);
    center_ = w.cwiseProduct(inv_s_);
    reset_gradient(w);
    return ridged_objective(w) - before;
  }

  [[nodiscard]] const Vector& u() const { return u_; }

  double ridged_objective(const Vector& w) const {
    const Vector z = w.cwiseProduct(inv_s_);
    const double r = center_.size() > 0 ? (z - center_).squaredNorm() : z.squaredNorm();
    return 0.5 * z.dot(p_.hessian * z) + 0.5 * ridge_ * r + p_.linear.dot(z);
  }

  // One exchange step on the violating group. When a second row also has a
  // violating pair, both exchanges are optimized jointly over their rectangle.
  // Returns the objective change.
  double step(Vector& w, const Violation& v) {
    if (v.group < 0) return single_step(w, v);
    const Pair a = pair_in_row(w, v.group, v.up, v.down);
    Pair b;
    double best = 0.0;
    for (std::size_t r = 0; r < lay_.members.size(); ++r) {
      if (static_cast<int>(r) == v.group) continue;
      const Pair c = row_pair(w, static_cast<int>(r));
      if (c.up >= 0 && c.gap > best) {
        best = c.gap;
        b = c;
      }
    }
    if (b.up < 0) return pair_step(w, a);
    return joint_step(w, a, b);
  }

  // Newton step on the free face with the active bounds held fixed, followed
  // by a ratio test. Returns the objective change (<= 0) or nullopt when the
  // face system cannot be factored.
  [[nodiscard]] bool last_face_blocked() const { return last_face_blocked_; }

  std::optional<double> face_step(Vector& w) {
    const Eigen::Index d = w.size();
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < d; ++i)
      if (w(i) > lay_.lo(i) && w(i) < lay_.hi(i)) free.push_back(i);
    const auto nf = static_cast<Eigen::Index>(free.size());
    last_face_blocked_ = false;
    if (nf == 0) return 0.0;

    // Work in scaled coordinates: minimize 0.5 p'Hw p + u'p, sum over each
    // row's free members of p = 0.
    Matrix Hf(nf, nf);
    Vector uf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      uf(a) = u_(free[a]);
      for (Eigen::Index b = 0; b < nf; ++b) Hf(a, b) = h(free[a], free[b]);
    }
    std::vector<int> rows_used;
    for (Eigen::Index a = 0; a < nf; ++a) {
      const int g = lay_.group[free[a]];
      if (g >= 0 && std::find(rows_used.begin(), rows_used.end(), g) ==
                        rows_used.end())
        rows_used.push_back(g);
    }
    const auto m = static_cast<Eigen::Index>(rows_used.size());
    Matrix A = Matrix::Zero(m, nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      const int g = lay_.group[free[a]];
      for (Eigen::Index r = 0; r < m; ++r)
        if (rows_used[r] == g) A(r, a) = 1.0;
    }

    Eigen::LLT<Matrix> llt(Hf);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Vector yg = llt.solve(uf);
    Vector dir = -yg;
    if (m > 0) {
      const Matrix YA = llt.solve(A.transpose());
      const Matrix S = A * YA;
      const Vector mu = S.ldlt().solve(-A * yg);
      dir -= YA * mu;
    }
    if (!dir.allFinite()) return std::nullopt;

    const double slope = uf.dot(dir);
    if (!(slope < 0.0)) return 0.0;

    double t = 1.0;
    Eigen::Index block = -1;
    bool block_hi = false;
    for (Eigen::Index a = 0; a < nf; ++a) {
      const Eigen::Index i = free[a];
      if (dir(a) > 0.0 && std::isfinite(lay_.hi(i))) {
        const double lim = (lay_.hi(i) - w(i)) / dir(a);
        if (lim < t) {
          t = lim;
          block = a;
          block_hi = true;
        }
      } else if (dir(a) < 0.0 && std::isfinite(lay_.lo(i))) {
        const double lim = (lay_.lo(i) - w(i)) / dir(a);
        if (lim < t) {
          t = lim;
          block = a;
          block_hi = false;
        }
      }
    }
    t = std::max(t, 0.0);
    const double curv = dir.dot(Hf * dir);
    const double delta = t * slope + 0.5 * t * t * curv;
    if (!(delta < 0.0)) return 0.0;

    Vector trial = w;
    for (Eigen::Index a = 0; a < nf; ++a) {
      const Eigen::Index i = free[a];
      trial(i) = std::clamp(w(i) + t * dir(a), lay_.lo(i), lay_.hi(i));
    }
    if (block >= 0) {
      const Eigen::Index i = free[block];
      trial(i) = block_hi ? lay_.hi(i) : lay_.lo(i);
    }
    // Restore each row sum exactly after the clamps.
    for (int g : rows_used) {
      double sum = 0.0, target = 0.0;
      for (Eigen::Index i : lay_.members[static_cast<std::size_t>(g)]) {
        sum += trial(i);
        target += w(i);
      }
      double excess = sum - target;
      for (Eigen::Index a = 0; a < nf && excess != 0.0; ++a) {
        const Eigen::Index i = free[a];
        if (lay_.group[i] != g || a == block) continue;
        const double room = excess > 0.0 ? trial(i) - lay_.lo(i)
                                         : trial(i) - lay_.hi(i);
        const double move = excess > 0.0 ? std::min(excess, room)
                                         : std::max(excess, room);
        trial(i) -= move;
        excess -= move;
      }
    }
    const double before = ridged_objective(w);
    const double after = ridged_objective(trial);
    if (!(after <= before)) return 0.0;
    for (Eigen::Index a = 0; a < nf; ++a) {
      const Eigen::Index i = free[a];
      const double dz = (trial(i) - w(i)) * inv_s_(i);
      if (dz == 0.0) continue;
      for (Eigen::Index k = 0; k < u_.size(); ++k)
        u_(k) += p_.hessian(k, i) * dz * inv_s_(k);
      u_(i) += ridge_ * dz * inv_s_(i);
    }
    w = trial;
    last_face_blocked_ = block >= 0;
    return after - before;
  }

 private:
  struct Pair {
    Eigen::Index up = -1;
    Eigen::Index down = -1;
    double gap = 0.0;  // u(down) - u(up)
  };

  bool can_rise(const Vector& w, Eigen::Index k) const {
    return below_hi(w(k), lay_.hi(k), 1e-12 * (1.0 + std::abs(w(k))));
  }
  bool can_fall(const Vector& w, Eigen::Index k) const {
    return above_lo(w(k), lay_.lo(k), 1e-12 * (1.0 + std::abs(w(k))));
  }

  // Keeps `up` and picks the decreasable partner with the largest guaranteed
  // decrease.
  Pair pair_in_row(const Vector& w, int g, Eigen::Index up, Eigen::Index down) const {
    const auto& idx = lay_.members[static_cast<std::size_t>(g)];
    Eigen::Index j = down;
    double best = -1.0;
    for (Eigen::Index k : idx) {
      if (k == up || !can_fall(w, k)) continue;
      const double gap = u_(k) - u_(up);
      if (gap <= 0.0) continue;
      const double curv = std::max(h(up, up) + h(k, k) - 2.0 * h(up, k), 1e-300);
      const double gain = gap * gap / curv;
      if (gain > best) {
        best = gain;
        j = k;
      }
    }
    return {up, j, u_(j) - u_(up)};
  }

  Pair row_pair(const Vector& w, int g) const {
    double m = kInf, M = -kInf;
    Eigen::Index im = -1, iM = -1;
    for (Eigen::Index k : lay_.members[static_cast<std::size_t>(g)]) {
      if (u_(k) < m && can_rise(w, k)) {
        m = u_(k);
        im = k;
      }
      if (u_(k) > M && can_fall(w, k)) {
        M = u_(k);
        iM = k;
      }
    }
    if (im < 0 || iM < 0 || !(M > m)) return {};
    return pair_in_row(w, g, im, iM);
  }

  void move(Vector& w, Eigen::Index i, double t) {
    if (t == 0.0) return;
    w(i) = std::clamp(w(i) + t, lay_.lo(i), lay_.hi(i));
    const double zi = t * inv_s_(i);
    for (Eigen::Index k = 0; k < u_.size(); ++k)
      u_(k) += p_.hessian(k, i) * zi * inv_s_(k);
    u_(i) += ridge_ * zi * inv_s_(i);
  }

  double pair_step(Vector& w, const Pair& pr) {
    const Eigen::Index i = pr.up, j = pr.down;
    const double curv = std::max(h(i, i) + h(j, j) - 2.0 * h(i, j), 1e-300);
    double t = pr.gap / curv;
    const double room_i = lay_.hi(i) - w(i);
    const double room_j = w(j) - lay_.lo(j);
    bool clip_i = false, clip_j = false;
    if (t >= room_i) {
      t = room_i;
      clip_i = true;
    }
    if (t >= room_j) {
      t = room_j;
      clip_j = true;
      clip_i = room_i == room_j;
    }
    if (!(t > 0.0)) return 0.0;
    move(w, i, t);
    move(w, j, -t);
    if (clip_i) w(i) = lay_.hi(i);
    if (clip_j) w(j) = lay_.lo(j);
    return -t * pr.gap + 0.5 * t * t * curv;
  }

  // Exact minimization of the two exchanges (up_a += t, down_a -= t,
  // up_b += s, down_b -= s) over the rectangle of feasible (t, s). Negative
  // values reverse an exchange.
  double joint_step(Vector& w, const Pair& a, const Pair& b) {
    const Eigen::Index i = a.up, j = a.down, k = b.up, m = b.down;
    const double t_lo = -std::min(w(i) - lay_.lo(i), lay_.hi(j) - w(j));
    const double t_hi = std::min(lay_.hi(i) - w(i), w(j) - lay_.lo(j));
    const double s_lo = -std::min(w(k) - lay_.lo(k), lay_.hi(m) - w(m));
    const double s_hi = std::min(lay_.hi(k) - w(k), w(m) - lay_.lo(m));
    const double gt = -a.gap, gs = -b.gap;
    const double A = std::max(h(i, i) + h(j, j) - 2.0 * h(i, j), 0.0);
    const double C = std::max(h(k, k) + h(m, m) - 2.0 * h(k, m), 0.0);
    const double B = h(i, k) - h(i, m) - h(j, k) + h(j, m);
    auto q = [&](double t, double s) {
      return gt * t + gs * s + 0.5 * (A * t * t + 2.0 * B * t * s + C * s * s);
    };
    auto argmin_1d = [](double g, double c, double lo, double hi) {
      if (c > 0.0) return std::clamp(-g / c, lo, hi);
      return g > 0.0 ? lo : (g < 0.0 ? hi : 0.0);
    };
    double bt = 0.0, bs = 0.0, bq = 0.0;
    auto consider = [&](double t, double s) {
      const double v = q(t, s);
      if (v < bq) {
        bq = v;
        bt = t;
        bs = s;
      }
    };
    const double det = A * C - B * B;
    if (det > 1e-14 * (A * C + 1e-300)) {
      const double t = (-gt * C + gs * B) / det;
      const double s = (-gs * A + gt * B) / det;
      if (t >= t_lo && t <= t_hi && s >= s_lo && s <= s_hi) consider(t, s);
    }
    if (bq == 0.0) {
      for (double t : {t_lo, t_hi}) consider(t, argmin_1d(gs + B * t, C, s_lo, s_hi));
      for (double s : {s_lo, s_hi}) consider(argmin_1d(gt + B * s, A, t_lo, t_hi), s);
    }
    if (!(bq < 0.0)) return pair_step(w, a);
    move(w, i, bt);
    move(w, j, -bt);
    move(w, k, bs);
    move(w, m, -bs);
    if (bt == t_hi) snap_exchange(w, i, j, +1);
    if (bt == t_lo) snap_exchange(w, i, j, -1);
    if (bs == s_hi) snap_exchange(w, k, m, +1);
    if (bs == s_lo) snap_exchange(w, k, m, -1);
    return bq;
  }

  // Puts the coordinate that limited an exchange exactly on its bound.
  void snap_exchange(Vector& w, Eigen::Index up, Eigen::Index down, int dir) {
    const double eps = 1e-14;
    auto near = [&](double x, double bound) {
      return std::abs(x - bound) <= eps * (1.0 + std::abs(bound));
    };
    if (dir > 0) {
      if (near(w(up), lay_.hi(up))) w(up) = lay_.hi(up);
      if (near(w(down), lay_.lo(down))) w(down) = lay_.lo(down);
    } else {
      if (near(w(up), lay_.lo(up))) w(up) = lay_.lo(up);
      if (near(w(down), lay_.hi(down))) w(down) = lay_.hi(down);
    }
  }

  double single_step(Vector& w, const Violation& v) {
    const Eigen::Index i = v.up >= 0 ? v.up : v.down;
    const double curv = std::max(h(i, i), 1e-300);
    double t = -u_(i) / curv;
    const double target = std::clamp(w(i) + t, lay_.lo(i), lay_.hi(i));
    t = target - w(i);
    if (t == 0.0) return 0.0;
    const double slope = u_(i);
    w(i) = target;
    const double zi = t * inv_s_(i);
    for (Eigen::Index k = 0; k < u_.size(); ++k)
      u_(k) += p_.hessian(k, i) * zi * inv_s_(k);
    u_(i) += ridge_ * zi * inv_s_(i);
    return t * slope + 0.5 * t * t * curv;
  }

  const QpProblem& p_;
  const ScaledLayout& lay_;
  double ridge_;
  Vector inv_s_;
  Vector u_;
  Vector center_;  // ridge center in original coordinates; empty means 0
  bool last_face_blocked_ = false;
};

// Primal-dual interior point (Mehrotra predictor-corrector) on the ridged
// problem in original coordinates. Used when exchange steps stall on badly
// conditioned problems; the result is only a starting point for the
// active-set polish. Returns nullopt when a variable is fixed or a factorization
// fails.
struct InteriorResult {
  Vector z;
  Vector y_lo;
  Vector y_hi;
  std::size_t iterations = 0;
};

inline std::optional<InteriorResult> interior_point(const QpProblem& p,
                                                    const Vector& start,
                                                    double ridge) {
  const Eigen::Index d = p.dim();
  const auto m = static_cast<Eigen::Index>(p.equalities.size());
  Matrix A(m, d);
  Vector b(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    A.row(r) = p.equalities[static_cast<std::size_t>(r)].coeffs.transpose();
    b(r) = p.equalities[static_cast<std::size_t>(r)].rhs;
  }
  Matrix H = p.hessian;
  H.diagonal().array() += ridge;

  std::vector<char> has_lo(static_cast<std::size_t>(d)), has_hi(static_cast<std::size_t>(d));
  Vector z = start;
  Eigen::Index nb = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    has_lo[i] = std::isfinite(p.lower(i));
    has_hi[i] = std::isfinite(p.upper(i));
    nb += has_lo[i] + has_hi[i];
    if (has_lo[i] && has_hi[i] && !(p.upper(i) > p.lower(i))) return std::nullopt;
    const double width = has_lo[i] && has_hi[i] ? p.upper(i) - p.lower(i) : kInf;
    const double margin = 1e-3 * std::min(width, 1.0 + std::abs(z(i)));
    if (has_lo[i]) z(i) = std::max(z(i), p.lower(i) + margin);
    if (has_hi[i]) z(i) = std::min(z(i), p.upper(i) - margin);
  }
  if (nb == 0) return std::nullopt;

  auto s_lo = [&](Eigen::Index i) { return has_lo[i] ? z(i) - p.lower(i) : 1.0; };
  auto s_hi = [&](Eigen::Index i) { return has_hi[i] ? p.upper(i) - z(i) : 1.0; };

  Vector g = H * z + p.linear;
  const double gscale = 1.0 + g.cwiseAbs().maxCoeff() + H.diagonal().cwiseAbs().maxCoeff();
  Vector lambda = Vector::Zero(m);
  if (m > 0) lambda = (A * A.transpose()).ldlt().solve(A * g);
  Vector y_lo = Vector::Zero(d), y_hi = Vector::Zero(d);
  {
    double mean_s = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (has_lo[i]) mean_s += std::min(s_lo(i), 1.0);
      if (has_hi[i]) mean_s += std::min(s_hi(i), 1.0);
    }
    mean_s /= static_cast<double>(nb);
    const double mu0 = 0.1 * gscale * mean_s;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (has_lo[i]) y_lo(i) = mu0 / s_lo(i);
      if (has_hi[i]) y_hi(i) = mu0 / s_hi(i);
    }
  }

  InteriorResult out;
  Vector sl(d), su(d), D(d);
  for (std::size_t it = 0; it < 100; ++it) {
    for (Eigen::Index i = 0; i < d; ++i) {
      sl(i) = s_lo(i);
      su(i) = s_hi(i);
    }
    g = H * z + p.linear;
    const Vector rd = g - A.transpose() * lambda - y_lo + y_hi;
    const Vector rp = b - A * z;
    const double mu =
        (sl.cwiseProduct(y_lo).sum() + su.cwiseProduct(y_hi).sum()) / static_cast<double>(nb);
    out.iterations = it;
    if (mu <= 1e-16 * gscale && rd.cwiseAbs().maxCoeff() <= 1e-11 * gscale &&
        (m == 0 || rp.cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + b.cwiseAbs().maxCoeff())))
      break;

    for (Eigen::Index i = 0; i < d; ++i) D(i) = y_lo(i) / sl(i) + y_hi(i) / su(i);
    Matrix M = H;
    M.diagonal() += D;
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Matrix Y, S;
    Eigen::LDLT<Matrix> schur;
    if (m > 0) {
      Y = llt.solve(A.transpose());
      S = A * Y;
      schur.compute(S);
    }

    struct Dir {
      Vector dz, dl, dyl, dyh;
    };
    auto direction = [&](const Vector& t_lo, const Vector& t_hi) {
      Vector r = -rd;
      for (Eigen::Index i = 0; i < d; ++i)
        r(i) += t_lo(i) / sl(i) - y_lo(i) - t_hi(i) / su(i) + y_hi(i);
      Dir dir;
      dir.dz = llt.solve(r);
      dir.dl = Vector::Zero(m);
      if (m > 0) {
        dir.dl = schur.solve(rp - A * dir.dz);
        dir.dz += Y * dir.dl;
      }
      dir.dyl = Vector::Zero(d);
      dir.dyh = Vector::Zero(d);
      for (Eigen::Index i = 0; i < d; ++i) {
        if (has_lo[i])
          dir.dyl(i) = (t_lo(i) - y_lo(i) * sl(i) - y_lo(i) * dir.dz(i)) / sl(i);
        if (has_hi[i])
          dir.dyh(i) = (t_hi(i) - y_hi(i) * su(i) + y_hi(i) * dir.dz(i)) / su(i);
      }
      return dir;
    };
    auto max_step = [&](const Dir& dir) {
      double ap = 1.0, ad = 1.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        if (has_lo[i]) {
          if (dir.dz(i) < 0.0) ap = std::min(ap, -sl(i) / dir.dz(i));
          if (dir.dyl(i) < 0.0) ad = std::min(ad, -y_lo(i) / dir.dyl(i));
        }
        if (has_hi[i]) {
          if (dir.dz(i) > 0.0) ap = std::min(ap, su(i) / dir.dz(i));
          if (dir.dyh(i) < 0.0) ad = std::min(ad, -y_hi(i) / dir.dyh(i));
        }
      }
      return std::pair{ap, ad};
    };

    const Vector zero = Vector::Zero(d);
    const Dir aff = direction(zero, zero);
    if (!aff.dz.allFinite()) return std::nullopt;
    const auto [ap, ad] = max_step(aff);
    double mu_aff = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (has_lo[i]) mu_aff += (sl(i) + ap * aff.dz(i)) * (y_lo(i) + ad * aff.dyl(i));
      if (has_hi[i]) mu_aff += (su(i) - ap * aff.dz(i)) * (y_hi(i) + ad * aff.dyh(i));
    }
    mu_aff /= static_cast<double>(nb);
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
    Vector t_lo(d), t_hi(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      t_lo(i) = has_lo[i] ? sigma * mu - aff.dz(i) * aff.dyl(i) : 0.0;
      t_hi(i) = has_hi[i] ? sigma * mu + aff.dz(i) * aff.dyh(i) : 0.0;
    }
    const Dir dir = direction(t_lo, t_hi);
    if (!dir.dz.allFinite()) return std::nullopt;
    const auto [cp, cd] = max_step(dir);
    const double a = std::min(1.0, 0.995 * std::min(cp, cd));
    z += a * dir.dz;
    lambda += a * dir.dl;
    y_lo += a * dir.dyl;
    y_hi += a * dir.dyh;
  }
  out.z = z;
  out.y_lo = y_lo;
  out.y_hi = y_hi;
  return out;
}

// Rounds an interior point onto the active set it indicates and restores the
// row sums, in scaled coordinates.
inline Vector crossover(const QpProblem& p, const ScaledLayout& lay,
                        const InteriorResult& ip) {
  const Eigen::Index d = p.dim();
  Vector w = lay.scale.cwiseProduct(ip.z);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double sl = ip.z(i) - p.lower(i);
    const double su = p.upper(i) - ip.z(i);
    double target = w(i);
    if (std::isfinite(p.lower(i)) && sl < ip.y_lo(i)) target = lay.scale(i) * p.lower(i);
    if (std::isfinite(p.upper(i)) && su < ip.y_hi(i)) target = lay.scale(i) * p.upper(i);
    w(i) = std::clamp(target, lay.lo(i), lay.hi(i));
  }
  for (std::size_t r = 0; r < lay.members.size(); ++r) {
    const auto& idx = lay.members[r];
    double excess = -p.equalities[r].rhs;
    for (Eigen::Index i : idx) excess += w(i);
    for (int pass = 0; pass < 2 && excess != 0.0; ++pass)
      for (Eigen::Index i : idx) {
        if (excess == 0.0) break;
        const bool at_bound = w(i) == lay.lo(i) || w(i) == lay.hi(i);
        if (pass == 0 && at_bound) continue;
        const double room = excess > 0.0 ? w(i) - lay.lo(i) : w(i) - lay.hi(i);
        const double mv = excess > 0.0 ? std::min(excess, room) : std::max(excess, room);
        w(i) -= mv;
        excess -= mv;
      }
  }
  return w;
}

}  // namespace detail

/// Solves the QP. Throws InfeasibleError when the equality rows cannot be met
/// inside the box, Error for a non-symmetric Hessian. A run that exhausts
/// max_iter returns the last iterate with converged = false.
inline QpSolution solve_qp(const QpProblem& problem,
                           const QpSettings& settings = {}) {
  detail::require(settings.tol > 0.0, "QP tolerance must be positive");
  const auto lay = detail::make_layout(problem);
  detail::check_symmetric(problem.hessian);
  const Eigen::Index d = problem.dim();
  const std::size_t max_iter =
      settings.max_iter > 0 ? settings.max_iter : 100 * static_cast<std::size_t>(d);
  const double ridge =
      settings.ridge_factor * std::max(problem.hessian.trace(), 0.0) /
      static_cast<double>(d);

  Vector w = detail::feasible_start(problem, lay);
  detail::ScaledSolver solver(problem, lay, ridge);
  solver.reset_gradient(w);

  QpSolution out;
  double f = 0.0;
  if (settings.record_trace) {
    f = solver.ridged_objective(w);
    out.trace.push_back(f);
  }

  // Exchange steps first. If they stall, an interior-point solve supplies a
  // point near the optimum; from then on chains of face steps (each fixing
  // the bound that blocked the previous one) alternate with exchanges.
  // The interior solve costs O(d^3), so larger problems get longer budgets.
  const auto du = static_cast<std::size_t>(d);
  const std::size_t exchange_budget = std::min(max_iter, std::max<std::size_t>(5, du / 100) * du);
  const std::size_t face_interval =
      std::clamp<std::size_t>(static_cast<std::size_t>(d) / 4, 25, 500);
  constexpr int kFaceChain = 8;
  bool polishing = false;
  std::size_t since_face = 0;
  bool converged = false;
  std::size_t it = 0;
  while (it < max_iter) {
    const auto v = detail::worst_violation(lay, w, solver.u(), 1e-12);
    if (v.residual <= settings.tol) {
      // Certify against the unridged residual. When the ridge bias alone
      // exceeds tol, re-center the ridge at the current point and go on.
      if (kkt_residual(problem, w.cwiseQuotient(lay.scale)) <= settings.tol) {
        converged = true;
        break;
      }
      const double drop = solver.recenter(w);
      if (settings.record_trace) {
        f += drop;
        out.trace.push_back(f);
      }
      ++it;
      continue;
    }
    if (!polishing && it >= exchange_budget) {
      polishing = true;
      since_face = face_interval;
      const auto ip =
          detail::interior_point(problem, w.cwiseQuotient(lay.scale), ridge);
      if (ip) {
        it += ip->iterations;
        const Vector cand = detail::crossover(problem, lay, *ip);
        const double before = solver.ridged_objective(w);
        const double after = solver.ridged_objective(cand);
        if (after < before) {
          w = cand;
          solver.reset_gradient(w);
          if (settings.record_trace) {
            f += after - before;
            out.trace.push_back(f);
          }
        }
      }
      continue;
    }
    double delta = 0.0;
    if (polishing && since_face >= face_interval) {
      since_face = 0;
      for (int c = 0; c < kFaceChain; ++c) {
        const auto fd = solver.face_step(w);
        delta += fd.value_or(0.0);
        if (!fd || !solver.last_face_blocked()) break;
      }
    } else {
      ++since_face;
      delta = solver.step(w, v);
    }
    ++it;
    if (settings.record_trace) {
      f += delta;
      out.trace.push_back(f);
    }
  }

  out.z = w.cwiseQuotient(lay.scale);
  // Snap coordinates that sit on a bound in scaled space.
  for (Eigen::Index i = 0; i < d; ++i) {
    if (w(i) == lay.lo(i) || w(i) == lay.hi(i))
      out.z(i) = std::clamp(out.z(i), problem.lower(i), problem.upper(i));
  }
  out.objective = problem.objective(out.z);
  out.kkt_residual = kkt_residual(problem, out.z);
  out.iterations = it;
  out.converged = converged;
  return out;
}

}  // namespace ocplus
