#pragma once

// Precision/recall evaluation, k-fold cross-validated grid searches and the
// rejected-fraction sweeps.
//
// AUC-PR is average precision with anomalies (label -1) as the positive
// class: AP = sum_k (R_k - R_{k-1}) P_k over the distinct score thresholds,
// taken in decreasing order. Tied scores enter together.

#include "ocplus/dataset.hpp"
#include "ocplus/oneclass.hpp"
#include "ocplus/privileged.hpp"
#include "ocplus/random.hpp"
#include "ocplus/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

namespace ocplus {

struct PrPoint {
  double recall = 0.0;
  double precision = 1.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  double auc = 0.0;
};

inline PrCurve pr_curve(const Vector& scores, const std::vector<int>& labels) {
  detail::require_dims(static_cast<Eigen::Index>(labels.size()) == scores.size(),
                       "score and label counts differ");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    detail::require(!std::isnan(scores(static_cast<Eigen::Index>(i))), "score is NaN");
    detail::require(labels[i] == kNormal || labels[i] == kAnomaly, "labels must be +1 or -1");
    positives += labels[i] == kAnomaly;
  }
  detail::require(positives > 0, "precision/recall needs at least one anomaly label");

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });

  PrCurve c;
  std::size_t tp = 0, seen = 0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores(static_cast<Eigen::Index>(order[k]));
    for (; k < order.size() && scores(static_cast<Eigen::Index>(order[k])) == s; ++k) {
      ++seen;
      tp += labels[order[k]] == kAnomaly;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    c.auc += (recall - prev_recall) * precision;
    prev_recall = recall;
    c.points.push_back({recall, precision});
  }
  c.auc = std::clamp(c.auc, 0.0, 1.0);
  return c;
}

/// Fraction of rows of X scored anomalous (score > 0).
template <typename Model>
double rejected_fraction(const Model& m, const Matrix& X) {
  detail::require(X.rows() > 0, "rejected_fraction needs at least one row");
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) n += score(m, X.row(i)) > 0.0;
  return static_cast<double>(n) / static_cast<double>(X.rows());
}

struct Fold {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
};

/// Shuffled partition of 0..l-1 into k folds whose sizes differ by at most
/// one. Index lists are sorted.
inline std::vector<Fold> kfold_split(Eigen::Index l, Eigen::Index k, std::uint64_t seed) {
  detail::require(k >= 2, "k-fold split needs k >= 2");
  detail::require(k <= l, "k-fold split needs k <= l");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(l));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed, "kfold");
  for (std::size_t i = perm.size() - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.below(i + 1)]);

  std::vector<Fold> folds(static_cast<std::size_t>(k));
  std::vector<int> owner(static_cast<std::size_t>(l));
  std::size_t pos = 0;
  for (Eigen::Index f = 0; f < k; ++f) {
    const auto size = static_cast<std::size_t>(l / k + (f < l % k ? 1 : 0));
    for (std::size_t j = 0; j < size; ++j) owner[static_cast<std::size_t>(perm[pos++])] = static_cast<int>(f);
  }
  for (Eigen::Index i = 0; i < l; ++i)
    for (Eigen::Index f = 0; f < k; ++f) {
      auto& fold = folds[static_cast<std::size_t>(f)];
      (owner[static_cast<std::size_t>(i)] == f ? fold.test : fold.train).push_back(i);
    }
  return folds;
}

/// Label-stratified variant: each class is shuffled on its own and dealt
/// round-robin, so every test fold sees anomalies whenever there are at least
/// k of them. Fold sizes still differ by at most one.
inline std::vector<Fold> kfold_split(const std::vector<int>& labels, Eigen::Index k,
                                     std::uint64_t seed) {
  const auto l = static_cast<Eigen::Index>(labels.size());
  detail::require(k >= 2, "k-fold split needs k >= 2");
  detail::require(k <= l, "k-fold split needs k <= l");
  Rng rng(seed, "kfold-stratified");
  std::vector<int> owner(labels.size());
  std::size_t dealt = 0;
  for (int cls : {kAnomaly, kNormal}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    for (auto i : idx) owner[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
  }
  detail::require(dealt == labels.size(), "labels must be +1 or -1");
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < l; ++i)
    for (Eigen::Index f = 0; f < k; ++f) {
      auto& fold = folds[static_cast<std::size_t>(f)];
      (owner[static_cast<std::size_t>(i)] == f ? fold.test : fold.train).push_back(i);
    }
  return folds;
}

/// Worker count from OCPLUS_THREADS, else the hardware concurrency.
inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("OCPLUS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs task(0..n-1) on up to `threads` workers (0 picks the default). Each
/// task writes only its own output slot, so results do not depend on the
/// schedule.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task,
                         std::size_t threads = 0) {
  if (threads == 0) threads = default_thread_count();
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            task(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

using ParamMap = std::map<std::string, double>;

struct GridCell {
  ParamMap params;
  double mean_score = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> fold_scores;
  bool failed = false;
  std::string error;
};

struct GridSearchResult {
  ParamMap best_params;
  double best_score = std::numeric_limits<double>::quiet_NaN();
  std::vector<GridCell> table;  // in grid order
};

struct GridDefaults {
  static std::vector<double> nu() { return {0.01, 0.05, 0.1, 0.2, 0.3, 0.5}; }
  static std::vector<double> sigma_sq() { return {0.125, 0.5, 2.0, 8.0, 32.0}; }
  static std::vector<double> gamma() { return {0.01, 0.1, 1.0, 10.0, 100.0, 1e4}; }
  static constexpr Eigen::Index k = 5;
};

namespace detail {

inline std::vector<double> sorted_unique(std::vector<double> v, bool descending,
                                         const char* what) {
  require(!v.empty(), std::string(what) + " grid is empty");
  for (double x : v) require(std::isfinite(x), std::string(what) + " grid has a non-finite value");
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  if (descending) std::reverse(v.begin(), v.end());
  return v;
}

inline void check_cv_input(const Dataset& ds, Eigen::Index k) {
  ds.validate();
  require(ds.has_labels(), "cross-validation needs labelled data");
  require(k >= 2 && k <= ds.size(), "k must lie in [2, number of rows]");
}

// Mean held-out AUC-PR of `train_score` over the folds. train_score trains
// on the training rows and returns anomaly scores of the test rows.
using FoldScorer = std::function<Vector(const Dataset& train, const Dataset& test)>;

inline GridCell run_cell(const Dataset& ds, const std::vector<Fold>& folds, ParamMap params,
                         const FoldScorer& fit) {
  GridCell cell;
  cell.params = std::move(params);
  try {
    for (const auto& f : folds) {
      const Dataset tr = ds.subset(f.train);
      const Dataset te = ds.subset(f.test);
      cell.fold_scores.push_back(pr_curve(fit(tr, te), *te.labels).auc);
    }
    cell.mean_score = std::accumulate(cell.fold_scores.begin(), cell.fold_scores.end(), 0.0) /
                      static_cast<double>(cell.fold_scores.size());
  } catch (const Error& e) {
    cell.failed = true;
    cell.error = e.what();
    cell.fold_scores.clear();
  }
  return cell;
}

// First strictly better cell wins, so the grid order encodes the tie-break.
inline GridSearchResult reduce(std::vector<GridCell> table) {
  GridSearchResult r;
  r.table = std::move(table);
  for (const auto& c : r.table) {
    if (c.failed) continue;
    if (r.best_params.empty() || c.mean_score > r.best_score) {
      r.best_score = c.mean_score;
      r.best_params = c.params;
    }
  }
  require(!r.best_params.empty(), "every grid cell failed to train");
  return r;
}

}  // namespace detail

/// k-fold CV grid search for the one-class SVM over (nu, sigma^2). Training
/// ignores labels. Ties go to the smaller nu, then the smaller sigma^2.
inline GridSearchResult grid_search_baseline(const Dataset& ds, std::vector<double> nu_grid,
                                             std::vector<double> sigma_grid, Eigen::Index k,
                                             std::uint64_t seed, std::size_t threads = 0) {
  detail::check_cv_input(ds, k);
  nu_grid = detail::sorted_unique(std::move(nu_grid), false, "nu");
  sigma_grid = detail::sorted_unique(std::move(sigma_grid), false, "sigma^2");
  const auto folds = kfold_split(*ds.labels, k, seed);

  std::vector<ParamMap> cells;
  for (double nu : nu_grid)
    for (double s : sigma_grid) cells.push_back({{"nu", nu}, {"sigma_sq", s}});
  std::vector<GridCell> table(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const double nu = cells[i].at("nu");
    const double s = cells[i].at("sigma_sq");
    table[i] = detail::run_cell(ds, folds, cells[i], [&](const Dataset& tr, const Dataset& te) {
      return scores(train_ocsvm(tr.features, nu, KernelSpec::gaussian(s)), te.features);
    });
  }, threads);
  return detail::reduce(std::move(table));
}

/// k-fold CV grid search for the one-class SVM+ over (gamma, sigma*^2) with
/// nu and sigma^2 held fixed. Ties go to the larger gamma, then the smaller
/// sigma*^2.
inline GridSearchResult grid_search_plus(const Dataset& ds, double nu_fixed, double sigma_fixed,
                                         std::vector<double> gamma_grid,
                                         std::vector<double> sigma_star_grid, Eigen::Index k,
                                         std::uint64_t seed, std::size_t threads = 0) {
  detail::check_cv_input(ds, k);
  detail::require(ds.has_privileged(), "the SVM+ grid search needs privileged data");
  gamma_grid = detail::sorted_unique(std::move(gamma_grid), true, "gamma");
  sigma_star_grid = detail::sorted_unique(std::move(sigma_star_grid), false, "sigma*^2");
  const auto folds = kfold_split(*ds.labels, k, seed);
  const auto kernel = KernelSpec::gaussian(sigma_fixed);

  std::vector<ParamMap> cells;
  for (double g : gamma_grid)
    for (double s : sigma_star_grid)
      cells.push_back({{"nu", nu_fixed}, {"sigma_sq", sigma_fixed}, {"gamma", g}, {"sigma_star_sq", s}});
  std::vector<GridCell> table(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const double g = cells[i].at("gamma");
    const double s = cells[i].at("sigma_star_sq");
    table[i] = detail::run_cell(ds, folds, cells[i], [&](const Dataset& tr, const Dataset& te) {
      const auto m = train_ocsvm_plus(tr.features, *tr.privileged, nu_fixed, g, kernel,
                                      KernelSpec::gaussian(s));
      return scores(m, te.features);
    });
  }, threads);
  return detail::reduce(std::move(table));
}

struct SweepRow {
  double nu = 0.0;
  double gamma = 0.0;
  double fraction = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
};

/// Rejected test fraction of the one-class SVM+ over a (nu, gamma) grid, in
/// the given grid order (nu outer).
inline std::vector<SweepRow> nu_gamma_sweep(const Dataset& ds, const std::vector<double>& nu_grid,
                                            const std::vector<double>& gamma_grid,
                                            double sigma_sq, double sigma_star_sq,
                                            const Dataset& test, std::size_t threads = 0) {
  detail::require(!nu_grid.empty() && !gamma_grid.empty(), "sweep grids must be nonempty");
  ds.validate();
  test.validate();
  detail::require(ds.has_privileged(), "the sweep trains SVM+ and needs privileged data");
  detail::require_dims(test.features.cols() == ds.features.cols(),
                       "test data has a different feature dimension");
  std::vector<SweepRow> rows;
  for (double nu : nu_grid)
    for (double g : gamma_grid) {
      SweepRow r;
      r.nu = nu;
      r.gamma = g;
      rows.push_back(r);
    }
  parallel_for(rows.size(), [&](std::size_t i) {
    auto& r = rows[i];
    try {
      const auto m = train_ocsvm_plus(ds.features, *ds.privileged, r.nu, r.gamma,
                                      KernelSpec::gaussian(sigma_sq),
                                      KernelSpec::gaussian(sigma_star_sq));
      r.fraction = rejected_fraction(m, test.features);
    } catch (const Error& e) {
      r.failed = true;
      r.error = e.what();
    }
  }, threads);
  return rows;
}

// ---------------------------------------------------------------------------
// Table I pipeline.

struct ReferenceScores {
  double baseline;
  double plus;
};

/// Reference AUC-PR values (one-class SVM, one-class SVM+) reported for the
/// synthetic benchmarks.
inline ReferenceScores table1_reference(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::arc: return {0.25, 0.67};
    case SyntheticKind::circles: return {0.56, 0.96};
    case SyntheticKind::gauss_mixture: return {0.55, 0.98};
  }
  return {0.0, 0.0};
}

struct Table1Options {
  Eigen::Index train_size = 400;  // rows including the injected outliers
  Eigen::Index test_size = 400;
  double noise_fraction = 0.1;
  Eigen::Index k = GridDefaults::k;
  std::vector<double> nu_grid = GridDefaults::nu();
  std::vector<double> sigma_grid = GridDefaults::sigma_sq();
  std::vector<double> gamma_grid = GridDefaults::gamma();
  std::vector<double> sigma_star_grid = GridDefaults::sigma_sq();
  std::size_t threads = 0;
};

struct Table1Row {
  SyntheticKind dataset = SyntheticKind::circles;
  std::uint64_t seed = 0;
  ParamMap baseline_params;
  ParamMap plus_params;
  double baseline_cv = 0.0;
  double plus_cv = 0.0;
  double baseline_auc = 0.0;
  double plus_auc = 0.0;
  ReferenceScores reference{};
  std::size_t failed_cells = 0;  // over both grid searches
};

/// Labelled benchmark sample of `total` rows with the given outlier share.
inline Dataset noisy_sample(SyntheticKind kind, Eigen::Index total, double fraction,
                            std::uint64_t seed) {
  detail::require(total >= 2, "sample needs at least two rows");
  Eigen::Index normals = total;
  while (normals > 1 && normals + noise_count(normals, fraction) > total) --normals;
  const std::string tag(to_string(kind));
  Dataset ds = add_uniform_noise(generate(kind, normals, derive_seed(seed, tag + "/normal")),
                                 fraction, derive_seed(seed, tag + "/noise"));
  ds.seed = seed;
  return ds;
}

/// Two-stage protocol on one dataset: tune (nu, sigma^2) for the one-class
/// SVM by CV, tune (gamma, sigma*^2) for the SVM+ with those fixed, then score
/// both on a fresh test sample.
inline Table1Row run_table1(SyntheticKind kind, std::uint64_t seed, const Table1Options& o = {}) {
  const std::string tag(to_string(kind));
  const Dataset train = noisy_sample(kind, o.train_size, o.noise_fraction, derive_seed(seed, tag + "/train"));
  const Dataset test = noisy_sample(kind, o.test_size, o.noise_fraction, derive_seed(seed, tag + "/test"));
  const std::uint64_t cv_seed = derive_seed(seed, tag + "/cv");

  Table1Row row;
  row.dataset = kind;
  row.seed = seed;
  row.reference = table1_reference(kind);
  const auto base = grid_search_baseline(train, o.nu_grid, o.sigma_grid, o.k, cv_seed, o.threads);
  const double nu = base.best_params.at("nu");
  const double s = base.best_params.at("sigma_sq");
  const auto plus = grid_search_plus(train, nu, s, o.gamma_grid, o.sigma_star_grid, o.k, cv_seed,
                                     o.threads);
  row.baseline_params = base.best_params;
  row.plus_params = plus.best_params;
  for (const auto* t : {&base.table, &plus.table})
    for (const auto& c : *t) row.failed_cells += c.failed;
  row.baseline_cv = base.best_score;
  row.plus_cv = plus.best_score;

  const auto m0 = train_ocsvm(train.features, nu, KernelSpec::gaussian(s));
  row.baseline_auc = pr_curve(scores(m0, test.features), *test.labels).auc;
  const auto m1 = train_ocsvm_plus(train.features, *train.privileged, nu,
                                   plus.best_params.at("gamma"), KernelSpec::gaussian(s),
                                   KernelSpec::gaussian(plus.best_params.at("sigma_star_sq")));
  row.plus_auc = pr_curve(scores(m1, test.features), *test.labels).auc;
  return row;
}

}  // namespace ocplus
