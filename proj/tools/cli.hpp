#pragma once

// Command-line front end. run_cli() does all the work so tests can drive it
// in-process; ocplus.cpp only forwards main's arguments.
//
// Data products go to files or stdout, diagnostics to stderr. Exit code 0 iff
// the command completed.

#include "ocplus/datastore.hpp"
#include "ocplus/evalharness.hpp"
#include "ocplus/oneclass.hpp"
#include "ocplus/privileged.hpp"
#include "ocplus/synthgen.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ocplus::cli {

enum class ModelKind { ocsvm, svdd, ocsvm_plus, svdd_plus };

inline const std::map<std::string, ModelKind>& model_kinds() {
  static const std::map<std::string, ModelKind> m{{"ocsvm", ModelKind::ocsvm},
                                                  {"svdd", ModelKind::svdd},
                                                  {"ocsvm-plus", ModelKind::ocsvm_plus},
                                                  {"svdd-plus", ModelKind::svdd_plus}};
  return m;
}

inline bool is_plus(ModelKind k) { return k == ModelKind::ocsvm_plus || k == ModelKind::svdd_plus; }

struct Options {
  std::string model = "ocsvm";
  double nu = 0.1;
  double gamma = 1.0;
  double sigma_sq = 2.0;
  double sigma_star_sq = 2.0;
  std::vector<double> nu_list, gamma_list, sigma_list, sigma_star_list;
  Eigen::Index k = GridDefaults::k;
  std::uint64_t seed = 42;
  std::string data, test, model_file, out;
  bool privileged_required = false;
  std::string dataset = "circles";
  Eigen::Index size = 400;
  double noise = 0.1;
};

namespace detail {

inline std::string fmt(double v) { return ocplus::detail::format_real(v); }

// Writes to the path, or to `out` when the path is empty.
inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

inline Dataset load_data(const Options& o, bool need_privileged) {
  if (o.data.empty()) throw Error("--data is required");
  Dataset ds = read_dataset_csv(o.data);
  if ((need_privileged || o.privileged_required) && !ds.has_privileged())
    throw Error("'" + o.data + "' has no privileged columns (p0, p1, ...)");
  return ds;
}

inline Dataset sample(SyntheticKind kind, Eigen::Index total, double noise, std::uint64_t seed) {
  if (noise == 0.0) {
    Dataset ds = generate(kind, total, derive_seed(seed, std::string(to_string(kind)) + "/normal"));
    ds.seed = seed;
    return ds;
  }
  return noisy_sample(kind, total, noise, seed);
}

inline int cmd_generate(const Options& o, std::ostream& out) {
  const auto kind = synthetic_kind_from_string(o.dataset);
  ocplus::detail::require(o.noise >= 0.0 && o.noise < 1.0, "--noise must lie in [0, 1)");
  ocplus::detail::require(o.size >= 2, "--size must be at least 2");
  if (o.out.empty()) throw Error("--out is required (file prefix)");
  const auto train = sample(kind, o.size, o.noise, derive_seed(o.seed, "generate/train"));
  const auto test = sample(kind, o.size, o.noise, derive_seed(o.seed, "generate/test"));
  write_dataset_csv(train, o.out + "-train.csv");
  write_dataset_csv(test, o.out + "-test.csv");
  out << "train=" << o.out << "-train.csv rows=" << train.size()
      << " anomaly_share=" << fmt(train.anomaly_share()) << " test=" << o.out
      << "-test.csv rows=" << test.size() << " anomaly_share=" << fmt(test.anomaly_share()) << "\n";
  return 0;
}

inline int cmd_train(const Options& o, std::ostream& out) {
  const ModelKind kind = model_kinds().at(o.model);
  const Dataset ds = load_data(o, is_plus(kind));
  if (o.out.empty()) throw Error("--out is required (model file)");
  const auto k = KernelSpec::gaussian(o.sigma_sq);
  AnyModel model;
  std::string line;
  switch (kind) {
    case ModelKind::ocsvm: {
      auto m = train_ocsvm(ds.features, o.nu, k);
      line = "kkt_residual=" + fmt(m.diagnostics.kkt_residual) +
             " support=" + std::to_string(m.alphas.size()) + " rho=" + fmt(m.rho);
      model = std::move(m);
      break;
    }
    case ModelKind::svdd: {
      auto m = train_svdd(ds.features, o.nu, k);
      line = "kkt_residual=" + fmt(m.diagnostics.kkt_residual) +
             " support=" + std::to_string(m.alphas.size()) + " radius_sq=" + fmt(m.radius_sq);
      model = std::move(m);
      break;
    }
    case ModelKind::ocsvm_plus: {
      auto m = train_ocsvm_plus(ds.features, *ds.privileged, o.nu, o.gamma, k,
                                KernelSpec::gaussian(o.sigma_star_sq));
      line = "kkt_residual=" + fmt(m.diagnostics.kkt_residual) +
             " support=" + std::to_string(m.alphas_scaled.size()) + " rho=" + fmt(m.rho) +
             " b_star=" + fmt(m.b_star);
      model = std::move(m);
      break;
    }
    case ModelKind::svdd_plus: {
      auto m = train_svdd_plus(ds.features, *ds.privileged, o.nu, o.gamma, k,
                               KernelSpec::gaussian(o.sigma_star_sq));
      line = "kkt_residual=" + fmt(m.diagnostics.kkt_residual) +
             " support=" + std::to_string(m.alphas_scaled.size()) +
             " radius_sq=" + fmt(m.radius_sq) + " b_star=" + fmt(m.b_star);
      model = std::move(m);
      break;
    }
  }
  save_model(model, o.out);
  out << "model=" << o.model << " " << line << "\n";
  return 0;
}

inline int cmd_score(const Options& o, std::ostream& out) {
  if (o.model_file.empty()) throw Error("--model-file is required");
  const AnyModel m = load_model(o.model_file);
  const Dataset ds = load_data(o, false);
  const Vector s = scores(m, ds.features);
  std::string text = "score,predicted\n";
  for (Eigen::Index i = 0; i < s.size(); ++i)
    text += fmt(s(i)) + (s(i) > 0.0 ? ",-1\n" : ",1\n");
  emit(o.out, text, out);
  return 0;
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  if (o.model_file.empty()) throw Error("--model-file is required");
  const AnyModel m = load_model(o.model_file);
  const Dataset ds = load_data(o, false);
  if (!ds.has_labels()) throw Error("eval needs a label column in '" + o.data + "'");
  const Vector s = scores(m, ds.features);
  const auto curve = pr_curve(s, *ds.labels);
  const double rejected = static_cast<double>((s.array() > 0.0).count()) / static_cast<double>(s.size());
  const std::string metrics = "auc_pr,rejected_fraction,rows\n" + fmt(curve.auc) + "," +
                              fmt(rejected) + "," + std::to_string(s.size()) + "\n";
  if (o.out.empty()) {
    out << metrics;
  } else {
    write_text(o.out + "-metrics.csv", metrics);
    write_text(o.out + "-pr.csv", format_pr_csv(curve));
    out << "auc_pr=" << fmt(curve.auc) << " rejected_fraction=" << fmt(rejected) << "\n";
  }
  return 0;
}

inline std::vector<double> or_default(const std::vector<double>& v, std::vector<double> d) {
  return v.empty() ? d : v;
}

inline double single(const std::vector<double>& v, double fallback, const char* flag) {
  if (v.empty()) return fallback;
  if (v.size() != 1) throw Error(std::string(flag) + " takes one value for the SVM+ grid");
  return v[0];
}

inline int cmd_grid(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelKind kind = model_kinds().at(o.model);
  const Dataset ds = load_data(o, is_plus(kind));
  const std::uint64_t seed = derive_seed(o.seed, "grid/cv");
  GridSearchResult r;
  if (kind == ModelKind::ocsvm) {
    r = grid_search_baseline(ds, or_default(o.nu_list, GridDefaults::nu()),
                             or_default(o.sigma_list, GridDefaults::sigma_sq()), o.k, seed);
  } else if (kind == ModelKind::ocsvm_plus) {
    r = grid_search_plus(ds, single(o.nu_list, 0.1, "--nu"), single(o.sigma_list, 2.0, "--sigma-sq"),
                         or_default(o.gamma_list, GridDefaults::gamma()),
                         or_default(o.sigma_star_list, GridDefaults::sigma_sq()), o.k, seed);
  } else {
    throw Error("grid supports --model ocsvm or ocsvm-plus");
  }
  emit(o.out, format_grid_csv(r), out);
  std::string best;
  for (const auto& [key, v] : r.best_params) best += " " + key + "=" + fmt(v);
  err << "best_score=" << fmt(r.best_score) << best << "\n";
  return 0;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
  const Dataset ds = load_data(o, true);
  if (o.test.empty()) throw Error("--test is required");
  const Dataset test = read_dataset_csv(o.test);
  const auto rows = nu_gamma_sweep(ds, or_default(o.nu_list, {0.05, 0.1, 0.2, 0.3, 0.5}),
                                   or_default(o.gamma_list, {0.01, 0.1, 1.0, 10.0, 100.0, 1e4, 1e6}),
                                   o.sigma_sq, o.sigma_star_sq, test);
  emit(o.out, format_sweep_csv(rows), out);
  return 0;
}

inline int cmd_reproduce_table1(const Options& o, std::ostream& out, std::ostream& err) {
  Table1Options t;
  t.k = o.k;
  std::vector<Table1Row> rows;
  for (auto kind : {SyntheticKind::arc, SyntheticKind::circles, SyntheticKind::gauss_mixture}) {
    rows.push_back(run_table1(kind, o.seed, t));
    err << to_string(kind) << ": baseline " << fmt(rows.back().baseline_auc) << ", plus "
              << fmt(rows.back().plus_auc) << "\n";
  }
  emit(o.out, format_table1_csv(rows), out);
  return 0;
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"One-class SVM, SVDD and their privileged-information variants"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ocplus 1.0");

  std::vector<std::string> kinds;
  for (const auto& [name, kind] : model_kinds()) kinds.push_back(name);
  auto model_opt = [&](CLI::App* c) {
    c->add_option("--model", o.model, "Model kind")->check(CLI::IsMember(kinds))->capture_default_str();
  };
  auto seed_opt = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Master seed")->capture_default_str();
  };
  auto data_opt = [&](CLI::App* c) {
    c->add_option("--data", o.data, "Dataset CSV (f0.., optional p0.., optional label)");
    c->add_flag("--privileged-required", o.privileged_required,
                "Fail unless the dataset has privileged columns");
  };

  auto* gen = app.add_subcommand("generate", "Write train and test CSVs of a synthetic benchmark");
  gen->add_option("--dataset", o.dataset, "gauss-mixture, circles or arc")->capture_default_str();
  gen->add_option("--size", o.size, "Rows per file, outliers included")->capture_default_str();
  gen->add_option("--noise", o.noise, "Outlier share in [0, 1)")->capture_default_str();
  gen->add_option("--out", o.out, "Output prefix; writes <out>-train.csv and <out>-test.csv");
  seed_opt(gen);

  auto* train = app.add_subcommand("train", "Train a model and save it");
  model_opt(train);
  data_opt(train);
  train->add_option("--nu", o.nu)->capture_default_str();
  train->add_option("--gamma", o.gamma, "Privileged-space regularization")->capture_default_str();
  train->add_option("--sigma-sq", o.sigma_sq, "Gaussian kernel width")->capture_default_str();
  train->add_option("--sigma-star-sq", o.sigma_star_sq, "Privileged kernel width")->capture_default_str();
  train->add_option("--out", o.out, "Model file");

  auto* score = app.add_subcommand("score", "Anomaly scores of a dataset");
  score->add_option("--model-file", o.model_file, "Saved model");
  data_opt(score);
  score->add_option("--out", o.out, "Output CSV (stdout when omitted)");

  auto* eval = app.add_subcommand("eval", "AUC-PR, rejected fraction and PR curve");
  eval->add_option("--model-file", o.model_file, "Saved model");
  data_opt(eval);
  eval->add_option("--out", o.out, "Output prefix; writes <out>-metrics.csv and <out>-pr.csv");

  auto* grid = app.add_subcommand("grid", "Cross-validated grid search");
  model_opt(grid);
  data_opt(grid);
  grid->add_option("--nu", o.nu_list, "Comma-separated nu values")->delimiter(',');
  grid->add_option("--sigma-sq", o.sigma_list)->delimiter(',');
  grid->add_option("--gamma", o.gamma_list)->delimiter(',');
  grid->add_option("--sigma-star-sq", o.sigma_star_list)->delimiter(',');
  grid->add_option("--k", o.k, "Folds")->capture_default_str();
  grid->add_option("--out", o.out, "Output CSV (stdout when omitted)");
  seed_opt(grid);

  auto* sweep = app.add_subcommand("sweep", "Rejected test fraction of OC-SVM+ over nu and gamma");
  data_opt(sweep);
  sweep->add_option("--test", o.test, "Test CSV");
  sweep->add_option("--nu", o.nu_list)->delimiter(',');
  sweep->add_option("--gamma", o.gamma_list)->delimiter(',');
  sweep->add_option("--sigma-sq", o.sigma_sq)->capture_default_str();
  sweep->add_option("--sigma-star-sq", o.sigma_star_sq)->capture_default_str();
  sweep->add_option("--out", o.out, "Output CSV (stdout when omitted)");

  auto* t1 = app.add_subcommand("reproduce-table1", "Benchmark table on all three synthetic sets");
  seed_opt(t1);
  t1->add_option("--k", o.k, "Folds")->capture_default_str();
  t1->add_option("--out", o.out, "Output CSV (stdout when omitted)");

  std::vector<std::string> storage{"ocplus"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) return detail::cmd_generate(o, out);
    if (*train) return detail::cmd_train(o, out);
    if (*score) return detail::cmd_score(o, out);
    if (*eval) return detail::cmd_eval(o, out);
    if (*grid) return detail::cmd_grid(o, out, err);
    if (*sweep) return detail::cmd_sweep(o, out);
    if (*t1) return detail::cmd_reproduce_table1(o, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace ocplus::cli
