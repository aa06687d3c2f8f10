#pragma once

// On-disk formats.
//
// Dataset CSV: mandatory header f0..f{n-1}, then optional p0..p{m-1}, then an
// optional "label" column (+1 normal, -1 anomaly). Comma separated, no quoting.
// Reals are written in shortest round-trip form.
//
// Model file: one JSON document with schema_version 1 and a model_kind of
// ocsvm, svdd, ocsvm_plus or svdd_plus. The kind fixes the set of keys; a
// missing or extra key is an error.

#include "ocplus/dataset.hpp"
#include "ocplus/evalharness.hpp"
#include "ocplus/oneclass.hpp"
#include "ocplus/privileged.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ocplus {

inline constexpr int kModelSchemaVersion = 1;

using AnyModel = std::variant<OcSvmModel, SvddModel, OcSvmPlusModel, SvddPlusModel>;

namespace detail {

inline std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw Error("write to '" + path + "' failed");
}

// Parses "<prefix><index>" and returns the index, or -1.
inline long column_index(std::string_view name, char prefix) {
  if (name.size() < 2 || name[0] != prefix) return -1;
  if (name.size() > 2 && name[1] == '0') return -1;
  long v = 0;
  const auto r = std::from_chars(name.data() + 1, name.data() + name.size(), v);
  if (r.ec != std::errc() || r.ptr != name.data() + name.size()) return -1;
  return v;
}

struct Cell {
  std::string_view text;
  std::size_t column;  // 1-based
};

inline std::vector<Cell> split_row(std::string_view line) {
  std::vector<Cell> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    const auto end = comma == std::string_view::npos ? line.size() : comma;
    out.push_back({line.substr(start, end - start), start + 1});
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline Dataset parse_dataset_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("missing header", 1, 1);

  // Header.
  const auto head = detail::split_row(lines[0]);
  std::size_t n = 0, m = 0;
  bool label = false;
  std::set<std::string_view> names;
  for (const auto& c : head) {
    const auto name = detail::trim(c.text);
    if (!names.insert(name).second)
      throw ParseError("duplicate column '" + std::string(name) + "'", 1, c.column);
    if (label) throw ParseError("'label' must be the last column", 1, c.column);
    if (name == "label") {
      label = true;
    } else if (detail::column_index(name, 'f') == static_cast<long>(n) && m == 0) {
      ++n;
    } else if (detail::column_index(name, 'p') == static_cast<long>(m)) {
      ++m;
    } else {
      throw ParseError("unexpected column '" + std::string(name) + "' (expected f" +
                           std::to_string(n) + (n > 0 ? ", p" + std::to_string(m) : "") +
                           " or label)",
                       1, c.column);
    }
  }
  if (n == 0) throw ParseError("header has no feature column f0", 1, 1);

  const std::size_t width = n + m + (label ? 1 : 0);
  std::vector<double> f, p;
  std::vector<int> y;
  std::size_t rows = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (detail::trim(lines[li]).empty()) throw ParseError("empty row", line_no, 1);
    const auto cells = detail::split_row(lines[li]);
    if (cells.size() != width)
      throw ParseError("row has " + std::to_string(cells.size()) + " fields, header has " +
                           std::to_string(width),
                       line_no, cells.size() < width ? lines[li].size() + 1 : cells[width].column);
    for (std::size_t j = 0; j < width; ++j) {
      const auto t = detail::trim(cells[j].text);
      if (label && j == width - 1) {
        if (t == "1" || t == "+1") {
          y.push_back(kNormal);
        } else if (t == "-1") {
          y.push_back(kAnomaly);
        } else {
          throw ParseError("label must be +1 or -1, got '" + std::string(t) + "'", line_no,
                           cells[j].column);
        }
        continue;
      }
      double v = 0.0;
      const char* b = t.data();
      const char* e = t.data() + t.size();
      if (!t.empty() && *b == '+') ++b;
      const auto r = std::from_chars(b, e, v);
      if (t.empty() || r.ec != std::errc() || r.ptr != e || !std::isfinite(v))
        throw ParseError("non-numeric cell '" + std::string(t) + "'", line_no, cells[j].column);
      (j < n ? f : p).push_back(v);
    }
    ++rows;
  }

  Dataset ds;
  const auto R = static_cast<Eigen::Index>(rows);
  ds.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      f.data(), R, static_cast<Eigen::Index>(n));
  if (m > 0)
    ds.privileged = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        p.data(), R, static_cast<Eigen::Index>(m));
  if (label) ds.labels = std::move(y);
  return ds;
}

inline Dataset read_dataset_csv(const std::string& path) {
  return parse_dataset_csv(detail::read_file(path));
}

inline std::string format_dataset_csv(const Dataset& ds) {
  ds.validate();
  std::string out;
  const Eigen::Index n = ds.features.cols();
  const Eigen::Index m = ds.privileged ? ds.privileged->cols() : 0;
  auto sep = [&](bool& first) {
    if (!first) out += ',';
    first = false;
  };
  bool first = true;
  for (Eigen::Index j = 0; j < n; ++j) sep(first), out += "f" + std::to_string(j);
  for (Eigen::Index j = 0; j < m; ++j) sep(first), out += "p" + std::to_string(j);
  if (ds.labels) sep(first), out += "label";
  out += '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    first = true;
    for (Eigen::Index j = 0; j < n; ++j) sep(first), out += detail::format_real(ds.features(i, j));
    for (Eigen::Index j = 0; j < m; ++j) sep(first), out += detail::format_real((*ds.privileged)(i, j));
    if (ds.labels) sep(first), out += (*ds.labels)[static_cast<std::size_t>(i)] == kNormal ? "1" : "-1";
    out += '\n';
  }
  return out;
}

inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
  detail::require(ds.features.cols() > 0, "dataset has no feature columns");
  detail::write_file(path, format_dataset_csv(ds));
}

// ---------------------------------------------------------------------------
// Models.

inline std::string_view model_kind_name(const AnyModel& m) {
  static constexpr std::string_view names[] = {"ocsvm", "svdd", "ocsvm_plus", "svdd_plus"};
  return names[m.index()];
}

namespace detail {

using nlohmann::json;

inline json to_json(const KernelSpec& k) {
  json j{{"kind", std::string(to_string(k.kind))}};
  if (k.kind == KernelKind::gaussian) j["sigma_sq"] = k.sigma_sq;
  return j;
}

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Matrix& M) {
  json a = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) a.push_back(to_json(Vector(M.row(i).transpose())));
  return json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", a}};
}

inline json to_json(const TrainDiagnostics& d) {
  return {{"kkt_residual", d.kkt_residual}, {"iterations", d.iterations},
          {"offset_fallback", d.offset_fallback}, {"offset_spread", d.offset_spread}};
}

inline json to_json(const PlusDiagnostics& d) {
  return {{"kkt_residual", d.kkt_residual}, {"iterations", d.iterations},
          {"bstar_fallback", d.bstar_fallback}, {"bstar_spread", d.bstar_spread},
          {"offset_spread", d.offset_spread}};
}

// Field access that reports the offending key.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("expected an object");
  }

  void expect_keys(std::initializer_list<std::string_view> keys) const {
    std::set<std::string_view> want(keys);
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!want.count(it.key())) fail("unexpected field '" + it.key() + "'");
    for (auto k : keys)
      if (!j_.contains(std::string(k))) fail("missing field '" + std::string(k) + "'");
  }

  const json& at(std::string_view k) const {
    const auto it = j_.find(std::string(k));
    if (it == j_.end()) fail("missing field '" + std::string(k) + "'");
    return *it;
  }

  double real(std::string_view k) const {
    const auto& v = at(k);
    if (!v.is_number()) fail("field '" + std::string(k) + "' must be a number");
    return v.get<double>();
  }

  std::size_t count(std::string_view k) const {
    const auto& v = at(k);
    if (!v.is_number_unsigned()) fail("field '" + std::string(k) + "' must be a non-negative integer");
    return v.get<std::size_t>();
  }

  bool flag(std::string_view k) const {
    const auto& v = at(k);
    if (!v.is_boolean()) fail("field '" + std::string(k) + "' must be a boolean");
    return v.get<bool>();
  }

  std::string text(std::string_view k) const {
    const auto& v = at(k);
    if (!v.is_string()) fail("field '" + std::string(k) + "' must be a string");
    return v.get<std::string>();
  }

  Vector vector(std::string_view k) const {
    const auto& v = at(k);
    if (!v.is_array()) fail("field '" + std::string(k) + "' must be an array");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail("field '" + std::string(k) + "' has a non-numeric entry");
      out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    return out;
  }

  Matrix matrix(std::string_view k) const {
    Reader r(at(k), where_ + "." + std::string(k));
    r.expect_keys({"rows", "cols", "data"});
    const auto rows = static_cast<Eigen::Index>(r.count("rows"));
    const auto cols = static_cast<Eigen::Index>(r.count("cols"));
    const auto& data = r.at("data");
    if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows)
      r.fail("data must hold 'rows' arrays");
    Matrix M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& row = data[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
        r.fail("row " + std::to_string(i) + " does not have 'cols' entries");
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!row[static_cast<std::size_t>(c)].is_number()) r.fail("non-numeric matrix entry");
        M(i, c) = row[static_cast<std::size_t>(c)].get<double>();
      }
    }
    return M;
  }

  KernelSpec kernel(std::string_view k) const {
    Reader r(at(k), where_ + "." + std::string(k));
    KernelSpec s;
    try {
      s.kind = kernel_kind_from_string(r.text("kind"));
    } catch (const Error& e) {
      r.fail(e.what());
    }
    if (s.kind == KernelKind::gaussian) {
      r.expect_keys({"kind", "sigma_sq"});
      s.sigma_sq = r.real("sigma_sq");
    } else {
      r.expect_keys({"kind"});
    }
    s.validate();
    return s;
  }

  Reader child(std::string_view k) const { return Reader(at(k), where_ + "." + std::string(k)); }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("model file: " + where_ + ": " + msg);
  }

 private:
  const json& j_;
  std::string where_;
};

inline TrainDiagnostics read_train_diagnostics(const Reader& r) {
  r.expect_keys({"kkt_residual", "iterations", "offset_fallback", "offset_spread"});
  return {r.real("kkt_residual"), r.count("iterations"), r.flag("offset_fallback"),
          r.real("offset_spread")};
}

inline PlusDiagnostics read_plus_diagnostics(const Reader& r) {
  r.expect_keys({"kkt_residual", "iterations", "bstar_fallback", "bstar_spread", "offset_spread"});
  return {r.real("kkt_residual"), r.count("iterations"), r.flag("bstar_fallback"),
          r.real("bstar_spread"), r.real("offset_spread")};
}

inline void check_support(const Reader& r, const Matrix& sv, const Vector& a) {
  if (sv.rows() != a.size()) r.fail("support vector and coefficient counts differ");
  if (sv.rows() == 0) r.fail("model has no support vectors");
}

inline void check_plus(const Reader& r, const Matrix& sv, const Vector& scaled, const Vector& ra,
                       const Vector& rd, const Matrix& pv) {
  check_support(r, sv, scaled);
  if (ra.size() != rd.size() || ra.size() != pv.rows() || pv.rows() == 0)
    r.fail("raw_alphas, raw_deltas and privileged_vectors must have one entry per training row");
}

}  // namespace detail

inline std::string format_model(const AnyModel& model) {
  using detail::to_json;
  nlohmann::json j;
  j["schema_version"] = kModelSchemaVersion;
  j["model_kind"] = std::string(model_kind_name(model));
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        j["nu"] = m.nu;
        j["kernel"] = to_json(m.kernel);
        j["support_vectors"] = to_json(m.support_vectors);
        j["diagnostics"] = to_json(m.diagnostics);
        if constexpr (std::is_same_v<M, OcSvmModel> || std::is_same_v<M, SvddModel>)
          j["alphas"] = to_json(m.alphas);
        if constexpr (std::is_same_v<M, OcSvmModel> || std::is_same_v<M, OcSvmPlusModel>)
          j["rho"] = m.rho;
        if constexpr (std::is_same_v<M, SvddModel> || std::is_same_v<M, SvddPlusModel>) {
          j["radius_sq"] = m.radius_sq;
          j["center_norm_sq"] = m.center_norm_sq;
        }
        if constexpr (std::is_same_v<M, OcSvmPlusModel> || std::is_same_v<M, SvddPlusModel>) {
          j["alphas_scaled"] = to_json(m.alphas_scaled);
          j["raw_alphas"] = to_json(m.raw_alphas);
          j["raw_deltas"] = to_json(m.raw_deltas);
          j["b_star"] = m.b_star;
          j["gamma"] = m.gamma;
          j["kernel_star"] = to_json(m.kernel_star);
          j["privileged_vectors"] = to_json(m.privileged_vectors);
        }
      },
      model);
  return j.dump(1) + "\n";
}

inline AnyModel parse_model(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset to line/column
    const std::size_t off = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < off; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError("model file is not valid JSON", line, col);
  }
  const detail::Reader r(j, "root");
  if (!r.at("schema_version").is_number_integer())
    r.fail("schema_version must be an integer");
  const auto version = r.at("schema_version").get<long long>();
  if (version != kModelSchemaVersion)
    throw Error("unsupported model schema_version " + std::to_string(version) + " (expected " +
                std::to_string(kModelSchemaVersion) + ")");
  const std::string kind = r.text("model_kind");

  const auto diag_train = [&] { return detail::read_train_diagnostics(r.child("diagnostics")); };
  const auto diag_plus = [&] { return detail::read_plus_diagnostics(r.child("diagnostics")); };

  if (kind == "ocsvm") {
    r.expect_keys({"schema_version", "model_kind", "nu", "kernel", "support_vectors", "diagnostics",
                   "alphas", "rho"});
    OcSvmModel m;
    m.nu = r.real("nu");
    m.kernel = r.kernel("kernel");
    m.support_vectors = r.matrix("support_vectors");
    m.alphas = r.vector("alphas");
    m.rho = r.real("rho");
    m.diagnostics = diag_train();
    detail::check_support(r, m.support_vectors, m.alphas);
    return m;
  }
  if (kind == "svdd") {
    r.expect_keys({"schema_version", "model_kind", "nu", "kernel", "support_vectors", "diagnostics",
                   "alphas", "radius_sq", "center_norm_sq"});
    SvddModel m;
    m.nu = r.real("nu");
    m.kernel = r.kernel("kernel");
    m.support_vectors = r.matrix("support_vectors");
    m.alphas = r.vector("alphas");
    m.radius_sq = r.real("radius_sq");
    m.center_norm_sq = r.real("center_norm_sq");
    m.diagnostics = diag_train();
    detail::check_support(r, m.support_vectors, m.alphas);
    return m;
  }
  auto read_plus = [&](auto& m) {
    m.nu = r.real("nu");
    m.kernel = r.kernel("kernel");
    m.kernel_star = r.kernel("kernel_star");
    m.support_vectors = r.matrix("support_vectors");
    m.alphas_scaled = r.vector("alphas_scaled");
    m.raw_alphas = r.vector("raw_alphas");
    m.raw_deltas = r.vector("raw_deltas");
    m.privileged_vectors = r.matrix("privileged_vectors");
    m.b_star = r.real("b_star");
    m.gamma = r.real("gamma");
    m.diagnostics = diag_plus();
    detail::check_plus(r, m.support_vectors, m.alphas_scaled, m.raw_alphas, m.raw_deltas,
                       m.privileged_vectors);
  };
  if (kind == "ocsvm_plus") {
    r.expect_keys({"schema_version", "model_kind", "nu", "kernel", "support_vectors", "diagnostics",
                   "rho", "alphas_scaled", "raw_alphas", "raw_deltas", "b_star", "gamma",
                   "kernel_star", "privileged_vectors"});
    OcSvmPlusModel m;
    read_plus(m);
    m.rho = r.real("rho");
    return m;
  }
  if (kind == "svdd_plus") {
    r.expect_keys({"schema_version", "model_kind", "nu", "kernel", "support_vectors", "diagnostics",
                   "radius_sq", "center_norm_sq", "alphas_scaled", "raw_alphas", "raw_deltas",
                   "b_star", "gamma", "kernel_star", "privileged_vectors"});
    SvddPlusModel m;
    read_plus(m);
    m.radius_sq = r.real("radius_sq");
    m.center_norm_sq = r.real("center_norm_sq");
    return m;
  }
  r.fail("unknown model_kind '" + kind + "'");
}

inline void save_model(const AnyModel& model, const std::string& path) {
  detail::write_file(path, format_model(model));
}

inline AnyModel load_model(const std::string& path) { return parse_model(detail::read_file(path)); }

/// Loads a model and requires it to be of type M.
template <typename M>
M load_model_as(const std::string& path) {
  AnyModel any = load_model(path);
  if (auto* m = std::get_if<M>(&any)) return std::move(*m);
  throw Error("'" + path + "' holds a " + std::string(model_kind_name(any)) + " model");
}

/// Anomaly scores of every row of X for any stored model.
inline Vector scores(const AnyModel& model, const Matrix& X) {
  return std::visit([&](const auto& m) { return scores(m, X); }, model);
}

inline double rejected_fraction(const AnyModel& model, const Matrix& X) {
  return std::visit([&](const auto& m) { return rejected_fraction(m, X); }, model);
}

// ---------------------------------------------------------------------------
// Result tables.

namespace detail {

inline std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

}  // namespace detail

/// Columns: every parameter name (in map order), mean_score, fold1..foldk,
/// failed, error.
inline std::string format_grid_csv(const GridSearchResult& r) {
  std::vector<std::string> keys;
  std::size_t folds = 0;
  for (const auto& c : r.table) {
    for (const auto& [k, v] : c.params)
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    folds = std::max(folds, c.fold_scores.size());
  }
  std::string out;
  for (const auto& k : keys) out += k + ",";
  out += "mean_score";
  for (std::size_t f = 0; f < folds; ++f) out += ",fold" + std::to_string(f + 1);
  out += ",failed,error\n";
  for (const auto& c : r.table) {
    for (const auto& k : keys) {
      const auto it = c.params.find(k);
      out += (it == c.params.end() ? std::string() : detail::format_real(it->second)) + ",";
    }
    out += c.failed ? "nan" : detail::format_real(c.mean_score);
    for (std::size_t f = 0; f < folds; ++f)
      out += "," + (f < c.fold_scores.size() ? detail::format_real(c.fold_scores[f]) : std::string());
    out += c.failed ? ",1," : ",0,";
    out += detail::csv_safe(c.error) + "\n";
  }
  return out;
}

/// Long format: nu, gamma, fraction, failed.
inline std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "nu,gamma,fraction,failed\n";
  for (const auto& r : rows)
    out += detail::format_real(r.nu) + "," + detail::format_real(r.gamma) + "," +
           (r.failed ? "nan" : detail::format_real(r.fraction)) + (r.failed ? ",1\n" : ",0\n");
  return out;
}

inline std::string format_pr_csv(const PrCurve& c) {
  std::string out = "recall,precision\n";
  for (const auto& p : c.points)
    out += detail::format_real(p.recall) + "," + detail::format_real(p.precision) + "\n";
  return out;
}

inline std::string format_table1_csv(const std::vector<Table1Row>& rows) {
  std::string out =
      "dataset,seed,baseline,plus,ref_baseline,ref_plus,nu,sigma_sq,gamma,sigma_star_sq\n";
  for (const auto& r : rows)
    out += std::string(to_string(r.dataset)) + "," + std::to_string(r.seed) + "," +
           detail::format_real(r.baseline_auc) + "," + detail::format_real(r.plus_auc) + "," +
           detail::format_real(r.reference.baseline) + "," + detail::format_real(r.reference.plus) +
           "," + detail::format_real(r.baseline_params.at("nu")) + "," +
           detail::format_real(r.baseline_params.at("sigma_sq")) + "," +
           detail::format_real(r.plus_params.at("gamma")) + "," +
           detail::format_real(r.plus_params.at("sigma_star_sq")) + "\n";
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  detail::write_file(path, text);
}

}  // namespace ocplus
