#include "ocplus/datastore.hpp"
#include "ocplus/synthgen.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <filesystem>
#include <random>

using namespace ocplus;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "ocplus_test_datastore";
  fs::create_directories(dir);
  return dir / name;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i]))
      return false;
  return true;
}

std::size_t parse_error_line(const std::string& text) {
  try {
    parse_dataset_csv(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::size_t parse_error_column(const std::string& text) {
  try {
    parse_dataset_csv(text);
  } catch (const ParseError& e) {
    return e.column();
  }
  return 0;
}

template <typename Model>
void check_same_scores(const Model& a, const AnyModel& b, const Matrix& G) {
  const Vector sa = scores(a, G);
  const Vector sb = scores(b, G);
  REQUIRE(sa.size() == sb.size());
  for (Eigen::Index i = 0; i < sa.size(); ++i)
    CHECK(std::bit_cast<std::uint64_t>(sa(i)) == std::bit_cast<std::uint64_t>(sb(i)));
}

}  // namespace

TEST_CASE("reading small CSV files", "[datastore][csv]") {
  const auto ds = parse_dataset_csv("f0,f1,label\n0.0,0.0,1\n9.9,9.9,-1\n");
  CHECK(ds.features.rows() == 2);
  CHECK(ds.features.cols() == 2);
  CHECK(ds.features(1, 0) == 9.9);
  CHECK_FALSE(ds.has_privileged());
  CHECK(*ds.labels == std::vector<int>{1, -1});

  const auto dp = parse_dataset_csv("f0,p0,label\r\n1.5,2.5,+1\r\n");
  CHECK(dp.features.cols() == 1);
  REQUIRE(dp.has_privileged());
  CHECK(dp.privileged->cols() == 1);
  CHECK((*dp.privileged)(0, 0) == 2.5);

  const auto bare = parse_dataset_csv("f0\n1e-3\n-2\n\n");
  CHECK(bare.size() == 2);
  CHECK_FALSE(bare.has_labels());
  CHECK(bare.features(0, 0) == 1e-3);

  const auto empty = parse_dataset_csv("f0,f1\n");
  CHECK(empty.size() == 0);
}

TEST_CASE("CSV parse errors carry line and column", "[datastore][csv][errors]") {
  CHECK(parse_error_line("") == 1);
  CHECK(parse_error_line("f0,f0\n1,2\n") == 1);
  CHECK(parse_error_column("f0,f0\n1,2\n") == 4);
  CHECK(parse_error_line("f1\n1\n") == 1);
  CHECK(parse_error_line("f0,label,p0\n1,1,2\n") == 1);
  CHECK(parse_error_line("p0\n1\n") == 1);
  CHECK(parse_error_line("f0,p0,f1\n1,2,3\n") == 1);
  CHECK(parse_error_line("f0,bogus\n1,2\n") == 1);

  CHECK(parse_error_line("f0,f1\n1,2\n3\n") == 3);
  CHECK(parse_error_line("f0,f1\n1,2\n3,4,5\n") == 3);
  CHECK(parse_error_column("f0,f1\n1,2\n3,4,5\n") == 5);
  CHECK(parse_error_line("f0,f1\n1,2\n3,x\n") == 3);
  CHECK(parse_error_column("f0,f1\n1,2\n3,x\n") == 3);
  CHECK(parse_error_line("f0,f1\n1,2\n3,\n") == 3);
  CHECK(parse_error_line("f0,f1\n1,2\n3,nan\n") == 3);
  CHECK(parse_error_line("f0,label\n1,1\n2,0\n") == 3);
  CHECK(parse_error_column("f0,label\n1,1\n2,0\n") == 3);
  CHECK(parse_error_line("f0,label\n1,1\n\n2,1\n") == 3);

  CHECK_THROWS_AS(read_dataset_csv(scratch("does-not-exist.csv").string()), Error);
}

TEST_CASE("dataset CSV round-trips bit-exactly", "[datastore][csv][property]") {
  const auto circles = gen_circles(100, 7);
  const auto path = scratch("circles.csv").string();
  write_dataset_csv(circles, path);
  const auto back = read_dataset_csv(path);
  CHECK(bit_equal(back.features, circles.features));
  CHECK(bit_equal(*back.privileged, *circles.privileged));
  CHECK(*back.labels == *circles.labels);

  for (auto kind : {SyntheticKind::gauss_mixture, SyntheticKind::arc}) {
    const auto ds = add_uniform_noise(generate(kind, 200, 3), 0.1, 4);
    const auto again = parse_dataset_csv(format_dataset_csv(ds));
    CHECK(bit_equal(again.features, ds.features));
    CHECK(bit_equal(*again.privileged, *ds.privileged));
    CHECK(*again.labels == *ds.labels);
  }

  // Awkward doubles.
  std::mt19937_64 rng(5);
  Dataset odd;
  odd.features = Matrix(50, 3);
  for (Eigen::Index i = 0; i < odd.features.size(); ++i) {
    std::uint64_t bits = rng();
    double v = std::bit_cast<double>(bits);
    if (!std::isfinite(v)) v = 1.0 / 3.0;
    odd.features.data()[i] = v;
  }
  odd.features(0, 0) = -0.0;
  odd.features(0, 1) = std::numeric_limits<double>::denorm_min();
  odd.features(0, 2) = std::numeric_limits<double>::max();
  CHECK(bit_equal(parse_dataset_csv(format_dataset_csv(odd)).features, odd.features));
}

TEST_CASE("optional columns are omitted when absent", "[datastore][csv]") {
  Dataset ds;
  ds.features = Matrix::Ones(2, 2);
  CHECK(format_dataset_csv(ds).substr(0, 6) == "f0,f1\n");
  ds.labels = std::vector<int>{1, -1};
  CHECK(format_dataset_csv(ds).substr(0, 12) == "f0,f1,label\n");
  ds.labels.reset();
  ds.privileged = Matrix::Zero(2, 1);
  CHECK(format_dataset_csv(ds).substr(0, 9) == "f0,f1,p0\n");
  CHECK_THROWS_AS(write_dataset_csv(ds, "/nonexistent-dir/x.csv"), Error);
}

TEST_CASE("model files round-trip every kind", "[datastore][model][property]") {
  const auto ds = add_uniform_noise(gen_gauss_mixture(120, 9), 0.1, 10);
  const Matrix G = evaluation_grid(ds.features, 10);
  const auto k = KernelSpec::gaussian(2.0);

  const auto oc = train_ocsvm(ds.features, 0.1, k);
  const auto sv = train_svdd(ds.features, 0.1, KernelSpec::linear());
  const auto op = train_ocsvm_plus(ds.features, *ds.privileged, 0.1, 3.0, k, KernelSpec::gaussian(0.5));
  const auto sp = train_svdd_plus(ds.features, *ds.privileged, 0.2, 0.7, k, k);

  auto round = [&](const AnyModel& m, const std::string& name) {
    const auto path = scratch(name).string();
    save_model(m, path);
    return load_model(path);
  };

  const auto oc2 = round(oc, "oc.json");
  REQUIRE(std::holds_alternative<OcSvmModel>(oc2));
  CHECK(std::get<OcSvmModel>(oc2).rho == oc.rho);
  CHECK(std::get<OcSvmModel>(oc2).diagnostics.kkt_residual == oc.diagnostics.kkt_residual);
  check_same_scores(oc, oc2, G);

  const auto sv2 = round(sv, "sv.json");
  REQUIRE(std::holds_alternative<SvddModel>(sv2));
  CHECK(std::get<SvddModel>(sv2).kernel == KernelSpec::linear());
  check_same_scores(sv, sv2, G);

  const auto op2 = round(op, "op.json");
  REQUIRE(std::holds_alternative<OcSvmPlusModel>(op2));
  const auto& opl = std::get<OcSvmPlusModel>(op2);
  CHECK(bit_equal(opl.privileged_vectors, op.privileged_vectors));
  CHECK(bit_equal(opl.raw_deltas, op.raw_deltas));
  CHECK(opl.b_star == op.b_star);
  check_same_scores(op, op2, G);
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    CHECK(privileged_slack(opl, ds.privileged->row(i)) == privileged_slack(op, ds.privileged->row(i)));

  const auto sp2 = round(sp, "sp.json");
  REQUIRE(std::holds_alternative<SvddPlusModel>(sp2));
  CHECK(std::get<SvddPlusModel>(sp2).radius_sq == sp.radius_sq);
  check_same_scores(sp, sp2, G);

  CHECK(load_model_as<OcSvmPlusModel>(scratch("op.json").string()).gamma == 3.0);
  CHECK_THROWS_AS(load_model_as<OcSvmPlusModel>(scratch("oc.json").string()), Error);
}

TEST_CASE("corrupted model files are rejected", "[datastore][model][errors]") {
  const auto ds = gen_circles(40, 2);
  const auto k = KernelSpec::gaussian(2.0);
  const auto op = train_ocsvm_plus(ds.features, *ds.privileged, 0.2, 1.0, k, k);
  const auto good = nlohmann::json::parse(format_model(op));

  auto rejects = [](const nlohmann::json& j) {
    CHECK_THROWS_AS(parse_model(j.dump()), Error);
  };
  {
    auto j = good;
    j.erase("privileged_vectors");
    rejects(j);
  }
  {
    auto j = good;
    j["schema_version"] = 2;
    try {
      parse_model(j.dump());
      FAIL("expected a version error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("schema_version") != std::string::npos);
    }
  }
  {
    auto j = good;
    j["model_kind"] = "ocsvm";
    rejects(j);
  }
  {
    auto j = good;
    j["alphas"] = nlohmann::json::array();
    rejects(j);
  }
  {
    auto j = good;
    j["raw_deltas"].erase(0);
    rejects(j);
  }
  {
    auto j = good;
    j["kernel"]["sigma_sq"] = -1.0;
    rejects(j);
  }
  {
    auto j = good;
    j["support_vectors"]["rows"] = 1;
    rejects(j);
  }
  {
    auto j = good;
    j["rho"] = "high";
    rejects(j);
  }
  try {
    parse_model("{\n  \"schema_version\": 1,\n  oops\n}");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("table writers", "[datastore][tables]") {
  GridSearchResult r;
  GridCell a;
  a.params = {{"nu", 0.1}, {"sigma_sq", 2.0}};
  a.mean_score = 0.5;
  a.fold_scores = {0.4, 0.6};
  GridCell b;
  b.params = {{"nu", 0.2}, {"sigma_sq", 2.0}};
  b.failed = true;
  b.error = "bad, very bad";
  r.table = {a, b};
  CHECK(format_grid_csv(r) ==
        "nu,sigma_sq,mean_score,fold1,fold2,failed,error\n"
        "0.1,2,0.5,0.4,0.6,0,\n"
        "0.2,2,nan,,,1,bad; very bad\n");

  SweepRow s;
  s.nu = 0.1;
  s.gamma = 1e6;
  s.fraction = 0.25;
  CHECK(format_sweep_csv({s}) == "nu,gamma,fraction,failed\n0.1,1e+06,0.25,0\n");

  PrCurve c;
  c.points = {{0.5, 1.0}, {1.0, 2.0 / 3.0}};
  CHECK(format_pr_csv(c) == "recall,precision\n0.5,1\n1,0.6666666666666666\n");
}
