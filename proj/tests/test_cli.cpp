#include "doctest.h"

#include "enopt/cli.hpp"
#include "enopt/config.hpp"
#include "enopt/csv.hpp"
#include "enopt/harness.hpp"
#include "enopt/random.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace enopt;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("enopt_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

void write_matrix_rows(const fs::path& p, const Matrix& rows) {
  std::vector<std::string> header;
  for (Index j = 0; j < rows.cols(); ++j) header.push_back("v" + std::to_string(j));
  std::ofstream out(p);
  write_numeric_csv(out, header, rows);
}

void write_members(const fs::path& p, const Matrix& members) {
  std::ofstream out(p);
  write_ensemble_csv(out, members);
}

}  // namespace

TEST_CASE("default config prints and parses back") {
  const Run r = cli({"--print-default-config"});
  CHECK(r.code == 0);
  const BenchConfig cfg = parse_config(r.out);
  CHECK(config_digest(cfg) == config_digest(BenchConfig::defaults()));
}

TEST_CASE("usage errors exit 2") {
  CHECK(cli({"bench"}).code == 2);  // --out missing
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("bench: tiny order-0 run, determinism, manifest") {
  const fs::path dir = scratch("bench");
  spit(dir / "cfg.json", R"({"hermite_orders": [0], "estimators": ["stosag"], "ensemble_sizes": [3, 6], "batches": 2})");
  const Run r = cli({"bench", "--config", (dir / "cfg.json").string(), "--out", (dir / "a").string(),
                     "--trials", "2", "--quiet"});
  REQUIRE(r.code == 0);
  std::ifstream in(dir / "a" / "results_full.csv");
  const CsvTable t = read_csv(in);
  CHECK(t.header == std::vector<std::string>{"estimator", "order", "N", "lambda", "rmse", "bias", "evals", "trials"});
  CHECK(t.rows.size() == 2 * 7);
  for (const auto& row : t.rows) {
    CHECK(row[0] == "stosag");
    CHECK(parse_double(row[4]) <= 1e-9);
    CHECK(row[7] == "2");
  }
  std::size_t manifests = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) manifests += e.path().filename() == "manifest.json";
  CHECK(manifests == 1);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["config_digest"].get<std::string>().size() == 16);
  CHECK(manifest["config"]["n_trials"] == 2);

  // same config twice -> byte-identical CSVs; rerun into the same dir keeps one manifest
  REQUIRE(cli({"bench", "--config", (dir / "cfg.json").string(), "--out", (dir / "b").string(), "--trials",
               "2", "--workers", "2", "--quiet"})
              .code == 0);
  for (const char* f : {"results_full.csv", "results_best.csv", "results_best_bias.csv"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
}

TEST_CASE("bench: results csv reads back to the in-memory table") {
  const fs::path dir = scratch("roundtrip");
  spit(dir / "cfg.json", R"({"hermite_orders": [3], "estimators": ["paired", "fragile"], "ensemble_sizes": [4], "n_trials": 20, "batches": 4})");
  REQUIRE(cli({"bench", "--config", (dir / "cfg.json").string(), "--out", dir.string(), "--quiet"}).code == 0);
  const BenchResult mem = run_benchmark(load_config(dir / "cfg.json"));
  std::ifstream in(dir / "results_full.csv");
  const CsvTable t = read_csv(in);
  REQUIRE(t.rows.size() == mem.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const ResultRow back{row[0], std::stoi(row[1]), std::stol(row[2]), parse_double(row[3]),
                         parse_double(row[4]), parse_double(row[5]), std::stoul(row[6]), std::stoul(row[7])};
    CHECK(back == mem.rows[i]);
  }
}

TEST_CASE("bench: invalid config exits 2 naming the problem") {
  const fs::path dir = scratch("badcfg");
  spit(dir / "cfg.json", "{\n  \"n_trials\": 10,\n  \"ensemble_sizes\": [1, 4]\n}\n");
  Run r = cli({"bench", "--config", (dir / "cfg.json").string(), "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("ensemble_sizes") != std::string::npos);
  spit(dir / "cfg.json", "{\n  \"n_trials\": 10,\n  oops\n}\n");
  r = cli({"bench", "--config", (dir / "cfg.json").string(), "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 3") != std::string::npos);
}

TEST_CASE("rastrigin command") {
  const fs::path dir = scratch("rastrigin");
  SUBCASE("step 0 repeats the starts") {
    REQUIRE(cli({"rastrigin", "--out", dir.string(), "--step", "0", "--steps", "5", "--grid", "5"}).code == 0);
    std::ifstream in(dir / "trajectories_exact.csv");
    const CsvTable t = read_csv(in);
    CHECK(t.header == std::vector<std::string>{"start_id", "step", "u1", "u2", "loss_exact", "loss_blurred"});
    CHECK(t.rows.size() == 5 * 6);
    for (const auto& row : t.rows) {
      const auto& first = t.rows[std::stoul(row[0]) * 6];
      CHECK(row[2] == first[2]);
      CHECK(row[3] == first[3]);
    }
  }
  SUBCASE("default run ends near the origin for the blurred gradient") {
    REQUIRE(cli({"rastrigin", "--out", dir.string()}).code == 0);
    std::ifstream in(dir / "trajectories_blurred.csv");
    const CsvTable t = read_csv(in);
    for (const auto& row : t.rows) {
      if (row[1] == "400") CHECK(std::hypot(parse_double(row[2]), parse_double(row[3])) < 0.1);
    }
    // blurred contour: a monotone bowl along u2 for every u1
    std::ifstream cin(dir / "contour_blurred.csv");
    const CsvTable c = read_csv(cin);
    REQUIRE(c.rows.size() == 101 * 101);
    for (std::size_t i = 0; i < 101; ++i) {
      for (std::size_t j = 51; j < 101; ++j) {
        const double inner = parse_double(c.rows[i * 101 + j - 1][2]);
        const double outer = parse_double(c.rows[i * 101 + j][2]);
        CHECK(outer > inner);
        CHECK(parse_double(c.rows[i * 101 + (100 - j)][2]) > parse_double(c.rows[i * 101 + (101 - j)][2]));
      }
    }
  }
}

TEST_CASE("linear-check command") {
  Run r = cli({"linear-check", "--dims", "5", "--seeds", "100"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  r = cli({"linear-check", "--zero-a"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS paired_exact_when_a_zero") != std::string::npos);
  r = cli({"linear-check", "--inject-sign-error"});
  CHECK(r.code == 1);
  CHECK(r.out.find("FAIL stosag_exact") != std::string::npos);
}

TEST_CASE("gradient command") {
  const fs::path dir = scratch("gradient");
  Rng rng(5);
  const Index d = 3;
  const Index n = 8;
  Matrix A(d, d), B(d, d), X(d, n), U(d, n);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) {
      A(i, j) = rng.normal();
      B(i, j) = rng.normal();
    }
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < d; ++i) {
      X(i, j) = rng.normal();
      U(i, j) = 0.1 * rng.normal();
    }
  write_members(dir / "x.csv", X);
  write_members(dir / "u.csv", U);
  const Vector mu = U.rowwise().mean();
  auto ell = [&](const Vector& x, const Vector& u) { return (A * x + B * u).sum(); };
  Matrix full(n, n);
  Matrix diag(1, n);
  Matrix mean(1, n);
  for (Index m = 0; m < n; ++m) {
    for (Index k = 0; k < n; ++k) full(m, k) = ell(X.col(m), U.col(k));
    diag(0, m) = full(m, m);
    mean(0, m) = ell(X.col(m), mu);
  }
  write_matrix_rows(dir / "full.csv", full);
  write_matrix_rows(dir / "diag.csv", diag);
  write_matrix_rows(dir / "mean.csv", mean);
  const RowVector target = RowVector::Ones(d) * B;

  auto parse_grad = [](const std::string& out) {
    std::istringstream in(out);
    return read_numeric_csv(in);
  };

  SUBCASE("stosag on bilinear files recovers 1^T B") {
    const Run r = cli({"gradient", "--ensemble-u", (dir / "u.csv").string(), "--ensemble-x", (dir / "x.csv").string(),
                       "--values", (dir / "diag.csv").string(), "--mean-values", (dir / "mean.csv").string(),
                       "--estimator", "stosag"});
    REQUIRE(r.code == 0);
    const Matrix g = parse_grad(r.out);
    CHECK((g.row(0) - target).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(r.err.find("cached_evals=8") != std::string::npos);
  }
  SUBCASE("plain_lls on the full table recovers the linear coefficients") {
    const Run r = cli({"gradient", "--ensemble-u", (dir / "u.csv").string(), "--ensemble-x", (dir / "x.csv").string(),
                       "--values", (dir / "full.csv").string(), "--estimator", "plain_lls"});
    REQUIRE(r.code == 0);
    CHECK((parse_grad(r.out).row(0) - target).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("stosag without mean values is a usage error") {
    const Run r = cli({"gradient", "--ensemble-u", (dir / "u.csv").string(), "--ensemble-x", (dir / "x.csv").string(),
                       "--values", (dir / "diag.csv").string(), "--estimator", "stosag"});
    CHECK(r.code == 2);
    CHECK(r.err.find("--mean-values") != std::string::npos);
  }
  SUBCASE("paired with M != N is a shape error") {
    write_members(dir / "x5.csv", X.leftCols(5));
    const Run r = cli({"gradient", "--ensemble-u", (dir / "u.csv").string(), "--ensemble-x", (dir / "x5.csv").string(),
                       "--objective", "hermite3", "--estimator", "paired"});
    CHECK(r.code == 2);
    CHECK(r.err.find("M = 5, N = 8") != std::string::npos);
  }
  SUBCASE("values of the wrong shape") {
    write_matrix_rows(dir / "bad.csv", full.topRows(3));
    const Run r = cli({"gradient", "--ensemble-u", (dir / "u.csv").string(), "--ensemble-x", (dir / "x.csv").string(),
                       "--values", (dir / "bad.csv").string(), "--estimator", "paired"});
    CHECK(r.code == 2);
    CHECK(r.err.find("expected 8x8 or 1x8, found 3x8") != std::string::npos);
  }
  SUBCASE("built-in objective") {
    const Run r = cli({"gradient", "--ensemble-u", (dir / "u.csv").string(), "--ensemble-x", (dir / "x.csv").string(),
                       "--objective", "hermite1", "--estimator", "mirrored2s"});
    REQUIRE(r.code == 0);
    CHECK((parse_grad(r.out).row(0) - RowVector::Ones(d)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("executable exit codes") {
  const std::string exe = ENOPT_CLI_PATH;
  CHECK(std::system((exe + " linear-check > /dev/null").c_str()) == 0);
  const int status = std::system((exe + " gradient --ensemble-u /nonexistent.csv --ensemble-x /nonexistent.csv "
                                        "--objective hermite2 --estimator paired 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(status) == 2);
}
