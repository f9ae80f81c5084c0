#include "enopt/cli.hpp"

#include "CLI11.hpp"
#include "enopt/config.hpp"
#include "enopt/csv.hpp"
#include "enopt/descent.hpp"
#include "enopt/errors.hpp"
#include "enopt/estimators.hpp"
#include "enopt/harness.hpp"
#include "enopt/linear_check.hpp"
#include "enopt/objectives.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#ifndef ENOPT_VERSION
#define ENOPT_VERSION "unknown"
#endif

namespace enopt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string code_version() { return ENOPT_VERSION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& dir, const RunManifest& manifest) {
  json j;
  j["command"] = manifest.command;
  j["config_digest"] = manifest.config_digest;
  j["config"] = manifest.config;
  j["code_version"] = manifest.code_version;
  j["started_at"] = manifest.started_at;
  j["finished_at"] = manifest.finished_at;
  j["outputs"] = manifest.outputs;
  j["notes"] = manifest.notes;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

namespace {

std::string digest_of(const json& j) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_results(const fs::path& path, const std::vector<ResultRow>& rows) {
  auto out = open_out(path);
  write_csv_row(out, {"estimator", "order", "N", "lambda", "rmse", "bias", "evals", "trials"});
  for (const auto& r : rows) {
    write_csv_row(out, {r.estimator, std::to_string(r.order), std::to_string(r.n),
                        format_double(r.lambda), format_double(r.rmse), format_double(r.bias),
                        std::to_string(r.evals), std::to_string(r.trials)});
  }
}

std::string shape(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> workers;
  bool quiet = false;
};

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
  RunManifest manifest;
  manifest.command = "bench";
  manifest.code_version = code_version();
  manifest.started_at = utc_timestamp();

  BenchConfig cfg;
  try {
    cfg = args.config_path.empty() ? BenchConfig::defaults() : load_config(args.config_path);
    if (args.trials) cfg.n_trials = *args.trials;
    if (args.workers) cfg.workers = *args.workers;
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    err << "invalid config: " << e.what() << '\n';
    return kExitUsage;
  }

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);

  ProgressFn progress;
  if (!args.quiet) {
    progress = [&err, last = std::size_t{0}](std::size_t done, std::size_t total) mutable {
      const std::size_t pct = total == 0 ? 100 : done * 100 / total;
      if (pct >= last + 10 || done == total) {
        last = pct;
        err << "bench: " << pct << "% (" << done << "/" << total << " work units)\n";
      }
    };
  }
  const BenchResult result = run_benchmark(cfg, progress);

  manifest.config = config_to_json(cfg);
  manifest.config_digest = config_digest(cfg);
  for (const auto& f : result.failures) {
    manifest.notes.push_back("order " + std::to_string(f.order) + ", N " + std::to_string(f.n) +
                             " failed and is missing from the results: " + f.message);
  }
  for (const auto& [key, reasons] : result.total.skips()) {
    for (const auto& [reason, count] : reasons) {
      manifest.notes.push_back(std::string(estimator_id(key.kind)) + " order " +
                               std::to_string(key.order) + " N " + std::to_string(key.n) +
                               ": skipped " + std::to_string(count) + " trials: " + reason);
    }
  }

  if (!result.rows.empty()) {
    write_results(dir / "results_full.csv", result.rows);
    write_results(dir / "results_best.csv", select_best_lambda(result.rows, SelectionMetric::rmse));
    write_results(dir / "results_best_bias.csv",
                  select_best_lambda(result.rows, SelectionMetric::bias));
    manifest.outputs = {"results_full.csv", "results_best.csv", "results_best_bias.csv"};
  }
  manifest.finished_at = utc_timestamp();
  write_manifest(dir, manifest);

  out << "wrote " << result.rows.size() << " rows to " << (dir / "results_full.csv").string()
      << '\n';
  if (!result.failures.empty()) {
    err << "bench: " << result.failures.size() << " (order, N) blocks failed; see manifest\n";
    return kExitFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- rastrigin

struct RastriginArgs {
  std::string out_dir;
  double step = 0.012;
  std::size_t steps = 400;
  double extent = 5.0;
  std::size_t grid = 101;
};

void write_trajectories(const fs::path& path, const std::vector<Trajectory>& paths) {
  auto out = open_out(path);
  write_csv_row(out, {"start_id", "step", "u1", "u2", "loss_exact", "loss_blurred"});
  for (std::size_t s = 0; s < paths.size(); ++s) {
    for (std::size_t k = 0; k < paths[s].points.size(); ++k) {
      const Vector& u = paths[s].points[k];
      write_csv_row(out, {std::to_string(s), std::to_string(k), format_double(u(0)),
                          format_double(u(1)), format_double(rastrigin_eval(u)),
                          format_double(rastrigin_blurred(u))});
    }
  }
}

void write_contour(const fs::path& path, double extent, std::size_t n,
                   double (*surface)(const Vector&)) {
  auto out = open_out(path);
  write_csv_row(out, {"u1", "u2", "loss"});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double t = n == 1 ? 0.0 : -extent + 2.0 * extent * static_cast<double>(i) / static_cast<double>(n - 1);
      const double s = n == 1 ? 0.0 : -extent + 2.0 * extent * static_cast<double>(j) / static_cast<double>(n - 1);
      Vector u(2);
      u << t, s;
      write_csv_row(out, {format_double(t), format_double(s), format_double(surface(u))});
    }
  }
}

int cmd_rastrigin(const RastriginArgs& args, std::ostream& out, std::ostream& err) {
  if (!(args.step >= 0.0) || !std::isfinite(args.step)) {
    err << "--step: must be a finite number >= 0\n";
    return kExitUsage;
  }
  RunManifest manifest;
  manifest.command = "rastrigin";
  manifest.code_version = code_version();
  manifest.started_at = utc_timestamp();

  DescentConfig cfg;
  cfg.step = args.step;
  cfg.n_steps = args.steps;
  json starts = json::array();
  for (const auto& s : cfg.starts) starts.push_back({s(0), s(1)});
  manifest.config = {{"step", cfg.step},     {"steps", cfg.n_steps}, {"starts", starts},
                     {"blur_variance", 1.0}, {"extent", args.extent}, {"grid", args.grid}};
  manifest.config_digest = digest_of(manifest.config);

  const auto exact = steepest_descent([](const Vector& u) { return rastrigin_grad(u); }, cfg);
  const auto blurred =
      steepest_descent([](const Vector& u) { return rastrigin_blurred_grad(u); }, cfg);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_trajectories(dir / "trajectories_exact.csv", exact);
  write_trajectories(dir / "trajectories_blurred.csv", blurred);
  write_contour(dir / "contour_exact.csv", args.extent, args.grid,
                [](const Vector& u) { return rastrigin_eval(u); });
  write_contour(dir / "contour_blurred.csv", args.extent, args.grid,
                [](const Vector& u) { return rastrigin_blurred(u); });
  manifest.outputs = {"trajectories_exact.csv", "trajectories_blurred.csv", "contour_exact.csv",
                      "contour_blurred.csv"};

  double final_exact = 0.0;
  double final_blurred = 0.0;
  for (std::size_t s = 0; s < exact.size(); ++s) {
    if (exact[s].aborted) manifest.notes.push_back("exact trajectory " + std::to_string(s) + " aborted");
    if (blurred[s].aborted) manifest.notes.push_back("blurred trajectory " + std::to_string(s) + " aborted");
    final_exact += rastrigin_eval(exact[s].points.back());
    final_blurred += rastrigin_eval(blurred[s].points.back());
  }
  const auto n = static_cast<double>(exact.size());
  manifest.finished_at = utc_timestamp();
  write_manifest(dir, manifest);
  out << "mean final loss: exact-gradient " << format_double(final_exact / n)
      << ", blurred-gradient " << format_double(final_blurred / n) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- linear-check

int cmd_linear_check(const LinearCheckOptions& options, std::ostream& out, std::ostream& err) {
  std::vector<CheckResult> results;
  try {
    results = run_linear_checks(options);
  } catch (const std::invalid_argument& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  observed=" << format_double(r.observed)
        << " tol=" << format_double(r.tolerance) << "  (" << r.detail << ")\n";
  }
  return all ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- gradient

struct GradientArgs {
  std::string ensemble_u;
  std::string ensemble_x;
  std::string values;
  std::string objective;
  std::string mean_values;
  std::string estimator;
  double lambda = 0.0;
  bool precondition = false;
  Index subsample_size = 2;
};

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Index find_column(const Matrix& members, const ConstVectorRef& v) {
  for (Index j = 0; j < members.cols(); ++j) {
    if (members.col(j) == v) return j;
  }
  return -1;
}

/// Objective backed by tabulated values: values(m, n) = l(x_m, u_n), or a
/// single row holding l(x_n, u_n); mean(m) = l(x_m, mu).
ObjectiveSpec tabulated_objective(Matrix X, Matrix U, Vector mu, Matrix values,
                                  std::optional<Vector> mean) {
  const bool diagonal = values.rows() == 1 && X.cols() != 1;
  ObjectiveSpec spec;
  spec.name = "tabulated";
  spec.eval = [X = std::move(X), U = std::move(U), mu = std::move(mu), values = std::move(values),
               mean = std::move(mean), diagonal](const ConstVectorRef& x,
                                                 const ConstVectorRef& u) -> double {
    const Index m = find_column(X, x);
    if (m < 0) throw UsageError("objective requested at an x that is not a member of --ensemble-x");
    if (u == mu) {
      if (!mean) throw UsageError("estimator needs l(x_m, mu); pass --mean-values");
      return (*mean)(m);
    }
    const Index n = find_column(U, u);
    if (n < 0) {
      throw UsageError("estimator evaluates at a u outside --ensemble-u; use --objective instead");
    }
    if (diagonal) {
      if (m != n) {
        throw UsageError("estimator needs the full M x N table but --values holds only the diagonal");
      }
      return values(0, n);
    }
    return values(m, n);
  };
  return spec;
}

ObjectiveSpec named_objective(const std::string& name) {
  if (name == "rastrigin") return rastrigin_objective();
  if (name.rfind("hermite", 0) == 0 && name.size() == 8 && name[7] >= '0' &&
      name[7] <= '0' + kMaxHermiteOrder) {
    return hermite_objective(name[7] - '0');
  }
  throw UsageError("--objective: unknown name '" + name + "' (hermite0..hermite6, rastrigin)");
}

int cmd_gradient(const GradientArgs& args, std::ostream& out, std::ostream& err) {
  const auto kind = parse_estimator_id(args.estimator);
  if (!kind) {
    err << "--estimator: unknown id '" << args.estimator << "'\n";
    return kExitUsage;
  }
  try {
    const Matrix U = read_ensemble_csv(args.ensemble_u);
    const Matrix Xm = read_ensemble_csv(args.ensemble_x);
    Ensemble u_ens{U, column_mean(U), true};
    Ensemble x_ens{Xm, column_mean(Xm), false};
    const Index M = Xm.cols();
    const Index N = U.cols();

    ObjectiveSpec objective;
    if (!args.objective.empty()) {
      objective = named_objective(args.objective);
    } else {
      const Matrix values = read_numeric_csv(args.values);
      const bool full = values.rows() == M && values.cols() == N;
      const bool diag = values.rows() == 1 && values.cols() == N && M == N;
      if (!full && !diag) {
        throw DimensionError("--values: expected " + shape(M, N) +
                             (M == N ? " or " + shape(1, N) : std::string()) + ", found " +
                             shape(values.rows(), values.cols()));
      }
      std::optional<Vector> mean;
      if (!args.mean_values.empty()) {
        const Matrix mv = read_numeric_csv(args.mean_values);
        if (mv.size() != M || (mv.rows() != 1 && mv.cols() != 1)) {
          throw DimensionError("--mean-values: expected " + shape(1, M) + " or " + shape(M, 1) +
                               ", found " + shape(mv.rows(), mv.cols()));
        }
        mean = Eigen::Map<const Vector>(mv.data(), M);
      }
      objective = tabulated_objective(Xm, U, u_ens.true_mean, values, std::move(mean));
    }

    EstimatorSpec spec;
    spec.kind = *kind;
    spec.precondition = args.precondition;
    spec.pinv.lambda = args.lambda;
    spec.subsample_size = args.subsample_size;
    const GradientEstimate g = estimate_gradient(objective, x_ens, u_ens, spec);

    std::vector<std::string> header;
    std::vector<std::string> row;
    for (Index i = 0; i < g.grad.size(); ++i) {
      header.push_back("grad_" + std::to_string(i));
      row.push_back(format_double(g.grad(i)));
    }
    write_csv_row(out, header);
    write_csv_row(out, row);
    err << "# estimator=" << estimator_id(g.kind) << " M=" << M << " N=" << N
        << " lambda=" << format_double(g.lambda) << (g.preconditioned ? " preconditioned" : "")
        << " evals=" << g.eval_count << " cached_evals=" << g.cached_evals
        << (g.cached_evals > 0 ? " (l(X, mu) assumed known from the previous iteration)" : "")
        << '\n';
    for (const auto& w : g.warnings) err << "# warning: " << w << '\n';
    return kExitOk;
  } catch (const std::invalid_argument& e) {  // shape, precondition, usage errors
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CsvError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ensemble gradient estimators: benchmark, Rastrigin demo, checks"};
  app.require_subcommand(0, 1);
  bool print_default = false;
  app.add_flag("--print-default-config", print_default, "Print the default bench config as JSON");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run the Hermite benchmark");
  bench_cmd->add_option("--config", bench.config_path, "JSON config (defaults if omitted)");
  bench_cmd->add_option("--out", bench.out_dir, "Output directory")->required();
  bench_cmd->add_option("--trials", bench.trials, "Override n_trials");
  bench_cmd->add_option("--workers", bench.workers, "Override worker count");
  bench_cmd->add_flag("--quiet", bench.quiet, "No progress output");

  RastriginArgs rastrigin;
  auto* rast_cmd = app.add_subcommand("rastrigin", "Steepest descent on Rastrigin, exact vs blurred");
  rast_cmd->add_option("--out", rastrigin.out_dir, "Output directory")->required();
  rast_cmd->add_option("--step", rastrigin.step, "Step multiplier")->capture_default_str();
  rast_cmd->add_option("--steps", rastrigin.steps, "Number of steps")->capture_default_str();
  rast_cmd->add_option("--extent", rastrigin.extent, "Contour grid half-width")->capture_default_str();
  rast_cmd->add_option("--grid", rastrigin.grid, "Contour points per axis")->capture_default_str();

  LinearCheckOptions linear;
  bool inject_sign = false;
  auto* lin_cmd = app.add_subcommand("linear-check", "Bilinear identity suite");
  lin_cmd->add_option("--dims", linear.dims, "Dimension")->capture_default_str();
  lin_cmd->add_option("--seeds", linear.seeds, "Number of seeds")->capture_default_str();
  lin_cmd->add_option("--ensemble-size", linear.ensemble_size, "N")->capture_default_str();
  lin_cmd->add_option("--seed", linear.base_seed, "Base seed")->capture_default_str();
  lin_cmd->add_flag("--zero-a", linear.zero_a, "Use A = 0");
  lin_cmd->add_flag("--inject-sign-error", inject_sign,
                    "Test mode: flip the sign of the stosag correction");

  GradientArgs gradient;
  auto* grad_cmd = app.add_subcommand("gradient", "One gradient estimate from ensemble files");
  grad_cmd->add_option("--ensemble-u", gradient.ensemble_u, "Control ensemble CSV")->required();
  grad_cmd->add_option("--ensemble-x", gradient.ensemble_x, "Uncertain-parameter ensemble CSV")
      ->required();
  auto* values_opt = grad_cmd->add_option("--values", gradient.values, "l(x_m, u_n) table CSV");
  auto* obj_opt = grad_cmd->add_option("--objective", gradient.objective,
                                       "Built-in objective: hermite0..hermite6, rastrigin");
  values_opt->excludes(obj_opt);
  grad_cmd->add_option("--mean-values", gradient.mean_values, "l(x_m, mu) CSV");
  grad_cmd->add_option("--estimator", gradient.estimator, "Estimator id")->required();
  grad_cmd->add_option("--lambda", gradient.lambda, "Tikhonov lambda")->capture_default_str();
  grad_cmd->add_flag("--precondition", gradient.precondition, "Preconditioned form");
  grad_cmd->add_option("--subsample-size", gradient.subsample_size, "Group size N_m")
      ->capture_default_str();

  std::vector<std::string> argv_store{"enopt"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (print_default) {
      out << config_to_json(BenchConfig::defaults()).dump(2) << '\n';
      return kExitOk;
    }
    if (bench_cmd->parsed()) return cmd_bench(bench, out, err);
    if (rast_cmd->parsed()) return cmd_rastrigin(rastrigin, out, err);
    if (lin_cmd->parsed()) {
      if (inject_sign) linear.stosag_baseline_weight = -1.0;
      return cmd_linear_check(linear, out, err);
    }
    if (grad_cmd->parsed()) {
      if (gradient.values.empty() && gradient.objective.empty()) {
        err << "gradient: one of --values or --objective is required\n";
        return kExitUsage;
      }
      return cmd_gradient(gradient, out, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  out << app.help();
  return kExitUsage;
}

}  // namespace enopt
