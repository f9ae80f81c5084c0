#include "enopt/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace enopt {

using nlohmann::json;

namespace {

json vector_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json gaussian_json(const GaussianSpec& spec) {
  json cov = json::array();
  for (Index i = 0; i < spec.covariance.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < spec.covariance.cols(); ++j) row.push_back(spec.covariance(i, j));
    cov.push_back(std::move(row));
  }
  return {{"mean", vector_json(spec.mean)}, {"covariance", std::move(cov)}};
}

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigError(field + ": " + why);
}

template <typename T>
T get_as(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    fail(field, "expected " + std::string(std::is_same_v<T, bool>             ? "a boolean"
                                          : std::is_floating_point_v<T>      ? "a number"
                                          : std::is_integral_v<T>            ? "an integer"
                                                                             : "a value") +
                    ", found " + j.dump());
  }
}

template <typename T>
T get_unsigned(const json& j, const std::string& field) {
  if (!j.is_number_integer()) {
    fail(field, "expected a non-negative integer, found " + j.dump());
  }
  if (!j.is_number_unsigned() && j.get<std::int64_t>() < 0) {
    fail(field, "must be non-negative, found " + j.dump());
  }
  return j.get<T>();
}

Vector read_vector(const json& j, const std::string& field) {
  if (!j.is_array()) fail(field, "expected an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(field + "[" + std::to_string(i) + "]", "expected a number");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

GaussianSpec read_gaussian(const json& j, const std::string& field) {
  if (!j.is_object()) fail(field, "expected an object with mean and covariance (or variance)");
  for (const auto& [key, value] : j.items()) {
    if (key != "mean" && key != "covariance" && key != "variance") {
      fail(field + "." + key, "unknown key");
    }
  }
  if (!j.contains("mean")) fail(field + ".mean", "missing");
  const Vector mean = read_vector(j.at("mean"), field + ".mean");
  const bool has_cov = j.contains("covariance");
  const bool has_var = j.contains("variance");
  if (has_cov == has_var) fail(field, "give exactly one of covariance or variance");
  GaussianSpec spec;
  if (has_var) {
    if (!j.at("variance").is_number()) fail(field + ".variance", "expected a number");
    spec = GaussianSpec::isotropic(mean, j.at("variance").get<double>());
  } else {
    const json& c = j.at("covariance");
    const auto d = static_cast<std::size_t>(mean.size());
    if (!c.is_array() || c.size() != d) {
      fail(field + ".covariance", "expected " + std::to_string(d) + " rows");
    }
    spec.mean = mean;
    spec.covariance.resize(mean.size(), mean.size());
    for (std::size_t r = 0; r < d; ++r) {
      const Vector row = read_vector(c[r], field + ".covariance[" + std::to_string(r) + "]");
      if (static_cast<std::size_t>(row.size()) != d) {
        fail(field + ".covariance[" + std::to_string(r) + "]",
             "expected " + std::to_string(d) + " entries");
      }
      spec.covariance.row(static_cast<Index>(r)) = row.transpose();
    }
  }
  try {
    spec.validate();
  } catch (const std::exception& e) {
    fail(field, e.what());
  }
  return spec;
}

}  // namespace

json config_to_json(const BenchConfig& cfg) {
  json estimators = json::array();
  for (const auto kind : cfg.estimators) estimators.push_back(std::string(estimator_id(kind)));
  json out;
  out["base_seed"] = cfg.base_seed;
  out["n_trials"] = cfg.n_trials;
  out["dims"] = cfg.dims;
  out["hermite_orders"] = cfg.hermite_orders;
  out["ensemble_sizes"] = cfg.ensemble_sizes;
  out["lambda_grid"] = cfg.lambda_grid;
  out["estimators"] = std::move(estimators);
  out["u_spec"] = gaussian_json(cfg.u_spec);
  out["x_spec"] = gaussian_json(cfg.x_spec);
  out["distributional_truth"] = cfg.distributional_truth;
  out["avg_grad_single_ensemble"] = cfg.avg_grad_single_ensemble;
  out["x_ensemble_size"] = cfg.x_ensemble_size ? json(*cfg.x_ensemble_size) : json(nullptr);
  out["subsample_size"] = cfg.subsample_size;
  out["workers"] = cfg.workers;
  out["batches"] = cfg.batches;
  return out;
}

BenchConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object at top level");
  static const std::set<std::string> known{
      "base_seed",      "n_trials",   "dims",           "hermite_orders", "ensemble_sizes",
      "lambda_grid",    "estimators", "u_spec",         "x_spec",         "distributional_truth",
      "avg_grad_single_ensemble",     "x_ensemble_size", "subsample_size", "workers",
      "batches"};
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) fail(key, "unknown key");
  }

  BenchConfig cfg;
  if (j.contains("base_seed")) cfg.base_seed = get_unsigned<std::uint64_t>(j["base_seed"], "base_seed");
  if (j.contains("n_trials")) cfg.n_trials = get_unsigned<std::size_t>(j["n_trials"], "n_trials");
  if (j.contains("dims")) cfg.dims = get_unsigned<Index>(j["dims"], "dims");
  if (j.contains("hermite_orders")) {
    const json& a = j["hermite_orders"];
    if (!a.is_array()) fail("hermite_orders", "expected an array of integers");
    cfg.hermite_orders.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      cfg.hermite_orders.push_back(
          get_as<int>(a[i], "hermite_orders[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("ensemble_sizes")) {
    const json& a = j["ensemble_sizes"];
    if (!a.is_array()) fail("ensemble_sizes", "expected an array of integers");
    cfg.ensemble_sizes.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      cfg.ensemble_sizes.push_back(
          get_unsigned<Index>(a[i], "ensemble_sizes[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("lambda_grid")) {
    const Vector grid = read_vector(j["lambda_grid"], "lambda_grid");
    cfg.lambda_grid.assign(grid.data(), grid.data() + grid.size());
  }
  if (j.contains("estimators")) {
    const json& a = j["estimators"];
    if (!a.is_array()) fail("estimators", "expected an array of estimator ids");
    cfg.estimators.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string field = "estimators[" + std::to_string(i) + "]";
      if (!a[i].is_string()) fail(field, "expected a string");
      const auto kind = parse_estimator_id(a[i].get<std::string>());
      if (!kind) fail(field, "unknown estimator '" + a[i].get<std::string>() + "'");
      cfg.estimators.push_back(*kind);
    }
  }
  if (j.contains("u_spec")) cfg.u_spec = read_gaussian(j["u_spec"], "u_spec");
  if (j.contains("x_spec")) cfg.x_spec = read_gaussian(j["x_spec"], "x_spec");
  if (j.contains("distributional_truth")) {
    cfg.distributional_truth = get_as<bool>(j["distributional_truth"], "distributional_truth");
  }
  if (j.contains("avg_grad_single_ensemble")) {
    cfg.avg_grad_single_ensemble =
        get_as<bool>(j["avg_grad_single_ensemble"], "avg_grad_single_ensemble");
  }
  if (j.contains("x_ensemble_size") && !j["x_ensemble_size"].is_null()) {
    cfg.x_ensemble_size = get_unsigned<Index>(j["x_ensemble_size"], "x_ensemble_size");
  }
  if (j.contains("subsample_size")) {
    cfg.subsample_size = get_unsigned<Index>(j["subsample_size"], "subsample_size");
  }
  if (j.contains("workers")) cfg.workers = get_unsigned<std::size_t>(j["workers"], "workers");
  if (j.contains("batches")) cfg.batches = get_unsigned<std::size_t>(j["batches"], "batches");

  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

BenchConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("config: syntax error at line " + std::to_string(line) + ": " + e.what());
  }
  return config_from_json(j);
}

BenchConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_digest(const BenchConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("workers");
  const std::string text = j.dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace enopt
