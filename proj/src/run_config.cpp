// SPDX-License-Identifier: Apache-2.0
#include "w1ot/run_config.hpp"

#include <cmath>
#include <set>
#include <type_traits>
#include <string>

#include "w1ot/datasets.hpp"
#include "w1ot/error.hpp"

namespace w1ot {

using nlohmann::json;

namespace {

// Reads known keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  template <typename Int>
  void integer(const char* key, Int& dst) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number_integer()) fail(key, "an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      if (v->is_number_unsigned()) {
        dst = v->get<Int>();
        return;
      }
      if (v->get<long long>() < 0) fail(key, "a non-negative integer");
    }
    dst = v->get<Int>();
  }

  void real(const char* key, double& dst) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number()) fail(key, "a number");
    dst = v->get<double>();
  }

  void text(const char* key, std::string& dst) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) fail(key, "a string");
    dst = v->get<std::string>();
  }

  void sizes(const char* key, std::vector<Index>& dst) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) fail(key, "an array of integers");
    std::vector<Index> out;
    for (const json& e : *v) {
      if (!e.is_number_integer()) fail(key, "an array of integers");
      out.push_back(e.get<Index>());
    }
    dst = std::move(out);
  }

  void reals(const char* key, std::vector<double>& dst) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) fail(key, "an array of numbers");
    std::vector<double> out;
    for (const json& e : *v) {
      if (!e.is_number()) fail(key, "an array of numbers");
      out.push_back(e.get<double>());
    }
    dst = std::move(out);
  }

  const json* child(const char* key) { return find(key); }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("config: unknown key '" + qualified(key) + "'");
    }
  }

 private:
  const json* find(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("config: '" + qualified(key) + "' must be " + what);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

void MetricsConfig::validate() const {
  if (mmd_scales.empty()) throw ConfigError("metrics.mmd_scales must not be empty");
  for (double s : mmd_scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("metrics.mmd_scales entries must be positive");
  }
  if (monotonicity_pairs == 0) throw ConfigError("metrics.monotonicity_pairs must be >= 1");
  if (!(monotonicity_cos_tol >= -1.0 && monotonicity_cos_tol <= 1.0)) {
    throw ConfigError("metrics.monotonicity_cos_tol must lie in [-1, 1]");
  }
}

void RunConfig::apply_seed() {
  dual.seed = seed;
  gan.seed = seed;
}

void RunConfig::validate() const {
  dual.validate();
  gan.validate();
  network.validate();
  metrics.validate();
}

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"dual",
           {{"iterations", dual.iterations},
            {"batch_size", dual.batch_size},
            {"lr_max", dual.lr_max},
            {"lr_min", dual.lr_min},
            {"adam_beta1", dual.adam_beta1},
            {"adam_beta2", dual.adam_beta2},
            {"adam_eps", dual.adam_eps},
            {"eval_every", dual.eval_every}}},
          {"gan",
           {{"iterations", gan.iterations},
            {"batch_size", gan.batch_size},
            {"lr", gan.lr},
            {"adam_beta1", gan.adam_beta1},
            {"adam_beta2", gan.adam_beta2},
            {"adam_eps", gan.adam_eps},
            {"disc_steps_per_gen_step", gan.disc_steps_per_gen_step},
            {"hidden", gan.hidden},
            {"initial_step_bias", gan.initial_step_bias}}},
          {"network",
           {{"hidden", network.hidden},
            {"group_size", network.group_size},
            {"method", w1ot::to_string(network.method)},
            {"bjorck_iters", network.bjorck_iters},
            {"bjorck_beta", network.bjorck_beta}}},
          {"metrics",
           {{"mmd_scales", metrics.mmd_scales},
            {"monotonicity_pairs", metrics.monotonicity_pairs},
            {"monotonicity_cos_tol", metrics.monotonicity_cos_tol}}}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Section top(j, "");
  top.integer("seed", c.seed);

  if (const json* d = top.child("dual")) {
    Section s(*d, "dual");
    s.integer("iterations", c.dual.iterations);
    s.integer("batch_size", c.dual.batch_size);
    s.real("lr_max", c.dual.lr_max);
    s.real("lr_min", c.dual.lr_min);
    s.real("adam_beta1", c.dual.adam_beta1);
    s.real("adam_beta2", c.dual.adam_beta2);
    s.real("adam_eps", c.dual.adam_eps);
    s.integer("eval_every", c.dual.eval_every);
    s.finish();
  }
  if (const json* g = top.child("gan")) {
    Section s(*g, "gan");
    s.integer("iterations", c.gan.iterations);
    s.integer("batch_size", c.gan.batch_size);
    s.real("lr", c.gan.lr);
    s.real("adam_beta1", c.gan.adam_beta1);
    s.real("adam_beta2", c.gan.adam_beta2);
    s.real("adam_eps", c.gan.adam_eps);
    s.integer("disc_steps_per_gen_step", c.gan.disc_steps_per_gen_step);
    s.sizes("hidden", c.gan.hidden);
    s.real("initial_step_bias", c.gan.initial_step_bias);
    s.finish();
  }
  if (const json* n = top.child("network")) {
    Section s(*n, "network");
    s.sizes("hidden", c.network.hidden);
    s.integer("group_size", c.network.group_size);
    std::string method = w1ot::to_string(c.network.method);
    s.text("method", method);
    c.network.method = ortho_method_from_string(method);
    s.integer("bjorck_iters", c.network.bjorck_iters);
    s.real("bjorck_beta", c.network.bjorck_beta);
    s.finish();
  }
  if (const json* m = top.child("metrics")) {
    Section s(*m, "metrics");
    s.reals("mmd_scales", c.metrics.mmd_scales);
    s.integer("monotonicity_pairs", c.metrics.monotonicity_pairs);
    s.real("monotonicity_cos_tol", c.metrics.monotonicity_cos_tol);
    s.finish();
  }
  top.finish();
  c.apply_seed();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file not found: '" + path.string() + "'");
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

}  // namespace w1ot
