// SPDX-License-Identifier: Apache-2.0
#include "w1ot/checkpoint.hpp"

#include <string>
#include <vector>

#include "w1ot/datasets.hpp"
#include "w1ot/error.hpp"

namespace w1ot {

using nlohmann::json;

namespace {

json flat(const Matrix& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
  return a;
}

Matrix unflat(const json& a, Index rows, Index cols, const std::string& what) {
  if (!a.is_array() || a.size() != static_cast<std::size_t>(rows * cols)) {
    throw ConfigError("checkpoint: '" + what + "' must hold " + std::to_string(rows * cols) + " numbers");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const json& v = a[static_cast<std::size_t>(i * cols + j)];
      if (!v.is_number()) throw ConfigError("checkpoint: '" + what + "' holds a non-number");
      m(i, j) = v.get<double>();
    }
  }
  return m;
}

Index dim(const json& layer, const char* key, const std::string& where) {
  auto it = layer.find(key);
  if (it == layer.end() || !it->is_number_integer() || it->get<Index>() < 1) {
    throw ConfigError("checkpoint: " + where + " needs a positive integer '" + key + "'");
  }
  return it->get<Index>();
}

const json& field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError("checkpoint: " + where + " is missing '" + key + "'");
  return *it;
}

json dense_to_json(const DenseNet& net) {
  json layers = json::array();
  for (const DenseLayer& l : net.layers()) {
    layers.push_back({{"in", l.weight.value.cols()},
                      {"out", l.weight.value.rows()},
                      {"weight", flat(l.weight.value)},
                      {"bias", flat(l.bias.value)}});
  }
  return {{"layers", layers}};
}

DenseNet dense_from_json(const json& j, const std::string& name) {
  const json& layers = field(j, "layers", name);
  if (!layers.is_array() || layers.empty()) throw ConfigError("checkpoint: " + name + ".layers must be non-empty");
  std::vector<DenseLayer> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string where = name + ".layers[" + std::to_string(l) + "]";
    const Index in = dim(layers[l], "in", where);
    const Index rows = dim(layers[l], "out", where);
    DenseLayer layer;
    layer.weight.name = name + "." + std::to_string(l) + ".weight";
    layer.weight.value = unflat(field(layers[l], "weight", where), rows, in, where + ".weight");
    layer.bias.name = name + "." + std::to_string(l) + ".bias";
    layer.bias.value = unflat(field(layers[l], "bias", where), 1, rows, where + ".bias");
    out.push_back(std::move(layer));
  }
  try {
    return DenseNet(std::move(out));
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace

json Checkpoint::to_json() const {
  const PotentialNet& f = map.potential();
  json layers = json::array();
  for (const OrthonormalLayer& l : f.layers()) {
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"method", to_string(l.method)},
                      {"raw_weight", flat(l.weight.value)},
                      {"bias", flat(l.bias.value)}});
  }
  json j = {{"format_version", kCheckpointFormatVersion},
            {"seed", run_config.seed},
            {"run_config", run_config.to_json()},
            {"input_dim", f.config().input_dim},
            {"direction_floor", map.direction_floor()},
            {"potential", {{"layers", layers}}},
            {"stepsize_net", dense_to_json(map.step().net())},
            {"training",
             {{"final_dual_estimate", summary.final_dual_estimate},
              {"dual_iterations", summary.dual_iterations},
              {"final_gen_loss", summary.final_gen_loss},
              {"final_disc_loss", summary.final_disc_loss},
              {"gan_iterations", summary.gan_iterations}}}};
  j["discriminator"] = discriminator ? dense_to_json(discriminator->net()) : json(nullptr);
  return j;
}

Checkpoint Checkpoint::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("checkpoint: top level must be an object");
  const json& version = field(j, "format_version", "checkpoint");
  if (!version.is_number_integer() || version.get<int>() != kCheckpointFormatVersion) {
    throw ConfigError("checkpoint: unsupported format_version " + version.dump() + " (expected " +
                      std::to_string(kCheckpointFormatVersion) + ")");
  }
  RunConfig cfg = RunConfig::from_json(field(j, "run_config", "checkpoint"));

  PotentialNetConfig net_cfg = cfg.network;
  net_cfg.input_dim = dim(j, "input_dim", "checkpoint");
  net_cfg.validate();

  const json& layers = field(field(j, "potential", "checkpoint"), "layers", "potential");
  if (!layers.is_array() || layers.size() != net_cfg.hidden.size() + 1) {
    throw ConfigError("checkpoint: potential.layers does not match network.hidden");
  }
  std::vector<OrthonormalLayer> stored;
  Index expected_in = net_cfg.input_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string where = "potential.layers[" + std::to_string(l) + "]";
    const Index in = dim(layers[l], "in", where);
    const Index out = dim(layers[l], "out", where);
    const Index expected_out = l < net_cfg.hidden.size() ? net_cfg.hidden[l] : 1;
    if (in != expected_in || out != expected_out) throw ConfigError("checkpoint: " + where + " has the wrong shape");
    const json& method = field(layers[l], "method", where);
    if (!method.is_string()) throw ConfigError("checkpoint: " + where + ".method must be a string");
    OrthonormalLayer layer;
    layer.method = ortho_method_from_string(method.get<std::string>());
    layer.bjorck_iters = net_cfg.bjorck_iters;
    layer.bjorck_beta = net_cfg.bjorck_beta;
    layer.weight.name = "potential." + std::to_string(l) + ".weight";
    layer.weight.value = unflat(field(layers[l], "raw_weight", where), out, in, where + ".raw_weight");
    layer.bias.name = "potential." + std::to_string(l) + ".bias";
    layer.bias.value = unflat(field(layers[l], "bias", where), 1, out, where + ".bias");
    stored.push_back(std::move(layer));
    expected_in = out;
  }

  DenseNet step = dense_from_json(field(j, "stepsize_net", "checkpoint"), "stepsize_net");
  if (step.input_dim() != net_cfg.input_dim) throw ConfigError("checkpoint: stepsize_net input width mismatch");
  const json& floor = field(j, "direction_floor", "checkpoint");
  if (!floor.is_number() || !(floor.get<double>() > 0.0)) {
    throw ConfigError("checkpoint: direction_floor must be positive");
  }

  Checkpoint c{cfg,
               TransportMap(PotentialNet(net_cfg, std::move(stored)), StepSizeNet(std::move(step)),
                            floor.get<double>()),
               std::nullopt,
               {}};
  if (auto it = j.find("discriminator"); it != j.end() && !it->is_null()) {
    c.discriminator = Discriminator(dense_from_json(*it, "discriminator"));
  }
  if (auto it = j.find("training"); it != j.end()) {
    const json& t = *it;
    c.summary.final_dual_estimate = t.value("final_dual_estimate", 0.0);
    c.summary.dual_iterations = t.value("dual_iterations", 0L);
    c.summary.final_gen_loss = t.value("final_gen_loss", 0.0);
    c.summary.final_disc_loss = t.value("final_disc_loss", 0.0);
    c.summary.gan_iterations = t.value("gan_iterations", 0L);
  }
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json().dump(1) + "\n"); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("checkpoint not found: '" + path.string() + "'");
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

Checkpoint make_checkpoint(const RunConfig& cfg, const W1OTFit& fit) {
  TrainingSummary s;
  s.final_dual_estimate = fit.dual_history.final_dual_estimate();
  s.dual_iterations = static_cast<long>(fit.dual_history.completed_iterations());
  if (!fit.gan_history.gen_loss.empty()) {
    s.final_gen_loss = fit.gan_history.gen_loss.back();
    s.final_disc_loss = fit.gan_history.disc_loss.back();
  }
  s.gan_iterations = static_cast<long>(fit.gan_history.gen_loss.size());
  return Checkpoint{cfg, fit.map, fit.discriminator, s};
}

}  // namespace w1ot
