// SPDX-License-Identifier: Apache-2.0
#include "w1ot/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "w1ot/checkpoint.hpp"
#include "w1ot/datasets.hpp"
#include "w1ot/error.hpp"
#include "w1ot/exact_ot.hpp"
#include "w1ot/metrics.hpp"
#include "w1ot/plot.hpp"
#include "w1ot/run_config.hpp"

namespace w1ot {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Dataset as_dataset(std::string name, Matrix m, std::vector<std::string> names) {
  Dataset ds;
  ds.name = std::move(name);
  ds.features = std::move(m);
  ds.feature_names = std::move(names);
  return ds;
}

void require_same_dim(const Dataset& a, const Dataset& b) {
  if (a.cols() != b.cols()) {
    throw UsageError("dimension mismatch: '" + a.name + "' has " + std::to_string(a.cols()) + " columns, '" +
                     b.name + "' has " + std::to_string(b.cols()));
  }
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// ---- commands --------------------------------------------------------------

struct ToygenArgs {
  std::string dataset;
  long n = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_toygen(const ToygenArgs& a, std::ostream& out, std::ostream& err) {
  if (a.n < 1) throw UsageError("toygen: --n must be >= 1");
  DatasetPair pair = generate_toy(a.dataset, a.n, a.seed);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_csv(pair.source, dir / "source.csv");
  write_csv(pair.target, dir / "target.csv");
  write_file_atomic(dir / "meta.json", pair.meta.dump(2) + "\n");
  err << "toygen: wrote " << a.n << " rows per side to " << dir.string() << "\n";
  out << json{{"source", (dir / "source.csv").string()}, {"target", (dir / "target.csv").string()},
              {"meta", (dir / "meta.json").string()}}
             .dump()
      << "\n";
  return kExitOk;
}

struct FitArgs {
  std::string source, target, config, out, history;
  std::optional<std::uint64_t> seed;
};

void write_histories(const W1OTFit& fit, const fs::path& dir) {
  fs::create_directories(dir);
  std::string dual = "iteration,dual_estimate,lr,elapsed_ms\n";
  char buf[128];
  for (const DualEvaluation& e : fit.dual_history.evaluations) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.3f\n", e.iteration, e.dual_estimate, e.lr, e.elapsed_ms);
    dual += buf;
  }
  write_file_atomic(dir / "dual_history.csv", dual);
  std::string gan = "iteration,gen_loss,disc_loss\n";
  for (std::size_t i = 0; i < fit.gan_history.gen_loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i + 1, fit.gan_history.gen_loss[i],
                  fit.gan_history.disc_loss[i]);
    gan += buf;
  }
  write_file_atomic(dir / "gan_history.csv", gan);
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  cfg.apply_seed();
  cfg.validate();
  const Dataset src = load_csv(a.source);
  const Dataset tgt = load_csv(a.target);
  require_same_dim(src, tgt);
  cfg.network.input_dim = src.cols();
  cfg.network.validate();

  err << "fit: " << src.rows() << " source rows, " << tgt.rows() << " target rows, dim " << src.cols() << "\n";
  const W1OTFit fit = fit_w1ot(src, tgt, cfg.dual, cfg.network, cfg.gan);
  const fs::path ckpt(a.out);
  ensure_parent(ckpt);
  make_checkpoint(cfg, fit).save(ckpt);
  if (!a.history.empty()) write_histories(fit, a.history);

  out << json{{"dual_estimate", fit.dual_history.final_dual_estimate()},
              {"dual_seconds", fit.dual_seconds},
              {"gan_seconds", fit.gan_seconds},
              {"checkpoint", ckpt.string()}}
             .dump()
      << "\n";
  return kExitOk;
}

struct TransportArgs {
  std::string model, input, out;
};

int cmd_transport(const TransportArgs& a, std::ostream&, std::ostream& err) {
  const Checkpoint ckpt = Checkpoint::load(a.model);
  const Dataset in = load_csv(a.input);
  if (in.cols() != ckpt.map.dim()) {
    throw UsageError("transport: input has " + std::to_string(in.cols()) + " columns, model expects " +
                     std::to_string(ckpt.map.dim()));
  }
  Dataset moved = in;
  moved.features = ckpt.map.transport(in.features);
  ensure_parent(a.out);
  write_csv(moved, a.out);
  err << "transport: wrote " << moved.rows() << " rows to " << a.out << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string pred, target, source, model, out;
  std::size_t pairs = 10000;
  std::uint64_t seed = 0;
};

json metrics_json(const Matrix& pred, const Matrix& target, const std::optional<double>& mono,
                  const std::optional<GradNormStats>& grads, std::uint64_t seed) {
  MetricsReport r = distribution_metrics(pred, target);
  r.seed = seed;
  json j = r.to_json();
  j["monotonicity_violation_rate"] = nullable(mono);
  j["grad_norm_mean"] = grads ? json(grads->mean) : json(nullptr);
  j["grad_norm_min"] = grads ? json(grads->min) : json(nullptr);
  j["grad_norm_max"] = grads ? json(grads->max) : json(nullptr);
  return j;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
  const Dataset pred = load_csv(a.pred);
  const Dataset tgt = load_csv(a.target);
  require_same_dim(pred, tgt);
  std::optional<Dataset> src;
  if (!a.source.empty()) {
    src = load_csv(a.source);
    require_same_dim(*src, tgt);
  }
  std::optional<GradNormStats> grads;
  if (!a.model.empty()) {
    const Checkpoint ckpt = Checkpoint::load(a.model);
    if (ckpt.map.dim() != tgt.cols()) throw UsageError("evaluate: model dimension does not match the data");
    grads = gradient_norm_stats(ckpt.map.potential(), src ? src->features : pred.features);
  }

  std::optional<double> mono;
  if (src && src->rows() == pred.rows() && src->rows() >= 2) {
    mono = monotonicity_violation_rate(src->features, pred.features, a.pairs, a.seed);
  }
  json report = {{"metrics", metrics_json(pred.features, tgt.features, mono, grads, a.seed)}};
  if (src) {
    std::optional<double> identity_mono;
    if (src->rows() >= 2) identity_mono = monotonicity_violation_rate(src->features, src->features, a.pairs, a.seed);
    report["identity_baseline"] = metrics_json(src->features, tgt.features, identity_mono, std::nullopt, a.seed);
  } else {
    report["identity_baseline"] = nullptr;
  }
  const std::string text = report.dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    ensure_parent(a.out);
    write_file_atomic(a.out, text);
  }
  return kExitOk;
}

struct AuditArgs {
  std::string model, data, out;
  std::size_t pairs = 10000;
  std::uint64_t seed = 0;
};

int cmd_audit(const AuditArgs& a, std::ostream& out, std::ostream&) {
  const Checkpoint ckpt = Checkpoint::load(a.model);
  const Dataset data = load_csv(a.data);
  if (data.cols() != ckpt.map.dim()) throw UsageError("audit: data dimension does not match the model");
  if (a.pairs == 0) throw UsageError("audit: --pairs must be >= 1");
  const PotentialNet& f = ckpt.map.potential();
  const LipschitzAudit lip = lipschitz_audit(f, a.pairs, Box::bounding(data.features), a.seed);
  const GradNormStats g = gradient_norm_stats(f, data.features);
  std::optional<double> mono;
  if (data.rows() >= 2) mono = monotonicity_violation_rate(ckpt.map, data.features, a.pairs, a.seed);
  json report = {{"lipschitz_max_ratio", lip.max_ratio},
                 {"lipschitz_pairs_used", lip.pairs_used},
                 {"grad_norm_mean", g.mean},
                 {"grad_norm_min", g.min},
                 {"grad_norm_max", g.max},
                 {"monotonicity_violation_rate", nullable(mono)},
                 {"pairs", a.pairs},
                 {"seed", a.seed}};
  out << report.dump() << "\n";
  if (!a.out.empty()) {
    ensure_parent(a.out);
    write_file_atomic(a.out, report.dump(2) + "\n");
  }
  return kExitOk;
}

struct OracleArgs {
  std::string source, target, model, assignment;
};

int cmd_oracle(const OracleArgs& a, std::ostream& out, std::ostream&) {
  const Dataset src = load_csv(a.source);
  const Dataset tgt = load_csv(a.target);
  require_same_dim(src, tgt);
  if (src.rows() != tgt.rows()) {
    throw UsageError("oracle: exact matching needs equal row counts (" + std::to_string(src.rows()) + " vs " +
                     std::to_string(tgt.rows()) + "); subsample one side first");
  }
  json report = {{"n", src.rows()}, {"dim", src.cols()}};
  std::optional<MatchingResult> match;
  if (src.cols() == 1 && (src.rows() > kMatchingMaxRows) && a.assignment.empty()) {
    std::vector<double> x(src.features.data(), src.features.data() + src.rows());
    std::vector<double> y(tgt.features.data(), tgt.features.data() + tgt.rows());
    report["w1"] = w1_1d(std::move(x), std::move(y));
    report["method"] = "sorted_1d";
  } else {
    if (src.rows() > kMatchingMaxRows) {
      throw UsageError("oracle: exact matching is limited to " + std::to_string(kMatchingMaxRows) + " rows, got " +
                       std::to_string(src.rows()));
    }
    match = w1_matching(src.features, tgt.features);
    report["w1"] = match->cost;
    report["method"] = "assignment";
  }
  if (!a.model.empty()) {
    const Checkpoint ckpt = Checkpoint::load(a.model);
    if (ckpt.map.dim() != src.cols()) throw UsageError("oracle: model dimension does not match the data");
    const double est = dual_estimate(ckpt.map.potential(), src.features, tgt.features);
    report["dual_estimate"] = est;
    report["dual_gap"] = report["w1"].get<double>() - est;
  }
  if (!a.assignment.empty()) {
    Matrix m(src.rows(), 2);
    for (Index i = 0; i < src.rows(); ++i) {
      m(i, 0) = static_cast<double>(i);
      m(i, 1) = static_cast<double>(match->assignment[static_cast<std::size_t>(i)]);
    }
    ensure_parent(a.assignment);
    write_csv(as_dataset("assignment", std::move(m), {"source_index", "target_index"}), a.assignment);
  }
  out << report.dump() << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::vector<Index> dims{2, 48, 1000};
  long iters = 10000;
  Index n = 256;
  std::uint64_t seed = 0;
  std::string method = "cayley";
  std::string out;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  if (a.dims.empty()) throw UsageError("bench: --dims must list at least one dimension");
  if (a.iters < 1) throw UsageError("bench: --iters must be >= 1");
  PotentialNetConfig net;
  net.method = ortho_method_from_string(a.method);
  const std::vector<BenchRow> rows = bench_dual(a.dims, a.iters, a.n, a.seed, net, &err);
  std::string csv = "dim,ms_per_1000_iters\n";
  char buf[64];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.3f\n", static_cast<long>(r.dim), r.ms_per_1000_iters);
    csv += buf;
  }
  out << csv;
  if (!a.out.empty()) {
    ensure_parent(a.out);
    write_file_atomic(a.out, csv);
  }
  return kExitOk;
}

struct PlotArgs {
  std::string source, target, pred, out;
  bool rays = false;
};

int cmd_plot(const PlotArgs& a, std::ostream&, std::ostream& err) {
  const Dataset src = load_csv(a.source);
  const Dataset tgt = load_csv(a.target);
  Matrix pred;
  if (!a.pred.empty()) pred = load_csv(a.pred).features;
  PlotOptions opts;
  opts.rays = a.rays;
  const std::string svg = render_svg(src.features, tgt.features, pred, opts);
  ensure_parent(a.out);
  write_file_atomic(a.out, svg);
  err << "plot: wrote " << a.out << "\n";
  return kExitOk;
}

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace

std::vector<BenchRow> bench_dual(const std::vector<Index>& dims, long iters, Index n, std::uint64_t seed,
                                 const PotentialNetConfig& net_cfg, std::ostream* log) {
  std::vector<BenchRow> rows;
  for (Index d : dims) {
    if (d < 1) throw UsageError("bench: dimensions must be >= 1");
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(d)));
    Matrix src(n, d), tgt(n, d);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < d; ++j) src(i, j) = rng.normal();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < d; ++j) tgt(i, j) = rng.normal(1.0, 1.0);

    DualTrainConfig cfg;
    cfg.iterations = iters;
    cfg.eval_every = iters;
    cfg.seed = seed;
    PotentialNetConfig net = net_cfg;
    net.input_dim = d;
    const auto t0 = std::chrono::steady_clock::now();
    train_potential(src, tgt, cfg, net);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back({d, ms / static_cast<double>(iters) * 1000.0});
    if (log) *log << "bench: dim " << d << " took " << ms / 1000.0 << " s for " << iters << " iterations\n";
  }
  return rows;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural W1 optimal transport: fit, apply and audit transport maps"};
  app.name("w1ot");
  app.require_subcommand(1);

  ToygenArgs toygen;
  auto* c_toygen = app.add_subcommand("toygen", "Generate a toy source/target pair");
  c_toygen->add_option("--dataset", toygen.dataset, "bookshelf | circles | swiss_roll | moons")->required();
  c_toygen->add_option("--n", toygen.n, "Rows per side")->required();
  c_toygen->add_option("--seed", toygen.seed, "Random seed");
  c_toygen->add_option("--out", toygen.out, "Output directory")->required();

  FitArgs fit;
  std::uint64_t fit_seed = 0;
  auto* c_fit = app.add_subcommand("fit", "Train the potential and the step-size network");
  c_fit->add_option("--source", fit.source, "Source CSV")->required();
  c_fit->add_option("--target", fit.target, "Target CSV")->required();
  c_fit->add_option("--config", fit.config, "Run configuration JSON");
  auto* fit_seed_opt = c_fit->add_option("--seed", fit_seed, "Override the configured seed");
  c_fit->add_option("--out", fit.out, "Checkpoint path")->required();
  c_fit->add_option("--history", fit.history, "Directory for dual/GAN history CSVs");

  TransportArgs transport;
  auto* c_transport = app.add_subcommand("transport", "Apply a fitted map to a CSV");
  c_transport->add_option("--model", transport.model, "Checkpoint")->required();
  c_transport->add_option("--input", transport.input, "Input CSV")->required();
  c_transport->add_option("--out", transport.out, "Output CSV")->required();

  EvaluateArgs evaluate;
  auto* c_evaluate = app.add_subcommand("evaluate", "Distribution metrics of predictions against a target");
  c_evaluate->add_option("--pred", evaluate.pred, "Predicted CSV")->required();
  c_evaluate->add_option("--target", evaluate.target, "Target CSV")->required();
  c_evaluate->add_option("--source", evaluate.source, "Source CSV (adds the identity baseline)");
  c_evaluate->add_option("--model", evaluate.model, "Checkpoint (adds gradient-norm statistics)");
  c_evaluate->add_option("--pairs", evaluate.pairs, "Pairs for the monotonicity audit");
  c_evaluate->add_option("--seed", evaluate.seed, "Seed for pair sampling");
  c_evaluate->add_option("--out", evaluate.out, "Output JSON (default: standard output)");

  AuditArgs audit;
  auto* c_audit = app.add_subcommand("audit", "Lipschitz, gradient-norm and monotonicity checks");
  c_audit->add_option("--model", audit.model, "Checkpoint")->required();
  c_audit->add_option("--data", audit.data, "CSV whose bounding box is sampled")->required();
  c_audit->add_option("--pairs", audit.pairs, "Sampled pairs");
  c_audit->add_option("--seed", audit.seed, "Seed for pair sampling");
  c_audit->add_option("--out", audit.out, "Also write the report to this JSON file");

  OracleArgs oracle;
  auto* c_oracle = app.add_subcommand("oracle", "Exact W1 by optimal assignment");
  c_oracle->add_option("--source", oracle.source, "Source CSV")->required();
  c_oracle->add_option("--target", oracle.target, "Target CSV")->required();
  c_oracle->add_option("--model", oracle.model, "Checkpoint; adds the dual gap");
  c_oracle->add_option("--assignment", oracle.assignment, "Write the optimal assignment CSV");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Dual-stage timing across input dimensions");
  c_bench->add_option("--dims", bench.dims, "Comma-separated dimensions")->delimiter(',');
  c_bench->add_option("--iters", bench.iters, "Training iterations per dimension");
  c_bench->add_option("--n", bench.n, "Rows per side")->check(CLI::PositiveNumber);
  c_bench->add_option("--seed", bench.seed, "Random seed");
  c_bench->add_option("--method", bench.method, "bjorck | cayley");
  c_bench->add_option("--out", bench.out, "Also write the CSV here");

  PlotArgs plot;
  auto* c_plot = app.add_subcommand("plot", "SVG scatter plot of 2-D point sets");
  c_plot->add_option("--source", plot.source, "Source CSV")->required();
  c_plot->add_option("--target", plot.target, "Target CSV")->required();
  c_plot->add_option("--pred", plot.pred, "Transported CSV");
  c_plot->add_flag("--rays", plot.rays, "Draw x -> T(x) segments");
  c_plot->add_option("--out", plot.out, "Output SVG")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (c_toygen->parsed()) return guarded([&] { return cmd_toygen(toygen, out, err); }, err);
  if (c_fit->parsed()) {
    if (fit_seed_opt->count() > 0) fit.seed = fit_seed;
    return guarded([&] { return cmd_fit(fit, out, err); }, err);
  }
  if (c_transport->parsed()) return guarded([&] { return cmd_transport(transport, out, err); }, err);
  if (c_evaluate->parsed()) return guarded([&] { return cmd_evaluate(evaluate, out, err); }, err);
  if (c_audit->parsed()) return guarded([&] { return cmd_audit(audit, out, err); }, err);
  if (c_oracle->parsed()) return guarded([&] { return cmd_oracle(oracle, out, err); }, err);
  if (c_bench->parsed()) return guarded([&] { return cmd_bench(bench, out, err); }, err);
  if (c_plot->parsed()) return guarded([&] { return cmd_plot(plot, out, err); }, err);
  return kExitUsage;
}

}  // namespace w1ot
