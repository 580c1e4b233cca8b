// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion on
// standard output and progress on standard error; exits non-zero if any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "w1ot/cli.hpp"
#include "w1ot/datasets.hpp"
#include "w1ot/dual_training.hpp"
#include "w1ot/error.hpp"
#include "w1ot/exact_ot.hpp"
#include "w1ot/lipschitz_net.hpp"
#include "w1ot/metrics.hpp"
#include "w1ot/runtime.hpp"
#include "w1ot/stepsize_gan.hpp"

using namespace w1ot;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
  }

  std::string text() const {
    std::string out = detail.str();
    for (const std::string& f : failures) out += " [fail: " + f + "]";
    return out;
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void progress(const std::string& msg) { std::cerr << "acceptance: " << msg << std::endl; }

PotentialNetConfig net_for(Index d, OrthoMethod method = OrthoMethod::cayley) {
  PotentialNetConfig cfg;
  cfg.input_dim = d;
  cfg.method = method;
  return cfg;
}

DualTrainConfig dual_defaults(std::uint64_t seed) {
  DualTrainConfig cfg;
  cfg.seed = seed;
  return cfg;
}

GanTrainConfig gan_defaults(std::uint64_t seed) {
  GanTrainConfig cfg;
  cfg.seed = seed;
  return cfg;
}

double max_layer_defect(const PotentialNet& f) {
  double worst = 0.0;
  for (const auto& layer : f.layers()) worst = std::max(worst, orthonormality_defect(layer.effective_weight()));
  return worst;
}

double audit_ratio(const PotentialNet& f, const Matrix& data, std::uint64_t seed) {
  return lipschitz_audit(f, 10000, Box::bounding(data, 0.5), seed).max_ratio;
}

// ---- shared fits -------------------------------------------------------------

struct BookshelfRun {
  DatasetPair data;
  W1OTFit fit;
  double seconds;
};

struct Shared {
  std::vector<BookshelfRun> bookshelf;
  // Trained dual potentials (default method) with their training data.
  std::vector<std::pair<PotentialNet, Matrix>> trained_default;
  std::vector<std::pair<PotentialNet, Matrix>> trained_bjorck;
};

Shared shared;

const std::vector<BookshelfRun>& bookshelf_runs() {
  if (!shared.bookshelf.empty()) return shared.bookshelf;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DatasetPair data = gen_bookshelf(1024, seed);
    const auto start = Clock::now();
    W1OTFit fit = fit_w1ot(data.source, data.target, dual_defaults(seed), net_for(2), gan_defaults(seed));
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    progress("bookshelf seed " + std::to_string(seed) + ": dual " + fmt(fit.dual_history.final_dual_estimate()) +
             " in " + fmt(secs, 3) + " s");
    shared.trained_default.emplace_back(fit.map.potential(), data.source.features);
    shared.bookshelf.push_back({std::move(data), std::move(fit), secs});
  }
  return shared.bookshelf;
}

// ---- criteria ------------------------------------------------------------------

void c1_dual_accuracy(Outcome& o) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, slowest = 0.0;
  for (const BookshelfRun& r : bookshelf_runs()) {
    const double est = r.fit.dual_history.final_dual_estimate();
    lo = std::min(lo, est);
    hi = std::max(hi, est);
    slowest = std::max(slowest, r.seconds);
    o.require(est >= 1.90 && est <= 2.05, "estimate " + fmt(est) + " outside [1.90, 2.05]");
    o.require(r.seconds <= 300.0, "run took " + fmt(r.seconds, 3) + " s");
  }
  o.detail << "5 seeds, dual estimate in [" << fmt(lo) << ", " << fmt(hi) << "], slowest run " << fmt(slowest, 3)
           << " s";
}

void c2_weak_duality(Outcome& o) {
  double worst_excess = -std::numeric_limits<double>::infinity();
  int checks = 0;
  for (const std::string name : {"bookshelf", "circles", "swiss_roll", "moons"}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const DatasetPair p = generate_toy(name, 256, seed);
      const Matrix& x = p.source.features;
      const Matrix& y = p.target.features;
      const double w1 = w1_matching(x, y).cost;
      const double slack = 1e-3 * diameter(x, y);
      int local = 0;
      PotentialFit fit = train_potential(x, y, dual_defaults(seed), net_for(2),
                                         [&](const DualEvaluation& ev, const PotentialNet&) {
                                           if (ev.iteration % 1000 != 0) return;
                                           ++local;
                                           const double excess = ev.dual_estimate - w1;
                                           worst_excess = std::max(worst_excess, excess / slack);
                                           o.require(excess <= slack, name + " seed " + std::to_string(seed) +
                                                                          " iteration " +
                                                                          std::to_string(ev.iteration) +
                                                                          " exceeds oracle by " + fmt(excess));
                                         });
      o.require(local == 10, name + ": expected 10 checkpoints, saw " + std::to_string(local));
      checks += local;
      progress("weak duality " + name + " seed " + std::to_string(seed) + ": final " +
               fmt(fit.history.final_dual_estimate()) + " vs oracle " + fmt(w1));
      shared.trained_default.emplace_back(std::move(fit.potential), x);
    }
  }
  o.detail << checks << " checkpoints over 4 datasets x 3 seeds, worst (estimate - oracle) / slack = "
           << fmt(worst_excess);
}

void train_bjorck_potentials() {
  if (!shared.trained_bjorck.empty()) return;
  for (const std::string name : {"moons", "bookshelf"}) {
    const DatasetPair p = generate_toy(name, 256, 0);
    const auto start = Clock::now();
    PotentialFit fit = train_potential(p.source, p.target, dual_defaults(0), net_for(2, OrthoMethod::bjorck));
    progress("bjorck " + name + ": dual " + fmt(fit.history.final_dual_estimate()) + " in " +
             fmt(std::chrono::duration<double>(Clock::now() - start).count(), 3) + " s");
    shared.trained_bjorck.emplace_back(std::move(fit.potential), p.source.features);
  }
}

void c3_lipschitz(Outcome& o) {
  bookshelf_runs();
  train_bjorck_potentials();
  double untrained = 0.0, trained_c = 0.0, trained_b = 0.0;
  int nets = 0;
  for (const OrthoMethod method : {OrthoMethod::cayley, OrthoMethod::bjorck}) {
    for (const Index d : {2, 10}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(mix_seed(seed, d));
        const Matrix data = testing::randn(64, d, rng, 2.0);
        const double r = audit_ratio(PotentialNet(net_for(d, method), seed), data, seed);
        untrained = std::max(untrained, r);
        o.require(r <= 1.001, "untrained " + to_string(method) + " d=" + std::to_string(d) + " ratio " + fmt(r, 8));
        ++nets;
      }
    }
  }
  for (std::size_t k = 0; k < shared.trained_default.size(); ++k) {
    const auto& [f, data] = shared.trained_default[k];
    const double r = audit_ratio(f, data, k);
    trained_c = std::max(trained_c, r);
    o.require(r <= 1.001, "trained cayley net " + std::to_string(k) + " ratio " + fmt(r, 8));
    ++nets;
  }
  for (std::size_t k = 0; k < shared.trained_bjorck.size(); ++k) {
    const auto& [f, data] = shared.trained_bjorck[k];
    const double r = audit_ratio(f, data, k);
    trained_b = std::max(trained_b, r);
    o.require(r <= 1.001, "trained bjorck net " + std::to_string(k) + " ratio " + fmt(r, 8));
    ++nets;
  }
  o.detail << nets << " networks x 10^4 pairs; max ratio untrained " << fmt(untrained, 7) << ", trained cayley "
           << fmt(trained_c, 7) << ", trained bjorck " << fmt(trained_b, 7);
}

void c4_defect(Outcome& o) {
  bookshelf_runs();
  train_bjorck_potentials();
  double worst_c = 0.0, worst_b = 0.0;
  for (const auto& [f, data] : shared.trained_default) worst_c = std::max(worst_c, max_layer_defect(f));
  for (const auto& [f, data] : shared.trained_bjorck) {
    worst_b = std::max(worst_b, max_layer_defect(f));
    for (const auto& layer : f.layers()) o.require(layer.bjorck_iters >= 15, "bjorck iterations below 15");
  }
  o.require(worst_c <= 1e-3, "cayley defect " + fmt(worst_c));
  o.require(worst_b <= 1e-3, "bjorck defect " + fmt(worst_b));
  o.detail << shared.trained_default.size() << " cayley and " << shared.trained_bjorck.size()
           << " bjorck trained nets; max layer defect cayley " << fmt(worst_c, 3) << ", bjorck " << fmt(worst_b, 3);
}

void c5_monotonicity(Outcome& o) {
  Matrix markers(5, 2);
  for (Index i = 0; i < 5; ++i) {
    markers(i, 0) = 0.1 + 0.2 * static_cast<double>(i);
    markers(i, 1) = 0.0;
  }
  int ordered = 0;
  for (const BookshelfRun& r : bookshelf_runs()) {
    const Matrix t = r.fit.map.transport(markers);
    bool ok = true;
    for (Index i = 1; i < 5; ++i) ok = ok && t(i, 0) > t(i - 1, 0);
    ordered += ok;
  }
  o.require(ordered == 5, "markers reordered in " + std::to_string(5 - ordered) + " seeds");

  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const DatasetPair c = gen_circles(256, 0.02, seed);
    const W1OTFit fit = fit_w1ot(c.source, c.target, dual_defaults(seed), net_for(2), gan_defaults(seed));
    const double rate = monotonicity_violation_rate(fit.map, c.source.features, 10000, seed);
    progress("circles seed " + std::to_string(seed) + ": violation rate " + fmt(rate));
    worst = std::max(worst, rate);
    o.require(rate <= 0.01, "circles seed " + std::to_string(seed) + " violation rate " + fmt(rate));
    shared.trained_default.emplace_back(fit.map.potential(), c.source.features);
  }
  o.detail << "bookshelf markers ordered in " << ordered << "/5 seeds; circles worst violation rate " << fmt(worst)
           << " over 10^4 pairs, 3 seeds";
}

void c6_alignment(Outcome& o) {
  for (const std::string name : {"moons", "swiss_roll"}) {
    double worst_ratio = 0.0, worst_r2 = 1.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const DatasetPair p = generate_toy(name, 256, seed);
      const W1OTFit fit = fit_w1ot(p.source, p.target, dual_defaults(seed), net_for(2), gan_defaults(seed));
      const Matrix tx = fit.map.transport(p.source.features);
      const double ratio = mmd_rbf(tx, p.target.features) / mmd_rbf(p.source.features, p.target.features);
      const double r2 = r2_feature_means(tx, p.target.features);
      progress(name + " seed " + std::to_string(seed) + ": mmd ratio " + fmt(ratio) + ", r2 " + fmt(r2));
      worst_ratio = std::max(worst_ratio, ratio);
      worst_r2 = std::min(worst_r2, r2);
      o.require(ratio <= 0.1, name + " seed " + std::to_string(seed) + " mmd ratio " + fmt(ratio));
      o.require(r2 >= 0.95, name + " seed " + std::to_string(seed) + " r2 " + fmt(r2));
      shared.trained_default.emplace_back(fit.map.potential(), p.source.features);
    }
    o.detail << name << ": worst mmd ratio " << fmt(worst_ratio) << ", worst r2 " << fmt(worst_r2, 6) << "; ";
  }
  o.detail << "3 seeds each";
}

void c7_grad_norm(Outcome& o) {
  const auto& runs = bookshelf_runs();
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < 3; ++k) {
    const GradNormStats s = gradient_norm_stats(runs[k].fit.map.potential(), runs[k].data.source.features);
    worst = std::min(worst, s.mean);
    o.require(s.mean >= 0.8, "seed " + std::to_string(k) + " mean grad norm " + fmt(s.mean));
  }
  o.detail << "bookshelf, 3 seeds, lowest mean gradient norm " << fmt(worst, 6);
}

void c8_oracle(Outcome& o) {
  double worst_bf = 0.0, worst_1d = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(mix_seed(seed, 8));
    const Matrix x = testing::randn(7, 2, rng);
    const Matrix y = testing::randn(7, 2, rng, 1.5);
    worst_bf = std::max(worst_bf, std::abs(w1_matching(x, y).cost - testing::brute_force_w1(x, y)));
  }
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(mix_seed(seed, 9));
    const Index n = 10 + static_cast<Index>(seed) * 10;
    const Matrix x = testing::randn(n, 1, rng);
    const Matrix y = testing::randn(n, 1, rng, 2.0);
    const double exact = w1_1d(std::vector<double>(x.data(), x.data() + n), std::vector<double>(y.data(), y.data() + n));
    worst_1d = std::max(worst_1d, std::abs(w1_matching(x, y).cost - exact));
  }
  o.require(worst_bf <= 1e-9, "brute-force mismatch " + fmt(worst_bf));
  o.require(worst_1d <= 1e-10, "1-D mismatch " + fmt(worst_1d));
  o.detail << "50 brute-force instances, max |diff| " << fmt(worst_bf, 3) << "; 50 1-D instances, max |diff| "
           << fmt(worst_1d, 3);
}

void c9_autodiff(Outcome& o) {
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : testing::grad_cases()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const double err = testing::run_grad_case(c, seed);
      if (err > worst) {
        worst = err;
        worst_name = c.name;
      }
      o.require(err <= 1e-5, c.name + " seed " + std::to_string(seed) + " error " + fmt(err));
    }
  }
  o.detail << testing::grad_cases().size() << " cases x 20 seeds, worst relative error " << fmt(worst, 3) << " ("
           << worst_name << ")";
}

void c10_scalability(Outcome& o) {
  const std::vector<BenchRow> rows = bench_dual({2, 48, 1000}, 10000, 256, 0, PotentialNetConfig{}, &std::cerr);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    o.require(rows[k].ms_per_1000_iters >= rows[k - 1].ms_per_1000_iters,
              "time not monotone between dims " + std::to_string(rows[k - 1].dim) + " and " +
                  std::to_string(rows[k].dim));
  }
  const double total_min = rows.back().ms_per_1000_iters * 10.0 / 60000.0;
  o.require(total_min < 30.0, "dim 1000 took " + fmt(total_min) + " min");
  o.detail << "ms per 1000 iterations:";
  for (const BenchRow& r : rows) o.detail << " d=" << r.dim << " " << fmt(r.ms_per_1000_iters, 5);
  o.detail << "; 10^4 iterations at d=1000 in " << fmt(total_min, 3) << " min";
}

// Drops the last (timing) column of a CSV.
std::string strip_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, outp;
  while (std::getline(in, line)) outp += line.substr(0, line.rfind(',')) + "\n";
  return outp;
}

void c11_determinism(Outcome& o) {
  // In-memory histories.
  const DatasetPair m = gen_moons(256, 0.05, 7);
  DualTrainConfig dual = dual_defaults(7);
  dual.iterations = 3000;
  const PotentialFit a = train_potential(m.source, m.target, dual, net_for(2));
  const PotentialFit b = train_potential(m.source, m.target, dual, net_for(2));
  bool same_history = a.history.batch_dual == b.history.batch_dual && a.history.lr == b.history.lr &&
                      a.history.evaluations.size() == b.history.evaluations.size();
  for (std::size_t k = 0; same_history && k < a.history.evaluations.size(); ++k)
    same_history = a.history.evaluations[k].dual_estimate == b.history.evaluations[k].dual_estimate;
  o.require(same_history, "train history differs");

  // Full command-line pipeline twice.
  const fs::path root = fs::temp_directory_path() / "w1ot_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ostringstream sink;
  auto cli = [&](std::vector<std::string> args) {
    std::ostringstream out;
    const int code = run_cli(args, out, sink);
    if (code != 0) o.require(false, "command failed: " + args[0]);
    return out.str();
  };
  cli({"toygen", "--dataset", "moons", "--n", "256", "--seed", "7", "--out", (root / "data").string()});
  write_file_atomic(root / "config.json", R"({"seed": 7, "dual": {"iterations": 3000}, "gan": {"iterations": 2000}})");
  std::map<std::string, std::string> outputs[2];
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = root / ("run" + std::to_string(rep));
    const std::string src = (root / "data" / "source.csv").string();
    const std::string tgt = (root / "data" / "target.csv").string();
    const std::string model = (dir / "model.json").string();
    cli({"fit", "--source", src, "--target", tgt, "--config", (root / "config.json").string(), "--out", model,
         "--history", (dir / "hist").string()});
    cli({"transport", "--model", model, "--input", src, "--out", (dir / "pred.csv").string()});
    auto& out = outputs[rep];
    out["checkpoint"] = read_file(model);
    out["dual history"] = strip_last_column(read_file(dir / "hist" / "dual_history.csv"));
    out["gan history"] = read_file(dir / "hist" / "gan_history.csv");
    out["transport"] = read_file(dir / "pred.csv");
    out["evaluate"] = cli({"evaluate", "--pred", (dir / "pred.csv").string(), "--target", tgt, "--source", src,
                           "--model", model});
    out["audit"] = cli({"audit", "--model", model, "--data", src});
    out["oracle"] = cli({"oracle", "--source", src, "--target", tgt, "--model", model});
  }
  int identical = 0;
  for (const auto& [key, value] : outputs[0]) {
    const bool same = value == outputs[1].at(key) && !value.empty();
    identical += same;
    o.require(same, key + " differs between runs");
  }
  fs::remove_all(root);
  o.detail << "train history identical: " << (same_history ? "yes" : "no") << "; " << identical << "/"
           << outputs[0].size() << " CLI outputs byte-identical (checkpoint, histories, transport, metrics)";
}

}  // namespace

int main() {
  configure_allocator();
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"dual accuracy (bookshelf)", c1_dual_accuracy},
      {"weak duality (toy sets)", c2_weak_duality},
      {"Lipschitz hard constraint", c3_lipschitz},
      {"orthonormality defect", c4_defect},
      {"monotonicity", c5_monotonicity},
      {"distribution alignment", c6_alignment},
      {"gradient-norm concentration", c7_grad_norm},
      {"oracle correctness", c8_oracle},
      {"autodiff soundness", c9_autodiff},
      {"scalability", c10_scalability},
      {"determinism", c11_determinism},
  };
  // Criteria 3 and 4 audit the potentials trained by 5 and 6 as well, so
  // those run first; output keeps the numbered order.
  const std::vector<std::size_t> run_order = {0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 10};
  std::vector<Outcome> outcomes(criteria.size());
  std::vector<double> seconds(criteria.size());
  for (std::size_t k : run_order) {
    progress("criterion " + std::to_string(k + 1) + ": " + criteria[k].first);
    const auto start = Clock::now();
    try {
      criteria[k].second(outcomes[k]);
    } catch (const std::exception& e) {
      outcomes[k].pass = false;
      outcomes[k].detail << " [error: " << e.what() << "]";
    }
    seconds[k] = std::chrono::duration<double>(Clock::now() - start).count();
  }
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    failed += !outcomes[k].pass;
    std::cout << (outcomes[k].pass ? "PASS" : "FAIL") << " " << k + 1 << ". " << criteria[k].first << ": "
              << outcomes[k].text() << " (" << fmt(seconds[k], 3) << " s)" << std::endl;
  }
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
  return failed == 0 ? 0 : 1;
}
