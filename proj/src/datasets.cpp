// SPDX-License-Identifier: Apache-2.0
#include "w1ot/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <system_error>

#include "w1ot/error.hpp"
#include "w1ot/rng.hpp"

namespace w1ot {

namespace {

constexpr double kPi = std::numbers::pi;

Dataset make_dataset(std::string name, Matrix features, std::uint64_t seed) {
  Dataset ds;
  ds.name = std::move(name);
  ds.feature_names = default_feature_names(features.cols());
  ds.features = std::move(features);
  ds.seed = seed;
  return ds;
}

void require_rows(Index n, const char* generator) {
  if (n < 1) throw UsageError(std::string(generator) + ": n must be >= 1");
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '.' || c == '-';
    if (!ok) return false;
  }
  return true;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() < 1) throw DataError("dataset '" + name + "': no rows");
  if (static_cast<Index>(feature_names.size()) != features.cols()) {
    throw DataError("dataset '" + name + "': " + std::to_string(feature_names.size()) + " feature names for " +
                    std::to_string(features.cols()) + " columns");
  }
  if (!features.allFinite()) throw DataError("dataset '" + name + "': non-finite values");
}

std::vector<std::string> default_feature_names(Index d) {
  std::vector<std::string> names;
  for (Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

// ---- generators -------------------------------------------------------------

DatasetPair gen_bookshelf(Index n, std::uint64_t seed) {
  require_rows(n, "bookshelf");
  auto side = [n](double lo, std::uint64_t stream_seed) {
    Rng rng(stream_seed);
    Matrix x(n, 2);
    for (Index i = 0; i < n; ++i) {
      x(i, 0) = rng.uniform(lo, lo + 1.0);
      x(i, 1) = rng.normal(0.0, 0.001);
    }
    return x;
  };
  DatasetPair out;
  out.source = make_dataset("bookshelf_source", side(0.0, mix_seed(seed, 1)), seed);
  out.target = make_dataset("bookshelf_target", side(2.0, mix_seed(seed, 2)), seed);
  out.meta = {{"dataset", "bookshelf"}, {"n", n},
              {"seed", seed},           {"source_x_range", {0.0, 1.0}},
              {"target_x_range", {2.0, 3.0}}, {"y_std", 0.001}};
  return out;
}

DatasetPair gen_circles(Index n, double noise, std::uint64_t seed) {
  CirclesParams p;
  p.noise = noise;
  return gen_circles(n, p, seed);
}

DatasetPair gen_circles(Index n, const CirclesParams& params, std::uint64_t seed) {
  require_rows(n, "circles");
  if (n % 2 != 0) throw UsageError("circles: n must be even");
  if (params.noise < 0.0) throw UsageError("circles: noise must be non-negative");
  auto side = [&](double scale, std::uint64_t stream_seed, std::vector<int>& labels) {
    Rng rng(stream_seed);
    Matrix x(n, 2);
    labels.assign(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) {
      const bool outer = i >= n / 2;
      const double r = scale * (outer ? 1.0 : params.inner_factor);
      const double theta = rng.uniform(0.0, 2.0 * kPi);
      x(i, 0) = r * std::cos(theta);
      x(i, 1) = r * std::sin(theta);
      if (params.noise > 0.0) {
        x(i, 0) += rng.normal(0.0, params.noise);
        x(i, 1) += rng.normal(0.0, params.noise);
      }
      labels[static_cast<std::size_t>(i)] = outer ? 1 : 0;
    }
    return x;
  };
  DatasetPair out;
  std::vector<int> src_labels, tgt_labels;
  out.source = make_dataset("circles_source", side(params.source_scale, mix_seed(seed, 1), src_labels), seed);
  out.target = make_dataset("circles_target", side(params.target_scale, mix_seed(seed, 2), tgt_labels), seed);
  out.source.labels = std::move(src_labels);
  out.target.labels = std::move(tgt_labels);
  out.meta = {{"dataset", "circles"},
              {"n", n},
              {"seed", seed},
              {"noise", params.noise},
              {"inner_factor", params.inner_factor},
              {"source_scale", params.source_scale},
              {"target_scale", params.target_scale}};
  return out;
}

DatasetPair gen_swiss_roll(Index n, std::uint64_t seed) { return gen_swiss_roll(n, SwissRollParams{}, seed); }

DatasetPair gen_swiss_roll(Index n, const SwissRollParams& params, std::uint64_t seed) {
  require_rows(n, "swiss_roll");
  Rng src_rng(mix_seed(seed, 1));
  Matrix src(n, 2);
  for (Index i = 0; i < n; ++i) {
    src(i, 0) = src_rng.normal();
    src(i, 1) = src_rng.normal();
  }
  Rng tgt_rng(mix_seed(seed, 2));
  Matrix tgt(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double t = 1.5 * kPi * (1.0 + 2.0 * tgt_rng.uniform());
    double x = t * std::cos(t);
    double y = t * std::sin(t);
    if (params.noise > 0.0) {
      x += tgt_rng.normal(0.0, params.noise);
      y += tgt_rng.normal(0.0, params.noise);
    }
    tgt(i, 0) = params.scale * x;
    tgt(i, 1) = params.scale * y;
  }
  DatasetPair out;
  out.source = make_dataset("swiss_roll_source", std::move(src), seed);
  out.target = make_dataset("swiss_roll_target", std::move(tgt), seed);
  out.meta = {{"dataset", "swiss_roll"}, {"n", n},     {"seed", seed}, {"noise", params.noise},
              {"scale", params.scale},   {"t_range", {1.5 * kPi, 4.5 * kPi}}};
  return out;
}

DatasetPair gen_moons(Index n, double noise, std::uint64_t seed) {
  require_rows(n, "moons");
  if (noise < 0.0) throw UsageError("moons: noise must be non-negative");
  auto side = [&](bool upper, std::uint64_t stream_seed) {
    Rng rng(stream_seed);
    Matrix x(n, 2);
    for (Index i = 0; i < n; ++i) {
      const double t = rng.uniform(0.0, kPi);
      x(i, 0) = upper ? std::cos(t) : 1.0 - std::cos(t);
      x(i, 1) = upper ? std::sin(t) : 0.5 - std::sin(t);
      if (noise > 0.0) {
        x(i, 0) += rng.normal(0.0, noise);
        x(i, 1) += rng.normal(0.0, noise);
      }
    }
    return x;
  };
  DatasetPair out;
  out.source = make_dataset("moons_source", side(true, mix_seed(seed, 1)), seed);
  out.target = make_dataset("moons_target", side(false, mix_seed(seed, 2)), seed);
  out.source.labels.assign(static_cast<std::size_t>(n), 0);
  out.target.labels.assign(static_cast<std::size_t>(n), 1);
  out.meta = {{"dataset", "moons"}, {"n", n}, {"seed", seed}, {"noise", noise}};
  return out;
}

DatasetPair generate_toy(const std::string& name, Index n, std::uint64_t seed) {
  if (name == "bookshelf") return gen_bookshelf(n, seed);
  if (name == "circles") return gen_circles(n, 0.02, seed);
  if (name == "swiss_roll") return gen_swiss_roll(n, seed);
  if (name == "moons") return gen_moons(n, 0.05, seed);
  throw UsageError("unknown dataset '" + name + "' (expected bookshelf, circles, swiss_roll or moons)");
}

// ---- CSV --------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

Dataset parse_csv(const std::string& text, const std::string& name) {
  std::vector<std::string_view> lines;
  {
    std::string_view rest(text);
    while (!rest.empty()) {
      const std::size_t nl = rest.find('\n');
      std::string_view line = rest.substr(0, nl);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(line);
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  }
  if (lines.empty()) throw DataError(name + ": empty file");

  Dataset ds;
  ds.name = name;
  for (std::string_view cell : split_line(lines[0])) {
    const std::string header(trim(cell));
    if (!valid_name(header)) {
      throw DataError(name + ": invalid feature name '" + header + "' (allowed characters: A-Z a-z 0-9 _ . -)");
    }
    ds.feature_names.push_back(header);
  }
  const Index d = static_cast<Index>(ds.feature_names.size());
  const Index n = static_cast<Index>(lines.size()) - 1;
  if (n < 1) throw DataError(name + ": header only, dataset is empty");
  ds.features.resize(n, d);
  for (Index i = 0; i < n; ++i) {
    const auto cells = split_line(lines[static_cast<std::size_t>(i + 1)]);
    if (static_cast<Index>(cells.size()) != d) {
      std::ostringstream os;
      os << name << ": row " << i + 1 << " has " << cells.size() << " cells, expected " << d;
      throw DataError(os.str());
    }
    for (Index j = 0; j < d; ++j) {
      const std::string_view cell = trim(cells[static_cast<std::size_t>(j)]);
      double v = 0.0;
      const auto* first = cell.data();
      const auto* last = cell.data() + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      const auto res = std::from_chars(first, last, v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
        std::ostringstream os;
        os << name << ": row " << i + 1 << ", column " << j + 1 << " ('" << ds.feature_names[std::size_t(j)]
           << "'): cannot parse '" << cell << "' as a finite number";
        throw DataError(os.str());
      }
      ds.features(i, j) = v;
    }
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("file not found: '" + path.string() + "'");
  return parse_csv(read_file(path), path.string());
}

std::string format_csv(const Dataset& ds) {
  ds.validate();
  std::string out;
  for (std::size_t j = 0; j < ds.feature_names.size(); ++j) {
    if (!valid_name(ds.feature_names[j])) throw DataError("invalid feature name '" + ds.feature_names[j] + "'");
    if (j) out += ',';
    out += ds.feature_names[j];
  }
  out += '\n';
  char buf[64];
  for (Index i = 0; i < ds.rows(); ++i) {
    for (Index j = 0; j < ds.cols(); ++j) {
      if (j) out += ',';
      const auto res = std::to_chars(buf, buf + sizeof(buf), ds.features(i, j));
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) { write_file_atomic(path, format_csv(ds)); }

// ---- splitting and scaling ------------------------------------------------------

Dataset take_rows(const Dataset& ds, const std::vector<Index>& rows) {
  Dataset out;
  out.name = ds.name;
  out.feature_names = ds.feature_names;
  out.seed = ds.seed;
  out.features.resize(static_cast<Index>(rows.size()), ds.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = ds.features.row(rows[i]);
    if (!ds.labels.empty()) out.labels.push_back(ds.labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

Split split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("split: test_fraction must lie in (0, 1)");
  const Index n = ds.rows();
  if (n < 2) throw UsageError("split: need at least 2 rows, got " + std::to_string(n));
  Index n_test = static_cast<Index>(std::llround(static_cast<double>(n) * test_fraction));
  n_test = std::clamp<Index>(n_test, 1, n - 1);
  Rng rng(mix_seed(seed, 31));
  const auto perm = rng.permutation(static_cast<std::size_t>(n));
  Split s;
  for (Index i = 0; i < n; ++i) {
    const Index row = static_cast<Index>(perm[static_cast<std::size_t>(i)]);
    (i < n_test ? s.test_rows : s.train_rows).push_back(row);
  }
  std::sort(s.train_rows.begin(), s.train_rows.end());
  std::sort(s.test_rows.begin(), s.test_rows.end());
  s.train = take_rows(ds, s.train_rows);
  s.test = take_rows(ds, s.test_rows);
  return s;
}

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows() < 1) throw UsageError("standardize: empty matrix");
  Standardizer s;
  s.mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - s.mean.row(0);
  s.std = (centered.array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt().matrix();
  s.std = s.std.cwiseMax(1e-8);
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.cols()) throw ShapeError("standardize: column count mismatch");
  Matrix z = x.rowwise() - mean.row(0);
  z.array().rowwise() /= std.row(0).array();
  return z;
}

Matrix Standardizer::invert(const Matrix& z) const {
  if (z.cols() != mean.cols()) throw ShapeError("standardize: column count mismatch");
  Matrix x = z.array().rowwise() * std.row(0).array();
  x.rowwise() += mean.row(0);
  return x;
}

}  // namespace w1ot
