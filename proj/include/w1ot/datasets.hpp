// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "w1ot/autodiff.hpp"

namespace w1ot {

using ad::Index;
using ad::Matrix;

/// Named feature matrix. `labels` holds an optional per-row audit tag
/// (circle ring, moon id) that never reaches training.
struct Dataset {
  std::string name;
  Matrix features;
  std::vector<std::string> feature_names;
  std::optional<std::uint64_t> seed;
  std::vector<int> labels;

  Index rows() const { return features.rows(); }
  Index cols() const { return features.cols(); }

  /// Checks n >= 1, name count, finiteness.
  void validate() const;
};

struct DatasetPair {
  Dataset source;
  Dataset target;
  /// Generator parameters, written as meta.json by the CLI.
  nlohmann::json meta;
};

/// Default feature names x0, x1, ...
std::vector<std::string> default_feature_names(Index d);

// ---- toy generators ---------------------------------------------------------

/// Source x ~ U[0,1], target x ~ U[2,3]; y ~ N(0, 0.001^2) on both sides.
DatasetPair gen_bookshelf(Index n, std::uint64_t seed);

struct CirclesParams {
  double noise = 0.02;
  double inner_factor = 0.5;
  double source_scale = 1.0;
  double target_scale = 2.0;
};

/// Two concentric rings per side (radii inner_factor*s and s); label 0 =
/// inner ring, 1 = outer ring. `n` must be even.
DatasetPair gen_circles(Index n, double noise, std::uint64_t seed);
DatasetPair gen_circles(Index n, const CirclesParams& params, std::uint64_t seed);

struct SwissRollParams {
  double noise = 0.05;
  double scale = 0.1;
};

/// Source N(0, I_2); target (t cos t, t sin t) + noise, t ~ U[1.5 pi, 4.5 pi], scaled.
DatasetPair gen_swiss_roll(Index n, std::uint64_t seed);
DatasetPair gen_swiss_roll(Index n, const SwissRollParams& params, std::uint64_t seed);

/// Source: upper moon (cos t, sin t); target: lower moon (1 - cos t, 0.5 - sin t); t ~ U[0, pi].
DatasetPair gen_moons(Index n, double noise, std::uint64_t seed);

/// Dispatch by name: bookshelf | circles | swiss_roll | moons.
DatasetPair generate_toy(const std::string& name, Index n, std::uint64_t seed);

// ---- CSV --------------------------------------------------------------------

/// Header row of feature names, then rectangular rows of finite reals.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text, const std::string& name = "csv");
/// Shortest round-trip formatting; the file is replaced atomically.
void write_csv(const Dataset& ds, const std::filesystem::path& path);
std::string format_csv(const Dataset& ds);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

// ---- splitting and scaling ------------------------------------------------------

struct Split {
  Dataset train;
  Dataset test;
  std::vector<Index> train_rows;
  std::vector<Index> test_rows;
};

/// Random disjoint split; test gets round(n * test_fraction) rows, and
/// both sides keep at least one row.
Split split(const Dataset& ds, double test_fraction, std::uint64_t seed);

struct Standardizer {
  Matrix mean;  ///< 1 x d
  Matrix std;   ///< 1 x d, floored at 1e-8

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
  Matrix invert(const Matrix& z) const;
};

/// Subset of rows in the given order.
Dataset take_rows(const Dataset& ds, const std::vector<Index>& rows);

}  // namespace w1ot
