// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "w1ot/autodiff.hpp"

namespace w1ot {

struct PlotOptions {
  double width = 640.0;
  double height = 640.0;
  double margin = 24.0;
  double radius = 2.5;
  /// Draw x -> T(x) segments; needs `pred` with one row per source row.
  bool rays = false;
};

/// SVG 1.1 scatter plot of 2-D point sets: source, target and optionally
/// transported points, each with its own fill. Pass an empty `pred` to omit
/// it. Throws UsageError for data that is not 2-D.
std::string render_svg(const ad::Matrix& source, const ad::Matrix& target, const ad::Matrix& pred,
                       const PlotOptions& opts = {});

}  // namespace w1ot
