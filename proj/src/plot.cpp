// SPDX-License-Identifier: Apache-2.0
#include "w1ot/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "w1ot/error.hpp"

namespace w1ot {

namespace {

using ad::Index;
using ad::Matrix;

void require_2d(const Matrix& m, const char* what) {
  if (m.cols() != 2) {
    throw UsageError(std::string("plot: ") + what + " has " + std::to_string(m.cols()) +
                     " columns; plotting needs exactly 2 (select two columns first)");
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Equal scale on both axes, data centered in the drawing area.
struct Frame {
  double x0, x1, y0, y1;
  const PlotOptions* opts;
  double scale = 1.0;

  void fit() {
    scale = std::min((opts->width - 2 * opts->margin) / (x1 - x0), (opts->height - 2 * opts->margin) / (y1 - y0));
  }
  double sx(double x) const { return opts->width / 2 + (x - (x0 + x1) / 2) * scale; }
  double sy(double y) const { return opts->height / 2 - (y - (y0 + y1) / 2) * scale; }
};

void points(std::string& out, const Matrix& m, const Frame& f, const char* cls, const char* fill) {
  out += "<g class=\"" + std::string(cls) + "\" fill=\"" + fill + "\">\n";
  for (Index i = 0; i < m.rows(); ++i) {
    out += "<circle cx=\"" + num(f.sx(m(i, 0))) + "\" cy=\"" + num(f.sy(m(i, 1))) + "\" r=\"" +
           num(f.opts->radius) + "\"/>\n";
  }
  out += "</g>\n";
}

}  // namespace

std::string render_svg(const Matrix& source, const Matrix& target, const Matrix& pred, const PlotOptions& opts) {
  require_2d(source, "source");
  require_2d(target, "target");
  const bool has_pred = pred.size() > 0;
  if (has_pred) require_2d(pred, "pred");
  if (opts.rays) {
    if (!has_pred) throw UsageError("plot: --rays needs --pred");
    if (pred.rows() != source.rows()) {
      throw UsageError("plot: --rays needs one pred row per source row (" + std::to_string(pred.rows()) + " vs " +
                       std::to_string(source.rows()) + ")");
    }
  }

  Frame f{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), &opts};
  for (const Matrix* m : {&source, &target, &pred}) {
    if (m->size() == 0) continue;
    f.x0 = std::min(f.x0, m->col(0).minCoeff());
    f.x1 = std::max(f.x1, m->col(0).maxCoeff());
    f.y0 = std::min(f.y0, m->col(1).minCoeff());
    f.y1 = std::max(f.y1, m->col(1).maxCoeff());
  }
  if (!(f.x1 > f.x0)) { f.x0 -= 0.5; f.x1 += 0.5; }
  if (!(f.y1 > f.y0)) { f.y0 -= 0.5; f.y1 += 0.5; }
  f.fit();

  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(opts.width) + "\" height=\"" +
         num(opts.height) + "\" viewBox=\"0 0 " + num(opts.width) + " " + num(opts.height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (opts.rays) {
    out += "<g class=\"rays\" stroke=\"#999999\" stroke-width=\"0.6\">\n";
    for (Index i = 0; i < source.rows(); ++i) {
      out += "<line x1=\"" + num(f.sx(source(i, 0))) + "\" y1=\"" + num(f.sy(source(i, 1))) + "\" x2=\"" +
             num(f.sx(pred(i, 0))) + "\" y2=\"" + num(f.sy(pred(i, 1))) + "\"/>\n";
    }
    out += "</g>\n";
  }
  points(out, source, f, "source", "#1f77b4");
  points(out, target, f, "target", "#ff7f0e");
  if (has_pred) points(out, pred, f, "pred", "#2ca02c");
  out += "</svg>\n";
  return out;
}

}  // namespace w1ot
