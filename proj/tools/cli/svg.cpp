#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "vaxsignal/error.hpp"

namespace vaxsignal::cli {

namespace {

// Fixed two-decimal coordinates keep output byte-stable.
std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x == 0.0 ? 0.0 : x);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void header(std::ostringstream& o, double w, double h, const std::string& title) {
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
    << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << num(w / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
    << "</text>\n";
}

double nice_step(double span) {
  const double raw = span / 8.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

CaterpillarPlot caterpillar_svg(const CaterpillarInput& in) {
  const std::size_t J = in.ae_ids.size();
  if (in.summaries.size() != J) throw ContractViolation("caterpillar: summaries and ids differ in length");
  if (!in.truth.empty() && in.truth.size() != J) throw ContractViolation("caterpillar: truth length mismatch");
  CaterpillarPlot plot;
  plot.order.resize(J);
  std::iota(plot.order.begin(), plot.order.end(), std::size_t{0});
  std::stable_sort(plot.order.begin(), plot.order.end(), [&](std::size_t a, std::size_t b) {
    return in.summaries[a].mean < in.summaries[b].mean;
  });

  double lo = 0.0, hi = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    lo = std::min(lo, in.summaries[j].mean);
    hi = std::max(hi, in.summaries[j].mean);
    if (!in.truth.empty()) {
      lo = std::min(lo, in.truth[j]);
      hi = std::max(hi, in.truth[j]);
    }
  }
  plot.y_min = std::floor(lo) - 3.0;
  plot.y_max = std::ceil(hi) + 3.0;

  const double left = 55.0, right = 20.0, top = 35.0, bottom = 45.0;
  const double pitch = J > 150 ? 3.0 : 8.0;
  const double w = std::max(400.0, left + right + pitch * static_cast<double>(J + 1));
  const double h = 420.0;
  const double plot_h = h - top - bottom;
  auto y_of = [&](double v) { return top + (plot.y_max - v) / (plot.y_max - plot.y_min) * plot_h; };
  auto x_of = [&](std::size_t rank) { return left + pitch * static_cast<double>(rank + 1); };

  std::ostringstream o;
  header(o, w, h, in.title);
  o << "<g class=\"axis\" stroke=\"black\">\n<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\""
    << num(left) << "\" y2=\"" << num(h - bottom) << "\"/>\n<line x1=\"" << num(left) << "\" y1=\""
    << num(h - bottom) << "\" x2=\"" << num(w - right) << "\" y2=\"" << num(h - bottom) << "\"/>\n</g>\n";
  const double step = nice_step(plot.y_max - plot.y_min);
  o << "<g class=\"ticks\">\n";
  for (double t = std::ceil(plot.y_min / step) * step; t <= plot.y_max + 1e-9; t += step) {
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y_of(t) + 4) << "\" text-anchor=\"end\">" << num(t)
      << "</text>\n";
  }
  o << "</g>\n";
  o << "<text x=\"14\" y=\"" << num(top + plot_h / 2) << "\" transform=\"rotate(-90 14 " << num(top + plot_h / 2)
    << ")\" text-anchor=\"middle\">log ROR</text>\n";
  o << "<text x=\"" << num((left + w - right) / 2) << "\" y=\"" << num(h - 12)
    << "\" text-anchor=\"middle\">AEs sorted by posterior mean</text>\n";
  o << "<line class=\"zero\" x1=\"" << num(left) << "\" y1=\"" << num(y_of(0.0)) << "\" x2=\"" << num(w - right)
    << "\" y2=\"" << num(y_of(0.0)) << "\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n";

  o << "<g class=\"intervals\" stroke=\"#3b5b92\">\n";
  std::ostringstream marks;
  for (std::size_t r = 0; r < J; ++r) {
    const auto& s = in.summaries[plot.order[r]];
    const double a = std::clamp(s.lo, plot.y_min, plot.y_max);
    const double b = std::clamp(s.hi, plot.y_min, plot.y_max);
    o << "<line class=\"interval\" x1=\"" << num(x_of(r)) << "\" y1=\"" << num(y_of(a)) << "\" x2=\""
      << num(x_of(r)) << "\" y2=\"" << num(y_of(b)) << "\"><title>" << escape_xml(in.ae_ids[plot.order[r]])
      << "</title></line>\n";
    if (s.lo < plot.y_min) {
      marks << "<text class=\"clipped\" x=\"" << num(x_of(r)) << "\" y=\"" << num(h - bottom + 10)
            << "\" text-anchor=\"middle\">*</text>\n";
    }
    if (s.hi > plot.y_max) {
      marks << "<text class=\"clipped\" x=\"" << num(x_of(r)) << "\" y=\"" << num(top + 2)
            << "\" text-anchor=\"middle\">*</text>\n";
    }
  }
  o << "</g>\n<g class=\"means\" fill=\"black\">\n";
  for (std::size_t r = 0; r < J; ++r) {
    o << "<circle class=\"mean\" cx=\"" << num(x_of(r)) << "\" cy=\"" << num(y_of(in.summaries[plot.order[r]].mean))
      << "\" r=\"1.5\"/>\n";
  }
  o << "</g>\n" << marks.str();
  if (!in.truth.empty()) {
    o << "<polyline class=\"truth\" fill=\"none\" stroke=\"green\" stroke-dasharray=\"5 3\" points=\"";
    for (std::size_t r = 0; r < J; ++r) {
      if (r) o << ' ';
      o << num(x_of(r)) << ',' << num(y_of(std::clamp(in.truth[plot.order[r]], plot.y_min, plot.y_max)));
    }
    o << "\"/>\n";
  }
  o << "</svg>\n";
  plot.svg = o.str();
  return plot;
}

std::string heatmap_svg(const CoclusterMatrix& m, const std::vector<std::size_t>& order, const std::string& title) {
  const std::size_t J = m.size;
  if (order.size() != J) throw ContractViolation("heatmap: order length mismatch");
  const double cell = J > 100 ? 2.0 : 8.0;
  const double left = 40.0, top = 35.0, legend = 70.0;
  const double side = cell * static_cast<double>(J);
  const double w = left + side + legend, h = top + side + 30.0;
  std::ostringstream o;
  header(o, w, h, title);
  auto colour = [](double p) {
    // White (0) to dark red (1).
    const int g = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(p, 0.0, 1.0))));
    const int r = static_cast<int>(std::lround(255.0 - 100.0 * std::clamp(p, 0.0, 1.0)));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, g);
    return std::string(buf);
  };
  o << "<g class=\"cells\" shape-rendering=\"crispEdges\">\n";
  // Probabilities are binned to 0.02; runs of equal colour share one rect.
  auto bin = [](double p) { return std::lround(std::clamp(p, 0.0, 1.0) * 50.0); };
  for (std::size_t a = 0; a < J; ++a) {
    std::size_t b = 0;
    while (b < J) {
      const long level = bin(m.at(order[a], order[b]));
      std::size_t e = b + 1;
      while (e < J && bin(m.at(order[a], order[e])) == level) ++e;
      if (level > 0) {
        o << "<rect x=\"" << num(left + cell * static_cast<double>(b)) << "\" y=\""
          << num(top + cell * static_cast<double>(a)) << "\" width=\"" << num(cell * static_cast<double>(e - b))
          << "\" height=\"" << num(cell) << "\" fill=\"" << colour(static_cast<double>(level) / 50.0) << "\"/>\n";
      }
      b = e;
    }
  }
  o << "</g>\n<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(side) << "\" height=\""
    << num(side) << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<g class=\"legend\">\n";
  for (int i = 0; i <= 10; ++i) {
    const double p = i / 10.0;
    const double y = top + (1.0 - p) * 100.0;
    o << "<rect x=\"" << num(left + side + 15) << "\" y=\"" << num(y) << "\" width=\"12\" height=\"10\" fill=\""
      << colour(p) << "\" stroke=\"#999\"/>\n";
    if (i % 5 == 0) {
      o << "<text x=\"" << num(left + side + 32) << "\" y=\"" << num(y + 9) << "\">" << num(p) << "</text>\n";
    }
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

std::string forest_svg(const EnrichmentReport& report, const std::string& title) {
  const std::size_t G = report.rows.size();
  double x_max = std::max(2.0, report.eor_mean_threshold);
  for (const auto& r : report.rows) x_max = std::max(x_max, std::isfinite(r.eor.hi) ? r.eor.hi : r.eor.mean);
  x_max = std::ceil(x_max * 1.05);
  const double left = 260.0, right = 30.0, top = 40.0, row_h = 18.0, bottom = 45.0;
  const double w = 720.0, h = top + row_h * static_cast<double>(std::max<std::size_t>(G, 1)) + bottom;
  const double plot_w = w - left - right;
  auto x_of = [&](double v) { return left + std::clamp(v, 0.0, x_max) / x_max * plot_w; };

  std::ostringstream o;
  header(o, w, h, title);
  const double y_axis = h - bottom;
  o << "<line x1=\"" << num(left) << "\" y1=\"" << num(y_axis) << "\" x2=\"" << num(w - right) << "\" y2=\""
    << num(y_axis) << "\" stroke=\"black\"/>\n";
  const double step = nice_step(x_max);
  for (double t = 0.0; t <= x_max + 1e-9; t += step) {
    o << "<text x=\"" << num(x_of(t)) << "\" y=\"" << num(y_axis + 14) << "\" text-anchor=\"middle\">" << num(t)
      << "</text>\n";
  }
  o << "<text x=\"" << num(left + plot_w / 2) << "\" y=\"" << num(h - 10)
    << "\" text-anchor=\"middle\">enrichment odds ratio</text>\n";
  o << "<line class=\"reference\" x1=\"" << num(x_of(1.0)) << "\" y1=\"" << num(top - 5) << "\" x2=\""
    << num(x_of(1.0)) << "\" y2=\"" << num(y_axis) << "\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n";
  o << "<line class=\"threshold\" x1=\"" << num(x_of(report.eor_mean_threshold)) << "\" y1=\"" << num(top - 5)
    << "\" x2=\"" << num(x_of(report.eor_mean_threshold)) << "\" y2=\"" << num(y_axis)
    << "\" stroke=\"#888\" stroke-dasharray=\"2 3\"/>\n";
  for (std::size_t g = 0; g < G; ++g) {
    const auto& r = report.rows[g];
    const double y = top + row_h * (static_cast<double>(g) + 0.5);
    const char* colour = r.is_enriched ? "#b2182b" : "#333333";
    o << "<text x=\"" << num(left - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << escape_xml(r.group)
      << "</text>\n";
    o << "<line class=\"interval\" x1=\"" << num(x_of(r.eor.lo)) << "\" y1=\"" << num(y) << "\" x2=\""
      << num(x_of(r.eor.hi)) << "\" y2=\"" << num(y) << "\" stroke=\"" << colour << "\"/>\n";
    o << "<rect class=\"mean\" x=\"" << num(x_of(r.eor.mean) - 3) << "\" y=\"" << num(y - 3)
      << "\" width=\"6\" height=\"6\" fill=\"" << colour << "\"/>\n";
    if (r.eor.hi > x_max) {
      o << "<text class=\"clipped\" x=\"" << num(w - right + 6) << "\" y=\"" << num(y + 4) << "\">*</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace vaxsignal::cli
