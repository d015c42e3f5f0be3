#pragma once

#include <string>
#include <vector>

#include "vaxsignal/inference.hpp"

namespace vaxsignal::cli {

struct CaterpillarInput {
  std::vector<std::string> ae_ids;
  std::vector<IntervalSummary> summaries;
  std::vector<double> truth;  // empty when unknown
  std::string title;
};

// AEs sorted by posterior mean. Bars leaving the plotted range are clipped and
// marked with '*'. Returns the SVG and the order used.
struct CaterpillarPlot {
  std::string svg;
  std::vector<std::size_t> order;
  double y_min = 0.0;
  double y_max = 0.0;
};

CaterpillarPlot caterpillar_svg(const CaterpillarInput& in);

// Co-clustering heatmap with rows and columns in `order`.
std::string heatmap_svg(const CoclusterMatrix& m, const std::vector<std::size_t>& order, const std::string& title);

// One row per group: EOR mean with its 95% interval, reference line at 1.
std::string forest_svg(const EnrichmentReport& report, const std::string& title);

}  // namespace vaxsignal::cli
