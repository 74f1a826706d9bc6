#include "ehrsig/diagram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ehrsig {

EffectDescriptor back_transform_change(const RowStandardizer& row, double loading,
                                       double expression_units) {
  EffectDescriptor e{};
  switch (row.transform) {
    case RowTransform::LogAffine:
      e.type = EffectDescriptor::Type::Multiplicative;
      e.per_unit = std::exp(loading * row.scale);
      e.total = std::exp(loading * row.scale * expression_units);
      break;
    case RowTransform::Affine:
      e.type = EffectDescriptor::Type::Additive;
      e.per_unit = loading * row.scale;
      e.total = e.per_unit * expression_units;
      break;
    case RowTransform::Identity:
      e.type = EffectDescriptor::Type::Probability;
      e.per_unit = loading;
      e.total = std::clamp(loading * expression_units, -1.0, 1.0);
      break;
  }
  return e;
}

SignatureDiagram signature_diagram(const ICAModel& model, const Standardizer& std_,
                                   const std::vector<ChannelId>& channels,
                                   const Eigen::Ref<const Eigen::VectorXd>& expressions,
                                   int signature_index, int top_m) {
  if (signature_index < 0 || signature_index >= model.k)
    throw std::invalid_argument("signature index out of range");
  if (top_m < 1) throw std::invalid_argument("top_m must be >= 1");
  if (static_cast<Eigen::Index>(channels.size()) != model.mixing.rows())
    throw std::invalid_argument("channel list does not match the model");
  if (std_.rows.size() != channels.size())
    throw std::invalid_argument("standardizer does not match the channel list");

  SignatureDiagram diagram;
  diagram.signature_index = signature_index;

  const Eigen::Index n = expressions.size();
  double sd = 0.0;
  if (n > 1) {
    const double mean = expressions.mean();
    sd = std::sqrt((expressions.array() - mean).square().sum() / static_cast<double>(n - 1));
  }
  double scale = 1.0;
  if (sd > 0) {
    scale = 0.5 / sd;
  } else {
    log_warn("signature diagram: zero expression spread; leaving units unscaled");
  }
  diagram.expression_scale = scale;

  // Expressions shrink by `scale`, loadings grow by 1/scale: A S is preserved.
  Eigen::VectorXd loadings = model.mixing.col(signature_index) / scale;
  Eigen::VectorXd rescaled = expressions * scale;

  std::vector<int> order(channels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double la = std::abs(loadings[a]), lb = std::abs(loadings[b]);
    if (la != lb) return la > lb;
    return channels[static_cast<size_t>(a)].name < channels[static_cast<size_t>(b)].name;
  });

  const auto shown = std::min<size_t>(static_cast<size_t>(top_m), channels.size());
  double max_abs = 0.0;
  for (size_t i = 0; i < shown; ++i)
    max_abs = std::max(max_abs, std::abs(loadings[order[i]]));
  if (max_abs == 0.0) max_abs = 1.0;

  for (size_t i = 0; i < shown; ++i) {
    const int r = order[i];
    DiagramEntry entry;
    entry.channel = channels[static_cast<size_t>(r)].name;
    entry.kind = channels[static_cast<size_t>(r)].kind;
    entry.loading = loadings[r];
    entry.normalized_change = loadings[r] / max_abs;
    entry.effect = back_transform_change(std_.rows[static_cast<size_t>(r)], loadings[r], 1.0);
    diagram.entries.push_back(std::move(entry));
  }

  const int bins = 50;
  double lo = rescaled.minCoeff();
  double hi = rescaled.maxCoeff();
  if (hi - lo <= 0) hi = lo + 1.0;
  diagram.bin_edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b)
    diagram.bin_edges[static_cast<size_t>(b)] = lo + (hi - lo) * b / bins;
  diagram.counts.assign(bins, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    int b = static_cast<int>((rescaled[i] - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++diagram.counts[static_cast<size_t>(b)];
  }
  return diagram;
}

std::string diagram_svg(const SignatureDiagram& diagram, double display_cutoff) {
  const int row_h = 24, width = 820, label_w = 260, bar_w = 320;
  const int height = std::max<int>(220, row_h * static_cast<int>(diagram.entries.size()) + 60);

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
      << height << "' font-family='sans-serif' font-size='12'>\n";
  svg << "<text x='10' y='20' font-size='14'>signature S-" << diagram.signature_index
      << " (expression units scaled by " << diagram.expression_scale << ")</text>\n";

  const double mid = label_w + bar_w / 2.0;
  svg << "<line x1='" << mid << "' y1='30' x2='" << mid << "' y2='" << height - 10
      << "' stroke='#bbb'/>\n";
  int y = 40;
  for (const auto& entry : diagram.entries) {
    if (std::abs(entry.normalized_change) < display_cutoff) continue;
    const double extent = entry.normalized_change * (bar_w / 2.0 - 4.0);
    const double x0 = extent >= 0 ? mid : mid + extent;
    svg << "<text x='10' y='" << y + 13 << "'>" << entry.channel << "</text>\n";
    svg << "<rect x='" << x0 << "' y='" << y << "' width='" << std::abs(extent)
        << "' height='" << row_h - 8 << "' fill='"
        << (entry.normalized_change >= 0 ? "#2d7f5e" : "#a04030") << "'/>\n";
    std::ostringstream label;
    switch (entry.effect.type) {
      case EffectDescriptor::Type::Multiplicative:
        label << "(x" << entry.effect.per_unit << " per unit)";
        break;
      case EffectDescriptor::Type::Additive:
        label << "(" << (entry.effect.per_unit >= 0 ? "+" : "") << entry.effect.per_unit
              << " per unit)";
        break;
      case EffectDescriptor::Type::Probability:
        label << "(p" << (entry.effect.per_unit >= 0 ? "+" : "") << entry.effect.per_unit
              << " per unit)";
        break;
    }
    svg << "<text x='" << label_w + bar_w + 10 << "' y='" << y + 13 << "'>"
        << label.str() << "</text>\n";
    y += row_h;
  }

  // Histogram inset on a log(1 + count) scale.
  const int hx = width - 170, hy = 34, hw = 150, hh = 80;
  long max_count = 1;
  for (long c : diagram.counts) max_count = std::max(max_count, c);
  const double log_max = std::log1p(static_cast<double>(max_count));
  svg << "<rect x='" << hx << "' y='" << hy << "' width='" << hw << "' height='" << hh
      << "' fill='none' stroke='#888'/>\n";
  const double bw = static_cast<double>(hw) / static_cast<double>(diagram.counts.size());
  for (size_t b = 0; b < diagram.counts.size(); ++b) {
    const double h = std::log1p(static_cast<double>(diagram.counts[b])) / log_max * (hh - 4);
    svg << "<rect x='" << hx + bw * static_cast<double>(b) << "' y='" << hy + hh - h
        << "' width='" << bw << "' height='" << h << "' fill='#557'/>\n";
  }
  svg << "<text x='" << hx << "' y='" << hy + hh + 14
      << "' font-size='10'>expressions (log counts)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ehrsig
