#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ehrsig/ica.hpp"
#include "ehrsig/sampling.hpp"

namespace ehrsig {

// Original-space effect of one signature loading per unit of (rescaled)
// expression: multiplicative factor for logged code intensities, additive
// change for affine channels, probability delta for binary channels.
struct EffectDescriptor {
  enum class Type { Multiplicative, Additive, Probability } type;
  double per_unit = 0.0;
  double total = 0.0;  // at the requested expression level
};

EffectDescriptor back_transform_change(const RowStandardizer& row, double loading,
                                       double expression_units);

struct DiagramEntry {
  std::string channel;
  ChannelKind kind = ChannelKind::Code;
  double loading = 0.0;            // rescaled-loading units
  double normalized_change = 0.0;  // loading / max |loading| among entries
  EffectDescriptor effect;         // per unit of expression
};

struct SignatureDiagram {
  int signature_index = 0;
  double expression_scale = 1.0;        // multiplier making expression SD 0.5
  std::vector<DiagramEntry> entries;    // ordered by |normalized_change| desc
  std::vector<double> bin_edges;        // 51 edges for 50 bins
  std::vector<long> counts;             // histogram of rescaled expressions
};

// Top contributing channels of one signature with expressions rescaled so
// their SD is 0.5 and loadings rescaled reciprocally (A S unchanged).
SignatureDiagram signature_diagram(const ICAModel& model, const Standardizer& std,
                                   const std::vector<ChannelId>& channels,
                                   const Eigen::Ref<const Eigen::VectorXd>& expressions,
                                   int signature_index, int top_m = 10);

// Horizontal-bar rendering with a log-count expression histogram inset; bars
// below the display cutoff are omitted from the drawing only.
std::string diagram_svg(const SignatureDiagram& diagram, double display_cutoff = 0.01);

}  // namespace ehrsig
