#include "ehrsig/shap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "ehrsig/common.hpp"
#include "ehrsig/parallel.hpp"

namespace ehrsig {

ShapExplanation linear_shap(const LogisticModel& model,
                            const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& background_means) {
  const Eigen::Index d = model.weights.size();
  if (x.size() != d || background_means.size() != d)
    throw std::invalid_argument("linear_shap: dimension mismatch");
  ShapExplanation e;
  e.phi = model.weights.cwiseProduct(x - background_means);
  e.base_value = model.intercept + model.weights.dot(background_means);
  e.output = e.base_value + e.phi.sum();
  e.feature_values = x;
  e.feature_ids = model.feature_ids;
  e.representation = model.representation;
  return e;
}

Eigen::VectorXd global_importance(const LogisticModel& model,
                                  const Eigen::Ref<const Eigen::MatrixXd>& X_test,
                                  const Eigen::Ref<const Eigen::VectorXd>& background_means) {
  if (X_test.rows() == 0) throw std::invalid_argument("global_importance: empty test set");
  if (X_test.cols() != model.weights.size() ||
      background_means.size() != model.weights.size())
    throw std::invalid_argument("global_importance: dimension mismatch");
  Eigen::MatrixXd centered = X_test.rowwise() - background_means.transpose();
  return (centered * model.weights.asDiagonal()).cwiseAbs().colwise().mean();
}

ImportanceDistribution importance_distribution(
    const FitFunction& train_fn, const Eigen::Ref<const Eigen::MatrixXd>& X_train,
    const Eigen::Ref<const Eigen::VectorXi>& y_train,
    const Eigen::Ref<const Eigen::MatrixXd>& X_test, int B, std::uint64_t seed, int jobs) {
  if (B < 10) throw std::invalid_argument("importance_distribution: B must be >= 10");
  const Eigen::Index n = X_train.rows();
  const Eigen::Index d = X_train.cols();

  Eigen::MatrixXd samples(B, d);
  std::vector<char> ok(static_cast<size_t>(B), 0);

  parallel_for(B, jobs, [&](int b) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    Eigen::MatrixXd Xb(n, d);
    Eigen::VectorXi yb(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index j = pick(rng);
      Xb.row(i) = X_train.row(j);
      yb[i] = y_train[j];
    }
    try {
      LogisticModel model = train_fn(Xb, yb);
      Eigen::VectorXd mu = Xb.colwise().mean();
      samples.row(b) = global_importance(model, X_test, mu).transpose();
      ok[static_cast<size_t>(b)] = 1;
    } catch (const std::exception&) {
      ok[static_cast<size_t>(b)] = 0;
    }
  });

  ImportanceDistribution dist;
  int kept = 0;
  for (int b = 0; b < B; ++b) kept += ok[static_cast<size_t>(b)];
  dist.skipped = B - kept;
  if (dist.skipped * 10 > B)
    throw NumericalError("importance_distribution: more than 10% of refits failed");

  dist.samples.resize(kept, d);
  int row = 0;
  for (int b = 0; b < B; ++b)
    if (ok[static_cast<size_t>(b)]) dist.samples.row(row++) = samples.row(b);
  dist.nonzero_freq =
      (dist.samples.array() > 1e-12).cast<double>().colwise().mean();
  return dist;
}

RootCauseReport root_cause_report(const ShapExplanation& explanation, double tau_inert) {
  const Eigen::Index d = explanation.phi.size();
  RootCauseReport report;
  report.tau_inert = tau_inert;
  report.entries.resize(static_cast<size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    RootCauseEntry& e = report.entries[static_cast<size_t>(i)];
    e.feature_id = i < static_cast<Eigen::Index>(explanation.feature_ids.size())
                       ? explanation.feature_ids[static_cast<size_t>(i)]
                       : "f" + std::to_string(i);
    e.phi = explanation.phi[i];
    e.feature_value = explanation.feature_values[i];
    if (e.phi > tau_inert) {
      e.classification = CauseClass::RootCause;
    } else if (e.phi < -tau_inert) {
      e.classification = CauseClass::Protective;
    } else {
      e.classification = CauseClass::Inert;
    }
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const RootCauseEntry& a, const RootCauseEntry& b) {
              if (std::abs(a.phi) != std::abs(b.phi)) return std::abs(a.phi) > std::abs(b.phi);
              return a.feature_id < b.feature_id;
            });
  return report;
}

WaterfallData waterfall_data(const ShapExplanation& explanation, int top_m) {
  if (top_m < 1) throw std::invalid_argument("waterfall_data: top_m must be >= 1");
  const Eigen::Index d = explanation.phi.size();
  std::vector<Eigen::Index> order(static_cast<size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (std::abs(explanation.phi[a]) != std::abs(explanation.phi[b]))
      return std::abs(explanation.phi[a]) > std::abs(explanation.phi[b]);
    return a < b;
  });

  WaterfallData data;
  data.base_value = explanation.base_value;
  data.output = explanation.output;
  double cum = explanation.base_value;
  const auto shown = static_cast<size_t>(std::min<Eigen::Index>(top_m, d));
  for (size_t i = 0; i < shown; ++i) {
    const Eigen::Index j = order[i];
    WaterfallStep step;
    step.feature_id = explanation.feature_ids[static_cast<size_t>(j)];
    step.phi = explanation.phi[j];
    step.feature_value = explanation.feature_values[j];
    cum += step.phi;
    step.cumulative = cum;
    data.steps.push_back(step);
  }
  if (shown < static_cast<size_t>(d)) {
    WaterfallStep rest;
    rest.feature_id = "(rest)";
    rest.residual = true;
    for (size_t i = shown; i < static_cast<size_t>(d); ++i) rest.phi += explanation.phi[order[i]];
    cum += rest.phi;
    rest.cumulative = cum;
    data.steps.push_back(rest);
  }
  return data;
}

std::string waterfall_svg(const WaterfallData& data) {
  const int row_h = 26, width = 760, label_w = 240;
  const int height = row_h * static_cast<int>(data.steps.size()) + 70;

  double lo = std::min(data.base_value, data.output);
  double hi = std::max(data.base_value, data.output);
  double cum = data.base_value;
  for (const auto& s : data.steps) {
    lo = std::min({lo, cum, cum + s.phi});
    hi = std::max({hi, cum, cum + s.phi});
    cum += s.phi;
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  auto sx = [&](double v) {
    return label_w + (v - lo) / (hi - lo) * (width - label_w - 30);
  };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
      << height << "' font-family='sans-serif' font-size='12'>\n";
  svg << "<text x='10' y='20'>waterfall: E[f(X)]=" << data.base_value
      << " to f(x)=" << data.output << " (log-odds)</text>\n";
  svg << "<line x1='" << sx(data.base_value) << "' y1='30' x2='" << sx(data.base_value)
      << "' y2='" << height - 10 << "' stroke='#999' stroke-dasharray='4,3'/>\n";
  cum = data.base_value;
  int y = 40;
  for (const auto& s : data.steps) {
    const double from = cum, to = cum + s.phi;
    const char* color = s.phi >= 0 ? "#c43d3d" : "#3d6fc4";
    svg << "<text x='10' y='" << y + 14 << "'>" << s.feature_id;
    if (!s.residual) svg << " = " << s.feature_value;
    svg << "</text>\n";
    svg << "<rect x='" << std::min(sx(from), sx(to)) << "' y='" << y << "' width='"
        << std::max(1.0, std::abs(sx(to) - sx(from))) << "' height='" << row_h - 8
        << "' fill='" << color << "'/>\n";
    svg << "<text x='" << std::max(sx(from), sx(to)) + 6 << "' y='" << y + 14 << "'>"
        << (s.phi >= 0 ? "+" : "") << s.phi << "</text>\n";
    cum = to;
    y += row_h;
  }
  svg << "<line x1='" << sx(data.output) << "' y1='30' x2='" << sx(data.output)
      << "' y2='" << height - 10 << "' stroke='#444'/>\n";
  svg << "</svg>\n";
  return svg.str();
}

const char* to_string(CauseClass c) {
  switch (c) {
    case CauseClass::RootCause: return "root_cause";
    case CauseClass::Protective: return "protective";
    case CauseClass::Inert: return "inert";
  }
  return "?";
}

}  // namespace ehrsig
