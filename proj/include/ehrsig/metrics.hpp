#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace ehrsig {

struct ScoredSet {
  Eigen::VectorXd scores;
  Eigen::VectorXi labels;  // 0/1

  Eigen::Index size() const { return scores.size(); }
};

enum class CIMethod { DelongLogistic, Wald, BootstrapPivot };

struct MetricCI {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  CIMethod method = CIMethod::Wald;
  bool degenerate = false;
};

// Tie-aware (midrank) Mann-Whitney AUROC.
double auroc(const ScoredSet& scored);

struct DelongVariance {
  double auc = 0.0;
  double variance = 0.0;
  bool degenerate = false;  // perfect separation
};

// Fast sorted-rank structural-components estimate of the AUROC variance.
DelongVariance delong_variance(const ScoredSet& scored);

// CI on the logit scale with a delta-method SE, back-transformed so bounds
// stay inside (0,1); falls back to clipped Wald at AUROC 0 or 1.
MetricCI delong_ci_logistic(const ScoredSet& scored, double level);

struct PairedTestResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  bool degenerate = false;
};

// Two-sided z-test on the AUROC difference of two scorings of the same
// instances, using the paired DeLong covariance.
PairedTestResult delong_paired_test(const ScoredSet& a, const ScoredSet& b);

// Integrated calibration index: mean absolute gap between predictions and a
// locally weighted linear calibration curve (span 0.75, tricube weights).
double ici(const Eigen::Ref<const Eigen::VectorXd>& probs,
           const Eigen::Ref<const Eigen::VectorXi>& labels);

double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& probs,
                     const Eigen::Ref<const Eigen::VectorXi>& labels);

struct BootstrapOptions {
  int replicates = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  double domain_lo = -std::numeric_limits<double>::infinity();
  double domain_hi = std::numeric_limits<double>::infinity();
  bool needs_both_classes = false;
};

// Pivot (basic) interval [2t - q_{1-a/2}, 2t - q_{a/2}] over instance
// resamples, clipped to the metric domain.
MetricCI bootstrap_pivot_ci(const std::function<double(const ScoredSet&)>& metric,
                            const ScoredSet& scored, const BootstrapOptions& opts);

struct PointMetrics {
  double recall = 0.0;
  double specificity = 0.0;
  double precision = 0.0;
  bool precision_defined = true;
};

// Confusion-matrix ratios with score >= threshold counted as positive.
PointMetrics point_metrics(const ScoredSet& scored, double threshold);

// Standard normal quantile (Acklam's rational approximation plus one
// Newton refinement step).
double normal_quantile(double prob);
double normal_cdf(double z);

}  // namespace ehrsig
