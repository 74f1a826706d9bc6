#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ehrsig/logistic.hpp"

namespace ehrsig {

// Linear SHAP under feature independence, in log-odds units:
// phi_i = w_i (x_i - mu_i), base_value = intercept + w . mu.
struct ShapExplanation {
  double base_value = 0.0;
  Eigen::VectorXd phi;
  Eigen::VectorXd feature_values;
  double output = 0.0;  // log-odds
  std::vector<std::string> feature_ids;
  std::string representation;
};

ShapExplanation linear_shap(const LogisticModel& model,
                            const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& background_means);

// Mean |phi| per feature over the columns of X_test (rows are instances).
Eigen::VectorXd global_importance(const LogisticModel& model,
                                  const Eigen::Ref<const Eigen::MatrixXd>& X_test,
                                  const Eigen::Ref<const Eigen::VectorXd>& background_means);

struct ImportanceDistribution {
  Eigen::MatrixXd samples;        // B x d global importances
  Eigen::VectorXd nonzero_freq;   // fraction of resamples with nonzero importance
  int skipped = 0;                // failed refits
};

// Refits on B bootstrap resamples of the training set and scores global
// importance on the fixed test set. Background means are recomputed from each
// resample (the refit model's own training population).
ImportanceDistribution importance_distribution(
    const FitFunction& train_fn, const Eigen::Ref<const Eigen::MatrixXd>& X_train,
    const Eigen::Ref<const Eigen::VectorXi>& y_train,
    const Eigen::Ref<const Eigen::MatrixXd>& X_test, int B, std::uint64_t seed,
    int jobs = 1);

enum class CauseClass { RootCause, Protective, Inert };

struct RootCauseEntry {
  std::string feature_id;
  double phi = 0.0;
  double feature_value = 0.0;
  int weight_sign = 0;  // model coefficient sign, for effect directionality
  CauseClass classification = CauseClass::Inert;
};

struct RootCauseReport {
  std::vector<RootCauseEntry> entries;  // ordered by |phi| descending
  double tau_inert = 0.0;
};

// phi > tau: root cause of the positive label; phi < -tau: protective.
RootCauseReport root_cause_report(const ShapExplanation& explanation, double tau_inert = 0.0);

struct WaterfallStep {
  std::string feature_id;  // "(rest)" for the aggregated remainder
  double phi = 0.0;
  double feature_value = 0.0;
  double cumulative = 0.0;  // running log-odds after this step
  bool residual = false;
};

struct WaterfallData {
  double base_value = 0.0;
  double output = 0.0;
  std::vector<WaterfallStep> steps;
};

// Top-m features by |phi| with everything else folded into one residual step;
// cumulative values run from base_value to the model output.
WaterfallData waterfall_data(const ShapExplanation& explanation, int top_m);

std::string waterfall_svg(const WaterfallData& data);

const char* to_string(CauseClass c);

}  // namespace ehrsig
