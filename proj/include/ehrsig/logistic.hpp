#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ehrsig/metrics.hpp"

namespace ehrsig {

struct LogisticModel {
  Eigen::VectorXd weights;  // log-odds units
  double intercept = 0.0;
  std::vector<std::string> feature_ids;
  double l1 = 0.0;
  double l2 = 0.0;
  double gamma = 0.0;       // adaptive-weight exponent when adaptive
  std::string representation;  // channels | signatures | (empty)
  bool adaptive = false;
  std::vector<int> screened;   // SIS survivors when adaptive
  bool converged = true;
  int sweeps = 0;
};

struct EnetOptions {
  double tol = 1e-8;    // max coordinate step per full sweep
  int max_sweeps = 50000;
  Eigen::VectorXd l1_feature_weights;    // empty = uniform
  std::vector<double>* objective_trace = nullptr;  // penalized objective per sweep
};

// Minimizes mean logistic loss + l1 * sum_j pi_j |w_j| + (l2/2) ||w||^2 by
// cyclic coordinate descent with soft-thresholding on a per-sweep quadratic
// bound of the loss; the intercept is unpenalized. Rows of X are instances.
LogisticModel fit_enet_logistic(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                const Eigen::Ref<const Eigen::VectorXi>& y,
                                double l1, double l2, const EnetOptions& opts = {});

double enet_objective(const Eigen::Ref<const Eigen::MatrixXd>& X,
                      const Eigen::Ref<const Eigen::VectorXi>& y,
                      const Eigen::Ref<const Eigen::VectorXd>& weights, double intercept,
                      double l1, double l2,
                      const Eigen::Ref<const Eigen::VectorXd>& l1_feature_weights);

// Top-d features by absolute marginal correlation with the centered labels,
// strongest first.
std::vector<int> sis_screen(const Eigen::Ref<const Eigen::MatrixXd>& X,
                            const Eigen::Ref<const Eigen::VectorXi>& y, int d);

inline int default_screen_size(Eigen::Index n) {
  return std::max(1, static_cast<int>(static_cast<double>(n) / std::log(static_cast<double>(n))));
}

struct AdanetParams {
  int screen_size = -1;  // -1: floor(n / log n)
  double pilot_l1 = 0.0;
  double pilot_l2 = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double gamma = 1.0;
  EnetOptions enet;
};

// SIS screen -> pilot ENet -> adaptive weights (|beta| + 1/n)^(-gamma) ->
// weighted-L1 ENet refit. Unscreened features keep weight zero.
LogisticModel fit_adanet(const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::VectorXi>& y,
                         const AdanetParams& params);

double predict_proba(const LogisticModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);

using FitFunction = std::function<LogisticModel(const Eigen::Ref<const Eigen::MatrixXd>&,
                                                const Eigen::Ref<const Eigen::VectorXi>&)>;

struct CvResult {
  double mean_auroc = 0.0;
  std::vector<double> fold_aurocs;
  Eigen::VectorXd oof_scores;  // out-of-fold score per instance
};

// Stratified k-fold CV AUROC, deterministic given the seed.
CvResult cv_auroc(const FitFunction& fit, const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::VectorXi>& y, int folds, std::uint64_t seed);

struct TrialParams {
  double l1 = 0.0;
  double l2 = 0.0;
  double gamma = 1.0;   // adaptive only
  int screen_size = -1;  // adaptive only
  bool adaptive = false;
};

struct SearchSpace {
  bool adaptive = false;
  double l1_lo = 1e-4, l1_hi = 1.0;   // log-uniform
  double l2_lo = 1e-4, l2_hi = 1.0;   // log-uniform
  double gamma_lo = 0.5, gamma_hi = 2.0;
  int screen_size = -1;

  TrialParams sample(std::uint64_t seed) const;
  FitFunction make_fit(const TrialParams& params) const;
};

struct Trial {
  TrialParams params;
  double cv_auroc = 0.0;
  Eigen::VectorXd oof_scores;
  bool ok = false;
  std::string error;
};

struct TuningReport {
  std::vector<Trial> trials;
  int best_trial = -1;               // top CV AUROC
  std::vector<int> comparable;       // CI-overlap survivors
  std::vector<double> oob_mean;      // parallel to `comparable`
  int winner = -1;                   // trial index
  LogisticModel final_model;
  double train_auroc = 0.0;
  MetricCI train_auroc_wald;
  int folds = 10;
  double alpha_filter = 0.2;
  int b_oob = 100;
  std::uint64_t seed = 0;
};

// Two-step protocol: random search scored by 10-fold CV AUROC; candidates
// whose DeLong logistic CIs (on pooled out-of-fold scores) overlap the best
// survive; the survivor with the highest mean out-of-bag AUROC over b_oob
// bootstrap refits wins and is refit on the full training set.
TuningReport tune(const SearchSpace& space, const Eigen::Ref<const Eigen::MatrixXd>& X,
                  const Eigen::Ref<const Eigen::VectorXi>& y, int budget,
                  double alpha_filter = 0.2, int b_oob = 100, std::uint64_t seed = 0,
                  int folds = 10, int jobs = 1);

void write_model(const LogisticModel& model, const std::string& path);
LogisticModel read_model(const std::string& path);
void write_tuning_report(const TuningReport& report, const std::string& path);

}  // namespace ehrsig
