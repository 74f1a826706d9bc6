#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ehrsig/ehr.hpp"
#include "ehrsig/ica.hpp"
#include "ehrsig/sampling.hpp"

namespace ehrsig {

struct SynthParams {
  int p = 60;            // catalog size including 5 demographic channels
  int k = 10;            // latent sources
  int n_patients = 500;
  double years_mean = 8.0;
  double years_sd = 2.0;
  double years_min = 2.0;
  double years_max = 15.0;

  int designated = 3;          // sources that drive the label
  double label_weight = 2.75;  // per designated source, Bayes AUROC ~ 0.95

  double traj_step_days = 90.0;  // source-level update grid
  double traj_phi = 0.9;         // per-step autoregression

  double code_rate_lo = 3.0, code_rate_hi = 12.0;  // base events/year
  double code_row_norm_lo = 0.5, code_row_norm_hi = 1.0;
  double meas_obs_per_year = 6.0;
  double meas_noise = 0.15;       // relative to the channel's signal norm
  double visits_per_year = 6.0;
  double med_threshold_lo = 0.25, med_threshold_hi = 1.0;

  std::uint64_t seed = 1;
};

// Piecewise-linear source trajectories on a coarse grid, one per patient.
struct SourceTrajectory {
  int first_day = 0;
  double step_days = 90.0;
  Eigen::MatrixXd levels;  // k x grid_points

  Eigen::VectorXd at(int day) const;
};

struct GroundTruth {
  std::vector<ChannelId> channels;   // catalog order
  Eigen::MatrixXd mixing;            // p x k, zero rows for demographics
  Eigen::VectorXd label_weights;     // k, zero outside designated sources
  std::vector<int> designated;
  std::map<std::string, SourceTrajectory> trajectories;
  std::uint64_t seed = 0;

  Eigen::VectorXd source_level(const std::string& patient_id, int day) const;
  // True source values at the sampled (patient, day) columns.
  Eigen::MatrixXd sources_at(const std::vector<std::pair<std::string, int>>& provenance) const;
};

struct SynthCohort {
  Cohort cohort;
  std::map<std::string, int> labels;  // patient -> 0/1
  GroundTruth truth;
};

// LiNGAM-style generator: independent Laplace-driven source trajectories mix
// into code intensities exp(alpha + A s), affine measurements, thresholded
// medication exposure, and a Bernoulli(sigmoid(beta . s(end))) label.
SynthCohort generate_cohort(const SynthParams& params);

struct LingamSample {
  Eigen::MatrixXd X;        // p x n observations
  Eigen::MatrixXd sources;  // k x n independent Laplace sources, unit variance
  Eigen::MatrixXd mixing;   // p x k
};

// Direct cross-section draw from X = A S + noise with iid Laplace sources;
// the distilled setting for ICA identifiability checks.
LingamSample generate_lingam_cross_sections(int p, int k, int n, double noise_sd,
                                            std::uint64_t seed);

// Mean matched |correlation| between recovered and true sources under the
// assignment that maximizes the total.
double recovery_score(const Eigen::Ref<const Eigen::MatrixXd>& recovered,
                      const Eigen::Ref<const Eigen::MatrixXd>& truth);
double recovery_score(const ICAModel& model, const CrossSectionMatrix& standardized,
                      const GroundTruth& truth);

// Maximum-sum assignment on a square or rectangular score matrix; returns
// column index per row (-1 when unmatched).
std::vector<int> max_assignment(const Eigen::Ref<const Eigen::MatrixXd>& scores);

void write_ground_truth(const GroundTruth& truth, const std::string& bundle_path,
                        const std::string& manifest_path);
GroundTruth read_ground_truth(const std::string& bundle_path,
                              const std::string& manifest_path);

void write_labels(const std::map<std::string, int>& labels, const std::string& path);
std::map<std::string, int> read_labels(const std::string& path);

}  // namespace ehrsig
