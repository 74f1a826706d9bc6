#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ehrsig/ehr.hpp"

namespace ehrsig {

struct Curve {
  int start_day = 0;
  Eigen::VectorXd values;  // one entry per day

  int days() const { return static_cast<int>(values.size()); }
};

// One patient's dense daily matrix, rows in catalog order.
struct CurveSet {
  std::string patient_id;
  int start_day = 0;
  Eigen::MatrixXd values;  // p x tau
};

struct RashParams {
  int replicates = 16;             // randomly offset histograms averaged
  int neighbor = 5;                // m-th nearest event sets the local bandwidth
  double min_bandwidth_days = 7.0;
  double max_bandwidth_days = 2.0 * kDaysPerYear;
  double floor_per_year = kIntensityFloorPerYear;
};

// Smoothed event intensity (events/year) from a randomly offset, locally
// adaptive average shifted histogram. Each event spreads unit mass over a bin
// of its own bandwidth; bins are clipped to the record span and renormalized
// so the integral over the span stays at the event count (plus the floor).
// Throws std::invalid_argument on an empty event list; callers fall back to
// impute_code_baseline.
Curve code_intensity_curve(const std::vector<int>& event_days, int first_day,
                           int last_day, const RashParams& params, std::uint64_t seed);

// Constant zero-information intensity (default 0.05 events/year).
Curve impute_code_baseline(int first_day, int last_day,
                           double floor_per_year = kIntensityFloorPerYear);

// Shape-preserving monotone cubic interpolation sampled daily, held constant
// beyond the first/last observation. Duplicate days keep the last value.
Curve measurement_curve(const std::vector<std::pair<int, double>>& observations,
                        int first_day, int last_day);

Curve impute_measurement(double population_median, int first_day, int last_day);

// Binary drug-exposure curve. 1 between contiguous visits when noted at both;
// noted then missing at the next visit stops at the midpoint; 1 from the last
// noted visit to the end of the record when no later visit exists.
Curve medication_curve(const std::vector<int>& visit_days,
                       const std::vector<int>& noted_days, int first_day, int last_day);

// Constant binary sex/race curves plus integer age in 365.25-day years.
Curve demographic_curve(const ChannelId& channel, const Demographics& demo,
                        int first_day, int last_day);

// Population medians of observed measurement values, per channel, over the
// discovery cohort.
std::map<std::string, double> measurement_medians(const Cohort& cohort);

CurveSet build_curveset(const PatientRecord& record,
                        const std::vector<ChannelId>& catalog,
                        const std::map<std::string, double>& medians,
                        const RashParams& params, std::uint64_t seed);

}  // namespace ehrsig
