#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ehrsig/curves.hpp"

namespace ehrsig {

struct CrossSectionMatrix {
  Eigen::MatrixXd data;                                  // p x n
  std::vector<ChannelId> channels;                       // row order
  std::vector<std::pair<std::string, int>> provenance;   // (patient, day) per column

  Eigen::Index cols() const { return data.cols(); }
};

struct RowStandardizer {
  RowTransform transform = RowTransform::Identity;
  double center = 0.0;
  double scale = 1.0;  // two standard deviations for affine rows
};

struct Standardizer {
  std::vector<RowStandardizer> rows;
  double floor_per_year = kIntensityFloorPerYear;
};

// Per patient: max(1, Poisson(density * record_years)) columns at uniformly
// random days of the record span.
CrossSectionMatrix sample_cross_sections(const std::vector<CurveSet>& curvesets,
                                         const std::vector<ChannelId>& channels,
                                         double density, std::uint64_t seed);

// Streaming variant: curvesets are built per record and discarded.
CrossSectionMatrix sample_cross_sections(
    const Cohort& cohort, const std::map<std::string, double>& medians,
    const RashParams& params, double density, std::uint64_t seed,
    std::uint64_t curve_seed);

// Code rows: natural log, then centered and scaled by two standard deviations
// of the logged values. Measurement and age rows: centered/scaled by two SDs.
// Binary rows are left untouched. Zero-SD rows degrade to identity.
Standardizer fit_standardizer(const Eigen::Ref<const Eigen::MatrixXd>& raw,
                              const std::vector<ChannelId>& channels,
                              double floor_per_year = kIntensityFloorPerYear);

Eigen::MatrixXd apply_standardizer(const Standardizer& std, const Eigen::Ref<const Eigen::MatrixXd>& raw);
Eigen::VectorXd apply_standardizer(const Standardizer& std, const Eigen::Ref<const Eigen::VectorXd>& raw);
Eigen::MatrixXd invert_standardizer(const Standardizer& std, const Eigen::Ref<const Eigen::MatrixXd>& standardized);
Eigen::VectorXd invert_standardizer(const Standardizer& std, const Eigen::Ref<const Eigen::VectorXd>& standardized);

// Column at the final day of the record span, before standardization.
Eigen::VectorXd last_cross_section(const CurveSet& curveset);

void write_standardizer(const Standardizer& std, const std::string& path);
Standardizer read_standardizer(const std::string& path);

void write_cross_sections(const CrossSectionMatrix& xs, const std::string& matrix_path,
                          const std::string& sidecar_path);
CrossSectionMatrix read_cross_sections(const std::string& matrix_path,
                                       const std::string& sidecar_path);

}  // namespace ehrsig
