#include "ehrsig/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ehrsig/io.hpp"

namespace ehrsig {

namespace {

std::vector<int> draw_sample_days(int first_day, int last_day, double span_years,
                                  double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::poisson_distribution<int> pois(density * span_years);
  int count = std::max(1, pois(rng));
  std::uniform_int_distribution<int> day(first_day, last_day);
  std::vector<int> days(count);
  for (int& d : days) d = day(rng);
  std::sort(days.begin(), days.end());
  return days;
}

}  // namespace

CrossSectionMatrix sample_cross_sections(const std::vector<CurveSet>& curvesets,
                                         const std::vector<ChannelId>& channels,
                                         double density, std::uint64_t seed) {
  if (density <= 0) throw std::invalid_argument("sampling density must be positive");
  CrossSectionMatrix xs;
  xs.channels = channels;
  std::vector<Eigen::VectorXd> columns;
  for (const auto& cs : curvesets) {
    const int tau = static_cast<int>(cs.values.cols());
    const int last = cs.start_day + tau - 1;
    auto days = draw_sample_days(cs.start_day, last, tau / kDaysPerYear, density,
                                 derive_seed(seed, fnv1a64(cs.patient_id)));
    for (int d : days) {
      columns.push_back(cs.values.col(d - cs.start_day));
      xs.provenance.emplace_back(cs.patient_id, d);
    }
  }
  xs.data.resize(static_cast<Eigen::Index>(channels.size()),
                 static_cast<Eigen::Index>(columns.size()));
  for (size_t i = 0; i < columns.size(); ++i)
    xs.data.col(static_cast<Eigen::Index>(i)) = columns[i];
  return xs;
}

CrossSectionMatrix sample_cross_sections(
    const Cohort& cohort, const std::map<std::string, double>& medians,
    const RashParams& params, double density, std::uint64_t seed,
    std::uint64_t curve_seed) {
  if (density <= 0) throw std::invalid_argument("sampling density must be positive");
  CrossSectionMatrix xs;
  xs.channels = cohort.catalog;
  std::vector<Eigen::VectorXd> columns;
  for (const auto& rec : cohort.records) {
    auto days = draw_sample_days(rec.first_day, rec.last_day, rec.span_years(), density,
                                 derive_seed(seed, fnv1a64(rec.patient_id)));
    CurveSet cs = build_curveset(rec, cohort.catalog, medians, params,
                                 derive_seed(curve_seed, fnv1a64(rec.patient_id)));
    for (int d : days) {
      columns.push_back(cs.values.col(d - cs.start_day));
      xs.provenance.emplace_back(rec.patient_id, d);
    }
  }
  xs.data.resize(static_cast<Eigen::Index>(cohort.catalog.size()),
                 static_cast<Eigen::Index>(columns.size()));
  for (size_t i = 0; i < columns.size(); ++i)
    xs.data.col(static_cast<Eigen::Index>(i)) = columns[i];
  return xs;
}

Standardizer fit_standardizer(const Eigen::Ref<const Eigen::MatrixXd>& raw,
                              const std::vector<ChannelId>& channels,
                              double floor_per_year) {
  if (raw.cols() < 1) throw std::invalid_argument("cannot fit a standardizer on an empty matrix");
  if (raw.rows() != static_cast<Eigen::Index>(channels.size()))
    throw std::invalid_argument("row count does not match channel list");

  Standardizer std_;
  std_.floor_per_year = floor_per_year;
  std_.rows.resize(channels.size());
  const auto n = raw.cols();

  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    RowTransform rule = standardization_rule(channels[static_cast<size_t>(r)]);
    RowStandardizer row;
    row.transform = rule;
    if (rule == RowTransform::Identity) {
      std_.rows[static_cast<size_t>(r)] = row;
      continue;
    }
    Eigen::ArrayXd v = raw.row(r).transpose().array();
    if (rule == RowTransform::LogAffine) {
      if ((v < floor_per_year).any())
        log_warn("code intensities below the floor in row " + std::to_string(r) +
                 "; clamping before log");
      v = v.max(floor_per_year).log();
    }
    double mean = v.mean();
    double sd = n > 1 ? std::sqrt((v - mean).square().sum() / static_cast<double>(n - 1))
                      : 0.0;
    if (sd <= 0.0) {
      log_warn("zero variance in row " + std::to_string(r) + " (" +
               channels[static_cast<size_t>(r)].name + "); leaving it untouched");
      row.transform = RowTransform::Identity;
    } else {
      row.center = mean;
      row.scale = 2.0 * sd;
    }
    std_.rows[static_cast<size_t>(r)] = row;
  }
  return std_;
}

namespace {

void check_rows(const Standardizer& std_, Eigen::Index rows) {
  if (rows != static_cast<Eigen::Index>(std_.rows.size()))
    throw std::invalid_argument("standardizer row count mismatch");
}

}  // namespace

Eigen::MatrixXd apply_standardizer(const Standardizer& std_,
                                   const Eigen::Ref<const Eigen::MatrixXd>& raw) {
  check_rows(std_, raw.rows());
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    const RowStandardizer& row = std_.rows[static_cast<size_t>(r)];
    Eigen::ArrayXd v = raw.row(r).transpose().array();
    switch (row.transform) {
      case RowTransform::Identity:
        break;
      case RowTransform::Affine:
        v = (v - row.center) / row.scale;
        break;
      case RowTransform::LogAffine:
        if ((v < std_.floor_per_year).any())
          log_warn("non-positive code intensity; clamping to the floor before log");
        v = (v.max(std_.floor_per_year).log() - row.center) / row.scale;
        break;
    }
    out.row(r) = v.transpose();
  }
  return out;
}

Eigen::VectorXd apply_standardizer(const Standardizer& std_,
                                   const Eigen::Ref<const Eigen::VectorXd>& raw) {
  return apply_standardizer(std_, Eigen::MatrixXd(raw)).col(0);
}

Eigen::MatrixXd invert_standardizer(const Standardizer& std_,
                                    const Eigen::Ref<const Eigen::MatrixXd>& standardized) {
  check_rows(std_, standardized.rows());
  Eigen::MatrixXd out(standardized.rows(), standardized.cols());
  for (Eigen::Index r = 0; r < standardized.rows(); ++r) {
    const RowStandardizer& row = std_.rows[static_cast<size_t>(r)];
    Eigen::ArrayXd v = standardized.row(r).transpose().array();
    switch (row.transform) {
      case RowTransform::Identity:
        break;
      case RowTransform::Affine:
        v = v * row.scale + row.center;
        break;
      case RowTransform::LogAffine:
        v = (v * row.scale + row.center).exp();
        break;
    }
    out.row(r) = v.transpose();
  }
  return out;
}

Eigen::VectorXd invert_standardizer(const Standardizer& std_,
                                    const Eigen::Ref<const Eigen::VectorXd>& standardized) {
  return invert_standardizer(std_, Eigen::MatrixXd(standardized)).col(0);
}

Eigen::VectorXd last_cross_section(const CurveSet& curveset) {
  if (curveset.values.cols() < 1) throw std::invalid_argument("empty curveset");
  return curveset.values.col(curveset.values.cols() - 1);
}

void write_standardizer(const Standardizer& std_, const std::string& path) {
  nlohmann::json j;
  j["floor_per_year"] = std_.floor_per_year;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : std_.rows)
    j["rows"].push_back({{"transform", to_string(row.transform)},
                         {"center", row.center},
                         {"scale", row.scale}});
  io::write_json_atomic(path, j);
}

Standardizer read_standardizer(const std::string& path) {
  nlohmann::json j = io::read_json(path);
  Standardizer std_;
  std_.floor_per_year = j.at("floor_per_year").get<double>();
  for (const auto& e : j.at("rows")) {
    RowStandardizer row;
    row.transform = row_transform_from_string(e.at("transform").get<std::string>());
    row.center = e.at("center").get<double>();
    row.scale = e.at("scale").get<double>();
    std_.rows.push_back(row);
  }
  return std_;
}

void write_cross_sections(const CrossSectionMatrix& xs, const std::string& matrix_path,
                          const std::string& sidecar_path) {
  io::write_matrix_bundle(matrix_path, {{"X", xs.data}});
  nlohmann::json j;
  j["channels"] = nlohmann::json::array();
  for (const auto& id : xs.channels)
    j["channels"].push_back({{"kind", to_string(id.kind)}, {"name", id.name}});
  j["columns"] = nlohmann::json::array();
  for (const auto& [pid, day] : xs.provenance) j["columns"].push_back({pid, day});
  io::write_json_atomic(sidecar_path, j);
}

CrossSectionMatrix read_cross_sections(const std::string& matrix_path,
                                       const std::string& sidecar_path) {
  CrossSectionMatrix xs;
  xs.data = io::read_matrix_bundle(matrix_path).at("X");
  nlohmann::json j = io::read_json(sidecar_path);
  for (const auto& e : j.at("channels"))
    xs.channels.push_back({channel_kind_from_string(e.at("kind").get<std::string>()),
                           e.at("name").get<std::string>()});
  for (const auto& e : j.at("columns"))
    xs.provenance.emplace_back(e.at(0).get<std::string>(), e.at(1).get<int>());
  if (xs.data.rows() != static_cast<Eigen::Index>(xs.channels.size()) ||
      xs.data.cols() != static_cast<Eigen::Index>(xs.provenance.size()))
    throw ParseError("cross-section sidecar does not match the matrix shape");
  return xs;
}

}  // namespace ehrsig
