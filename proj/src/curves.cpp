#include "ehrsig/curves.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ehrsig {

namespace {

// Distance to the m-th nearest other event among sorted days; spans the whole
// clamp range when fewer than m other events exist.
double mth_nearest_distance(const std::vector<int>& days, size_t i, int m) {
  const size_t n = days.size();
  if (n <= static_cast<size_t>(m)) return std::numeric_limits<double>::infinity();
  size_t lo = i, hi = i;
  double dist = 0.0;
  for (int taken = 0; taken < m; ++taken) {
    double left = lo > 0 ? days[i] - days[lo - 1] : std::numeric_limits<double>::infinity();
    double right = hi + 1 < n ? days[hi + 1] - days[i] : std::numeric_limits<double>::infinity();
    if (left <= right) {
      --lo;
      dist = left;
    } else {
      ++hi;
      dist = right;
    }
  }
  return dist;
}

}  // namespace

Curve code_intensity_curve(const std::vector<int>& event_days, int first_day,
                           int last_day, const RashParams& params, std::uint64_t seed) {
  if (event_days.empty())
    throw std::invalid_argument("code_intensity_curve: no events; impute the baseline");
  if (first_day > last_day) throw std::invalid_argument("invalid span");
  std::vector<int> days = event_days;
  std::sort(days.begin(), days.end());
  if (days.front() < first_day || days.back() > last_day)
    throw std::invalid_argument("event outside record span");

  const int tau = last_day - first_day + 1;
  std::vector<double> bandwidth(days.size());
  for (size_t i = 0; i < days.size(); ++i) {
    double d = mth_nearest_distance(days, i, params.neighbor);
    bandwidth[i] = std::clamp(d, params.min_bandwidth_days, params.max_bandwidth_days);
  }

  // Daily mass accumulator in events/day; continuous span [first, last + 1).
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(tau);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double span_lo = first_day;
  const double span_hi = last_day + 1.0;
  const double inv_reps = 1.0 / params.replicates;

  for (int rep = 0; rep < params.replicates; ++rep) {
    for (size_t i = 0; i < days.size(); ++i) {
      const double h = bandwidth[i];
      const double lo = days[i] - unif(rng) * h;
      const double hi = lo + h;
      const double clo = std::max(lo, span_lo);
      const double chi = std::min(hi, span_hi);
      const double width = chi - clo;
      if (width <= 0) continue;  // cannot happen: the bin always covers the event day
      const double density = inv_reps / width;  // renormalized to unit mass in span
      int t0 = static_cast<int>(std::floor(clo));
      int t1 = static_cast<int>(std::ceil(chi)) - 1;
      t0 = std::max(t0, first_day);
      t1 = std::min(t1, last_day);
      for (int t = t0; t <= t1; ++t) {
        double overlap = std::min(chi, t + 1.0) - std::max(clo, static_cast<double>(t));
        if (overlap > 0) mass[t - first_day] += overlap * density;
      }
    }
  }

  Curve curve{first_day, Eigen::VectorXd(tau)};
  curve.values = params.floor_per_year + kDaysPerYear * mass.array();
  return curve;
}

Curve impute_code_baseline(int first_day, int last_day, double floor_per_year) {
  if (first_day > last_day) throw std::invalid_argument("invalid span");
  Curve c{first_day, Eigen::VectorXd::Constant(last_day - first_day + 1, floor_per_year)};
  return c;
}

namespace {

inline double sgn(double v) { return (v > 0) - (v < 0); }

// Endpoint slope: one-sided three-point estimate with the usual sign clamps.
double pchip_edge_slope(double h0, double h1, double d0, double d1) {
  double slope = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
  if (sgn(slope) != sgn(d0)) return 0.0;
  if (sgn(d0) != sgn(d1) && std::abs(slope) > 3.0 * std::abs(d0)) return 3.0 * d0;
  return slope;
}

}  // namespace

Curve measurement_curve(const std::vector<std::pair<int, double>>& observations,
                        int first_day, int last_day) {
  if (observations.empty())
    throw std::invalid_argument("measurement_curve: no observations");
  if (first_day > last_day) throw std::invalid_argument("invalid span");

  // Duplicate days: last value wins.
  std::vector<std::pair<int, double>> obs;
  obs.reserve(observations.size());
  for (const auto& o : observations) {
    if (!obs.empty() && o.first < obs.back().first)
      throw std::invalid_argument("measurement_curve: observations not sorted by day");
    if (!obs.empty() && o.first == obs.back().first) {
      if (o.second != obs.back().second)
        log_warn("conflicting measurements on day " + std::to_string(o.first) +
                 "; keeping the last value");
      obs.back().second = o.second;
    } else {
      obs.push_back(o);
    }
  }

  const int tau = last_day - first_day + 1;
  Curve curve{first_day, Eigen::VectorXd(tau)};
  const size_t n = obs.size();

  if (n == 1) {
    curve.values.setConstant(obs[0].second);
    return curve;
  }

  std::vector<double> x(n), y(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = obs[i].first;
    y[i] = obs[i].second;
  }

  std::vector<double> h(n - 1), delta(n - 1), slope(n);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  if (n == 2) {
    slope[0] = slope[1] = delta[0];  // two points: exactly linear
  } else {
    for (size_t i = 1; i + 1 < n; ++i) {
      if (delta[i - 1] * delta[i] <= 0.0) {
        slope[i] = 0.0;
      } else {
        double w1 = 2.0 * h[i] + h[i - 1];
        double w2 = h[i] + 2.0 * h[i - 1];
        slope[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
      }
    }
    slope[0] = pchip_edge_slope(h[0], h[1], delta[0], delta[1]);
    slope[n - 1] = pchip_edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  size_t seg = 0;
  for (int t = first_day; t <= last_day; ++t) {
    double v;
    if (t <= x[0]) {
      v = y[0];
    } else if (t >= x[n - 1]) {
      v = y[n - 1];
    } else {
      while (seg + 2 < n && x[seg + 1] < t) ++seg;
      double s = (t - x[seg]) / h[seg];
      double s2 = s * s, s3 = s2 * s;
      double h00 = 2 * s3 - 3 * s2 + 1;
      double h10 = s3 - 2 * s2 + s;
      double h01 = -2 * s3 + 3 * s2;
      double h11 = s3 - s2;
      v = h00 * y[seg] + h10 * h[seg] * slope[seg] + h01 * y[seg + 1] +
          h11 * h[seg] * slope[seg + 1];
    }
    curve.values[t - first_day] = v;
  }
  return curve;
}

Curve impute_measurement(double population_median, int first_day, int last_day) {
  if (!std::isfinite(population_median))
    throw NumericalError("impute_measurement: median unavailable; channel should have been filtered");
  if (first_day > last_day) throw std::invalid_argument("invalid span");
  return Curve{first_day,
               Eigen::VectorXd::Constant(last_day - first_day + 1, population_median)};
}

Curve medication_curve(const std::vector<int>& visit_days,
                       const std::vector<int>& noted_days, int first_day, int last_day) {
  if (first_day > last_day) throw std::invalid_argument("invalid span");
  const int tau = last_day - first_day + 1;
  Curve curve{first_day, Eigen::VectorXd::Zero(tau)};
  if (noted_days.empty()) return curve;

  std::vector<int> visits = visit_days;
  std::sort(visits.begin(), visits.end());
  visits.erase(std::unique(visits.begin(), visits.end()), visits.end());
  std::vector<int> noted_sorted = noted_days;
  std::sort(noted_sorted.begin(), noted_sorted.end());
  for (int d : noted_sorted)
    if (!std::binary_search(visits.begin(), visits.end(), d))
      throw std::invalid_argument("medication noted outside any visit");

  auto noted = [&](int day) {
    return std::binary_search(noted_sorted.begin(), noted_sorted.end(), day);
  };

  auto fill = [&](double from, double to_exclusive) {
    int t0 = std::max(first_day, static_cast<int>(std::ceil(from)));
    for (int t = t0; t <= last_day && t < to_exclusive; ++t)
      curve.values[t - first_day] = 1.0;
  };

  for (size_t i = 0; i < visits.size(); ++i) {
    if (!noted(visits[i])) continue;
    if (i + 1 == visits.size()) {
      // No later visit: no evidence of stopping, carry to end of record.
      fill(visits[i], last_day + 1.0);
    } else if (noted(visits[i + 1])) {
      fill(visits[i], visits[i + 1] + 1.0);
    } else {
      fill(visits[i], (visits[i] + visits[i + 1]) / 2.0);
    }
  }
  return curve;
}

Curve demographic_curve(const ChannelId& channel, const Demographics& demo,
                        int first_day, int last_day) {
  if (channel.kind != ChannelKind::Demographic)
    throw std::invalid_argument("not a demographic channel");
  if (first_day > last_day) throw std::invalid_argument("invalid span");
  const int tau = last_day - first_day + 1;
  Curve curve{first_day, Eigen::VectorXd::Zero(tau)};
  if (!demo.known) return curve;

  if (channel.name == "sex") {
    curve.values.setConstant(demo.sex_female);
  } else if (channel.name.rfind("race:", 0) == 0) {
    curve.values.setConstant(channel.name.substr(5) == demo.race ? 1.0 : 0.0);
  } else if (channel.name == "age") {
    for (int t = first_day; t <= last_day; ++t)
      curve.values[t - first_day] = std::floor((t - demo.birth_day) / kDaysPerYear);
  } else {
    throw std::invalid_argument("unknown demographic channel: " + channel.name);
  }
  return curve;
}

std::map<std::string, double> measurement_medians(const Cohort& cohort) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& rec : cohort.records)
    for (const auto& m : rec.measurements) values[m.channel].push_back(m.value);
  std::map<std::string, double> medians;
  for (auto& [channel, v] : values) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    medians[channel] = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return medians;
}

CurveSet build_curveset(const PatientRecord& record,
                        const std::vector<ChannelId>& catalog,
                        const std::map<std::string, double>& medians,
                        const RashParams& params, std::uint64_t seed) {
  const int p = static_cast<int>(catalog.size());
  const int tau = record.span_days();
  CurveSet cs{record.patient_id, record.first_day, Eigen::MatrixXd(p, tau)};

  std::vector<int> visit_days;
  visit_days.reserve(record.visits.size());
  for (const auto& v : record.visits) visit_days.push_back(v.day);

  for (int r = 0; r < p; ++r) {
    const ChannelId& id = catalog[r];
    Curve curve;
    switch (id.kind) {
      case ChannelKind::Code: {
        std::vector<int> days;
        auto lo = std::lower_bound(record.code_events.begin(), record.code_events.end(),
                                   id.name, [](const CodeEvent& e, const std::string& c) {
                                     return e.channel < c;
                                   });
        for (auto it = lo; it != record.code_events.end() && it->channel == id.name; ++it)
          days.push_back(it->day);
        if (days.empty()) {
          curve = impute_code_baseline(record.first_day, record.last_day,
                                       params.floor_per_year);
        } else {
          curve = code_intensity_curve(days, record.first_day, record.last_day, params,
                                       derive_seed(seed, fnv1a64(id.name)));
        }
        break;
      }
      case ChannelKind::Measurement: {
        std::vector<std::pair<int, double>> obs;
        auto lo = std::lower_bound(record.measurements.begin(), record.measurements.end(),
                                   id.name,
                                   [](const MeasurementEvent& e, const std::string& c) {
                                     return e.channel < c;
                                   });
        for (auto it = lo; it != record.measurements.end() && it->channel == id.name; ++it)
          obs.emplace_back(it->day, it->value);
        if (obs.empty()) {
          auto med = medians.find(id.name);
          if (med == medians.end())
            throw NumericalError("no population median for measurement channel " + id.name);
          curve = impute_measurement(med->second, record.first_day, record.last_day);
        } else {
          curve = measurement_curve(obs, record.first_day, record.last_day);
        }
        break;
      }
      case ChannelKind::Medication: {
        std::vector<int> noted;
        for (const auto& v : record.visits)
          if (std::binary_search(v.medications.begin(), v.medications.end(), id.name))
            noted.push_back(v.day);
        curve = medication_curve(visit_days, noted, record.first_day, record.last_day);
        break;
      }
      case ChannelKind::Demographic:
        curve = demographic_curve(id, record.demographics, record.first_day,
                                  record.last_day);
        break;
    }
    cs.values.row(r) = curve.values.transpose();
  }
  return cs;
}

}  // namespace ehrsig
