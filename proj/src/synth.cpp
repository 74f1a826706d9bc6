#include "ehrsig/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "ehrsig/io.hpp"

namespace ehrsig {

namespace {

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Unit-variance Laplace draw.
double laplace(std::mt19937_64& rng, double sd = 1.0) {
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  const double u = unif(rng);
  const double b = sd / std::sqrt(2.0);
  return -b * std::copysign(std::log1p(-2.0 * std::abs(u)), u);
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

Eigen::VectorXd SourceTrajectory::at(int day) const {
  const double g = (day - first_day) / step_days;
  const auto n = static_cast<Eigen::Index>(levels.cols());
  const auto lo = static_cast<Eigen::Index>(std::clamp<double>(std::floor(g), 0.0,
                                                               static_cast<double>(n - 1)));
  const auto hi = std::min<Eigen::Index>(lo + 1, n - 1);
  const double frac = std::clamp(g - static_cast<double>(lo), 0.0, 1.0);
  return levels.col(lo) * (1.0 - frac) + levels.col(hi) * frac;
}

Eigen::VectorXd GroundTruth::source_level(const std::string& patient_id, int day) const {
  auto it = trajectories.find(patient_id);
  if (it == trajectories.end())
    throw std::invalid_argument("unknown patient in ground truth: " + patient_id);
  return it->second.at(day);
}

Eigen::MatrixXd GroundTruth::sources_at(
    const std::vector<std::pair<std::string, int>>& provenance) const {
  Eigen::MatrixXd S(label_weights.size(), static_cast<Eigen::Index>(provenance.size()));
  for (size_t c = 0; c < provenance.size(); ++c)
    S.col(static_cast<Eigen::Index>(c)) = source_level(provenance[c].first, provenance[c].second);
  return S;
}

SynthCohort generate_cohort(const SynthParams& params) {
  if (params.k > params.p - 5)
    throw std::invalid_argument("generate_cohort: need p >= k + 5 channels");
  if (params.n_patients < 1) throw std::invalid_argument("need at least one patient");

  const int n_demo = 5;  // age, sex, race:{a,b,c}
  const int n_signal = params.p - n_demo;
  const int n_code = std::max(1, static_cast<int>(std::lround(n_signal * 0.55)));
  const int n_meas = std::max(1, static_cast<int>(std::lround(n_signal * 0.30)));
  const int n_med = std::max(1, n_signal - n_code - n_meas);

  SynthCohort out;
  Cohort& cohort = out.cohort;
  GroundTruth& truth = out.truth;
  truth.seed = params.seed;

  // Catalog in the parser's (kind, name) order: code, measurement,
  // medication, demographic.
  for (int c = 0; c < n_code; ++c)
    cohort.catalog.push_back({ChannelKind::Code, "code_" + zero_pad(c, 3)});
  for (int c = 0; c < n_meas; ++c)
    cohort.catalog.push_back({ChannelKind::Measurement, "lab_" + zero_pad(c, 3)});
  for (int c = 0; c < n_med; ++c)
    cohort.catalog.push_back({ChannelKind::Medication, "med_" + zero_pad(c, 3)});
  cohort.catalog.push_back({ChannelKind::Demographic, "age"});
  cohort.catalog.push_back({ChannelKind::Demographic, "race:african"});
  cohort.catalog.push_back({ChannelKind::Demographic, "race:asian"});
  cohort.catalog.push_back({ChannelKind::Demographic, "race:european"});
  cohort.catalog.push_back({ChannelKind::Demographic, "sex"});
  std::sort(cohort.catalog.begin(), cohort.catalog.end());
  truth.channels = cohort.catalog;

  const int p = static_cast<int>(cohort.catalog.size());
  const int k = params.k;

  std::mt19937_64 mix_rng(derive_seed(params.seed, 0x314159));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  truth.mixing = Eigen::MatrixXd::Zero(p, k);
  Eigen::VectorXd code_base(p), meas_mu(p), meas_sd(p), med_thresh(p);
  code_base.setZero();
  meas_mu.setZero();
  meas_sd.setZero();
  med_thresh.setZero();
  for (int r = 0; r < p; ++r) {
    const ChannelId& id = cohort.catalog[static_cast<size_t>(r)];
    if (id.kind == ChannelKind::Demographic) continue;
    Eigen::VectorXd dir(k);
    for (int j = 0; j < k; ++j) dir[j] = gauss(mix_rng);
    dir.normalize();
    double norm = 0.0;
    switch (id.kind) {
      case ChannelKind::Code:
        norm = params.code_row_norm_lo +
               unif(mix_rng) * (params.code_row_norm_hi - params.code_row_norm_lo);
        code_base[r] = std::log(params.code_rate_lo +
                                unif(mix_rng) * (params.code_rate_hi - params.code_rate_lo));
        break;
      case ChannelKind::Measurement:
        norm = 0.8 + unif(mix_rng) * 0.8;
        meas_mu[r] = -5.0 + unif(mix_rng) * 155.0;
        meas_sd[r] = params.meas_noise * norm;
        break;
      case ChannelKind::Medication:
        norm = 0.8 + unif(mix_rng) * 0.8;
        med_thresh[r] = params.med_threshold_lo +
                        unif(mix_rng) * (params.med_threshold_hi - params.med_threshold_lo);
        break;
      case ChannelKind::Demographic:
        break;
    }
    truth.mixing.row(r) = (dir * norm).transpose();
  }

  truth.label_weights = Eigen::VectorXd::Zero(k);
  for (int j = 0; j < std::min(params.designated, k); ++j) {
    truth.designated.push_back(j);
    const double sign = j % 3 == 2 ? -1.0 : 1.0;  // include a protective source
    truth.label_weights[j] = sign * params.label_weight;
  }

  const double phi = params.traj_phi;
  const double innovation_sd = std::sqrt(std::max(1e-12, 1.0 - phi * phi));

  for (int i = 0; i < params.n_patients; ++i) {
    PatientRecord rec;
    rec.patient_id = "p" + zero_pad(i, 5);
    std::mt19937_64 rng(derive_seed(params.seed, 0xA11CE + static_cast<std::uint64_t>(i)));

    double years = params.years_mean + params.years_sd * gauss(rng);
    years = std::clamp(years, params.years_min, params.years_max);
    const int tau = std::max(2, static_cast<int>(std::lround(years * kDaysPerYear)));
    rec.first_day = 0;
    rec.last_day = tau - 1;

    rec.demographics.known = true;
    rec.demographics.sex_female = unif(rng) < 0.5 ? 1 : 0;
    const double race_draw = unif(rng);
    rec.demographics.race =
        race_draw < 0.7 ? "european" : (race_draw < 0.9 ? "african" : "asian");
    const double age0 = 25.0 + unif(rng) * 50.0;
    rec.demographics.birth_day = -static_cast<int>(std::lround(age0 * kDaysPerYear));

    // Slowly varying non-Gaussian sources: AR(1) with Laplace innovations on a
    // coarse grid, linearly interpolated between grid points.
    SourceTrajectory traj;
    traj.first_day = 0;
    traj.step_days = params.traj_step_days;
    const auto grid = static_cast<Eigen::Index>(
        std::ceil(static_cast<double>(tau) / params.traj_step_days)) + 1;
    traj.levels.resize(k, grid);
    for (int j = 0; j < k; ++j) traj.levels(j, 0) = laplace(rng);
    for (Eigen::Index g = 1; g < grid; ++g)
      for (int j = 0; j < k; ++j)
        traj.levels(j, g) = phi * traj.levels(j, g - 1) + laplace(rng, innovation_sd);

    // Daily source levels once; channels reuse them.
    Eigen::MatrixXd S_daily(k, tau);
    for (int t = 0; t < tau; ++t) S_daily.col(t) = traj.at(t);
    Eigen::MatrixXd logits = truth.mixing * S_daily;  // p x tau

    for (int r = 0; r < p; ++r) {
      const ChannelId& id = cohort.catalog[static_cast<size_t>(r)];
      switch (id.kind) {
        case ChannelKind::Code: {
          for (int t = 0; t < tau; ++t) {
            const double rate = std::exp(code_base[r] + logits(r, t)) / kDaysPerYear;
            std::poisson_distribution<int> pois(rate);
            const int events = pois(rng);
            for (int e = 0; e < events; ++e) rec.code_events.push_back({id.name, t});
          }
          break;
        }
        case ChannelKind::Measurement: {
          std::poisson_distribution<int> pois(params.meas_obs_per_year * years);
          const int count = std::max(1, pois(rng));
          std::uniform_int_distribution<int> day(0, tau - 1);
          std::normal_distribution<double> noise(0.0, meas_sd[r]);
          for (int o = 0; o < count; ++o) {
            const int t = day(rng);
            rec.measurements.push_back({id.name, t, meas_mu[r] + logits(r, t) + noise(rng)});
          }
          break;
        }
        case ChannelKind::Medication:
        case ChannelKind::Demographic:
          break;
      }
    }

    // Visits anchor the span at both ends so parsed spans match the truth.
    std::set<int> visit_days{0, tau - 1};
    {
      std::poisson_distribution<int> pois(params.visits_per_year * years);
      std::uniform_int_distribution<int> day(0, tau - 1);
      const int extra = pois(rng);
      for (int v = 0; v < extra; ++v) visit_days.insert(day(rng));
    }
    for (int day : visit_days) {
      Visit visit{day, {}};
      for (int r = 0; r < p; ++r) {
        if (cohort.catalog[static_cast<size_t>(r)].kind != ChannelKind::Medication) continue;
        if (logits(r, day) > med_thresh[r])
          visit.medications.push_back(cohort.catalog[static_cast<size_t>(r)].name);
      }
      rec.visits.push_back(std::move(visit));
    }

    const double z = truth.label_weights.dot(S_daily.col(tau - 1));
    out.labels[rec.patient_id] = unif(rng) < sigmoid(z) ? 1 : 0;

    std::sort(rec.code_events.begin(), rec.code_events.end());
    std::stable_sort(rec.measurements.begin(), rec.measurements.end(),
                     [](const MeasurementEvent& a, const MeasurementEvent& b) {
                       return std::tie(a.channel, a.day) < std::tie(b.channel, b.day);
                     });
    truth.trajectories[rec.patient_id] = std::move(traj);
    cohort.records.push_back(std::move(rec));
  }
  return out;
}

LingamSample generate_lingam_cross_sections(int p, int k, int n, double noise_sd,
                                            std::uint64_t seed) {
  if (k > p) throw std::invalid_argument("k must be <= p");
  LingamSample sample;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  sample.mixing.resize(p, k);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < k; ++j) sample.mixing(i, j) = gauss(rng);
  sample.sources.resize(k, n);
  for (int j = 0; j < k; ++j)
    for (int c = 0; c < n; ++c) sample.sources(j, c) = laplace(rng);
  sample.X = sample.mixing * sample.sources;
  if (noise_sd > 0) {
    for (int i = 0; i < p; ++i)
      for (int c = 0; c < n; ++c) sample.X(i, c) += noise_sd * gauss(rng);
  }
  return sample;
}

std::vector<int> max_assignment(const Eigen::Ref<const Eigen::MatrixXd>& scores) {
  // Hungarian algorithm with potentials on the padded square cost matrix.
  const auto n_rows = static_cast<int>(scores.rows());
  const auto n_cols = static_cast<int>(scores.cols());
  const int n = std::max(n_rows, n_cols);
  const double big = scores.size() ? scores.cwiseAbs().maxCoeff() + 1.0 : 1.0;

  auto cost = [&](int r, int c) {
    if (r < n_rows && c < n_cols) return big - scores(r, c);
    return big;  // padding
  };

  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> way(static_cast<size_t>(n) + 1, 0), match(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1,
                             std::numeric_limits<double>::infinity());
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = match[static_cast<size_t>(j0)];
      double delta = std::numeric_limits<double>::infinity();
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur =
            cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(static_cast<size_t>(n_rows), -1);
  for (int j = 1; j <= n; ++j) {
    const int i = match[static_cast<size_t>(j)];
    if (i >= 1 && i <= n_rows && j <= n_cols) row_to_col[static_cast<size_t>(i - 1)] = j - 1;
  }
  return row_to_col;
}

double recovery_score(const Eigen::Ref<const Eigen::MatrixXd>& recovered,
                      const Eigen::Ref<const Eigen::MatrixXd>& truth) {
  if (recovered.cols() != truth.cols())
    throw std::invalid_argument("recovery_score: column counts differ");
  const auto kr = recovered.rows();
  const auto kt = truth.rows();
  if (kr != kt)
    log_warn("recovery_score: source counts differ; matching the smaller set");
  const auto n = recovered.cols();

  auto center_scale = [n](const Eigen::Ref<const Eigen::MatrixXd>& M) {
    Eigen::MatrixXd C = M.colwise() - M.rowwise().mean();
    for (Eigen::Index r = 0; r < C.rows(); ++r) {
      const double norm = C.row(r).norm();
      if (norm > 0) C.row(r) /= norm;
    }
    return C;
  };
  Eigen::MatrixXd R = center_scale(recovered);
  Eigen::MatrixXd T = center_scale(truth);
  (void)n;
  Eigen::MatrixXd corr = (R * T.transpose()).cwiseAbs();  // kr x kt

  std::vector<int> assign = max_assignment(corr);
  double total = 0.0;
  int matched = 0;
  for (size_t r = 0; r < assign.size(); ++r) {
    if (assign[r] < 0) continue;
    total += corr(static_cast<Eigen::Index>(r), assign[r]);
    ++matched;
  }
  return matched > 0 ? total / matched : 0.0;
}

double recovery_score(const ICAModel& model, const CrossSectionMatrix& standardized,
                      const GroundTruth& truth) {
  Eigen::MatrixXd recovered = source_matrix(model, standardized.data);
  Eigen::MatrixXd true_sources = truth.sources_at(standardized.provenance);
  return recovery_score(recovered, true_sources);
}

void write_ground_truth(const GroundTruth& truth, const std::string& bundle_path,
                        const std::string& manifest_path) {
  std::vector<std::pair<std::string, Eigen::MatrixXd>> mats;
  mats.emplace_back("mixing", truth.mixing);
  mats.emplace_back("label_weights", truth.label_weights);
  for (const auto& [pid, traj] : truth.trajectories)
    mats.emplace_back("traj/" + pid, traj.levels);
  io::write_matrix_bundle(bundle_path, mats);

  nlohmann::json j;
  j["seed"] = truth.seed;
  j["designated"] = truth.designated;
  j["channels"] = nlohmann::json::array();
  for (const auto& id : truth.channels)
    j["channels"].push_back({{"kind", to_string(id.kind)}, {"name", id.name}});
  j["trajectory"] = nlohmann::json::array();
  for (const auto& [pid, traj] : truth.trajectories)
    j["trajectory"].push_back(
        {{"patient", pid}, {"first_day", traj.first_day}, {"step_days", traj.step_days}});
  io::write_json_atomic(manifest_path, j);
}

GroundTruth read_ground_truth(const std::string& bundle_path,
                              const std::string& manifest_path) {
  GroundTruth truth;
  auto mats = io::read_matrix_bundle(bundle_path);
  truth.mixing = mats.at("mixing");
  truth.label_weights = mats.at("label_weights");
  nlohmann::json j = io::read_json(manifest_path);
  truth.seed = j.at("seed").get<std::uint64_t>();
  truth.designated = j.at("designated").get<std::vector<int>>();
  for (const auto& e : j.at("channels"))
    truth.channels.push_back({channel_kind_from_string(e.at("kind").get<std::string>()),
                              e.at("name").get<std::string>()});
  for (const auto& e : j.at("trajectory")) {
    SourceTrajectory traj;
    traj.first_day = e.at("first_day").get<int>();
    traj.step_days = e.at("step_days").get<double>();
    const std::string pid = e.at("patient").get<std::string>();
    traj.levels = mats.at("traj/" + pid);
    truth.trajectories[pid] = std::move(traj);
  }
  return truth;
}

void write_labels(const std::map<std::string, int>& labels, const std::string& path) {
  std::string out;
  for (const auto& [pid, label] : labels)
    out += pid + "\t" + std::to_string(label) + "\n";
  io::write_file_atomic(path, out);
}

std::map<std::string, int> read_labels(const std::string& path) {
  std::string content = io::read_file(path);
  std::map<std::string, int> labels;
  size_t pos = 0;
  long line_no = 0;
  while (pos < content.size()) {
    size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string line = content.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("labels line " + std::to_string(line_no) + ": expected <patient>\\t<0|1>");
    const std::string value = line.substr(tab + 1);
    if (value != "0" && value != "1")
      throw ParseError("labels line " + std::to_string(line_no) + ": label must be 0 or 1");
    labels[line.substr(0, tab)] = value == "1" ? 1 : 0;
  }
  return labels;
}

}  // namespace ehrsig
