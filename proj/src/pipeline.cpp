#include "ehrsig/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ehrsig/diagram.hpp"
#include "ehrsig/ica.hpp"
#include "ehrsig/io.hpp"
#include "ehrsig/logistic.hpp"
#include "ehrsig/metrics.hpp"
#include "ehrsig/shap.hpp"

namespace ehrsig {

namespace fs = std::filesystem;
using nlohmann::json;

Stage stage_from_string(const std::string& s) {
  if (s == "synth") return Stage::Synth;
  if (s == "ingest") return Stage::Ingest;
  if (s == "curves") return Stage::Curves;
  if (s == "sample") return Stage::Sample;
  if (s == "ica") return Stage::Ica;
  if (s == "train") return Stage::Train;
  if (s == "eval") return Stage::Eval;
  if (s == "explain") return Stage::Explain;
  if (s == "diagram") return Stage::Diagram;
  if (s == "pipeline") return Stage::Pipeline;
  throw ConfigError("unknown stage: " + s);
}

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::Synth: return "synth";
    case Stage::Ingest: return "ingest";
    case Stage::Curves: return "curves";
    case Stage::Sample: return "sample";
    case Stage::Ica: return "ica";
    case Stage::Train: return "train";
    case Stage::Eval: return "eval";
    case Stage::Explain: return "explain";
    case Stage::Diagram: return "diagram";
    case Stage::Pipeline: return "pipeline";
  }
  return "?";
}

namespace {

// ---- config -----------------------------------------------------------

template <typename T>
T field_or(const json& j, const std::string& section, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section.empty() ? key : section + "." + key + ": invalid value");
  }
}

void require_range(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

}  // namespace

PipelineConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  PipelineConfig c;
  c.work_dir = field_or<std::string>(j, "", "work_dir", c.work_dir);
  c.seed = field_or<std::uint64_t>(j, "", "seed", c.seed);
  c.jobs = field_or<int>(j, "", "jobs", c.jobs);
  require_range(c.jobs >= 1, "jobs", "must be >= 1");
  c.events_path = field_or<std::string>(j, "", "events", c.artifact("events.log"));
  c.demographics_path =
      field_or<std::string>(j, "", "demographics", c.artifact("demographics.tsv"));
  c.labels_path = field_or<std::string>(j, "", "labels", c.artifact("labels.tsv"));

  if (j.contains("ingest")) {
    const json& s = j["ingest"];
    c.ingest.min_total_events = field_or<long>(s, "ingest", "min_total_events", c.ingest.min_total_events);
    c.ingest.min_records = field_or<long>(s, "ingest", "min_records", c.ingest.min_records);
    require_range(c.ingest.min_total_events >= 0, "ingest.min_total_events", "must be >= 0");
    require_range(c.ingest.min_records >= 0, "ingest.min_records", "must be >= 0");
  }
  if (j.contains("curvegen")) {
    const json& s = j["curvegen"];
    c.curvegen.rash.replicates = field_or<int>(s, "curvegen", "replicates", c.curvegen.rash.replicates);
    c.curvegen.rash.neighbor = field_or<int>(s, "curvegen", "neighbor", c.curvegen.rash.neighbor);
    c.curvegen.rash.min_bandwidth_days =
        field_or<double>(s, "curvegen", "min_bandwidth_days", c.curvegen.rash.min_bandwidth_days);
    c.curvegen.rash.max_bandwidth_days =
        field_or<double>(s, "curvegen", "max_bandwidth_days", c.curvegen.rash.max_bandwidth_days);
    c.curvegen.rash.floor_per_year =
        field_or<double>(s, "curvegen", "floor_per_year", c.curvegen.rash.floor_per_year);
    c.curvegen.dump_patients = field_or<std::vector<std::string>>(
        s, "curvegen", "dump_patients", c.curvegen.dump_patients);
    require_range(c.curvegen.rash.replicates >= 1, "curvegen.replicates", "must be >= 1");
    require_range(c.curvegen.rash.neighbor >= 1, "curvegen.neighbor", "must be >= 1");
    require_range(c.curvegen.rash.min_bandwidth_days > 0, "curvegen.min_bandwidth_days", "must be > 0");
    require_range(c.curvegen.rash.max_bandwidth_days >= c.curvegen.rash.min_bandwidth_days,
                  "curvegen.max_bandwidth_days", "must be >= min_bandwidth_days");
    require_range(c.curvegen.rash.floor_per_year > 0, "curvegen.floor_per_year", "must be > 0");
  }
  if (j.contains("sampler")) {
    const json& s = j["sampler"];
    c.sampler.density = field_or<double>(s, "sampler", "density", c.sampler.density);
    require_range(c.sampler.density > 0, "sampler.density", "must be > 0");
  }
  if (j.contains("ica")) {
    const json& s = j["ica"];
    c.ica.k = field_or<int>(s, "ica", "k", c.ica.k);
    c.ica.tol = field_or<double>(s, "ica", "tol", c.ica.tol);
    c.ica.max_iter = field_or<int>(s, "ica", "max_iter", c.ica.max_iter);
    require_range(c.ica.k >= 1, "ica.k", "must be >= 1");
    require_range(c.ica.tol > 0, "ica.tol", "must be > 0");
    require_range(c.ica.max_iter >= 1, "ica.max_iter", "must be >= 1");
  }
  if (j.contains("train")) {
    const json& s = j["train"];
    c.train.budget = field_or<int>(s, "train", "budget", c.train.budget);
    c.train.alpha_filter = field_or<double>(s, "train", "alpha_filter", c.train.alpha_filter);
    c.train.b_oob = field_or<int>(s, "train", "b_oob", c.train.b_oob);
    c.train.folds = field_or<int>(s, "train", "folds", c.train.folds);
    c.train.test_fraction = field_or<double>(s, "train", "test_fraction", c.train.test_fraction);
    c.train.representations = field_or<std::vector<std::string>>(
        s, "train", "representations", c.train.representations);
    c.train.families = field_or<std::vector<std::string>>(s, "train", "families", c.train.families);
    c.train.l1_lo = field_or<double>(s, "train", "l1_lo", c.train.l1_lo);
    c.train.l1_hi = field_or<double>(s, "train", "l1_hi", c.train.l1_hi);
    c.train.l2_lo = field_or<double>(s, "train", "l2_lo", c.train.l2_lo);
    c.train.l2_hi = field_or<double>(s, "train", "l2_hi", c.train.l2_hi);
    c.train.gamma_lo = field_or<double>(s, "train", "gamma_lo", c.train.gamma_lo);
    c.train.gamma_hi = field_or<double>(s, "train", "gamma_hi", c.train.gamma_hi);
    require_range(c.train.budget >= 1, "train.budget", "must be >= 1");
    require_range(c.train.alpha_filter > 0 && c.train.alpha_filter < 1, "train.alpha_filter",
                  "must be in (0,1)");
    require_range(c.train.b_oob >= 1, "train.b_oob", "must be >= 1");
    require_range(c.train.folds >= 2, "train.folds", "must be >= 2");
    require_range(c.train.test_fraction > 0 && c.train.test_fraction < 1,
                  "train.test_fraction", "must be in (0,1)");
    require_range(c.train.l1_lo > 0 && c.train.l1_hi >= c.train.l1_lo, "train.l1_lo", "bad range");
    require_range(c.train.l2_lo > 0 && c.train.l2_hi >= c.train.l2_lo, "train.l2_lo", "bad range");
    for (const auto& r : c.train.representations)
      require_range(r == "channels" || r == "signatures", "train.representations",
                    "entries must be channels|signatures");
    for (const auto& f : c.train.families)
      require_range(f == "enet" || f == "adanet", "train.families",
                    "entries must be enet|adanet");
  }
  if (j.contains("eval")) {
    const json& s = j["eval"];
    c.eval.bootstrap_b = field_or<int>(s, "eval", "bootstrap_b", c.eval.bootstrap_b);
    c.eval.level = field_or<double>(s, "eval", "level", c.eval.level);
    c.eval.threshold = field_or<double>(s, "eval", "threshold", c.eval.threshold);
    c.eval.external_scores = field_or<std::map<std::string, std::string>>(
        s, "eval", "external_scores", c.eval.external_scores);
    require_range(c.eval.bootstrap_b >= 100, "eval.bootstrap_b", "must be >= 100");
    require_range(c.eval.level > 0 && c.eval.level < 1, "eval.level", "must be in (0,1)");
  }
  if (j.contains("explain")) {
    const json& s = j["explain"];
    c.explain.b_importance = field_or<int>(s, "explain", "b_importance", c.explain.b_importance);
    c.explain.tau_inert = field_or<double>(s, "explain", "tau_inert", c.explain.tau_inert);
    c.explain.model = field_or<std::string>(s, "explain", "model", c.explain.model);
    c.explain.record = field_or<std::string>(s, "explain", "record", c.explain.record);
    c.explain.top_m = field_or<int>(s, "explain", "top_m", c.explain.top_m);
    require_range(c.explain.b_importance >= 10, "explain.b_importance", "must be >= 10");
    require_range(c.explain.tau_inert >= 0, "explain.tau_inert", "must be >= 0");
    require_range(c.explain.top_m >= 1, "explain.top_m", "must be >= 1");
  }
  if (j.contains("diagram")) {
    const json& s = j["diagram"];
    c.diagram.top_m = field_or<int>(s, "diagram", "top_m", c.diagram.top_m);
    c.diagram.signatures =
        field_or<std::vector<int>>(s, "diagram", "signatures", c.diagram.signatures);
    c.diagram.max_diagrams = field_or<int>(s, "diagram", "max_diagrams", c.diagram.max_diagrams);
    require_range(c.diagram.top_m >= 1, "diagram.top_m", "must be >= 1");
    require_range(c.diagram.max_diagrams >= 1, "diagram.max_diagrams", "must be >= 1");
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    c.synth.p = field_or<int>(s, "synth", "p", c.synth.p);
    c.synth.k = field_or<int>(s, "synth", "k", c.synth.k);
    c.synth.n_patients = field_or<int>(s, "synth", "n_patients", c.synth.n_patients);
    c.synth.years_mean = field_or<double>(s, "synth", "years_mean", c.synth.years_mean);
    c.synth.designated = field_or<int>(s, "synth", "designated", c.synth.designated);
    c.synth.label_weight = field_or<double>(s, "synth", "label_weight", c.synth.label_weight);
    c.synth.meas_obs_per_year =
        field_or<double>(s, "synth", "meas_obs_per_year", c.synth.meas_obs_per_year);
    c.synth.visits_per_year =
        field_or<double>(s, "synth", "visits_per_year", c.synth.visits_per_year);
    c.synth.seed = field_or<std::uint64_t>(s, "synth", "seed", c.synth.seed);
    require_range(c.synth.p >= c.synth.k + 5, "synth.p", "must be >= k + 5");
    require_range(c.synth.n_patients >= 1, "synth.n_patients", "must be >= 1");
    require_range(c.synth.years_mean > 0, "synth.years_mean", "must be > 0");
    require_range(c.synth.designated >= 0 && c.synth.designated <= c.synth.k,
                  "synth.designated", "must be in [0, k]");
  }
  return c;
}

PipelineConfig load_config(const std::string& path) {
  return config_from_json_text(io::read_file(path));
}

namespace {

// ---- stage manifests ---------------------------------------------------

struct StageIo {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json params;
  json extra;  // seeds and run metadata
};

std::string manifest_path(const PipelineConfig& c, Stage stage) {
  return c.artifact(std::string(to_string(stage)) + ".manifest.json");
}

json input_hashes(const std::vector<std::string>& inputs) {
  json h = json::object();
  for (const auto& path : inputs) {
    if (!io::file_exists(path)) throw MissingArtifactError("missing input artifact: " + path);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(io::hash_file(path)));
    h[fs::path(path).filename().string()] = buf;
  }
  return h;
}

bool stage_up_to_date(const PipelineConfig& c, Stage stage, const StageIo& io_spec) {
  const std::string mpath = manifest_path(c, stage);
  if (!io::file_exists(mpath)) return false;
  for (const auto& out : io_spec.outputs)
    if (!io::file_exists(out)) return false;
  json manifest;
  try {
    manifest = io::read_json(mpath);
  } catch (const std::exception&) {
    return false;
  }
  try {
    return manifest.at("inputs") == input_hashes(io_spec.inputs) &&
           manifest.at("params") == io_spec.params;
  } catch (const std::exception&) {
    return false;
  }
}

void write_stage_manifest(const PipelineConfig& c, Stage stage, const StageIo& io_spec) {
  json manifest;
  manifest["stage"] = to_string(stage);
  manifest["version"] = kVersion;
  manifest["inputs"] = input_hashes(io_spec.inputs);
  manifest["params"] = io_spec.params;
  json outs = json::array();
  for (const auto& out : io_spec.outputs) outs.push_back(fs::path(out).filename().string());
  manifest["outputs"] = outs;
  manifest["run"] = io_spec.extra;
  io::write_json_atomic(manifest_path(c, stage), manifest);
}

// Runs `body` unless the stage is already up to date.
template <typename Body>
void guarded_stage(const PipelineConfig& c, Stage stage, StageIo& io_spec, Body&& body) {
  fs::create_directories(c.work_dir);
  if (stage_up_to_date(c, stage, io_spec)) {
    std::fprintf(stderr, "[ehrsig] %s: up to date, skipping\n", to_string(stage));
    return;
  }
  body();
  write_stage_manifest(c, stage, io_spec);
}

// ---- shared loading helpers --------------------------------------------

Cohort load_cohort_restricted(const PipelineConfig& c) {
  const std::string manifest = c.artifact("cohort_manifest.json");
  if (!io::file_exists(manifest))
    throw MissingArtifactError("missing input artifact: " + manifest + " (run ingest first)");
  auto catalog = read_catalog_from_manifest(manifest);
  Cohort cohort = parse_event_log_files(c.events_path, c.demographics_path);

  std::set<std::string> codes, meas, meds;
  for (const auto& id : catalog) {
    if (id.kind == ChannelKind::Code) codes.insert(id.name);
    if (id.kind == ChannelKind::Measurement) meas.insert(id.name);
    if (id.kind == ChannelKind::Medication) meds.insert(id.name);
  }
  for (auto& rec : cohort.records) {
    std::erase_if(rec.code_events, [&](const CodeEvent& e) { return !codes.count(e.channel); });
    std::erase_if(rec.measurements,
                  [&](const MeasurementEvent& m) { return !meas.count(m.channel); });
    for (auto& v : rec.visits)
      std::erase_if(v.medications, [&](const std::string& m) { return !meds.count(m); });
  }
  cohort.catalog = catalog;
  return cohort;
}

std::map<std::string, double> load_medians(const PipelineConfig& c) {
  const std::string path = c.artifact("medians.json");
  if (!io::file_exists(path))
    throw MissingArtifactError("missing input artifact: " + path + " (run curves first)");
  json j = io::read_json(path);
  std::map<std::string, double> medians;
  for (auto it = j.begin(); it != j.end(); ++it) medians[it.key()] = it.value().get<double>();
  return medians;
}

json ci_json(const MetricCI& ci) {
  return {{"point", ci.point}, {"lower", ci.lower}, {"upper", ci.upper},
          {"level", ci.level}, {"degenerate", ci.degenerate}};
}

// ---- stages -------------------------------------------------------------

void run_synth(const PipelineConfig& c) {
  StageIo io_spec;
  io_spec.outputs = {c.events_path, c.demographics_path, c.labels_path,
                     c.artifact("truth.bundle"), c.artifact("truth.json")};
  io_spec.params = {{"p", c.synth.p},
                    {"k", c.synth.k},
                    {"n_patients", c.synth.n_patients},
                    {"years_mean", c.synth.years_mean},
                    {"designated", c.synth.designated},
                    {"label_weight", c.synth.label_weight},
                    {"seed", c.synth.seed}};
  guarded_stage(c, Stage::Synth, io_spec, [&] {
    SynthCohort synth = generate_cohort(c.synth);
    write_event_log_files(synth.cohort, c.events_path, c.demographics_path);
    write_labels(synth.labels, c.labels_path);
    write_ground_truth(synth.truth, c.artifact("truth.bundle"), c.artifact("truth.json"));
    io_spec.extra = {{"patients", synth.cohort.records.size()},
                     {"channels", synth.cohort.catalog.size()},
                     {"seed", c.synth.seed}};
  });
}

void run_ingest(const PipelineConfig& c) {
  StageIo io_spec;
  io_spec.inputs = {c.events_path, c.demographics_path};
  io_spec.outputs = {c.artifact("cohort_manifest.json")};
  io_spec.params = {{"min_total_events", c.ingest.min_total_events},
                    {"min_records", c.ingest.min_records}};
  guarded_stage(c, Stage::Ingest, io_spec, [&] {
    Cohort cohort = parse_event_log_files(c.events_path, c.demographics_path);
    cohort = filter_channels(cohort, c.ingest.min_total_events, c.ingest.min_records);
    write_cohort_manifest(cohort, c.artifact("cohort_manifest.json"));
    io_spec.extra = {{"patients", cohort.records.size()}, {"p", cohort.catalog.size()}};
  });
}

void run_curves(const PipelineConfig& c) {
  StageIo io_spec;
  io_spec.inputs = {c.events_path, c.demographics_path, c.artifact("cohort_manifest.json")};
  io_spec.outputs = {c.artifact("medians.json")};
  for (const auto& pid : c.curvegen.dump_patients)
    io_spec.outputs.push_back(c.artifact("curves_" + pid + ".csv"));
  io_spec.params = {{"replicates", c.curvegen.rash.replicates},
                    {"neighbor", c.curvegen.rash.neighbor},
                    {"min_bandwidth_days", c.curvegen.rash.min_bandwidth_days},
                    {"max_bandwidth_days", c.curvegen.rash.max_bandwidth_days},
                    {"floor_per_year", c.curvegen.rash.floor_per_year},
                    {"dump_patients", c.curvegen.dump_patients},
                    {"curve_seed", c.stage_seed("curves")}};
  guarded_stage(c, Stage::Curves, io_spec, [&] {
    Cohort cohort = load_cohort_restricted(c);
    auto medians = measurement_medians(cohort);
    json j = json::object();
    for (const auto& [channel, median] : medians) j[channel] = median;
    io::write_json_atomic(c.artifact("medians.json"), j);

    for (const auto& pid : c.curvegen.dump_patients) {
      const PatientRecord* rec = find_record(cohort, pid);
      if (!rec) throw ConfigError("curvegen.dump_patients: unknown patient " + pid);
      CurveSet cs = build_curveset(*rec, cohort.catalog, medians, c.curvegen.rash,
                                   derive_seed(c.stage_seed("curves"), fnv1a64(pid)));
      std::ostringstream csv;
      csv << "channel";
      for (int t = 0; t < cs.values.cols(); ++t) csv << ",day" << cs.start_day + t;
      csv << "\n";
      for (Eigen::Index r = 0; r < cs.values.rows(); ++r) {
        csv << cohort.catalog[static_cast<size_t>(r)].name;
        for (Eigen::Index t = 0; t < cs.values.cols(); ++t)
          csv << ',' << io::format_double(cs.values(r, t));
        csv << "\n";
      }
      io::write_file_atomic(c.artifact("curves_" + pid + ".csv"), csv.str());
    }
    io_spec.extra = {{"measurement_channels", medians.size()},
                     {"curve_seed", c.stage_seed("curves")}};
  });
}

void run_sample(const PipelineConfig& c) {
  StageIo io_spec;
  io_spec.inputs = {c.events_path, c.demographics_path, c.artifact("cohort_manifest.json"),
                    c.artifact("medians.json")};
  io_spec.outputs = {c.artifact("X_raw.mat"), c.artifact("X_sidecar.json"),
                     c.artifact("X_std.mat"), c.artifact("standardizer.json")};
  io_spec.params = {{"density", c.sampler.density},
                    {"seed", c.stage_seed("sampler")},
                    {"curve_seed", c.stage_seed("curves")},
                    {"floor_per_year", c.curvegen.rash.floor_per_year}};
  guarded_stage(c, Stage::Sample, io_spec, [&] {
    Cohort cohort = load_cohort_restricted(c);
    auto medians = load_medians(c);
    CrossSectionMatrix xs =
        sample_cross_sections(cohort, medians, c.curvegen.rash, c.sampler.density,
                              c.stage_seed("sampler"), c.stage_seed("curves"));
    write_cross_sections(xs, c.artifact("X_raw.mat"), c.artifact("X_sidecar.json"));
    Standardizer std_ = fit_standardizer(xs.data, xs.channels, c.curvegen.rash.floor_per_year);
    write_standardizer(std_, c.artifact("standardizer.json"));
    io::write_matrix_bundle(c.artifact("X_std.mat"),
                            {{"X", apply_standardizer(std_, xs.data)}});
    io_spec.extra = {{"n", xs.data.cols()}, {"seed", c.stage_seed("sampler")}};
  });
}

void run_ica(const PipelineConfig& c) {
  StageIo io_spec;
  io_spec.inputs = {c.artifact("X_std.mat")};
  io_spec.outputs = {c.artifact("ica_model.bundle"), c.artifact("ica_manifest.json")};
  io_spec.params = {{"k", c.ica.k},
                    {"tol", c.ica.tol},
                    {"max_iter", c.ica.max_iter},
                    {"seed", c.stage_seed("ica")}};
  guarded_stage(c, Stage::Ica, io_spec, [&] {
    Eigen::MatrixXd X = io::read_matrix_bundle(c.artifact("X_std.mat")).at("X");
    ICAModel model = fit_ica(X, c.ica.k, c.stage_seed("ica"), c.ica.tol, c.ica.max_iter);
    write_ica_model(model, c.artifact("ica_model.bundle"), c.artifact("ica_manifest.json"));
    io_spec.extra = {{"iterations", model.iterations}, {"converged", model.converged},
                     {"seed", c.stage_seed("ica")}};
  });
}

struct LearningSet {
  std::vector<std::string> patients;   // row order
  Eigen::MatrixXd channels;            // n x p standardized last cross-sections
  Eigen::MatrixXd signatures;          // n x k expressions
  Eigen::VectorXi labels;
  std::vector<int> is_test;            // 0/1 per row
};

void write_learning_set(const LearningSet& ls, const PipelineConfig& c) {
  io::write_matrix_bundle(c.artifact("learning.bundle"),
                          {{"channels", ls.channels}, {"signatures", ls.signatures}});
  json j;
  j["patients"] = ls.patients;
  j["labels"] = std::vector<int>(ls.labels.data(), ls.labels.data() + ls.labels.size());
  j["is_test"] = ls.is_test;
  io::write_json_atomic(c.artifact("learning.json"), j);
}

LearningSet read_learning_set(const PipelineConfig& c) {
  const std::string bundle = c.artifact("learning.bundle");
  const std::string meta = c.artifact("learning.json");
  if (!io::file_exists(bundle) || !io::file_exists(meta))
    throw MissingArtifactError("missing input artifact: " + bundle + " (run train first)");
  LearningSet ls;
  auto mats = io::read_matrix_bundle(bundle);
  ls.channels = mats.at("channels");
  ls.signatures = mats.at("signatures");
  json j = io::read_json(meta);
  ls.patients = j.at("patients").get<std::vector<std::string>>();
  auto labels = j.at("labels").get<std::vector<int>>();
  ls.labels = Eigen::Map<Eigen::VectorXi>(labels.data(), static_cast<Eigen::Index>(labels.size()));
  ls.is_test = j.at("is_test").get<std::vector<int>>();
  return ls;
}

LearningSet build_learning_set(const PipelineConfig& c) {
  Cohort cohort = load_cohort_restricted(c);
  auto medians = load_medians(c);
  Standardizer std_ = read_standardizer(c.artifact("standardizer.json"));
  ICAModel ica = read_ica_model(c.artifact("ica_model.bundle"), c.artifact("ica_manifest.json"));
  auto labels = read_labels(c.labels_path);

  LearningSet ls;
  std::vector<const PatientRecord*> recs;
  for (const auto& [pid, label] : labels) {
    const PatientRecord* rec = find_record(cohort, pid);
    if (!rec) {
      log_warn("labelled patient " + pid + " not in cohort; skipping");
      continue;
    }
    recs.push_back(rec);
    ls.patients.push_back(pid);
  }
  const auto n = static_cast<Eigen::Index>(recs.size());
  if (n < 10) throw NumericalError("learning set too small: " + std::to_string(n));
  ls.channels.resize(n, static_cast<Eigen::Index>(cohort.catalog.size()));
  ls.signatures.resize(n, ica.k);
  ls.labels.resize(n);

  const std::uint64_t curve_seed = c.stage_seed("curves");
  for (Eigen::Index i = 0; i < n; ++i) {
    CurveSet cs = build_curveset(*recs[static_cast<size_t>(i)], cohort.catalog, medians,
                                 c.curvegen.rash,
                                 derive_seed(curve_seed, fnv1a64(recs[static_cast<size_t>(i)]->patient_id)));
    Eigen::VectorXd x_raw = last_cross_section(cs);
    Eigen::VectorXd x_std = apply_standardizer(std_, x_raw);
    ls.channels.row(i) = x_std.transpose();
    ls.signatures.row(i) = express(ica, x_std).transpose();
    ls.labels[i] = labels.at(ls.patients[static_cast<size_t>(i)]);
  }

  // Stratified split, deterministic in the train seed.
  std::vector<Eigen::Index> pos, neg;
  for (Eigen::Index i = 0; i < n; ++i) (ls.labels[i] == 1 ? pos : neg).push_back(i);
  std::mt19937_64 rng(c.stage_seed("split"));
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  ls.is_test.assign(static_cast<size_t>(n), 0);
  const auto test_pos = static_cast<size_t>(std::lround(c.train.test_fraction *
                                                        static_cast<double>(pos.size())));
  const auto test_neg = static_cast<size_t>(std::lround(c.train.test_fraction *
                                                        static_cast<double>(neg.size())));
  for (size_t i = 0; i < test_pos && i < pos.size(); ++i) ls.is_test[static_cast<size_t>(pos[i])] = 1;
  for (size_t i = 0; i < test_neg && i < neg.size(); ++i) ls.is_test[static_cast<size_t>(neg[i])] = 1;
  return ls;
}

std::string model_key(const std::string& representation, const std::string& family) {
  return representation + "_" + family;
}

void write_scores(const PipelineConfig& c, const std::string& name,
                  const std::vector<std::string>& patients,
                  const Eigen::VectorXi& labels, const Eigen::VectorXd& scores) {
  std::string out;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    out += patients[static_cast<size_t>(i)] + "\t" + std::to_string(labels[i]) + "\t" +
           io::format_double(scores[i]) + "\n";
  io::write_file_atomic(c.artifact("scores_" + name + ".tsv"), out);
}

void run_train(const PipelineConfig& c) {
  StageIo io_spec;
  io_spec.inputs = {c.events_path,
                    c.demographics_path,
                    c.artifact("cohort_manifest.json"),
                    c.artifact("medians.json"),
                    c.artifact("standardizer.json"),
                    c.artifact("ica_model.bundle"),
                    c.labels_path};
  io_spec.outputs = {c.artifact("learning.bundle"), c.artifact("learning.json")};
  for (const auto& rep : c.train.representations)
    for (const auto& fam : c.train.families) {
      io_spec.outputs.push_back(c.artifact("model_" + model_key(rep, fam) + ".json"));
      io_spec.outputs.push_back(c.artifact("tuning_" + model_key(rep, fam) + ".json"));
      io_spec.outputs.push_back(c.artifact("scores_" + model_key(rep, fam) + "_test.tsv"));
      io_spec.outputs.push_back(c.artifact("scores_" + model_key(rep, fam) + "_train.tsv"));
    }
  io_spec.params = {{"budget", c.train.budget},
                    {"alpha_filter", c.train.alpha_filter},
                    {"b_oob", c.train.b_oob},
                    {"folds", c.train.folds},
                    {"test_fraction", c.train.test_fraction},
                    {"representations", c.train.representations},
                    {"families", c.train.families},
                    {"l1", {c.train.l1_lo, c.train.l1_hi}},
                    {"l2", {c.train.l2_lo, c.train.l2_hi}},
                    {"gamma", {c.train.gamma_lo, c.train.gamma_hi}},
                    {"seed", c.stage_seed("train")},
                    {"split_seed", c.stage_seed("split")}};
  guarded_stage(c, Stage::Train, io_spec, [&] {
    LearningSet ls = build_learning_set(c);
    write_learning_set(ls, c);

    std::vector<Eigen::Index> train_rows, test_rows;
    for (Eigen::Index i = 0; i < ls.labels.size(); ++i)
      (ls.is_test[static_cast<size_t>(i)] ? test_rows : train_rows).push_back(i);

    for (const auto& rep : c.train.representations) {
      const Eigen::MatrixXd& features = rep == "channels" ? ls.channels : ls.signatures;
      Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(train_rows.size()), features.cols());
      Eigen::VectorXi ytr(static_cast<Eigen::Index>(train_rows.size()));
      std::vector<std::string> train_ids, test_ids;
      for (size_t i = 0; i < train_rows.size(); ++i) {
        Xtr.row(static_cast<Eigen::Index>(i)) = features.row(train_rows[i]);
        ytr[static_cast<Eigen::Index>(i)] = ls.labels[train_rows[i]];
        train_ids.push_back(ls.patients[static_cast<size_t>(train_rows[i])]);
      }
      Eigen::MatrixXd Xte(static_cast<Eigen::Index>(test_rows.size()), features.cols());
      Eigen::VectorXi yte(static_cast<Eigen::Index>(test_rows.size()));
      for (size_t i = 0; i < test_rows.size(); ++i) {
        Xte.row(static_cast<Eigen::Index>(i)) = features.row(test_rows[i]);
        yte[static_cast<Eigen::Index>(i)] = ls.labels[test_rows[i]];
        test_ids.push_back(ls.patients[static_cast<size_t>(test_rows[i])]);
      }

      for (const auto& fam : c.train.families) {
        SearchSpace space;
        space.adaptive = fam == "adanet";
        space.l1_lo = c.train.l1_lo;
        space.l1_hi = c.train.l1_hi;
        space.l2_lo = c.train.l2_lo;
        space.l2_hi = c.train.l2_hi;
        space.gamma_lo = c.train.gamma_lo;
        space.gamma_hi = c.train.gamma_hi;
        const std::uint64_t tune_seed =
            derive_seed(c.stage_seed("train"), fnv1a64(model_key(rep, fam)));
        TuningReport report = tune(space, Xtr, ytr, c.train.budget, c.train.alpha_filter,
                                   c.train.b_oob, tune_seed, c.train.folds, c.jobs);
        report.final_model.representation = rep;
        write_tuning_report(report, c.artifact("tuning_" + model_key(rep, fam) + ".json"));
        write_model(report.final_model, c.artifact("model_" + model_key(rep, fam) + ".json"));
        write_scores(c, model_key(rep, fam) + "_train", train_ids, ytr,
                     predict_proba(report.final_model, Xtr));
        write_scores(c, model_key(rep, fam) + "_test", test_ids, yte,
                     predict_proba(report.final_model, Xte));
      }
    }
    io_spec.extra = {{"n", ls.labels.size()}, {"seed", c.stage_seed("train")}};
  });
}

struct NamedScores {
  std::string name;
  ScoredSet scored;
};

NamedScores load_scores_file(const std::string& name, const std::string& path) {
  if (!io::file_exists(path)) throw MissingArtifactError("missing input artifact: " + path);
  std::istringstream in(io::read_file(path));
  NamedScores out;
  out.name = name;
  std::vector<double> scores;
  std::vector<int> labels;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string pid;
    int label;
    double score;
    if (!(ls >> pid >> label >> score))
      throw ParseError(path + " line " + std::to_string(line_no) + ": expected <patient> <label> <score>");
    labels.push_back(label);
    scores.push_back(score);
  }
  out.scored.scores = Eigen::Map<Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(scores.size()));
  out.scored.labels = Eigen::Map<Eigen::VectorXi>(labels.data(), static_cast<Eigen::Index>(labels.size()));
  return out;
}

void run_eval(const PipelineConfig& c) {
  StageIo io_spec;
  for (const auto& rep : c.train.representations)
    for (const auto& fam : c.train.families)
      io_spec.inputs.push_back(c.artifact("scores_" + model_key(rep, fam) + "_test.tsv"));
  for (const auto& [name, path] : c.eval.external_scores) io_spec.inputs.push_back(path);
  io_spec.outputs = {c.artifact("eval_report.json"), c.artifact("eval_report.txt")};
  io_spec.params = {{"bootstrap_b", c.eval.bootstrap_b},
                    {"level", c.eval.level},
                    {"threshold", c.eval.threshold},
                    {"seed", c.stage_seed("eval")}};
  guarded_stage(c, Stage::Eval, io_spec, [&] {
    std::vector<NamedScores> models;
    for (const auto& rep : c.train.representations)
      for (const auto& fam : c.train.families)
        models.push_back(load_scores_file(
            model_key(rep, fam),
            c.artifact("scores_" + model_key(rep, fam) + "_test.tsv")));
    for (const auto& [name, path] : c.eval.external_scores)
      models.push_back(load_scores_file(name, path));
    if (models.empty()) throw ConfigError("eval: no score vectors to evaluate");

    json report;
    report["level"] = c.eval.level;
    report["models"] = json::array();
    for (size_t m = 0; m < models.size(); ++m) {
      const auto& scored = models[m].scored;
      json entry;
      entry["name"] = models[m].name;
      entry["n"] = scored.size();
      entry["auroc"] = ci_json(delong_ci_logistic(scored, c.eval.level));
      BootstrapOptions auroc_opts{c.eval.bootstrap_b, c.eval.level,
                                  derive_seed(c.stage_seed("eval"), 3 * m), 0.0, 1.0, true};
      entry["auroc_bootstrap"] =
          ci_json(bootstrap_pivot_ci([](const ScoredSet& s) { return auroc(s); }, scored,
                                     auroc_opts));
      BootstrapOptions ici_opts{c.eval.bootstrap_b, c.eval.level,
                                derive_seed(c.stage_seed("eval"), 3 * m + 1), 0.0,
                                std::numeric_limits<double>::infinity(), true};
      entry["ici"] = ci_json(bootstrap_pivot_ci(
          [](const ScoredSet& s) { return ici(s.scores, s.labels); }, scored, ici_opts));
      BootstrapOptions ce_opts{c.eval.bootstrap_b, c.eval.level,
                               derive_seed(c.stage_seed("eval"), 3 * m + 2), 0.0,
                               std::numeric_limits<double>::infinity(), false};
      entry["cross_entropy"] = ci_json(bootstrap_pivot_ci(
          [](const ScoredSet& s) { return cross_entropy(s.scores, s.labels); }, scored,
          ce_opts));
      PointMetrics pm = point_metrics(scored, c.eval.threshold);
      entry["point_metrics"] = {{"threshold", c.eval.threshold},
                                {"recall", pm.recall},
                                {"specificity", pm.specificity},
                                {"precision", pm.precision_defined ? json(pm.precision) : json()},
                                {"precision_defined", pm.precision_defined}};
      report["models"].push_back(entry);
    }

    report["delong_pairwise_p"] = json::array();
    for (size_t a = 0; a < models.size(); ++a) {
      json row = json::array();
      for (size_t b = 0; b < models.size(); ++b) {
        if (a == b) {
          row.push_back(1.0);
          continue;
        }
        if (models[a].scored.size() != models[b].scored.size() ||
            (models[a].scored.labels.array() != models[b].scored.labels.array()).any()) {
          row.push_back(nullptr);  // not comparable: different instances
          continue;
        }
        row.push_back(delong_paired_test(models[a].scored, models[b].scored).p_value);
      }
      report["delong_pairwise_p"].push_back(row);
    }
    io::write_json_atomic(c.artifact("eval_report.json"), report);

    std::ostringstream txt;
    txt << "model                     n    AUROC [" << c.eval.level * 100 << "% CI]"
        << "          ICI               CE                recall/spec/precision\n";
    for (const auto& entry : report["models"]) {
      char line[256];
      const auto& au = entry["auroc"];
      const auto& ic = entry["ici"];
      const auto& ce = entry["cross_entropy"];
      const auto& pm = entry["point_metrics"];
      std::snprintf(line, sizeof(line),
                    "%-24s %4lld  %.3f [%.3f,%.3f]  %.3f [%.3f,%.3f]  %.3f [%.3f,%.3f]  %.2f/%.2f/%s\n",
                    entry["name"].get<std::string>().c_str(),
                    static_cast<long long>(entry["n"].get<long>()),
                    au["point"].get<double>(), au["lower"].get<double>(), au["upper"].get<double>(),
                    ic["point"].get<double>(), ic["lower"].get<double>(), ic["upper"].get<double>(),
                    ce["point"].get<double>(), ce["lower"].get<double>(), ce["upper"].get<double>(),
                    pm["recall"].get<double>(), pm["specificity"].get<double>(),
                    pm["precision_defined"].get<bool>()
                        ? io::format_double(pm["precision"].get<double>()).c_str()
                        : "n/a");
      txt << line;
    }
    io::write_file_atomic(c.artifact("eval_report.txt"), txt.str());
  });
}

FitFunction fit_function_for(const LogisticModel& model) {
  if (!model.adaptive) {
    const double l1 = model.l1, l2 = model.l2;
    return [l1, l2](const Eigen::Ref<const Eigen::MatrixXd>& X,
                    const Eigen::Ref<const Eigen::VectorXi>& y) {
      return fit_enet_logistic(X, y, l1, l2);
    };
  }
  AdanetParams ap;
  ap.screen_size = static_cast<int>(model.screened.size());
  ap.pilot_l1 = model.l1;
  ap.pilot_l2 = model.l2;
  ap.l1 = model.l1;
  ap.l2 = model.l2;
  ap.gamma = model.gamma;
  return [ap](const Eigen::Ref<const Eigen::MatrixXd>& X,
              const Eigen::Ref<const Eigen::VectorXi>& y) { return fit_adanet(X, y, ap); };
}

void run_explain(const PipelineConfig& c) {
  const std::string model_path = c.artifact("model_" + c.explain.model + ".json");
  StageIo io_spec;
  io_spec.inputs = {model_path, c.artifact("learning.bundle"), c.artifact("learning.json")};
  io_spec.outputs = {c.artifact("importance.json"), c.artifact("root_causes.json"),
                     c.artifact("waterfall.json"), c.artifact("waterfall.svg")};
  io_spec.params = {{"b_importance", c.explain.b_importance},
                    {"tau_inert", c.explain.tau_inert},
                    {"model", c.explain.model},
                    {"record", c.explain.record},
                    {"top_m", c.explain.top_m},
                    {"seed", c.stage_seed("explain")}};
  guarded_stage(c, Stage::Explain, io_spec, [&] {
    if (!io::file_exists(model_path))
      throw MissingArtifactError("missing input artifact: " + model_path + " (run train first)");
    LogisticModel model = read_model(model_path);
    LearningSet ls = read_learning_set(c);
    const bool signatures = model.representation == "signatures";
    const Eigen::MatrixXd& features = signatures ? ls.signatures : ls.channels;

    std::vector<Eigen::Index> train_rows, test_rows;
    for (Eigen::Index i = 0; i < ls.labels.size(); ++i)
      (ls.is_test[static_cast<size_t>(i)] ? test_rows : train_rows).push_back(i);
    Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(train_rows.size()), features.cols());
    Eigen::VectorXi ytr(static_cast<Eigen::Index>(train_rows.size()));
    for (size_t i = 0; i < train_rows.size(); ++i) {
      Xtr.row(static_cast<Eigen::Index>(i)) = features.row(train_rows[i]);
      ytr[static_cast<Eigen::Index>(i)] = ls.labels[train_rows[i]];
    }
    Eigen::MatrixXd Xte(static_cast<Eigen::Index>(test_rows.size()), features.cols());
    for (size_t i = 0; i < test_rows.size(); ++i)
      Xte.row(static_cast<Eigen::Index>(i)) = features.row(test_rows[i]);

    // Feature names: source ids for signatures, channel names via model ids.
    std::vector<std::string> ids(static_cast<size_t>(features.cols()));
    for (size_t f = 0; f < ids.size(); ++f)
      ids[f] = signatures ? "S-" + std::to_string(f) : model.feature_ids[f];
    model.feature_ids = ids;

    Eigen::VectorXd mu = Xtr.colwise().mean();

    ImportanceDistribution dist =
        importance_distribution(fit_function_for(model), Xtr, ytr, Xte,
                                c.explain.b_importance, c.stage_seed("explain"), c.jobs);
    json imp;
    imp["feature_ids"] = ids;
    imp["nonzero_freq"] = std::vector<double>(
        dist.nonzero_freq.data(), dist.nonzero_freq.data() + dist.nonzero_freq.size());
    imp["skipped"] = dist.skipped;
    Eigen::VectorXd mean_imp = dist.samples.colwise().mean();
    imp["mean_importance"] =
        std::vector<double>(mean_imp.data(), mean_imp.data() + mean_imp.size());
    json samples = json::array();
    for (Eigen::Index b = 0; b < dist.samples.rows(); ++b) {
      json row = json::array();
      for (Eigen::Index f = 0; f < dist.samples.cols(); ++f) row.push_back(dist.samples(b, f));
      samples.push_back(row);
    }
    imp["samples"] = samples;
    io::write_json_atomic(c.artifact("importance.json"), imp);

    // Per-record explanation.
    std::string record = c.explain.record;
    if (record.empty()) {
      if (test_rows.empty()) throw NumericalError("no test records to explain");
      record = ls.patients[static_cast<size_t>(test_rows.front())];
    }
    auto row_of = std::find(ls.patients.begin(), ls.patients.end(), record);
    if (row_of == ls.patients.end())
      throw ConfigError("explain.record: unknown patient " + record);
    const auto row = static_cast<Eigen::Index>(row_of - ls.patients.begin());

    ShapExplanation expl = linear_shap(model, features.row(row).transpose(), mu);
    RootCauseReport causes = root_cause_report(expl, c.explain.tau_inert);
    json rc;
    rc["record"] = record;
    rc["tau_inert"] = c.explain.tau_inert;
    rc["base_value"] = expl.base_value;
    rc["output_log_odds"] = expl.output;
    rc["probability"] = 1.0 / (1.0 + std::exp(-expl.output));
    rc["entries"] = json::array();
    for (const auto& e : causes.entries) {
      const auto idx = std::find(ids.begin(), ids.end(), e.feature_id) - ids.begin();
      const double w = model.weights[static_cast<Eigen::Index>(idx)];
      rc["entries"].push_back({{"feature", e.feature_id},
                               {"phi", e.phi},
                               {"value", e.feature_value},
                               {"classification", to_string(e.classification)},
                               {"coefficient_sign", w > 0 ? 1 : (w < 0 ? -1 : 0)}});
    }
    io::write_json_atomic(c.artifact("root_causes.json"), rc);

    WaterfallData wf = waterfall_data(expl, c.explain.top_m);
    json wj;
    wj["record"] = record;
    wj["base_value"] = wf.base_value;
    wj["output"] = wf.output;
    wj["steps"] = json::array();
    for (const auto& s : wf.steps)
      wj["steps"].push_back({{"feature", s.feature_id},
                             {"phi", s.phi},
                             {"value", s.feature_value},
                             {"cumulative", s.cumulative},
                             {"residual", s.residual}});
    io::write_json_atomic(c.artifact("waterfall.json"), wj);
    io::write_file_atomic(c.artifact("waterfall.svg"), waterfall_svg(wf));
  });
}

void run_diagram(const PipelineConfig& c) {
  StageIo io_spec;
  io_spec.inputs = {c.artifact("ica_model.bundle"), c.artifact("ica_manifest.json"),
                    c.artifact("standardizer.json"), c.artifact("X_std.mat"),
                    c.artifact("X_sidecar.json")};
  io_spec.outputs = {c.artifact("diagrams.json")};
  io_spec.params = {{"top_m", c.diagram.top_m},
                    {"signatures", c.diagram.signatures},
                    {"max_diagrams", c.diagram.max_diagrams}};
  guarded_stage(c, Stage::Diagram, io_spec, [&] {
    ICAModel model = read_ica_model(c.artifact("ica_model.bundle"), c.artifact("ica_manifest.json"));
    Standardizer std_ = read_standardizer(c.artifact("standardizer.json"));
    CrossSectionMatrix xs =
        read_cross_sections(c.artifact("X_std.mat"), c.artifact("X_sidecar.json"));
    Eigen::MatrixXd S = source_matrix(model, xs.data);

    std::vector<int> wanted = c.diagram.signatures;
    if (wanted.empty()) {
      // Default to the support of the final signatures model, if trained.
      for (const auto& fam : {std::string("adanet"), std::string("enet")}) {
        const std::string path = c.artifact("model_signatures_" + fam + ".json");
        if (!io::file_exists(path)) continue;
        LogisticModel m = read_model(path);
        std::vector<std::pair<double, int>> nz;
        for (Eigen::Index f = 0; f < m.weights.size(); ++f)
          if (m.weights[f] != 0.0) nz.emplace_back(std::abs(m.weights[f]), static_cast<int>(f));
        std::sort(nz.rbegin(), nz.rend());
        for (const auto& [w, f] : nz) wanted.push_back(f);
        break;
      }
      if (wanted.empty())
        for (int f = 0; f < model.k; ++f) wanted.push_back(f);
      if (static_cast<int>(wanted.size()) > c.diagram.max_diagrams)
        wanted.resize(static_cast<size_t>(c.diagram.max_diagrams));
    }

    json all = json::array();
    for (int sig : wanted) {
      if (sig < 0 || sig >= model.k) throw ConfigError("diagram.signatures: index out of range");
      SignatureDiagram d =
          signature_diagram(model, std_, xs.channels, S.row(sig).transpose(), sig, c.diagram.top_m);
      json dj;
      dj["signature"] = sig;
      dj["expression_scale"] = d.expression_scale;
      dj["entries"] = json::array();
      for (const auto& e : d.entries) {
        const char* type = e.effect.type == EffectDescriptor::Type::Multiplicative
                               ? "multiplicative"
                               : (e.effect.type == EffectDescriptor::Type::Additive
                                      ? "additive"
                                      : "probability");
        dj["entries"].push_back({{"channel", e.channel},
                                 {"kind", to_string(e.kind)},
                                 {"loading", e.loading},
                                 {"normalized_change", e.normalized_change},
                                 {"effect_type", type},
                                 {"effect_per_unit", e.effect.per_unit}});
      }
      dj["histogram"] = {{"edges", d.bin_edges}, {"counts", d.counts}};
      all.push_back(dj);
      io::write_file_atomic(c.artifact("diagram_S" + std::to_string(sig) + ".svg"),
                            diagram_svg(d));
    }
    io::write_json_atomic(c.artifact("diagrams.json"), all);
  });
}

}  // namespace

void run_stage(Stage stage, const PipelineConfig& config) {
  switch (stage) {
    case Stage::Synth: run_synth(config); return;
    case Stage::Ingest: run_ingest(config); return;
    case Stage::Curves: run_curves(config); return;
    case Stage::Sample: run_sample(config); return;
    case Stage::Ica: run_ica(config); return;
    case Stage::Train: run_train(config); return;
    case Stage::Eval: run_eval(config); return;
    case Stage::Explain: run_explain(config); return;
    case Stage::Diagram: run_diagram(config); return;
    case Stage::Pipeline:
      for (Stage s : {Stage::Ingest, Stage::Curves, Stage::Sample, Stage::Ica, Stage::Train,
                      Stage::Eval, Stage::Explain, Stage::Diagram})
        run_stage(s, config);
      return;
  }
  throw ConfigError("unknown stage");
}

}  // namespace ehrsig
