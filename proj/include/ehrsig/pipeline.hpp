#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ehrsig/curves.hpp"
#include "ehrsig/synth.hpp"

namespace ehrsig {

inline constexpr const char* kVersion = "0.1.0";

enum class Stage { Synth, Ingest, Curves, Sample, Ica, Train, Eval, Explain, Diagram, Pipeline };

Stage stage_from_string(const std::string& s);
const char* to_string(Stage stage);

struct PipelineConfig {
  std::string work_dir = "work";
  std::string events_path;        // defaults to <work_dir>/events.log
  std::string demographics_path;  // defaults to <work_dir>/demographics.tsv
  std::string labels_path;        // defaults to <work_dir>/labels.tsv
  std::uint64_t seed = 1;         // master seed; stage seeds derive from it
  int jobs = 1;

  struct {
    long min_total_events = 1000;
    long min_records = 10;
  } ingest;

  struct {
    RashParams rash;
    std::vector<std::string> dump_patients;  // optional curveset CSV dumps
  } curvegen;

  struct {
    double density = 1.0;  // samples per record-year
  } sampler;

  struct {
    int k = 50;
    double tol = 1e-4;
    int max_iter = 1000;
  } ica;

  struct {
    int budget = 200;
    double alpha_filter = 0.2;
    int b_oob = 100;
    int folds = 10;
    double test_fraction = 0.3;
    std::vector<std::string> representations{"channels", "signatures"};
    std::vector<std::string> families{"enet", "adanet"};
    double l1_lo = 1e-4, l1_hi = 1.0;
    double l2_lo = 1e-4, l2_hi = 1.0;
    double gamma_lo = 0.5, gamma_hi = 2.0;
  } train;

  struct {
    int bootstrap_b = 1000;
    double level = 0.95;
    double threshold = 0.5;
    std::map<std::string, std::string> external_scores;  // name -> scores file
  } eval;

  struct {
    int b_importance = 500;
    double tau_inert = 0.0;
    std::string model = "signatures_adanet";
    std::string record;  // default: first test patient
    int top_m = 10;
  } explain;

  struct {
    int top_m = 10;
    std::vector<int> signatures;  // default: final signatures model support
    int max_diagrams = 8;
  } diagram;

  SynthParams synth;

  std::uint64_t stage_seed(const char* tag) const { return derive_seed(seed, fnv1a64(tag)); }
  std::string artifact(const std::string& name) const { return work_dir + "/" + name; }
};

// Parses and validates a JSON config; throws ConfigError naming the bad field.
PipelineConfig load_config(const std::string& path);
PipelineConfig config_from_json_text(const std::string& text);

// Runs one stage (or the whole ingest..diagram pipeline), writing artifacts
// and a per-stage manifest under work_dir. A completed stage with unchanged
// inputs is skipped.
void run_stage(Stage stage, const PipelineConfig& config);

}  // namespace ehrsig
