#include "ehrsig/ehr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ehrsig/io.hpp"

namespace ehrsig {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

int parse_int(const std::string& tok, long line_no, const char* what) {
  try {
    size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + tok + "'");
  }
}

double parse_double(const std::string& tok, long line_no, const char* what) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + tok + "'");
  }
}

Visit& visit_at(PatientRecord& rec, int day) {
  for (auto& v : rec.visits) {
    if (v.day == day) return v;
  }
  rec.visits.push_back(Visit{day, {}});
  return rec.visits.back();
}

void finalize_record(PatientRecord& rec, int min_day, int max_day, bool any_event) {
  rec.first_day = any_event ? min_day : 0;
  rec.last_day = any_event ? max_day : 0;
  std::sort(rec.code_events.begin(), rec.code_events.end());
  // Stable so that for duplicate (channel, day) measurements "last wins"
  // still refers to input order.
  std::stable_sort(rec.measurements.begin(), rec.measurements.end(),
                   [](const MeasurementEvent& a, const MeasurementEvent& b) {
                     return std::tie(a.channel, a.day) < std::tie(b.channel, b.day);
                   });
  std::sort(rec.visits.begin(), rec.visits.end(),
            [](const Visit& a, const Visit& b) { return a.day < b.day; });
  for (auto& v : rec.visits) {
    std::sort(v.medications.begin(), v.medications.end());
    v.medications.erase(std::unique(v.medications.begin(), v.medications.end()),
                        v.medications.end());
  }
}

}  // namespace

Cohort parse_event_log(std::istream& events, std::istream& demographics) {
  struct Accum {
    PatientRecord rec;
    int min_day = std::numeric_limits<int>::max();
    int max_day = std::numeric_limits<int>::min();
    bool any_event = false;
  };
  std::map<std::string, Accum> patients;
  std::set<ChannelId> channels;

  std::string line;
  long line_no = 0;
  while (std::getline(events, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() < 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected at least 4 fields");
    }
    const std::string& pid = tok[0];
    const std::string& kind = tok[1];
    const std::string& channel = tok[2];
    Accum& acc = patients[pid];
    acc.rec.patient_id = pid;
    int day = parse_int(tok[3], line_no, "day");

    if (kind == "code") {
      if (tok.size() != 4)
        throw ParseError("line " + std::to_string(line_no) + ": code events take no value");
      acc.rec.code_events.push_back({channel, day});
      channels.insert({ChannelKind::Code, channel});
    } else if (kind == "measurement") {
      if (tok.size() != 5)
        throw ParseError("line " + std::to_string(line_no) + ": measurement requires a value");
      double value = parse_double(tok[4], line_no, "value");
      acc.rec.measurements.push_back({channel, day, value});
      channels.insert({ChannelKind::Measurement, channel});
    } else if (kind == "medication") {
      if (tok.size() != 4)
        throw ParseError("line " + std::to_string(line_no) + ": medication events take no value");
      visit_at(acc.rec, day).medications.push_back(channel);
      channels.insert({ChannelKind::Medication, channel});
    } else if (kind == "visit") {
      if (tok.size() != 4 || channel != "-")
        throw ParseError("line " + std::to_string(line_no) + ": visit lines are '<patient> visit - <day>'");
      visit_at(acc.rec, day);
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
    }
    acc.min_day = std::min(acc.min_day, day);
    acc.max_day = std::max(acc.max_day, day);
    acc.any_event = true;
  }

  std::set<std::string> races;
  bool any_demo = false;
  line_no = 0;
  while (std::getline(demographics, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 4)
      throw ParseError("demographics line " + std::to_string(line_no) + ": expected 4 fields");
    Accum& acc = patients[tok[0]];
    acc.rec.patient_id = tok[0];
    Demographics d;
    d.known = true;
    if (tok[1] == "F" || tok[1] == "female" || tok[1] == "1") {
      d.sex_female = 1;
    } else if (tok[1] == "M" || tok[1] == "male" || tok[1] == "0") {
      d.sex_female = 0;
    } else {
      throw ParseError("demographics line " + std::to_string(line_no) + ": bad sex '" + tok[1] + "'");
    }
    d.race = tok[2];
    d.birth_day = parse_int(tok[3], line_no, "birth_day");
    acc.rec.demographics = d;
    races.insert(d.race);
    any_demo = true;
  }

  if (any_demo) {
    channels.insert({ChannelKind::Demographic, "age"});
    channels.insert({ChannelKind::Demographic, "sex"});
    for (const auto& r : races) channels.insert({ChannelKind::Demographic, "race:" + r});
  }

  Cohort cohort;
  for (auto& [pid, acc] : patients) {
    finalize_record(acc.rec, acc.min_day, acc.max_day, acc.any_event);
    cohort.records.push_back(std::move(acc.rec));
  }
  cohort.catalog.assign(channels.begin(), channels.end());
  return cohort;
}

Cohort parse_event_log_files(const std::string& events_path,
                             const std::string& demographics_path) {
  std::ifstream ev(events_path);
  if (!ev) throw MissingArtifactError("cannot open event log: " + events_path);
  std::ifstream de(demographics_path);
  if (!de) throw MissingArtifactError("cannot open demographics table: " + demographics_path);
  return parse_event_log(ev, de);
}

void write_event_log(const Cohort& cohort, std::ostream& events,
                     std::ostream& demographics) {
  for (const auto& rec : cohort.records) {
    for (const auto& e : rec.code_events)
      events << rec.patient_id << " code " << e.channel << ' ' << e.day << '\n';
    for (const auto& m : rec.measurements)
      events << rec.patient_id << " measurement " << m.channel << ' ' << m.day << ' '
             << io::format_double(m.value) << '\n';
    for (const auto& v : rec.visits) {
      events << rec.patient_id << " visit - " << v.day << '\n';
      for (const auto& med : v.medications)
        events << rec.patient_id << " medication " << med << ' ' << v.day << '\n';
    }
    if (rec.demographics.known) {
      demographics << rec.patient_id << ' ' << (rec.demographics.sex_female ? 'F' : 'M')
                   << ' ' << rec.demographics.race << ' ' << rec.demographics.birth_day
                   << '\n';
    }
  }
}

void write_event_log_files(const Cohort& cohort, const std::string& events_path,
                           const std::string& demographics_path) {
  std::ostringstream ev, de;
  write_event_log(cohort, ev, de);
  io::write_file_atomic(events_path, ev.str());
  io::write_file_atomic(demographics_path, de.str());
}

Cohort filter_channels(const Cohort& cohort, long min_total_events, long min_records) {
  if (min_total_events < 0 || min_records < 0)
    throw std::invalid_argument("filter thresholds must be non-negative");

  std::map<ChannelId, long> totals;
  std::map<ChannelId, std::set<const PatientRecord*>> appearances;
  for (const auto& rec : cohort.records) {
    for (const auto& e : rec.code_events) {
      ChannelId id{ChannelKind::Code, e.channel};
      ++totals[id];
      appearances[id].insert(&rec);
    }
    for (const auto& m : rec.measurements) {
      ChannelId id{ChannelKind::Measurement, m.channel};
      ++totals[id];
      appearances[id].insert(&rec);
    }
    for (const auto& v : rec.visits) {
      for (const auto& med : v.medications) {
        ChannelId id{ChannelKind::Medication, med};
        ++totals[id];
        appearances[id].insert(&rec);
      }
    }
  }

  auto keep = [&](const ChannelId& id) {
    if (id.kind == ChannelKind::Demographic) return true;  // never filtered
    long total = totals.count(id) ? totals.at(id) : 0;
    long recs = appearances.count(id) ? static_cast<long>(appearances.at(id).size()) : 0;
    return total >= min_total_events && recs >= min_records;
  };

  Cohort out;
  for (const auto& id : cohort.catalog)
    if (keep(id)) out.catalog.push_back(id);

  std::set<std::string> kept_codes, kept_meas, kept_meds;
  for (const auto& id : out.catalog) {
    if (id.kind == ChannelKind::Code) kept_codes.insert(id.name);
    if (id.kind == ChannelKind::Measurement) kept_meas.insert(id.name);
    if (id.kind == ChannelKind::Medication) kept_meds.insert(id.name);
  }

  for (const auto& rec : cohort.records) {
    PatientRecord r = rec;
    std::erase_if(r.code_events,
                  [&](const CodeEvent& e) { return !kept_codes.count(e.channel); });
    std::erase_if(r.measurements,
                  [&](const MeasurementEvent& m) { return !kept_meas.count(m.channel); });
    for (auto& v : r.visits)
      std::erase_if(v.medications,
                    [&](const std::string& med) { return !kept_meds.count(med); });
    out.records.push_back(std::move(r));
  }
  return out;
}

void write_cohort_manifest(const Cohort& cohort, const std::string& path) {
  nlohmann::json j;
  j["p"] = cohort.catalog.size();
  j["catalog"] = nlohmann::json::array();
  for (const auto& id : cohort.catalog)
    j["catalog"].push_back({{"kind", to_string(id.kind)}, {"name", id.name}});
  j["patients"] = nlohmann::json::array();
  for (const auto& rec : cohort.records)
    j["patients"].push_back({{"id", rec.patient_id},
                             {"first_day", rec.first_day},
                             {"last_day", rec.last_day}});
  io::write_json_atomic(path, j);
}

std::vector<ChannelId> read_catalog_from_manifest(const std::string& path) {
  nlohmann::json j = io::read_json(path);
  std::vector<ChannelId> catalog;
  for (const auto& e : j.at("catalog"))
    catalog.push_back({channel_kind_from_string(e.at("kind").get<std::string>()),
                       e.at("name").get<std::string>()});
  return catalog;
}

const PatientRecord* find_record(const Cohort& cohort, const std::string& patient_id) {
  auto it = std::lower_bound(cohort.records.begin(), cohort.records.end(), patient_id,
                             [](const PatientRecord& r, const std::string& id) {
                               return r.patient_id < id;
                             });
  if (it == cohort.records.end() || it->patient_id != patient_id) return nullptr;
  return &*it;
}

}  // namespace ehrsig
