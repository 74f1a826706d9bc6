#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ehrsig/common.hpp"

namespace ehrsig {

struct Demographics {
  bool known = false;
  int sex_female = 0;  // 1 = female
  std::string race;    // opaque token, one-hot expanded via the catalog
  int birth_day = 0;   // day offset, usually negative relative to the record

  friend bool operator==(const Demographics&, const Demographics&) = default;
};

struct CodeEvent {
  std::string channel;
  int day;
  friend auto operator<=>(const CodeEvent&, const CodeEvent&) = default;
};

struct MeasurementEvent {
  std::string channel;
  int day;
  double value;
  friend auto operator<=>(const MeasurementEvent&, const MeasurementEvent&) = default;
};

struct Visit {
  int day;
  std::vector<std::string> medications;  // sorted, deduplicated
  friend bool operator==(const Visit&, const Visit&) = default;
};

struct PatientRecord {
  std::string patient_id;
  int first_day = 0;
  int last_day = 0;
  std::vector<CodeEvent> code_events;            // sorted by (channel, day)
  std::vector<MeasurementEvent> measurements;    // stable-sorted by (channel, day)
  std::vector<Visit> visits;                     // sorted by day
  Demographics demographics;

  int span_days() const { return last_day - first_day + 1; }
  double span_years() const { return span_days() / kDaysPerYear; }

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Cohort {
  std::vector<PatientRecord> records;  // sorted by patient_id
  std::vector<ChannelId> catalog;      // sorted by (kind, name)

  int channel_count() const { return static_cast<int>(catalog.size()); }

  friend bool operator==(const Cohort&, const Cohort&) = default;
};

// Line-delimited event stream:
//   <patient> code <channel> <day>
//   <patient> measurement <channel> <day> <value>
//   <patient> medication <channel> <day>
//   <patient> visit - <day>
// Medication lines imply a visit on that day; explicit visit lines mark
// encounters where nothing was noted. Blank lines and lines starting with '#'
// are skipped. The demographics table has one line per patient:
//   <patient> <F|M> <race> <birth_day>
Cohort parse_event_log(std::istream& events, std::istream& demographics);
Cohort parse_event_log_files(const std::string& events_path,
                             const std::string& demographics_path);

void write_event_log(const Cohort& cohort, std::ostream& events,
                     std::ostream& demographics);
void write_event_log_files(const Cohort& cohort, const std::string& events_path,
                           const std::string& demographics_path);

// Drops non-demographic channels with fewer than min_total_events total events
// or observed in fewer than min_records records, and removes their events.
Cohort filter_channels(const Cohort& cohort, long min_total_events = 1000,
                       long min_records = 10);

// Structured-text summary: catalog plus per-patient spans.
void write_cohort_manifest(const Cohort& cohort, const std::string& path);
std::vector<ChannelId> read_catalog_from_manifest(const std::string& path);

const PatientRecord* find_record(const Cohort& cohort, const std::string& patient_id);

}  // namespace ehrsig
