#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hcmrisk/matrix.hpp"

namespace hcmrisk::cohort {

enum class FeatureKind { Continuous, Binary };
enum class FeatureGroup { Echo, Clinical, Medication };

std::string_view to_string(FeatureKind k);
std::string_view to_string(FeatureGroup g);
FeatureKind parse_kind(std::string_view s);
FeatureGroup parse_group(std::string_view s);

struct FeatureEntry {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  FeatureGroup group = FeatureGroup::Echo;
  std::string unit;
  bool allow_missing = true;

  friend bool operator==(const FeatureEntry&, const FeatureEntry&) = default;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ordered feature catalog. Names are unique.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureEntry> entries,
                         std::optional<std::size_t> expected_total = std::nullopt);

  std::size_t size() const { return entries_.size(); }
  const std::vector<FeatureEntry>& entries() const { return entries_; }
  const FeatureEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t require_index(std::string_view name) const;
  std::vector<std::string> names() const;
  std::size_t count(FeatureGroup g) const;

  std::string to_json() const;
  static FeatureSchema from_json(std::string_view text);
  static FeatureSchema load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // 82 entries: 63 echo, 14 clinical, 5 medication.
  static FeatureSchema demo();

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<FeatureEntry> entries_;
};

using Date = std::chrono::sys_days;

Date parse_date(std::string_view iso);
std::string format_date(Date d);
double years_between(Date from, Date to);

struct PatientExam {
  std::string patient_id;
  Date exam_date;
  std::vector<double> values;  // NaN = missing
};

struct Outcome {
  double followup_years = 0.0;
  std::optional<double> event_time_years;

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct EndpointSpec {
  double horizon_years = 5.0;
  void validate() const;
};

class CohortError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Cohort {
  FeatureSchema schema;
  std::vector<PatientExam> exams;            // file order
  std::map<std::string, Outcome> outcomes;   // per patient
  std::map<std::string, int> labels;         // filled by derive_labels

  // Patient ids in order of first appearance among exams.
  std::vector<std::string> patients() const;
  std::vector<std::size_t> exam_indices(const std::string& patient_id) const;
  bool has_labels() const { return !labels.empty(); }

  // Throws CohortError when an invariant is broken.
  void validate() const;
};

struct LoadStats {
  std::size_t rows = 0;
  std::size_t rejected_patients = 0;  // outcome columns missing
};

Cohort load_cohort(const std::filesystem::path& path, const FeatureSchema& schema,
                   LoadStats* stats = nullptr);
Cohort parse_cohort_csv(std::string_view text, const FeatureSchema& schema,
                        LoadStats* stats = nullptr);
std::string cohort_to_csv(const Cohort& cohort);
void save_cohort(const Cohort& cohort, const std::filesystem::path& path);

// label = 1 iff an event occurred at or before the horizon.
Cohort derive_labels(const Cohort& cohort, const EndpointSpec& spec);
int label_for(const Outcome& o, const EndpointSpec& spec);

// Keeps patients with follow-up >= horizon or an event within the horizon.
Cohort apply_inclusion(const Cohort& cohort, const EndpointSpec& spec);

// Earliest exam; ties resolved by file order.
const PatientExam& baseline_exam(const Cohort& cohort, const std::string& patient_id);

// One baseline row per patient, in patients() order.
struct BaselineTable {
  std::vector<std::string> patient_ids;
  Matrix X;
  std::vector<int> y;                  // empty when unlabeled
  std::vector<double> time_years;      // event time, else follow-up
  std::vector<int> event;              // 1 if an event was recorded
};
BaselineTable baseline_table(const Cohort& cohort);

std::string format_double(double v);

}  // namespace hcmrisk::cohort
