#include "hcmrisk/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace hcmrisk::cohort {

using nlohmann::json;

std::string_view to_string(FeatureKind k) {
  return k == FeatureKind::Continuous ? "continuous" : "binary";
}

std::string_view to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::Echo: return "echo";
    case FeatureGroup::Clinical: return "clinical";
    case FeatureGroup::Medication: return "medication";
  }
  return "echo";
}

FeatureKind parse_kind(std::string_view s) {
  if (s == "continuous") return FeatureKind::Continuous;
  if (s == "binary") return FeatureKind::Binary;
  throw SchemaError("unknown feature kind '" + std::string(s) + "'");
}

FeatureGroup parse_group(std::string_view s) {
  if (s == "echo") return FeatureGroup::Echo;
  if (s == "clinical") return FeatureGroup::Clinical;
  if (s == "medication") return FeatureGroup::Medication;
  throw SchemaError("unknown feature group '" + std::string(s) + "'");
}

FeatureSchema::FeatureSchema(std::vector<FeatureEntry> entries,
                             std::optional<std::size_t> expected_total)
    : entries_(std::move(entries)) {
  std::unordered_set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.name.empty()) throw SchemaError("feature with empty name");
    if (!seen.insert(e.name).second) throw SchemaError("duplicate feature name '" + e.name + "'");
  }
  if (expected_total && *expected_total != entries_.size()) {
    throw SchemaError("schema has " + std::to_string(entries_.size()) + " entries, expected " +
                      std::to_string(*expected_total));
  }
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  return std::nullopt;
}

std::size_t FeatureSchema::require_index(std::string_view name) const {
  auto i = index_of(name);
  if (!i) throw SchemaError("schema has no feature '" + std::string(name) + "'");
  return *i;
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::size_t FeatureSchema::count(FeatureGroup g) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [g](const auto& e) { return e.group == g; }));
}

std::string FeatureSchema::to_json() const {
  json j;
  j["version"] = 1;
  j["entries"] = json::array();
  for (const auto& e : entries_) {
    j["entries"].push_back({{"name", e.name},
                            {"kind", to_string(e.kind)},
                            {"group", to_string(e.group)},
                            {"unit", e.unit},
                            {"allow_missing", e.allow_missing}});
  }
  return j.dump(2);
}

FeatureSchema FeatureSchema::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw SchemaError(std::string("schema is not valid JSON: ") + ex.what());
  }
  if (!j.contains("entries") || !j["entries"].is_array())
    throw SchemaError("schema JSON needs an 'entries' array");
  std::vector<FeatureEntry> entries;
  for (const auto& e : j["entries"]) {
    FeatureEntry fe;
    fe.name = e.at("name").get<std::string>();
    fe.kind = parse_kind(e.value("kind", "continuous"));
    fe.group = parse_group(e.at("group").get<std::string>());
    fe.unit = e.value("unit", "");
    fe.allow_missing = e.value("allow_missing", true);
    entries.push_back(std::move(fe));
  }
  std::optional<std::size_t> total;
  if (j.contains("total")) total = j["total"].get<std::size_t>();
  return FeatureSchema(std::move(entries), total);
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void FeatureSchema::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write schema file " + path.string());
  out << to_json() << '\n';
}

FeatureSchema FeatureSchema::demo() {
  using K = FeatureKind;
  using G = FeatureGroup;
  std::vector<FeatureEntry> e;
  auto add = [&e](std::string name, K k, G g, std::string unit, bool allow_missing = true) {
    e.push_back({std::move(name), k, g, std::move(unit), allow_missing});
  };
  // Echocardiography (63)
  add("lvef", K::Continuous, G::Echo, "%");
  add("lvedv", K::Continuous, G::Echo, "mL");
  add("lvesv", K::Continuous, G::Echo, "mL");
  add("lvidd", K::Continuous, G::Echo, "mm");
  add("lvids", K::Continuous, G::Echo, "mm");
  add("mwt", K::Continuous, G::Echo, "mm", false);
  add("ivs_thickness", K::Continuous, G::Echo, "mm");
  add("pwt", K::Continuous, G::Echo, "mm");
  add("la_diameter", K::Continuous, G::Echo, "mm", false);
  add("la_volume", K::Continuous, G::Echo, "mL");
  add("la_area", K::Continuous, G::Echo, "cm2");
  add("lvot_gradient_rest", K::Continuous, G::Echo, "mmHg");
  add("lvot_gradient_max", K::Continuous, G::Echo, "mmHg", false);
  add("lvot_diameter", K::Continuous, G::Echo, "mm");
  add("e_wave", K::Continuous, G::Echo, "cm/s");
  add("a_wave", K::Continuous, G::Echo, "cm/s");
  add("e_a_ratio", K::Continuous, G::Echo, "");
  add("deceleration_time", K::Continuous, G::Echo, "ms");
  add("septal_e_prime", K::Continuous, G::Echo, "cm/s");
  add("lateral_e_prime", K::Continuous, G::Echo, "cm/s");
  add("septal_e_e_prime", K::Continuous, G::Echo, "");
  add("lateral_e_e_prime", K::Continuous, G::Echo, "");
  add("average_e_e_prime", K::Continuous, G::Echo, "");
  add("tapse", K::Continuous, G::Echo, "mm");
  add("rv_s_prime", K::Continuous, G::Echo, "cm/s");
  add("rv_basal_diameter", K::Continuous, G::Echo, "mm");
  add("rv_wall_thickness", K::Continuous, G::Echo, "mm");
  add("pasp", K::Continuous, G::Echo, "mmHg");
  add("tr_velocity", K::Continuous, G::Echo, "m/s");
  add("ra_area", K::Continuous, G::Echo, "cm2");
  add("ivc_diameter", K::Continuous, G::Echo, "mm");
  add("aortic_root", K::Continuous, G::Echo, "mm");
  add("ascending_aorta", K::Continuous, G::Echo, "mm");
  add("mr_grade", K::Continuous, G::Echo, "grade");
  add("ms_gradient", K::Continuous, G::Echo, "mmHg");
  add("tr_grade", K::Continuous, G::Echo, "grade");
  add("ar_grade", K::Continuous, G::Echo, "grade");
  add("as_peak_velocity", K::Continuous, G::Echo, "m/s");
  add("mv_anterior_leaflet", K::Continuous, G::Echo, "mm");
  add("mv_posterior_leaflet", K::Continuous, G::Echo, "mm");
  add("sam_present", K::Binary, G::Echo, "");
  add("lv_mass", K::Continuous, G::Echo, "g");
  add("lv_mass_index", K::Continuous, G::Echo, "g/m2");
  add("relative_wall_thickness", K::Continuous, G::Echo, "");
  add("fractional_shortening", K::Continuous, G::Echo, "%");
  add("stroke_volume", K::Continuous, G::Echo, "mL");
  add("cardiac_output", K::Continuous, G::Echo, "L/min");
  add("lvot_vti", K::Continuous, G::Echo, "cm");
  add("ivrt", K::Continuous, G::Echo, "ms");
  add("pulmonary_vein_s", K::Continuous, G::Echo, "cm/s");
  add("pulmonary_vein_d", K::Continuous, G::Echo, "cm/s");
  add("pulmonary_vein_ar", K::Continuous, G::Echo, "cm/s");
  add("lv_apex_thickness", K::Continuous, G::Echo, "mm");
  add("anterior_wall_thickness", K::Continuous, G::Echo, "mm");
  add("inferior_wall_thickness", K::Continuous, G::Echo, "mm");
  add("lateral_wall_thickness", K::Continuous, G::Echo, "mm");
  add("midventricular_gradient", K::Continuous, G::Echo, "mmHg");
  add("apical_aneurysm", K::Binary, G::Echo, "");
  add("la_volume_index", K::Continuous, G::Echo, "mL/m2");
  add("lvedv_index", K::Continuous, G::Echo, "mL/m2");
  add("lvesv_index", K::Continuous, G::Echo, "mL/m2");
  add("mapse", K::Continuous, G::Echo, "mm");
  add("rv_fac", K::Continuous, G::Echo, "%");
  // Clinical (14)
  add("age", K::Continuous, G::Clinical, "years", false);
  add("sex_female", K::Binary, G::Clinical, "");
  add("height", K::Continuous, G::Clinical, "cm");
  add("weight", K::Continuous, G::Clinical, "kg");
  add("bmi", K::Continuous, G::Clinical, "kg/m2");
  add("systolic_bp", K::Continuous, G::Clinical, "mmHg");
  add("diastolic_bp", K::Continuous, G::Clinical, "mmHg");
  add("heart_rate", K::Continuous, G::Clinical, "bpm");
  add("nyha_class", K::Continuous, G::Clinical, "class");
  add("fh_hcm", K::Binary, G::Clinical, "");
  add("fh_scd", K::Binary, G::Clinical, "", false);
  add("nsvt", K::Binary, G::Clinical, "", false);
  add("unexplained_syncope", K::Binary, G::Clinical, "", false);
  add("atrial_fibrillation", K::Binary, G::Clinical, "");
  // Medication (5)
  add("beta_blocker", K::Binary, G::Medication, "");
  add("calcium_channel_blocker", K::Binary, G::Medication, "");
  add("raas_inhibitor", K::Binary, G::Medication, "");
  add("diuretic", K::Binary, G::Medication, "");
  add("antiarrhythmic", K::Binary, G::Medication, "");
  return FeatureSchema(std::move(e), 82);
}

Date parse_date(std::string_view iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  auto bad = [&] { return CohortError("invalid ISO-8601 date '" + std::string(iso) + "'"); };
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') throw bad();
  auto parse_part = [&](std::string_view s, auto& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) throw bad();
  };
  parse_part(iso.substr(0, 4), y);
  parse_part(iso.substr(5, 2), m);
  parse_part(iso.substr(8, 2), d);
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw bad();
  return Date{ymd};
}

std::string format_date(Date d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

double years_between(Date from, Date to) {
  return static_cast<double>((to - from).count()) / 365.25;
}

void EndpointSpec::validate() const {
  if (!(horizon_years > 0.0) || !std::isfinite(horizon_years))
    throw CohortError("endpoint horizon must be positive");
}

std::vector<std::string> Cohort::patients() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& e : exams)
    if (seen.insert(e.patient_id).second) out.push_back(e.patient_id);
  return out;
}

std::vector<std::size_t> Cohort::exam_indices(const std::string& patient_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < exams.size(); ++i)
    if (exams[i].patient_id == patient_id) out.push_back(i);
  return out;
}

void Cohort::validate() const {
  for (const auto& e : exams) {
    if (e.values.size() != schema.size())
      throw CohortError("exam of patient " + e.patient_id + " has " +
                        std::to_string(e.values.size()) + " values, schema has " +
                        std::to_string(schema.size()));
    for (std::size_t j = 0; j < schema.size(); ++j) {
      double v = e.values[j];
      if (is_missing(v)) continue;
      if (schema[j].kind == FeatureKind::Binary && v != 0.0 && v != 1.0)
        throw CohortError("binary feature " + schema[j].name + " has value " + format_double(v));
    }
    if (!outcomes.contains(e.patient_id))
      throw CohortError("patient " + e.patient_id + " has no outcome record");
  }
  for (const auto& [id, o] : outcomes) {
    if (!(o.followup_years >= 0.0)) throw CohortError("patient " + id + " has negative follow-up");
    if (o.event_time_years) {
      if (!(*o.event_time_years >= 0.0))
        throw CohortError("patient " + id + " has negative event time");
      if (*o.event_time_years > o.followup_years)
        throw CohortError("patient " + id + " has event time after end of follow-up");
    }
  }
  for (const auto& [id, l] : labels)
    if (l != 0 && l != 1) throw CohortError("patient " + id + " has label outside {0,1}");
}

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
    if (c.size() >= 2 && c.front() == '"' && c.back() == '"') c = c.substr(1, c.size() - 2);
  }
  return cells;
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw CohortError("non-numeric value '" + std::string(s) + "'");
  return v;
}

constexpr std::string_view kFixedColumns[] = {"patient_id", "exam_date", "followup_years",
                                              "event_time_years"};

}  // namespace

Cohort parse_cohort_csv(std::string_view text, const FeatureSchema& schema, LoadStats* stats) {
  Cohort cohort;
  cohort.schema = schema;

  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      auto pos = text.find('\n', start);
      auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) lines.push_back(line);
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
  }
  if (lines.empty()) throw CohortError("cohort file is empty");
  if (lines[0].size() >= 3 && static_cast<unsigned char>(lines[0][0]) == 0xEF)
    lines[0].remove_prefix(3);  // UTF-8 BOM

  const auto header = split_csv_line(lines[0]);
  const std::size_t expected = 4 + schema.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    const bool fixed = i < 4;
    const std::string_view want = fixed ? kFixedColumns[i]
                                        : (i - 4 < schema.size() ? std::string_view(schema[i - 4].name)
                                                                 : std::string_view{});
    if (header[i] != want) {
      if (!fixed && !schema.index_of(header[i]))
        throw CohortError("unknown column '" + std::string(header[i]) + "' (not in schema)");
      throw CohortError("column " + std::to_string(i + 1) + " is '" + std::string(header[i]) +
                        "', expected '" + std::string(want) + "'");
    }
  }
  if (header.size() != expected)
    throw CohortError("header has " + std::to_string(header.size()) + " columns, expected " +
                      std::to_string(expected));

  std::set<std::pair<std::string, int>> seen_exam;
  std::map<std::string, std::optional<Outcome>> outcome_rows;
  std::vector<PatientExam> exams;

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto cells = split_csv_line(lines[ln]);
    const std::string where = "line " + std::to_string(ln + 1) + ": ";
    if (cells.size() != expected)
      throw CohortError(where + "expected " + std::to_string(expected) + " cells, found " +
                        std::to_string(cells.size()));
    PatientExam exam;
    exam.patient_id = std::string(cells[0]);
    if (exam.patient_id.empty()) throw CohortError(where + "empty patient_id");
    try {
      exam.exam_date = parse_date(cells[1]);
    } catch (const CohortError& e) {
      throw CohortError(where + e.what());
    }
    if (!seen_exam.emplace(exam.patient_id, exam.exam_date.time_since_epoch().count()).second)
      throw CohortError(where + "duplicate exam for patient " + exam.patient_id + " on " +
                        std::string(cells[1]));

    std::optional<Outcome> outcome;
    try {
      auto fu = parse_number(cells[2]);
      auto ev = parse_number(cells[3]);
      if (fu) outcome = Outcome{*fu, ev};
    } catch (const CohortError& e) {
      throw CohortError(where + e.what());
    }
    auto [it, inserted] = outcome_rows.emplace(exam.patient_id, outcome);
    if (!inserted && it->second != outcome)
      throw CohortError(where + "inconsistent outcome columns for patient " + exam.patient_id);

    exam.values.resize(schema.size(), kMissing);
    for (std::size_t j = 0; j < schema.size(); ++j) {
      try {
        auto v = parse_number(cells[4 + j]);
        if (v) {
          exam.values[j] = *v;
        } else if (!schema[j].allow_missing) {
          throw CohortError("missing value in required feature");
        }
      } catch (const CohortError& e) {
        throw CohortError(where + "feature " + schema[j].name + ": " + e.what());
      }
    }
    exams.push_back(std::move(exam));
  }

  std::size_t rejected = 0;
  for (auto& [id, o] : outcome_rows) {
    if (o) {
      cohort.outcomes.emplace(id, *o);
    } else {
      ++rejected;
    }
  }
  for (auto& e : exams)
    if (cohort.outcomes.contains(e.patient_id)) cohort.exams.push_back(std::move(e));

  cohort.validate();
  if (stats) {
    stats->rows = lines.size() - 1;
    stats->rejected_patients = rejected;
  }
  return cohort;
}

Cohort load_cohort(const std::filesystem::path& path, const FeatureSchema& schema, LoadStats* stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CohortError("cannot open cohort file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_cohort_csv(ss.str(), schema, stats);
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string cohort_to_csv(const Cohort& cohort) {
  std::string out;
  for (auto c : kFixedColumns) {
    out += c;
    out += ',';
  }
  for (std::size_t j = 0; j < cohort.schema.size(); ++j) {
    out += cohort.schema[j].name;
    out += j + 1 < cohort.schema.size() ? ',' : '\n';
  }
  for (const auto& e : cohort.exams) {
    const auto& o = cohort.outcomes.at(e.patient_id);
    out += e.patient_id + ',' + format_date(e.exam_date) + ',' + format_double(o.followup_years) + ',';
    if (o.event_time_years) out += format_double(*o.event_time_years);
    for (double v : e.values) {
      out += ',';
      if (!is_missing(v)) out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CohortError("cannot write cohort file " + path.string());
  out << cohort_to_csv(cohort);
}

int label_for(const Outcome& o, const EndpointSpec& spec) {
  return o.event_time_years && *o.event_time_years <= spec.horizon_years ? 1 : 0;
}

Cohort derive_labels(const Cohort& cohort, const EndpointSpec& spec) {
  spec.validate();
  Cohort out = cohort;
  out.labels.clear();
  for (const auto& [id, o] : out.outcomes) out.labels[id] = label_for(o, spec);
  return out;
}

Cohort apply_inclusion(const Cohort& cohort, const EndpointSpec& spec) {
  spec.validate();
  std::unordered_set<std::string> with_exams;
  for (const auto& e : cohort.exams) with_exams.insert(e.patient_id);

  Cohort out;
  out.schema = cohort.schema;
  for (const auto& [id, o] : cohort.outcomes) {
    const bool eligible = o.followup_years >= spec.horizon_years || label_for(o, spec) == 1;
    if (eligible && with_exams.contains(id)) {
      out.outcomes.emplace(id, o);
      if (auto it = cohort.labels.find(id); it != cohort.labels.end()) out.labels.emplace(id, it->second);
    }
  }
  for (const auto& e : cohort.exams)
    if (out.outcomes.contains(e.patient_id)) out.exams.push_back(e);
  return out;
}

const PatientExam& baseline_exam(const Cohort& cohort, const std::string& patient_id) {
  const PatientExam* best = nullptr;
  for (const auto& e : cohort.exams) {
    if (e.patient_id != patient_id) continue;
    if (!best || e.exam_date < best->exam_date) best = &e;
  }
  if (!best) throw CohortError("unknown patient '" + patient_id + "'");
  return *best;
}

BaselineTable baseline_table(const Cohort& cohort) {
  BaselineTable t;
  t.patient_ids = cohort.patients();
  t.X = Matrix(t.patient_ids.size(), cohort.schema.size());
  // Single pass: earliest exam per patient, first in file order on ties.
  std::map<std::string, const PatientExam*> first;
  for (const auto& e : cohort.exams) {
    auto [it, inserted] = first.emplace(e.patient_id, &e);
    if (!inserted && e.exam_date < it->second->exam_date) it->second = &e;
  }
  for (std::size_t i = 0; i < t.patient_ids.size(); ++i) {
    const auto& id = t.patient_ids[i];
    const auto& values = first.at(id)->values;
    std::copy(values.begin(), values.end(), t.X.row(i).begin());
    const auto& o = cohort.outcomes.at(id);
    t.event.push_back(o.event_time_years ? 1 : 0);
    t.time_years.push_back(o.event_time_years ? *o.event_time_years : o.followup_years);
    if (cohort.has_labels()) t.y.push_back(cohort.labels.at(id));
  }
  return t;
}

}  // namespace hcmrisk::cohort
