#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "hcmrisk/cohort.hpp"
#include "hcmrisk/synth.hpp"

using namespace hcmrisk::cohort;

namespace {

FeatureSchema tiny_schema() {
  return FeatureSchema({{"lvef", FeatureKind::Continuous, FeatureGroup::Echo, "%", true},
                        {"nsvt", FeatureKind::Binary, FeatureGroup::Clinical, "", true},
                        {"age", FeatureKind::Continuous, FeatureGroup::Clinical, "years", false}});
}

const char* kHeader = "patient_id,exam_date,followup_years,event_time_years,lvef,nsvt,age\n";

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "hcmrisk_test_cohort";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Schema, DemoHas82EntriesSplitByGroup) {
  const auto s = FeatureSchema::demo();
  EXPECT_EQ(s.size(), 82u);
  EXPECT_EQ(s.count(FeatureGroup::Echo), 63u);
  EXPECT_EQ(s.count(FeatureGroup::Clinical), 14u);
  EXPECT_EQ(s.count(FeatureGroup::Medication), 5u);
}

TEST(Schema, RejectsDuplicatesAndWrongTotal) {
  std::vector<FeatureEntry> dup{{"a", FeatureKind::Continuous, FeatureGroup::Echo, "", true},
                                {"a", FeatureKind::Binary, FeatureGroup::Echo, "", true}};
  EXPECT_THROW(FeatureSchema{dup}, SchemaError);
  EXPECT_THROW(FeatureSchema(tiny_schema().entries(), 4), SchemaError);
  EXPECT_THROW(parse_group("imaging"), SchemaError);
}

TEST(Schema, JsonRoundTrip) {
  const auto s = FeatureSchema::demo();
  EXPECT_EQ(FeatureSchema::from_json(s.to_json()), s);
  const auto path = temp_file("schema.json");
  s.save(path);
  EXPECT_EQ(FeatureSchema::load(path), s);
}

TEST(Dates, IsoRoundTripAndYears) {
  EXPECT_EQ(format_date(parse_date("2004-02-29")), "2004-02-29");
  EXPECT_THROW(parse_date("2003-02-29"), CohortError);
  EXPECT_THROW(parse_date("2003/02/01"), CohortError);
  EXPECT_NEAR(years_between(parse_date("2000-01-01"), parse_date("2001-01-01")), 366.0 / 365.25, 1e-12);
}

TEST(LoadCohort, WellFormedRowsAndMissingCell) {
  const std::string csv = std::string(kHeader) +
                          "P1,2010-01-01,6,,55,0,40\n"
                          "P2,2010-02-01,3,2.5,,1,61\n"
                          "P3,2011-03-04,7.5,6,70,,33\n";
  LoadStats st;
  const auto c = parse_cohort_csv(csv, tiny_schema(), &st);
  ASSERT_EQ(c.exams.size(), 3u);
  EXPECT_EQ(st.rows, 3u);
  EXPECT_TRUE(std::isnan(c.exams[1].values[0]));
  EXPECT_TRUE(std::isnan(c.exams[2].values[1]));
  EXPECT_EQ(c.exams[0].values[2], 40.0);
  EXPECT_EQ(c.outcomes.at("P2").event_time_years, 2.5);
  EXPECT_FALSE(c.outcomes.at("P1").event_time_years.has_value());
}

TEST(LoadCohort, UnknownColumnIsRejected) {
  const std::string csv = "patient_id,exam_date,followup_years,event_time_years,lvef,foo,age\n";
  try {
    parse_cohort_csv(csv, tiny_schema());
    FAIL() << "expected an error";
  } catch (const CohortError& e) {
    EXPECT_NE(std::string(e.what()).find("foo"), std::string::npos);
  }
}

TEST(LoadCohort, RejectsBadCells) {
  const auto schema = tiny_schema();
  EXPECT_THROW(parse_cohort_csv(std::string(kHeader) + "P1,2010-01-01,6,,abc,0,40\n", schema), CohortError);
  EXPECT_THROW(parse_cohort_csv(std::string(kHeader) + "P1,2010-01-01,6,,50,2,40\n", schema), CohortError);
  EXPECT_THROW(parse_cohort_csv(std::string(kHeader) + "P1,2010-01-01,6,,50,0,\n", schema), CohortError);
  EXPECT_THROW(parse_cohort_csv(std::string(kHeader) + "P1,2010-01-01,6,,50,0,40\nP1,2010-01-01,6,,51,0,40\n",
                                schema),
               CohortError);
  EXPECT_THROW(parse_cohort_csv(std::string(kHeader) + "P1,2010-01-01,3,4,50,0,40\n", schema), CohortError);
}

TEST(LoadCohort, MissingOutcomeRejectsThePatient) {
  const std::string csv = std::string(kHeader) +
                          "P1,2010-01-01,6,,55,0,40\n"
                          "P2,2010-02-01,,,50,1,61\n";
  LoadStats st;
  const auto c = parse_cohort_csv(csv, tiny_schema(), &st);
  EXPECT_EQ(c.patients(), std::vector<std::string>{"P1"});
  EXPECT_EQ(st.rejected_patients, 1u);
}

TEST(LoadCohort, SaveLoadRoundTripsBitIdentically) {
  hcmrisk::synth::GeneratorSpec spec = hcmrisk::synth::preset("florence-like", 3);
  spec.n_patients = 120;
  spec.exams_per_patient = {1, 3};
  spec.missing_rate = 0.2;
  const auto syn = hcmrisk::synth::generate_longitudinal(spec, FeatureSchema::demo());
  const auto path = temp_file("roundtrip.csv");
  save_cohort(syn.cohort, path);
  const auto back = load_cohort(path, syn.cohort.schema);
  ASSERT_EQ(back.exams.size(), syn.cohort.exams.size());
  for (std::size_t i = 0; i < back.exams.size(); ++i) {
    EXPECT_EQ(back.exams[i].patient_id, syn.cohort.exams[i].patient_id);
    EXPECT_EQ(back.exams[i].exam_date, syn.cohort.exams[i].exam_date);
    for (std::size_t j = 0; j < back.exams[i].values.size(); ++j) {
      const double a = back.exams[i].values[j], b = syn.cohort.exams[i].values[j];
      if (std::isnan(b)) {
        EXPECT_TRUE(std::isnan(a));
      } else {
        EXPECT_EQ(a, b);
      }
    }
  }
  EXPECT_EQ(back.outcomes, syn.cohort.outcomes);
  EXPECT_EQ(cohort_to_csv(back), cohort_to_csv(syn.cohort));
}

TEST(Labels, EventWithinHorizon) {
  const EndpointSpec h{5.0};
  EXPECT_EQ(label_for({7.0, 3.0}, h), 1);
  EXPECT_EQ(label_for({7.0, 6.0}, h), 0);
  EXPECT_EQ(label_for({5.0, 5.0}, h), 1);
  EXPECT_EQ(label_for({9.0, std::nullopt}, h), 0);
  EXPECT_THROW(EndpointSpec{0.0}.validate(), CohortError);
}

TEST(Labels, IdempotentAndBlindToFeatures) {
  const std::string csv = std::string(kHeader) +
                          "P1,2010-01-01,6,,55,0,40\n"
                          "P2,2010-02-01,3,2.5,,1,61\n"
                          "P3,2011-03-04,7.5,6,70,,33\n";
  const auto c = parse_cohort_csv(csv, tiny_schema());
  const auto l1 = derive_labels(c, {});
  EXPECT_EQ(derive_labels(l1, {}).labels, l1.labels);
  auto shuffled = c;
  for (auto& e : shuffled.exams) std::reverse(e.values.begin(), e.values.end());
  EXPECT_EQ(derive_labels(shuffled, {}).labels, l1.labels);
  EXPECT_EQ(l1.labels.at("P1"), 0);
  EXPECT_EQ(l1.labels.at("P2"), 1);
  EXPECT_EQ(l1.labels.at("P3"), 0);
}

TEST(Inclusion, FollowUpOrEarlyEvent) {
  const std::string csv = std::string(kHeader) +
                          "A,2010-01-01,2,,55,0,40\n"
                          "B,2010-01-01,2,1.5,55,0,40\n"
                          "C,2010-01-01,5,,55,0,40\n"
                          "D,2010-01-01,4.9,,55,0,40\n";
  const auto c = parse_cohort_csv(csv, tiny_schema());
  const auto kept = apply_inclusion(c, {});
  EXPECT_EQ(kept.patients(), (std::vector<std::string>{"B", "C"}));
  EXPECT_EQ(apply_inclusion(kept, {}).patients(), kept.patients());
  for (const auto& id : kept.patients()) EXPECT_TRUE(c.outcomes.contains(id));
}

TEST(Baseline, EarliestExamThenFileOrder) {
  const std::string csv = std::string(kHeader) +
                          "A,2012-05-01,6,,60,0,40\n"
                          "A,2010-01-01,6,,50,0,40\n"
                          "B,2010-01-01,6,,70,0,40\n";
  const auto c = parse_cohort_csv(csv, tiny_schema());
  EXPECT_EQ(baseline_exam(c, "A").values[0], 50.0);
  EXPECT_EQ(baseline_exam(c, "B").values[0], 70.0);
  EXPECT_THROW(baseline_exam(c, "Z"), CohortError);

  // Same date twice cannot be loaded, so build the tie in memory.
  Cohort t = c;
  t.exams = {c.exams[2], c.exams[2]};
  t.exams[1].values[0] = 71.0;
  EXPECT_EQ(baseline_exam(t, "B").values[0], 70.0);

  const auto table = baseline_table(derive_labels(c, {}));
  EXPECT_EQ(table.patient_ids, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(table.X(0, 0), 50.0);
  EXPECT_EQ(table.y, (std::vector<int>{0, 0}));
}

TEST(FormatDouble, ShortestRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
}
