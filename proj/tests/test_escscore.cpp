#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "hcmrisk/esc.hpp"

using namespace hcmrisk;
using namespace hcmrisk::esc;

namespace {

EscInputs reference_patient() {
  EscInputs in;
  in.age = 40;
  in.mwt = 25;
  in.la_diameter = 45;
  in.max_lvot_gradient = 30;
  in.fh_scd = false;
  in.nsvt = true;
  in.unexplained_syncope = false;
  return in;
}

}  // namespace

TEST(EscRisk, HandEvaluatedReferencePatient) {
  // PI = 0.15939858*25 - 0.00294271*625 + 0.0259082*45 + 0.00446131*30 + 0.82639195 - 0.01799934*40
  const auto s = esc_risk(reference_patient());
  EXPECT_NEAR(s.prognostic_index, 3.5518974, 1e-9);
  // 1 - 0.998^exp(3.5518974) evaluated in 50-digit decimal arithmetic.
  EXPECT_NEAR(s.risk, 0.06744646785473234, 1e-9);
  EXPECT_FALSE(s.out_of_range.any());
}

TEST(EscRisk, BinaryRiskFactorsIncreaseRisk) {
  const auto base = reference_patient();
  for (int k = 0; k < 3; ++k) {
    auto off = base, on = base;
    bool EscInputs::*field = k == 0 ? &EscInputs::fh_scd : k == 1 ? &EscInputs::nsvt : &EscInputs::unexplained_syncope;
    off.*field = false;
    on.*field = true;
    EXPECT_GT(esc_risk(on).risk, esc_risk(off).risk) << k;
  }
}

TEST(EscRisk, AgeLowersRisk) {
  auto in = reference_patient();
  double prev = 1.0;
  for (double age = 16; age <= 80; age += 1) {
    in.age = age;
    const double r = esc_risk(in).risk;
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(EscRisk, GridSignsMatchCoefficients) {
  // The MWT quadratic turns at -kMwt / (2 kMwtSquared), about 27.08 mm.
  const double turn = -coef::kMwt / (2.0 * coef::kMwtSquared);
  EXPECT_NEAR(turn, 27.08, 0.01);
  for (double age : {16.0, 45.0, 80.0})
    for (double la : {30.0, 50.0, 70.0})
      for (double grad : {0.0, 50.0, 150.0})
        for (double mwt = 10.0; mwt + 0.5 <= 35.0; mwt += 0.5) {
          EscInputs a{age, mwt, la, grad, false, false, false};
          EscInputs b = a;
          b.mwt += 0.5;
          if (b.mwt <= turn) EXPECT_GT(esc_risk(b).risk, esc_risk(a).risk);
          if (a.mwt >= turn) EXPECT_LT(esc_risk(b).risk, esc_risk(a).risk);
          EscInputs c = a;
          c.la_diameter += 1.0;
          EXPECT_GT(esc_risk(c).risk, esc_risk(a).risk);
          EscInputs d = a;
          d.max_lvot_gradient += 5.0;
          EXPECT_GT(esc_risk(d).risk, esc_risk(a).risk);
          EscInputs e = a;
          e.age += 1.0;
          EXPECT_LT(esc_risk(e).risk, esc_risk(a).risk);
        }
}

TEST(EscRisk, StrictlyInsideUnitInterval) {
  EscInputs lo{80, 1, 10, 0, false, false, false};
  EscInputs hi{16, 27, 90, 200, true, true, true};
  EscInputs extreme{0, 27, 1000, 5000, true, true, true};
  for (const auto& in : {lo, hi, extreme}) {
    const double r = esc_risk(in).risk;
    EXPECT_GT(r, 0.0);
    EXPECT_LT(r, 1.0);
  }
}

TEST(EscRisk, RangesAreFlaggedNotRejected) {
  auto in = reference_patient();
  in.age = 12;
  in.mwt = 38;
  in.max_lvot_gradient = -1;
  const auto s = esc_risk(in);
  EXPECT_TRUE(s.out_of_range.age);
  EXPECT_TRUE(s.out_of_range.mwt);
  EXPECT_TRUE(s.out_of_range.gradient);
  EXPECT_GT(s.risk, 0.0);
  in = reference_patient();
  in.age = 16;
  in.mwt = 35;
  EXPECT_FALSE(range_flags(in).any());
  in.mwt = 0;
  EXPECT_TRUE(range_flags(in).mwt);
  in = reference_patient();
  in.la_diameter = std::numeric_limits<double>::infinity();
  EXPECT_THROW(esc_risk(in), EscError);
}

TEST(EscRisk, InputsAreReadByName) {
  const auto schema = cohort::FeatureSchema::demo();
  cohort::PatientExam ex{"P", cohort::parse_date("2010-01-01"), std::vector<double>(schema.size(), 0.0)};
  ex.values[schema.require_index("age")] = 40;
  ex.values[schema.require_index("mwt")] = 25;
  ex.values[schema.require_index("la_diameter")] = 45;
  ex.values[schema.require_index("lvot_gradient_max")] = 30;
  ex.values[schema.require_index("nsvt")] = 1;
  const auto in = inputs_from_exam(schema, ex);
  EXPECT_NEAR(esc_risk(in).risk, esc_risk(reference_patient()).risk, 1e-15);
  ex.values[schema.require_index("mwt")] = kMissing;
  EXPECT_THROW(inputs_from_exam(schema, ex), EscError);
}

TEST(EscGroups, ThresholdFromTrainingRoc) {
  const std::vector<double> train{0.01, 0.02, 0.05, 0.08};
  const auto roc = metrics::roc_auc(train, std::vector<int>{0, 0, 1, 1});
  const auto g = esc_threshold_groups(train, roc);
  EXPECT_EQ(g.threshold, 0.05);
  EXPECT_EQ(g.groups, (std::vector<int>{0, 0, 1, 1}));
  EXPECT_FALSE(g.single_group);

  const auto low = esc_threshold_groups(std::vector<double>{0.01, 0.03}, roc);
  EXPECT_EQ(low.groups, (std::vector<int>{0, 0}));
  EXPECT_TRUE(low.single_group);
}
