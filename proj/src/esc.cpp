#include "hcmrisk/esc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hcmrisk/survival.hpp"

namespace hcmrisk::esc {

double prognostic_index(const EscInputs& in) {
  return coef::kMwt * in.mwt + coef::kMwtSquared * in.mwt * in.mwt +
         coef::kLaDiameter * in.la_diameter + coef::kLvotGradient * in.max_lvot_gradient +
         coef::kFamilyHistory * (in.fh_scd ? 1.0 : 0.0) + coef::kNsvt * (in.nsvt ? 1.0 : 0.0) +
         coef::kSyncope * (in.unexplained_syncope ? 1.0 : 0.0) + coef::kAge * in.age;
}

RangeFlags range_flags(const EscInputs& in) {
  RangeFlags f;
  f.age = in.age < 16.0 || in.age > 80.0;
  f.mwt = !(in.mwt > 0.0) || in.mwt > 35.0;
  f.gradient = in.max_lvot_gradient < 0.0;
  return f;
}

EscScore esc_risk(const EscInputs& in) {
  for (double v : {in.age, in.mwt, in.la_diameter, in.max_lvot_gradient})
    if (!std::isfinite(v)) throw EscError("ESC score inputs must be finite");
  EscScore s;
  s.prognostic_index = prognostic_index(in);
  s.out_of_range = range_flags(in);
  const double r = -std::expm1(std::exp(s.prognostic_index) * std::log(coef::kBaselineSurvival));
  s.risk = std::clamp(r, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
  return s;
}

EscInputs inputs_from_exam(const cohort::FeatureSchema& schema, const cohort::PatientExam& exam) {
  if (exam.values.size() != schema.size())
    throw EscError("exam of " + exam.patient_id + " does not match the schema width");
  auto get = [&](std::string_view name) {
    const double v = exam.values[schema.require_index(name)];
    if (is_missing(v))
      throw EscError("ESC input " + std::string(name) + " is missing for patient " + exam.patient_id);
    return v;
  };
  EscInputs in;
  in.age = get("age");
  in.mwt = get("mwt");
  in.la_diameter = get("la_diameter");
  in.max_lvot_gradient = get("lvot_gradient_max");
  in.fh_scd = get("fh_scd") != 0.0;
  in.nsvt = get("nsvt") != 0.0;
  in.unexplained_syncope = get("unexplained_syncope") != 0.0;
  return in;
}

EscGrouping esc_threshold_groups(std::span<const double> scores,
                                 const metrics::RocCurve& training_roc) {
  EscGrouping g;
  g.threshold = metrics::upper_left_threshold(training_roc);
  g.groups = survival::stratify_by_prediction(scores, g.threshold);
  const bool any_high = std::find(g.groups.begin(), g.groups.end(), 1) != g.groups.end();
  const bool any_low = std::find(g.groups.begin(), g.groups.end(), 0) != g.groups.end();
  g.single_group = !(any_high && any_low);
  return g;
}

}  // namespace hcmrisk::esc
