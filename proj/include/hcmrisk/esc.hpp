#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "hcmrisk/cohort.hpp"
#include "hcmrisk/metrics.hpp"

namespace hcmrisk::esc {

class EscError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// HCM Risk-SCD prognostic index coefficients (O'Mahony et al., Eur Heart J 2014).
namespace coef {
inline constexpr double kMwt = 0.15939858;
inline constexpr double kMwtSquared = -0.00294271;
inline constexpr double kLaDiameter = 0.0259082;
inline constexpr double kLvotGradient = 0.00446131;
inline constexpr double kFamilyHistory = 0.4583082;
inline constexpr double kNsvt = 0.82639195;
inline constexpr double kSyncope = 0.71650361;
inline constexpr double kAge = -0.01799934;
inline constexpr double kBaselineSurvival = 0.998;  // 5 years
}  // namespace coef

struct EscInputs {
  double age = 0.0;                // years
  double mwt = 0.0;                // mm
  double la_diameter = 0.0;        // mm
  double max_lvot_gradient = 0.0;  // mmHg
  bool fh_scd = false;
  bool nsvt = false;
  bool unexplained_syncope = false;
};

// Validity ranges of the published calculator.
struct RangeFlags {
  bool age = false;       // outside [16, 80]
  bool mwt = false;       // outside (0, 35]
  bool gradient = false;  // negative
  bool any() const { return age || mwt || gradient; }
};

struct EscScore {
  double risk = 0.0;  // 5-year probability, strictly inside (0, 1)
  double prognostic_index = 0.0;
  RangeFlags out_of_range;
};

double prognostic_index(const EscInputs& in);
RangeFlags range_flags(const EscInputs& in);
// risk = 1 - 0.998^exp(PI). Out-of-range inputs are scored and flagged.
EscScore esc_risk(const EscInputs& in);

// Reads age, mwt, la_diameter, lvot_gradient_max, fh_scd, nsvt and
// unexplained_syncope by name.
EscInputs inputs_from_exam(const cohort::FeatureSchema& schema, const cohort::PatientExam& exam);

struct EscGrouping {
  double threshold = 0.0;
  std::vector<int> groups;  // 1 = high risk (score >= threshold)
  bool single_group = false;
};

// Threshold from the upper-left point of the training ROC.
EscGrouping esc_threshold_groups(std::span<const double> scores,
                                 const metrics::RocCurve& training_roc);

}  // namespace hcmrisk::esc
