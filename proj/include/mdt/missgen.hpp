#pragma once

#include <map>
#include <string>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/dgp.hpp"
#include "mdt/rng.hpp"

namespace mdt::missgen {

// One missingness-indicator model: logistic in substantive parents
// (continuous ones standardized with frozen constants) plus earlier
// indicators in the draw order.
struct IndicatorModel {
  std::string target;  // column this indicator masks
  double intercept = 0.0;
  struct Parent {
    std::string col;
    double coef = 0.0;
    bool standardize = false;
    double center = 0.0;
    double scale = 1.0;
  };
  std::vector<Parent> parents;
  // (index of earlier model in the chain, coefficient)
  std::vector<std::pair<int, double>> m_parents;
};

struct MdagSpec {
  std::string mdag;  // "A".."E"
  int dgp_id = 1;
  std::vector<IndicatorModel> models;  // draw order: M_W2, M_W3, M_W4, [M_W6], M_A, M_Y
  std::map<std::string, double> margins;
  double target_ay = 0.40;
  double target_any = 0.50;
  // the union margin is defined over these columns (W6 keeps its own margin
  // but stays out of the union, matching the reported joint rates)
  std::vector<std::string> any_group;
  bool calibrated = false;

  void validate_nesting() const;  // structural A  B  C  D  E audit helper
};

// model-based m-DAG over the generated schema; mdag in {'A'..'E'}
MdagSpec make_mdag(char mdag, const dgp::Spec& dgp_spec);

// same m-DAG family over an arbitrary observational schema: `fully_observed`
// drive B-style arrows, `partial` are the self-masking confounders; the pool
// supplies standardization constants and margins come from the caller
MdagSpec make_mdag_generic(char mdag, const Dataset& pool,
                           const std::vector<std::string>& fully_observed,
                           const std::vector<std::string>& partial,
                           const std::string& a_col, const std::string& y_col,
                           const std::map<std::string, double>& margins);

// sequential intercept solve against a complete-data panel; achieved margins
// land within +-0.005 of target
void calibrate_intercepts(MdagSpec& spec, const Dataset& panel,
                          std::uint64_t seed);

// intercepts plus the two chain-coefficient knobs (shared indicator arrows
// and the M_A -> M_Y arrow) solved for the A/Y and Any union targets
void calibrate_joint(MdagSpec& spec, const Dataset& panel, std::uint64_t seed);

struct MaskedData {
  Dataset data;      // masked columns + M_* indicator columns for diagnostics
  Dataset complete;  // pre-masking values; oracle tests only, never estimators
};

MaskedData impose(const Dataset& complete, const MdagSpec& spec, RngStream& rng);

}  // namespace mdt::missgen
