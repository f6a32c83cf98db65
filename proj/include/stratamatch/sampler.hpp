#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stratamatch/dataset.hpp"

namespace stratamatch {

struct PilotSplit {
  DataFrame pilot_set;     // controls only
  DataFrame analysis_set;  // everything not in the pilot set, input order
  double fraction = 0.0;
  std::vector<std::string> balance_covariates;
  std::uint64_t seed = 0;
  std::vector<std::string> log;
};

// Validates that `treat` names a binary column; throws NonBinaryTreatment.
const Column& require_binary_treatment(const DataFrame& df, const std::string& treat);

// Selects each control into the pilot set independently with probability
// `pilot_fraction`. Rows are grouped into cells by the cross-classification of
// `group_by_covariates` (binary or categorical); each cell draws from its own
// random stream so that the selection inside one cell does not depend on the
// others. Treated rows are never selected.
PilotSplit split_pilot_set(const DataFrame& df, const std::string& treat,
                           double pilot_fraction,
                           const std::vector<std::string>& group_by_covariates,
                           std::uint64_t seed);

}  // namespace stratamatch
