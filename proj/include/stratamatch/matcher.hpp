#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "stratamatch/glm.hpp"
#include "stratamatch/stratifier.hpp"

namespace stratamatch {

// Where propensity scores come from: a formula fit on the analysis set, an
// already fitted model, or one score per analysis row.
using PropensityInput = std::variant<Formula, FittedGlm, std::vector<double>>;

// Scores are clamped to [1e-12, 1 - 1e-12] before taking the logit.
double propensity_logit(double p);
// Matching distance between two propensity scores.
double match_distance(double treated, double control);

struct PropensityFit {
  std::vector<double> scores;
  std::optional<FittedGlm> model;  // formula mode only
  std::vector<std::string> log;
};

// Formula mode fits a logistic model on the analysis set; with
// stratum_effects the stratum enters as a dummy-coded factor (n_strata - 1
// extra columns). The formula's response must be the treatment column.
PropensityFit fit_propensity(const Strata& strata, const PropensityInput& input,
                             bool stratum_effects = true, const GlmOptions& glm = {});

struct KMatch {
  // Indices into `controls`, ascending, one list per treated unit.
  std::vector<std::vector<std::size_t>> controls_for_treated;
  double total_cost = 0.0;
};

// Exact 1:k matching minimizing the summed logit distance: every treated unit
// receives exactly k distinct controls. Throws Infeasible when
// controls.size() < k * treated.size().
KMatch optimal_k_match(std::span<const double> treated, std::span<const double> controls,
                       int k);

struct SetLabel {
  int stratum = 0;
  int index = 0;  // 1-based within the stratum

  [[nodiscard]] std::string render() const;
  friend bool operator==(const SetLabel&, const SetLabel&) = default;
};

struct MatchOptions {
  bool stratum_effects = true;
  unsigned threads = 1;  // 0 = hardware concurrency
  GlmOptions glm;
};

struct MatchResult {
  std::vector<std::optional<SetLabel>> assignment;  // per analysis row
  std::vector<double> propensity;                   // per analysis row
  int k = 1;
  // "t:c" -> number of sets; "0:1" counts unmatched controls and "1:0"
  // unmatched treated units.
  std::map<std::string, std::size_t> set_structure;
  double effective_pairs = 0.0;
  double total_cost = 0.0;
  std::vector<Warning> warnings;
  std::vector<std::string> log;
};

// Matches within each stratum. A stratum with t treated and c controls uses
// ratio min(k, floor(c / t)), warning DegradedRatio when that is below k; with
// fewer controls than treated it matches c treated units 1:1, leaves the rest
// unmatched and warns InsufficientControls.
MatchResult strata_match(const Strata& strata, const PropensityInput& propensity, int k,
                         const MatchOptions& options = {});

// Sum over sets of 2 / (1/t + 1/c); shapes with t = 0 or c = 0 add nothing.
double effective_sample_size(const std::map<std::string, std::size_t>& set_structure);

nlohmann::json summary_json(const MatchResult& result);
std::string describe(const MatchResult& result);

}  // namespace stratamatch
