#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "stratamatch/dataset.hpp"
#include "stratamatch/error.hpp"
#include "stratamatch/glm.hpp"

namespace stratamatch {

inline constexpr std::string_view kStratumColumn = "stratum";

// Score range covered by one automatic stratum: [lo, hi), or [lo, hi] for the
// last one. lo is the smallest score in the stratum and hi the smallest score
// of the next stratum (or the overall maximum).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool closed_right = false;

  [[nodiscard]] bool contains(double x) const {
    return x >= lo && (closed_right ? x <= hi : x < hi);
  }
  [[nodiscard]] std::string render(int significant = 5) const;
};

struct QuantileBins {
  std::vector<int> assignment;   // 1-based stratum per score
  std::vector<double> cutpoints; // the n_strata - 1 empirical quantiles
  std::vector<Interval> bins;    // one per non-empty stratum
  std::size_t requested = 0;
};

// Cut points are the type-7 empirical quantiles at i / n_strata. A score equal
// to a cut point goes to the lower bin, so tied scores always share a stratum.
// Bins left empty by ties are dropped and the rest renumbered 1..k. With all
// scores distinct every bin holds floor(n / n_strata) or ceil(n / n_strata).
QuantileBins quantile_bin(std::span<const double> scores, std::size_t n_strata);

// Display intervals for a 1..k assignment: lo is the stratum minimum, hi the
// next stratum's minimum (the overall maximum, closed, for the last).
std::vector<Interval> bin_intervals(std::span<const int> assignment,
                                    std::span<const double> scores);

// n_strata for a target stratum size: ceil(n / size).
std::size_t strata_count(std::size_t n_rows, std::size_t size);

enum class Issue : unsigned {
  TooFewSamples = 1u << 0,
  TooManySamples = 1u << 1,
  NotEnoughTreated = 1u << 2,
  NotEnoughControl = 1u << 3,
};

class IssueFlags {
 public:
  IssueFlags() = default;

  void set(Issue issue) { bits_ |= static_cast<unsigned>(issue); }
  [[nodiscard]] bool has(Issue issue) const { return (bits_ & static_cast<unsigned>(issue)) != 0; }
  [[nodiscard]] bool empty() const { return bits_ == 0; }
  // "none", or flag texts joined with "; " in declaration order.
  [[nodiscard]] std::string render() const;

  friend bool operator==(IssueFlags, IssueFlags) = default;

 private:
  unsigned bits_ = 0;
};

struct IssueThresholds {
  std::size_t too_few = 75;    // total < too_few flags TooFewSamples
  std::size_t too_many = 5000; // total > too_many flags TooManySamples
  double ratio = 4.0;          // control >= ratio * treat flags NotEnoughTreated
};

IssueFlags classify_stratum(std::size_t treat, std::size_t control,
                            const IssueThresholds& thresholds = {});

struct IssueTableRow {
  int stratum = 0;
  std::size_t treat = 0;
  std::size_t control = 0;
  std::size_t total = 0;
  double control_proportion = 0.0;
  IssueFlags potential_issues;
};

// Per-stratum counts over a frame carrying a `stratum` column, ascending.
std::vector<IssueTableRow> issue_table(const DataFrame& with_strata, const std::string& treat,
                                       const IssueThresholds& thresholds = {});

struct StrataTableRow {
  int stratum = 0;
  std::optional<Interval> bin;  // automatic strata
  std::string definition;       // rendered bin, or the covariate combination
  std::size_t size = 0;
};

enum class StrataMode { automatic, manual };

// Result of either stratification. Manual strata never carry a pilot set,
// prognostic model or scores.
struct Strata {
  StrataMode mode = StrataMode::automatic;
  std::string treat;
  std::optional<std::string> outcome;
  DataFrame analysis_set;  // input columns + trailing `stratum`
  std::optional<DataFrame> pilot_set;
  std::optional<FittedGlm> prognostic_model;
  std::vector<double> prognostic_scores;  // aligned with analysis_set rows
  std::vector<StrataTableRow> strata_table;
  std::vector<IssueTableRow> issue_table;
  IssueThresholds thresholds;
  nlohmann::json call_record;
  std::vector<std::string> log;
  std::vector<Warning> warnings;

  [[nodiscard]] std::size_t n_strata() const { return strata_table.size(); }
  [[nodiscard]] std::vector<int> strata() const;
  [[nodiscard]] bool has_prognostic_scores() const { return !prognostic_scores.empty(); }
};

// Reads the `stratum` column as integers; throws NoStratumColumn.
std::vector<int> stratum_labels(const DataFrame& df);

struct AutoStratifyOptions {
  std::string treat;
  // Formula: fit on the pilot set. Score vector: one score per analysis row
  // (the whole input), used as given.
  std::variant<Formula, std::vector<double>> prognosis;
  std::optional<std::string> outcome;
  std::size_t size = 2500;
  double pilot_fraction = 0.1;
  std::optional<DataFrame> pilot_sample;
  std::vector<std::string> group_by_covariates;
  std::uint64_t seed = 0;
  GlmOptions glm;
  IssueThresholds thresholds;
};

Strata auto_stratify(const DataFrame& df, const AutoStratifyOptions& options);

// Strata are the distinct observed combinations of the rhs covariates,
// numbered by the lexicographic order of their (level-index) keys.
Strata manual_stratify(const DataFrame& df, const Formula& strata_formula,
                       const IssueThresholds& thresholds = {});

// Text renderer for the `print` view of a stratification.
std::string describe(const Strata& strata);

}  // namespace stratamatch
