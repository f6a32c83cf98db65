#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "stratamatch/glm.hpp"
#include "stratamatch/matcher.hpp"
#include "stratamatch/stratifier.hpp"

namespace stratamatch {

enum class Zone { ok, yellow, red };

std::string_view to_string(Zone zone);

// red: total outside [too_few, too_many]; otherwise yellow when either group
// outnumbers the other by the flag ratio (control proportion outside
// (0.2, 0.8) at the default ratio of 4); otherwise ok.
Zone classify_zone(std::size_t treat, std::size_t control, const IssueThresholds& thresholds = {});

struct SizeRatioPoint {
  int stratum = 0;
  std::size_t total = 0;
  double control_proportion = 0.0;
  Zone zone = Zone::ok;
};

std::vector<SizeRatioPoint> size_ratio_data(const Strata& strata);

struct HistogramData {
  int stratum = 0;
  std::vector<double> bin_edges;  // n_bins + 1, increasing
  std::vector<std::size_t> treated_counts;
  std::vector<std::size_t> control_counts;
};

inline constexpr std::size_t kDefaultHistogramBins = 20;

// Equal-width bins over the stratum's observed propensity range; bin i holds
// [edge_i, edge_{i+1}), the last bin is closed. A zero-width range is widened
// so all scores land in the first bin. Propensity formulas are fit without
// stratum effects.
HistogramData propensity_hist_data(const Strata& strata, const PropensityInput& propensity,
                                   int stratum, std::size_t n_bins = kDefaultHistogramBins);
HistogramData histogram_from_scores(const Strata& strata, std::span<const double> propensity,
                                    int stratum, std::size_t n_bins = kDefaultHistogramBins);

enum class Group { treated, control };

struct FisherMillPoint {
  std::size_t row_id = 0;
  Group group = Group::control;
  double propensity = 0.0;
  double prognosis = 0.0;
};

// One point per row of the stratum. Jitter adds uniform noise on [-a, a] per
// axis (prognosis drawn first); a = 0 leaves that axis untouched. Requires
// prognostic scores (NoPrognosticScores for manual strata).
std::vector<FisherMillPoint> fisher_mill_data(const Strata& strata,
                                              const PropensityInput& propensity, int stratum,
                                              double jitter_prognosis = 0.0,
                                              double jitter_propensity = 0.0,
                                              std::uint64_t seed = 0);

struct ResidualRow {
  std::size_t row_id = 0;
  double fitted = 0.0;
  double response = 0.0;
  double pearson = 0.0;
  double deviance = 0.0;
};

std::vector<ResidualRow> residual_data(const FittedGlm& model, const DataFrame& df);

void write_csv(std::span<const SizeRatioPoint> points, std::ostream& out);
void write_csv(const HistogramData& hist, std::ostream& out);
void write_csv(std::span<const FisherMillPoint> points, std::ostream& out);
void write_csv(std::span<const ResidualRow> rows, std::ostream& out);

using PlotData =
    std::variant<std::vector<SizeRatioPoint>, HistogramData, std::vector<FisherMillPoint>>;

// Static SVG; byte-identical for identical input.
std::string render_svg(const PlotData& plot, const IssueThresholds& thresholds = {});
void render_svg(const PlotData& plot, const std::filesystem::path& path,
                const IssueThresholds& thresholds = {});

}  // namespace stratamatch
