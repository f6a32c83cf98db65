#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "stratamatch/matcher.hpp"
#include "stratamatch/stratifier.hpp"

namespace stratamatch {

// Files written into a stratification directory.
namespace strata_files {
inline constexpr const char* kAnalysis = "analysis.csv";
inline constexpr const char* kPilot = "pilot.csv";
inline constexpr const char* kStrataTable = "strata_table.csv";
inline constexpr const char* kIssueTable = "issue_table.csv";
inline constexpr const char* kModel = "prognostic_model.json";
inline constexpr const char* kScores = "prognostic_scores.csv";
inline constexpr const char* kMeta = "strata.json";
inline constexpr const char* kCallRecord = "call_record.json";
}  // namespace strata_files

// stratum,quantile_bin,size (automatic) or stratum,combination,size (manual).
void write_strata_table(const Strata& strata, std::ostream& out);
// Stratum,Treat,Control,Total,Control_Proportion,Potential_Issues
void write_issue_table(std::span<const IssueTableRow> rows, std::ostream& out);

void save_strata(const Strata& strata, const std::filesystem::path& dir);
Strata load_strata(const std::filesystem::path& dir);

// Minimal stratification view of an analysis CSV that already carries a
// `stratum` column (the input of the match stage).
Strata strata_from_analysis(DataFrame analysis, const std::string& treat,
                            const IssueThresholds& thresholds = {});

// row_id,stratum,treat,propensity_score,set_label
void write_matches(const Strata& strata, const MatchResult& result, std::ostream& out);

// Reads a two-column (row_id, value) CSV and returns the values aligned to
// `df` rows by row id.
std::vector<double> load_scores(const std::filesystem::path& path, const DataFrame& df);

// Appends `entry` to the JSON array stored at `path`, creating it if needed.
void append_call_record(const std::filesystem::path& path, const nlohmann::json& entry);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace stratamatch
