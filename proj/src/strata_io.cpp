#include "stratamatch/strata_io.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace stratamatch {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

nlohmann::json schema_json(const DataFrame& df) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : df.columns()) {
    nlohmann::json col = {{"name", c.name()}, {"kind", to_string(c.kind())}};
    if (c.kind() == ColumnKind::categorical) col["levels"] = c.schema().levels;
    cols.push_back(std::move(col));
  }
  return cols;
}

ColumnKind kind_from_text(const std::string& s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "binary") return ColumnKind::binary;
  if (s == "categorical") return ColumnKind::categorical;
  throw Error(ErrorCode::IoError, "unknown column kind " + s);
}

std::vector<ColumnSchema> schema_from_json(const nlohmann::json& j) {
  std::vector<ColumnSchema> out;
  for (const auto& col : j) {
    ColumnSchema s;
    s.name = col.at("name").get<std::string>();
    s.kind = kind_from_text(col.at("kind").get<std::string>());
    if (col.contains("levels")) s.levels = col.at("levels").get<std::vector<std::string>>();
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json thresholds_json(const IssueThresholds& t) {
  return {{"too_few", t.too_few}, {"too_many", t.too_many}, {"ratio", t.ratio}};
}

IssueThresholds thresholds_from_json(const nlohmann::json& j) {
  IssueThresholds t;
  t.too_few = j.at("too_few").get<std::size_t>();
  t.too_many = j.at("too_many").get<std::size_t>();
  t.ratio = j.at("ratio").get<double>();
  return t;
}

WarningCode warning_from_text(const std::string& s) {
  for (auto code : {WarningCode::NotConverged, WarningCode::DegradedRatio,
                    WarningCode::InsufficientControls, WarningCode::SizeTooLarge,
                    WarningCode::DegenerateScores}) {
    if (to_string(code) == s) return code;
  }
  throw Error(ErrorCode::IoError, "unknown warning code " + s);
}

// Automatic strata tables are rebuilt from scores and labels; manual
// definitions are kept verbatim.
std::vector<StrataTableRow> table_from_labels(const std::vector<int>& labels,
                                              const std::vector<double>& scores,
                                              const nlohmann::json& definitions) {
  std::map<int, std::size_t> sizes;
  for (int s : labels) ++sizes[s];
  std::vector<StrataTableRow> rows;
  if (!scores.empty()) {
    auto bins = bin_intervals(labels, scores);
    for (const auto& [stratum, size] : sizes) {
      const Interval& bin = bins.at(static_cast<std::size_t>(stratum - 1));
      rows.push_back({stratum, bin, bin.render(), size});
    }
    return rows;
  }
  for (const auto& [stratum, size] : sizes) {
    std::string def;
    if (definitions.is_object() && definitions.contains(std::to_string(stratum))) {
      def = definitions.at(std::to_string(stratum)).get<std::string>();
    }
    rows.push_back({stratum, std::nullopt, std::move(def), size});
  }
  return rows;
}

}  // namespace

void write_strata_table(const Strata& strata, std::ostream& out) {
  const bool automatic = strata.mode == StrataMode::automatic;
  out << "stratum," << (automatic ? "quantile_bin" : "combination") << ",size\n";
  for (const auto& row : strata.strata_table) {
    out << row.stratum << ',' << csv_escape(row.definition) << ',' << row.size << '\n';
  }
}

void write_issue_table(std::span<const IssueTableRow> rows, std::ostream& out) {
  out << "Stratum,Treat,Control,Total,Control_Proportion,Potential_Issues\n";
  for (const auto& row : rows) {
    out << row.stratum << ',' << row.treat << ',' << row.control << ',' << row.total << ','
        << format_number(row.control_proportion) << ','
        << csv_escape(row.potential_issues.render()) << '\n';
  }
}

void save_strata(const Strata& strata, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  write_csv(strata.analysis_set, dir / strata_files::kAnalysis);
  if (strata.pilot_set) write_csv(*strata.pilot_set, dir / strata_files::kPilot);
  {
    auto out = open_out(dir / strata_files::kStrataTable);
    write_strata_table(strata, out);
  }
  {
    auto out = open_out(dir / strata_files::kIssueTable);
    write_issue_table(strata.issue_table, out);
  }
  if (strata.prognostic_model) {
    write_json(dir / strata_files::kModel, to_json(*strata.prognostic_model));
  }
  if (strata.has_prognostic_scores()) {
    auto out = open_out(dir / strata_files::kScores);
    out << "row_id,prognostic_score\n";
    const auto& ids = strata.analysis_set.row_ids();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      out << ids[r] << ',' << format_number(strata.prognostic_scores[r]) << '\n';
    }
  }

  nlohmann::json meta = {
      {"mode", strata.mode == StrataMode::automatic ? "auto" : "manual"},
      {"treat", strata.treat},
      {"outcome", strata.outcome ? nlohmann::json(*strata.outcome) : nlohmann::json()},
      {"thresholds", thresholds_json(strata.thresholds)},
      {"analysis_schema", schema_json(strata.analysis_set)},
      {"call", strata.call_record},
  };
  if (strata.pilot_set) meta["pilot_schema"] = schema_json(*strata.pilot_set);
  if (strata.mode == StrataMode::manual) {
    nlohmann::json defs = nlohmann::json::object();
    for (const auto& row : strata.strata_table) defs[std::to_string(row.stratum)] = row.definition;
    meta["definitions"] = std::move(defs);
  }
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : strata.warnings) {
    warnings.push_back(
        {{"code", to_string(w.code)}, {"stratum", w.stratum}, {"message", w.message}});
  }
  meta["warnings"] = std::move(warnings);
  write_json(dir / strata_files::kMeta, meta);
}

Strata load_strata(const fs::path& dir) {
  const nlohmann::json meta = read_json(dir / strata_files::kMeta);
  Strata out;
  try {
    out.mode = meta.at("mode").get<std::string>() == "manual" ? StrataMode::manual
                                                              : StrataMode::automatic;
    out.treat = meta.at("treat").get<std::string>();
    if (!meta.at("outcome").is_null()) out.outcome = meta.at("outcome").get<std::string>();
    out.thresholds = thresholds_from_json(meta.at("thresholds"));
    out.call_record = meta.value("call", nlohmann::json::object());
    const auto schema = schema_from_json(meta.at("analysis_schema"));
    out.analysis_set = load_csv(dir / strata_files::kAnalysis, schema);
    if (meta.contains("pilot_schema")) {
      const auto pilot_schema = schema_from_json(meta.at("pilot_schema"));
      out.pilot_set = load_csv(dir / strata_files::kPilot, pilot_schema);
    }
    if (meta.contains("warnings")) {
      for (const auto& w : meta.at("warnings")) {
        out.warnings.push_back({warning_from_text(w.at("code").get<std::string>()),
                                w.at("message").get<std::string>(), w.at("stratum").get<int>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, (dir / strata_files::kMeta).string() + ": " + e.what());
  }

  if (fs::exists(dir / strata_files::kModel)) {
    out.prognostic_model = glm_from_json(read_json(dir / strata_files::kModel));
  }
  if (fs::exists(dir / strata_files::kScores)) {
    out.prognostic_scores = load_scores(dir / strata_files::kScores, out.analysis_set);
  }
  const auto labels = stratum_labels(out.analysis_set);
  out.strata_table = table_from_labels(labels, out.prognostic_scores,
                                       meta.value("definitions", nlohmann::json::object()));
  out.issue_table = issue_table(out.analysis_set, out.treat, out.thresholds);
  return out;
}

Strata strata_from_analysis(DataFrame analysis, const std::string& treat,
                            const IssueThresholds& thresholds) {
  Strata out;
  out.mode = StrataMode::manual;
  out.treat = treat;
  out.thresholds = thresholds;
  out.analysis_set = std::move(analysis);
  const auto labels = stratum_labels(out.analysis_set);
  out.strata_table = table_from_labels(labels, {}, nlohmann::json::object());
  out.issue_table = issue_table(out.analysis_set, treat, thresholds);
  return out;
}

void write_matches(const Strata& strata, const MatchResult& result, std::ostream& out) {
  const auto labels = strata.strata();
  const Column& t = strata.analysis_set.column(strata.treat);
  const auto& ids = strata.analysis_set.row_ids();
  out << "row_id,stratum,treat,propensity_score,set_label\n";
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out << ids[r] << ',' << labels[r] << ',' << (t.value(r) != 0.0 ? 1 : 0) << ','
        << format_number(result.propensity[r]) << ','
        << (result.assignment[r] ? result.assignment[r]->render() : std::string()) << '\n';
  }
}

std::vector<double> load_scores(const fs::path& path, const DataFrame& df) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const DataFrame scores = read_csv(in);
  if (scores.n_cols() != 1) {
    throw Error(ErrorCode::InvalidArgument,
                path.string() + ": expected row_id and one score column");
  }
  const Column& col = scores.column(scores.columns().front().name());
  if (col.kind() == ColumnKind::categorical) {
    throw Error(ErrorCode::TypeMismatch, path.string() + ": scores must be numeric");
  }
  std::map<std::size_t, double> by_id;
  for (std::size_t r = 0; r < scores.n_rows(); ++r) by_id[scores.row_ids()[r]] = col.value(r);
  if (by_id.size() != df.n_rows()) {
    throw Error(ErrorCode::ScoreLengthMismatch,
                std::to_string(by_id.size()) + " scores for " + std::to_string(df.n_rows()) +
                    " rows");
  }
  std::vector<double> out;
  out.reserve(df.n_rows());
  for (std::size_t id : df.row_ids()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::ScoreLengthMismatch, "no score for row_id " + std::to_string(id));
    }
    out.push_back(it->second);
  }
  return out;
}

void append_call_record(const fs::path& path, const nlohmann::json& entry) {
  nlohmann::json records = nlohmann::json::array();
  if (fs::exists(path)) {
    records = read_json(path);
    if (!records.is_array()) records = nlohmann::json::array({records});
  }
  records.push_back(entry);
  write_json(path, records);
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace stratamatch
