#include "stratamatch/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stratamatch/diagnostics.hpp"
#include "stratamatch/matcher.hpp"
#include "stratamatch/sampler.hpp"
#include "stratamatch/simgen.hpp"
#include "stratamatch/strata_io.hpp"
#include "stratamatch/stratifier.hpp"

namespace stratamatch::cli {

namespace fs = std::filesystem;

namespace {

// Flag combinations CLI11 cannot express; reported like parse errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ThresholdFlags {
  std::size_t too_few = IssueThresholds{}.too_few;
  std::size_t too_many = IssueThresholds{}.too_many;
  double ratio = IssueThresholds{}.ratio;

  void add(CLI::App* app) {
    app->add_option("--too-few", too_few, "Flag strata with fewer units than this");
    app->add_option("--too-many", too_many, "Flag strata with more units than this");
    app->add_option("--ratio", ratio, "Flag strata where one group outnumbers the other by this")
        ->check(CLI::PositiveNumber);
  }
  [[nodiscard]] IssueThresholds get() const { return {too_few, too_many, ratio}; }
};

struct GenerateArgs {
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  std::string out;
};

struct SplitArgs {
  std::string treat;
  double fraction = 0.1;
  std::vector<std::string> group_by;
  std::uint64_t seed = 0;
  std::string in, out_pilot, out_analysis;
};

struct StratifyArgs {
  std::string mode = "auto";
  std::string treat;
  std::string prognosis;
  std::string prognosis_scores;
  std::string outcome;
  std::size_t size = 2500;
  double fraction = 0.1;
  std::string pilot_in;
  std::vector<std::string> group_by;
  std::uint64_t seed = 0;
  std::string strata_formula;
  std::string in, out_dir;
  ThresholdFlags thresholds;
};

struct DiagnoseArgs {
  std::string plot;
  std::string in_dir;
  int stratum = 1;
  std::size_t bins = kDefaultHistogramBins;
  double jitter_prog = 0.0;
  double jitter_prop = 0.0;
  std::uint64_t seed = 0;
  std::string propensity;
  std::string propensity_scores;
  std::string out;
  std::string svg;
};

struct MatchArgs {
  int k = 1;
  std::string propensity;
  std::string propensity_scores;
  std::string treat;
  bool no_stratum_effects = false;
  unsigned threads = 1;
  std::string in, out, summary;
  ThresholdFlags thresholds;
};

struct SummaryArgs {
  std::string in_dir;
  std::string match_summary;
};

// RunConfig echo: every option of the chosen subcommand with its effective
// value, in declaration order.
nlohmann::json run_config(const CLI::App* sub) {
  nlohmann::json options = nlohmann::json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames()[0];
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      if (opt->get_type_size() == 0) {
        options[name] = true;
      } else if (results.size() == 1 && opt->get_items_expected_max() <= 1) {
        options[name] = results.front();
      } else {
        options[name] = results;
      }
    } else if (!opt->get_envname().empty() && std::getenv(opt->get_envname().c_str())) {
      options[name] = std::getenv(opt->get_envname().c_str());
    } else if (opt->get_type_size() == 0) {
      options[name] = false;
    } else if (!opt->get_default_str().empty()) {
      options[name] = opt->get_default_str();
    } else {
      options[name] = nullptr;
    }
  }
  return {{"subcommand", sub->get_name()}, {"options", options}};
}

fs::path directory_of(const std::string& file) {
  fs::path parent = fs::path(file).parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

void ensure_parent(const std::string& file) {
  fs::path parent = fs::path(file).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void print_log(const std::vector<std::string>& log, std::ostream& err) {
  for (const auto& line : log) err << line << '\n';
}

void print_warnings(const std::vector<Warning>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "Warning: " << w.render() << '\n';
}

std::ofstream open_out(const std::string& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  return out;
}

int do_generate(const GenerateArgs& a, std::ostream& err) {
  DataFrame df = make_sample_data({a.n, a.seed});
  ensure_parent(a.out);
  write_csv(df, fs::path(a.out));
  err << "rows=" << df.n_rows() << " seed=" << a.seed << '\n';
  return 0;
}

int do_split(const SplitArgs& a, std::ostream& err) {
  DataFrame df = load_csv(a.in);
  PilotSplit split = split_pilot_set(df, a.treat, a.fraction, a.group_by, a.seed);
  print_log(split.log, err);
  ensure_parent(a.out_pilot);
  ensure_parent(a.out_analysis);
  write_csv(split.pilot_set, fs::path(a.out_pilot));
  write_csv(split.analysis_set, fs::path(a.out_analysis));
  err << "pilot_rows=" << split.pilot_set.n_rows()
      << " analysis_rows=" << split.analysis_set.n_rows() << '\n';
  return 0;
}

int do_stratify(const StratifyArgs& a, std::ostream& out, std::ostream& err) {
  DataFrame df = load_csv(a.in);
  Strata strata;
  if (a.mode == "manual") {
    if (a.strata_formula.empty()) throw UsageError("--strata-formula is required for manual mode");
    Formula f = parse_formula(a.strata_formula);
    if (!a.treat.empty() && f.lhs && *f.lhs != a.treat) {
      throw UsageError("--treat does not match the strata formula response");
    }
    if (!f.lhs && !a.treat.empty()) f.lhs = a.treat;
    strata = manual_stratify(df, f, a.thresholds.get());
  } else {
    if (a.treat.empty()) throw UsageError("--treat is required for auto mode");
    if (a.prognosis.empty() == a.prognosis_scores.empty()) {
      throw UsageError("give exactly one of --prognosis and --prognosis-scores");
    }
    AutoStratifyOptions opts;
    opts.treat = a.treat;
    if (!a.prognosis.empty()) {
      opts.prognosis = parse_formula(a.prognosis);
    } else {
      opts.prognosis = load_scores(a.prognosis_scores, df);
    }
    if (!a.outcome.empty()) opts.outcome = a.outcome;
    opts.size = a.size;
    opts.pilot_fraction = a.fraction;
    if (!a.pilot_in.empty()) opts.pilot_sample = load_csv(a.pilot_in);
    opts.group_by_covariates = a.group_by;
    opts.seed = a.seed;
    opts.thresholds = a.thresholds.get();
    strata = auto_stratify(df, opts);
  }
  print_log(strata.log, err);
  print_warnings(strata.warnings, err);
  save_strata(strata, a.out_dir);
  out << describe(strata);
  return 0;
}

Strata load_match_input(const std::string& in, const std::string& treat,
                        const IssueThresholds& thresholds) {
  if (fs::is_directory(in)) return load_strata(in);
  return strata_from_analysis(load_csv(in), treat, thresholds);
}

PropensityInput propensity_input(const Strata& strata, const std::string& formula,
                                 const std::string& scores) {
  if (formula.empty() == scores.empty()) {
    throw UsageError("give exactly one of --propensity and --propensity-scores");
  }
  if (!formula.empty()) return parse_formula(formula);
  return load_scores(scores, strata.analysis_set);
}

int do_diagnose(const DiagnoseArgs& a, std::ostream& out, std::ostream& err) {
  Strata strata = load_strata(a.in_dir);
  std::ostringstream csv;
  std::optional<PlotData> plot;
  if (a.plot == "sr") {
    auto points = size_ratio_data(strata);
    write_csv(points, csv);
    plot = std::move(points);
  } else if (a.plot == "hist") {
    auto hist = propensity_hist_data(strata, propensity_input(strata, a.propensity,
                                                              a.propensity_scores),
                                     a.stratum, a.bins);
    write_csv(hist, csv);
    plot = std::move(hist);
  } else if (a.plot == "fm") {
    auto points = fisher_mill_data(strata,
                                   propensity_input(strata, a.propensity, a.propensity_scores),
                                   a.stratum, a.jitter_prog, a.jitter_prop, a.seed);
    write_csv(points, csv);
    plot = std::move(points);
  } else {
    if (!strata.prognostic_model || !strata.pilot_set) {
      throw Error(ErrorCode::NoPrognosticScores, "no fitted prognostic model in " + a.in_dir);
    }
    std::vector<std::size_t> controls;
    const Column& t = strata.pilot_set->column(strata.treat);
    for (std::size_t r = 0; r < strata.pilot_set->n_rows(); ++r) {
      if (t.value(r) == 0.0) controls.push_back(r);
    }
    auto rows = residual_data(*strata.prognostic_model, strata.pilot_set->subset(controls));
    write_csv(rows, csv);
    if (!a.svg.empty()) throw UsageError("--svg is not available for residual data");
  }
  if (a.out.empty()) {
    out << csv.str();
  } else {
    ensure_parent(a.out);
    write_text(a.out, csv.str());
  }
  if (!a.svg.empty()) {
    ensure_parent(a.svg);
    render_svg(*plot, fs::path(a.svg), strata.thresholds);
  }
  err << "plot=" << a.plot << '\n';
  return 0;
}

int do_match(const MatchArgs& a, std::ostream& out, std::ostream& err) {
  if (a.propensity.empty() == a.propensity_scores.empty()) {
    throw UsageError("give exactly one of --propensity and --propensity-scores");
  }
  std::string treat = a.treat;
  if (!a.propensity.empty()) {
    Formula f = parse_formula(a.propensity);
    if (f.lhs) {
      if (!treat.empty() && treat != *f.lhs) {
        throw UsageError("--treat does not match the propensity formula response");
      }
      treat = *f.lhs;
    }
  }
  if (treat.empty() && !fs::is_directory(a.in)) {
    throw UsageError("--treat is required with --propensity-scores");
  }
  Strata strata = load_match_input(a.in, treat, a.thresholds.get());
  PropensityInput input = propensity_input(strata, a.propensity, a.propensity_scores);
  MatchOptions opts;
  opts.stratum_effects = !a.no_stratum_effects;
  opts.threads = a.threads;
  MatchResult result = strata_match(strata, input, a.k, opts);
  print_log(result.log, err);
  print_warnings(result.warnings, err);
  {
    auto file = open_out(a.out);
    write_matches(strata, result, file);
    if (!file) throw Error(ErrorCode::IoError, "write failed for " + a.out);
  }
  if (!a.summary.empty()) {
    ensure_parent(a.summary);
    write_text(a.summary, summary_json(result).dump(2) + "\n");
  }
  out << describe(result);
  return 0;
}

int do_summary(const SummaryArgs& a, std::ostream& out) {
  Strata strata = load_strata(a.in_dir);
  out << describe(strata) << '\n';
  write_issue_table(strata.issue_table, out);
  if (!a.match_summary.empty()) {
    std::ifstream in(a.match_summary, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + a.match_summary);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::IoError, a.match_summary + ": " + e.what());
    }
    MatchResult result;
    for (const auto& [shape, count] : j.at("set_structure").items()) {
      result.set_structure[shape] = count.get<std::size_t>();
    }
    result.effective_pairs = effective_sample_size(result.set_structure);
    out << '\n' << describe(result);
  }
  return 0;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pilot-design prognostic stratification and within-stratum matching",
               "stratamatch"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a simulated observational data set");
  generate->add_option("--n", gen.n, "Number of rows")->check(CLI::PositiveNumber);
  generate->add_option("--seed", gen.seed, "Random seed");
  generate->add_option("--out", gen.out, "Output CSV")->required();

  SplitArgs sp;
  auto* split = app.add_subcommand("split", "Split a control-only pilot set from the input");
  split->add_option("--treat", sp.treat, "Binary treatment column")->required();
  split->add_option("--pilot-fraction", sp.fraction, "Fraction of controls to subsample");
  split->add_option("--group-by", sp.group_by, "Discrete covariates to balance on")
      ->delimiter(',');
  split->add_option("--seed", sp.seed, "Random seed");
  split->add_option("--in", sp.in, "Input CSV")->required()->check(CLI::ExistingFile);
  split->add_option("--out-pilot", sp.out_pilot, "Pilot set CSV")->required();
  split->add_option("--out-analysis", sp.out_analysis, "Analysis set CSV")->required();

  StratifyArgs st;
  auto* stratify = app.add_subcommand("stratify", "Stratify on prognostic score or covariates");
  stratify->add_option("--mode", st.mode, "auto or manual")
      ->check(CLI::IsMember({"auto", "manual"}));
  stratify->add_option("--treat", st.treat, "Binary treatment column");
  stratify->add_option("--prognosis", st.prognosis, "Prognostic formula, e.g. \"y ~ X1 + X2\"");
  stratify->add_option("--prognosis-scores", st.prognosis_scores,
                       "CSV of row_id,score used instead of a fitted model")
      ->check(CLI::ExistingFile);
  stratify->add_option("--outcome", st.outcome, "Outcome column (with --prognosis-scores)");
  stratify->add_option("--size", st.size, "Target stratum size")->check(CLI::PositiveNumber);
  stratify->add_option("--pilot-fraction", st.fraction, "Fraction of controls for the pilot set");
  stratify->add_option("--pilot-in", st.pilot_in, "Use this CSV as the pilot set")
      ->check(CLI::ExistingFile);
  stratify->add_option("--group-by", st.group_by, "Discrete covariates to balance the pilot on")
      ->delimiter(',');
  stratify->add_option("--seed", st.seed, "Random seed");
  stratify->add_option("--strata-formula", st.strata_formula,
                       "Manual mode: \"treat ~ covariate + ...\"");
  stratify->add_option("--in", st.in, "Input CSV")->required()->check(CLI::ExistingFile);
  stratify->add_option("--out-dir", st.out_dir, "Output directory")->required();
  st.thresholds.add(stratify);

  DiagnoseArgs dg;
  auto* diagnose = app.add_subcommand("diagnose", "Export diagnostic plot data");
  diagnose->add_option("--plot", dg.plot, "sr, hist, fm or residual")
      ->required()
      ->check(CLI::IsMember({"sr", "hist", "fm", "residual"}));
  diagnose->add_option("--in-dir", dg.in_dir, "Stratification directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  diagnose->add_option("--stratum", dg.stratum, "Stratum for hist and fm");
  diagnose->add_option("--bins", dg.bins, "Histogram bins")->check(CLI::PositiveNumber);
  diagnose->add_option("--jitter-prog", dg.jitter_prog, "Uniform jitter on prognostic scores")
      ->check(CLI::NonNegativeNumber);
  diagnose->add_option("--jitter-prop", dg.jitter_prop, "Uniform jitter on propensity scores")
      ->check(CLI::NonNegativeNumber);
  diagnose->add_option("--seed", dg.seed, "Jitter seed");
  diagnose->add_option("--propensity", dg.propensity, "Propensity formula");
  diagnose->add_option("--propensity-scores", dg.propensity_scores, "CSV of row_id,score")
      ->check(CLI::ExistingFile);
  diagnose->add_option("--out", dg.out, "Output CSV (default stdout)");
  diagnose->add_option("--svg", dg.svg, "Also write an SVG rendering here");

  MatchArgs mt;
  auto* match = app.add_subcommand("match", "Optimal 1:k matching within strata");
  match->add_option("--k", mt.k, "Controls per treated unit")->check(CLI::PositiveNumber);
  match->add_option("--propensity", mt.propensity, "Propensity formula \"treat ~ ...\"");
  match->add_option("--propensity-scores", mt.propensity_scores, "CSV of row_id,score")
      ->check(CLI::ExistingFile);
  match->add_option("--treat", mt.treat, "Treatment column (with --propensity-scores)");
  match->add_flag("--no-stratum-effects", mt.no_stratum_effects,
                  "Fit the propensity model without stratum terms");
  match->add_option("--threads", mt.threads, "Worker threads, 0 = all cores")
      ->envname("STRATMATCH_THREADS");
  match->add_option("--in", mt.in, "Analysis CSV with a stratum column, or a strata directory")
      ->required()
      ->check(CLI::ExistingPath);
  match->add_option("--out", mt.out, "Matches CSV")->required();
  match->add_option("--summary", mt.summary, "Summary JSON");
  mt.thresholds.add(match);

  SummaryArgs sm;
  auto* summary = app.add_subcommand("summary", "Print a stratification and match summary");
  summary->add_option("--in-dir", sm.in_dir, "Stratification directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  summary->add_option("--match-summary", sm.match_summary, "Summary JSON from match")
      ->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  try {
    fs::path record_dir;
    int code = 0;
    if (chosen == generate) {
      record_dir = directory_of(gen.out);
      code = do_generate(gen, err);
    } else if (chosen == split) {
      record_dir = directory_of(sp.out_analysis);
      code = do_split(sp, err);
    } else if (chosen == stratify) {
      record_dir = st.out_dir;
      code = do_stratify(st, out, err);
    } else if (chosen == diagnose) {
      record_dir = dg.out.empty() ? fs::path(dg.in_dir) : directory_of(dg.out);
      code = do_diagnose(dg, out, err);
    } else if (chosen == match) {
      record_dir = directory_of(mt.out);
      code = do_match(mt, out, err);
    } else {
      record_dir = sm.in_dir;
      code = do_summary(sm, out);
    }
    append_call_record(record_dir / strata_files::kCallRecord, run_config(chosen));
    return code;
  } catch (const UsageError& e) {
    err << e.what() << "\n\n" << chosen->help();
    return 2;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << to_string(ErrorCode::IoError) << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace stratamatch::cli
