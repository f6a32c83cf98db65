#include "stratamatch/stratifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "stratamatch/sampler.hpp"

namespace stratamatch {

std::string Interval::render(int significant) const {
  return "[" + format_number(lo, significant) + "," + format_number(hi, significant) +
         (closed_right ? "]" : ")");
}

std::vector<Interval> bin_intervals(std::span<const int> assignment,
                                    std::span<const double> scores) {
  if (assignment.size() != scores.size()) {
    throw Error(ErrorCode::ScoreLengthMismatch, "assignment and score lengths differ");
  }
  int k = 0;
  for (int s : assignment) k = std::max(k, s);
  std::vector<double> lows(static_cast<std::size_t>(k), 0.0);
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  double top = 0.0;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (assignment[r] < 1) throw Error(ErrorCode::InvalidArgument, "stratum labels start at 1");
    auto idx = static_cast<std::size_t>(assignment[r] - 1);
    if (!seen[idx] || scores[r] < lows[idx]) {
      lows[idx] = scores[r];
      seen[idx] = true;
    }
    if (r == 0 || scores[r] > top) top = scores[r];
  }
  std::vector<Interval> out;
  out.reserve(lows.size());
  for (std::size_t s = 0; s < lows.size(); ++s) {
    const bool last = s + 1 == lows.size();
    out.push_back({lows[s], last ? top : lows[s + 1], last});
  }
  return out;
}

std::size_t strata_count(std::size_t n_rows, std::size_t size) {
  if (size == 0) throw Error(ErrorCode::InvalidArgument, "stratum size must be positive");
  return (n_rows + size - 1) / size;
}

QuantileBins quantile_bin(std::span<const double> scores, std::size_t n_strata) {
  if (n_strata < 1) throw Error(ErrorCode::InvalidArgument, "n_strata must be at least 1");
  const std::size_t n = scores.size();
  if (n < n_strata) {
    throw Error(ErrorCode::TooManyStrata,
                std::to_string(n_strata) + " strata requested for " + std::to_string(n) +
                    " scores");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "non-finite score");
  }

  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());

  QuantileBins out;
  out.requested = n_strata;
  out.cutpoints.reserve(n_strata - 1);
  for (std::size_t i = 1; i < n_strata; ++i) {
    // h = (n - 1) * i / K; the numerator is an exact integer.
    const double h = static_cast<double>((n - 1) * i) / static_cast<double>(n_strata);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    double q = sorted[lo];
    if (frac > 0.0 && lo + 1 < n) q += frac * (sorted[lo + 1] - sorted[lo]);
    out.cutpoints.push_back(q);
  }

  // Raw bin = 1 + #cutpoints strictly below the score.
  std::vector<std::size_t> raw(n);
  std::vector<bool> used(n_strata, false);
  for (std::size_t r = 0; r < n; ++r) {
    auto below = std::lower_bound(out.cutpoints.begin(), out.cutpoints.end(), scores[r]) -
                 out.cutpoints.begin();
    raw[r] = static_cast<std::size_t>(below);
    used[raw[r]] = true;
  }
  std::vector<int> renumber(n_strata, 0);
  int next = 0;
  for (std::size_t b = 0; b < n_strata; ++b) {
    if (used[b]) renumber[b] = ++next;
  }
  out.assignment.resize(n);
  for (std::size_t r = 0; r < n; ++r) out.assignment[r] = renumber[raw[r]];
  out.bins = bin_intervals(out.assignment, scores);
  return out;
}

std::string IssueFlags::render() const {
  if (empty()) return "none";
  std::string out;
  auto add = [&](Issue issue, const char* text) {
    if (!has(issue)) return;
    if (!out.empty()) out += "; ";
    out += text;
  };
  add(Issue::TooFewSamples, "Too few samples");
  add(Issue::TooManySamples, "Too many samples");
  add(Issue::NotEnoughTreated, "Not enough treated samples");
  add(Issue::NotEnoughControl, "Not enough control samples");
  return out;
}

IssueFlags classify_stratum(std::size_t treat, std::size_t control,
                            const IssueThresholds& thresholds) {
  IssueFlags flags;
  const std::size_t total = treat + control;
  if (total < thresholds.too_few) flags.set(Issue::TooFewSamples);
  if (total > thresholds.too_many) flags.set(Issue::TooManySamples);
  if (static_cast<double>(control) >= thresholds.ratio * static_cast<double>(treat)) {
    flags.set(Issue::NotEnoughTreated);
  }
  if (static_cast<double>(treat) >= thresholds.ratio * static_cast<double>(control)) {
    flags.set(Issue::NotEnoughControl);
  }
  return flags;
}

std::vector<int> stratum_labels(const DataFrame& df) {
  if (!df.has_column(kStratumColumn)) {
    throw Error(ErrorCode::NoStratumColumn, "analysis set has no stratum column");
  }
  const Column& col = df.column(kStratumColumn);
  std::vector<int> out;
  out.reserve(df.n_rows());
  for (std::size_t r = 0; r < df.n_rows(); ++r) {
    if (col.kind() == ColumnKind::categorical) {
      out.push_back(std::stoi(col.level(r)));
    } else {
      double v = col.value(r);
      if (v != std::floor(v)) {
        throw Error(ErrorCode::TypeMismatch, "stratum label " + format_number(v) +
                                                 " is not an integer");
      }
      out.push_back(static_cast<int>(v));
    }
  }
  return out;
}

std::vector<int> Strata::strata() const { return stratum_labels(analysis_set); }

std::vector<IssueTableRow> issue_table(const DataFrame& with_strata, const std::string& treat,
                                       const IssueThresholds& thresholds) {
  const auto labels = stratum_labels(with_strata);
  const Column& t = require_binary_treatment(with_strata, treat);
  std::map<int, std::pair<std::size_t, std::size_t>> counts;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    auto& [treated, control] = counts[labels[r]];
    (t.value(r) != 0.0 ? treated : control) += 1;
  }
  std::vector<IssueTableRow> rows;
  for (const auto& [stratum, c] : counts) {
    IssueTableRow row;
    row.stratum = stratum;
    row.treat = c.first;
    row.control = c.second;
    row.total = c.first + c.second;
    row.control_proportion = static_cast<double>(row.control) / static_cast<double>(row.total);
    row.potential_issues = classify_stratum(row.treat, row.control, thresholds);
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::vector<double> stratum_values(std::span<const int> labels) {
  return {labels.begin(), labels.end()};
}

nlohmann::json formula_or_scores(const std::variant<Formula, std::vector<double>>& p) {
  if (const auto* f = std::get_if<Formula>(&p)) return f->to_text();
  return "<score vector of length " + std::to_string(std::get<std::vector<double>>(p).size()) +
         ">";
}

DataFrame pilot_controls(const DataFrame& pilot, const std::string& treat) {
  if (!pilot.has_column(treat)) return pilot;
  const Column& t = pilot.column(treat);
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < pilot.n_rows(); ++r) {
    if (t.value(r) == 0.0) rows.push_back(r);
  }
  return rows.size() == pilot.n_rows() ? pilot : pilot.subset(rows);
}

}  // namespace

Strata auto_stratify(const DataFrame& df, const AutoStratifyOptions& options) {
  require_binary_treatment(df, options.treat);

  Strata out;
  out.mode = StrataMode::automatic;
  out.treat = options.treat;
  out.thresholds = options.thresholds;
  out.call_record = {
      {"function", "auto_stratify"},
      {"treat", options.treat},
      {"prognosis", formula_or_scores(options.prognosis)},
      {"outcome", options.outcome ? nlohmann::json(*options.outcome) : nlohmann::json()},
      {"size", options.size},
      {"pilot_fraction", options.pilot_fraction},
      {"pilot_sample", options.pilot_sample.has_value()},
      {"group_by_covariates", options.group_by_covariates},
      {"seed", options.seed},
  };

  DataFrame analysis;
  if (const auto* formula = std::get_if<Formula>(&options.prognosis)) {
    if (!formula->lhs) {
      throw Error(ErrorCode::InvalidArgument,
                  "prognostic formula needs an outcome: " + formula->to_text());
    }
    out.outcome = *formula->lhs;
    DataFrame pilot;
    if (options.pilot_sample) {
      out.log.emplace_back("Using user-specified set for prognostic score modeling.");
      pilot = *options.pilot_sample;
      analysis = df;
    } else {
      auto split = split_pilot_set(df, options.treat, options.pilot_fraction,
                                   options.group_by_covariates, options.seed);
      out.log.insert(out.log.end(), split.log.begin(), split.log.end());
      pilot = std::move(split.pilot_set);
      analysis = std::move(split.analysis_set);
    }
    DataFrame training = pilot_controls(pilot, options.treat);
    const Column& response = training.column(*formula->lhs);
    FittedGlm model;
    switch (response.kind()) {
      case ColumnKind::binary:
        out.log.push_back("Fitting prognostic model via logistic regression: " +
                          formula->to_text());
        model = fit_logistic(training, *formula, options.glm);
        break;
      case ColumnKind::numeric:
        out.log.push_back("Fitting prognostic model via linear regression: " +
                          formula->to_text());
        model = fit_ols(training, *formula);
        break;
      case ColumnKind::categorical:
        throw Error(ErrorCode::TypeMismatch,
                    "outcome " + *formula->lhs + " is categorical; expected binary or numeric");
    }
    out.warnings.insert(out.warnings.end(), model.warnings.begin(), model.warnings.end());
    out.prognostic_scores = predict(model, analysis);
    out.prognostic_model = std::move(model);
    out.pilot_set = std::move(pilot);
  } else {
    const auto& scores = std::get<std::vector<double>>(options.prognosis);
    if (!options.outcome) {
      throw Error(ErrorCode::InvalidArgument,
                  "an outcome column must be named when prognostic scores are supplied");
    }
    (void)df.column(*options.outcome);
    if (scores.size() != df.n_rows()) {
      throw Error(ErrorCode::ScoreLengthMismatch,
                  std::to_string(scores.size()) + " scores for " + std::to_string(df.n_rows()) +
                      " analysis rows");
    }
    out.outcome = options.outcome;
    out.prognostic_scores = scores;
    out.pilot_set = options.pilot_sample;
    analysis = df;
  }

  if (analysis.n_rows() == 0) {
    throw Error(ErrorCode::InvalidArgument, "analysis set is empty");
  }
  if (options.size >= analysis.n_rows()) {
    out.warnings.push_back({WarningCode::SizeTooLarge,
                            "size " + std::to_string(options.size) + " >= " +
                                std::to_string(analysis.n_rows()) +
                                " analysis rows; using a single stratum",
                            0});
  }
  const std::size_t n_strata = strata_count(analysis.n_rows(), options.size);
  QuantileBins bins = quantile_bin(out.prognostic_scores, n_strata);
  if (bins.bins.size() < n_strata) {
    out.warnings.push_back({WarningCode::DegenerateScores,
                            "tied prognostic scores collapse " + std::to_string(n_strata) +
                                " requested strata into " + std::to_string(bins.bins.size()),
                            0});
  }

  out.analysis_set = analysis.with_column(
      Column::numeric(std::string(kStratumColumn), stratum_values(bins.assignment)));
  std::vector<std::size_t> sizes(bins.bins.size(), 0);
  for (int s : bins.assignment) ++sizes[static_cast<std::size_t>(s - 1)];
  for (std::size_t s = 0; s < bins.bins.size(); ++s) {
    out.strata_table.push_back(
        {static_cast<int>(s + 1), bins.bins[s], bins.bins[s].render(), sizes[s]});
  }
  out.issue_table = issue_table(out.analysis_set, options.treat, options.thresholds);
  return out;
}

Strata manual_stratify(const DataFrame& df, const Formula& strata_formula,
                       const IssueThresholds& thresholds) {
  if (!strata_formula.lhs) {
    throw Error(ErrorCode::InvalidArgument,
                "strata formula needs the treatment on the left: " + strata_formula.to_text());
  }
  const std::string& treat = *strata_formula.lhs;
  require_binary_treatment(df, treat);

  std::vector<const Column*> covariates;
  for (const auto& term : strata_formula.rhs_terms) {
    const Column& c = df.column(term);
    if (c.kind() == ColumnKind::numeric) {
      throw Error(ErrorCode::ContinuousStratifyingCovariate, term);
    }
    covariates.push_back(&c);
  }

  std::vector<std::vector<int>> keys(df.n_rows());
  std::map<std::vector<int>, int> index;
  for (std::size_t r = 0; r < df.n_rows(); ++r) {
    auto& key = keys[r];
    for (const Column* c : covariates) {
      key.push_back(c->kind() == ColumnKind::categorical ? c->code(r)
                                                         : static_cast<int>(c->value(r)));
    }
    index.emplace(key, 0);
  }
  int next = 0;
  for (auto& [key, stratum] : index) stratum = ++next;

  std::vector<int> labels(df.n_rows());
  for (std::size_t r = 0; r < df.n_rows(); ++r) labels[r] = index.at(keys[r]);

  Strata out;
  out.mode = StrataMode::manual;
  out.treat = treat;
  out.thresholds = thresholds;
  out.call_record = {{"function", "manual_stratify"},
                     {"strata_formula", strata_formula.to_text()}};
  out.analysis_set =
      df.with_column(Column::numeric(std::string(kStratumColumn), stratum_values(labels)));

  std::vector<std::size_t> sizes(index.size(), 0);
  for (int s : labels) ++sizes[static_cast<std::size_t>(s - 1)];
  for (const auto& [key, stratum] : index) {
    std::string def;
    for (std::size_t t = 0; t < covariates.size(); ++t) {
      if (t) def += ", ";
      const Column* c = covariates[t];
      def += c->name() + "=" +
             (c->kind() == ColumnKind::categorical
                  ? c->schema().levels[static_cast<std::size_t>(key[t])]
                  : std::to_string(key[t]));
    }
    out.strata_table.push_back(
        {stratum, std::nullopt, std::move(def), sizes[static_cast<std::size_t>(stratum - 1)]});
  }
  out.issue_table = issue_table(out.analysis_set, treat, thresholds);
  return out;
}

std::string describe(const Strata& strata) {
  std::ostringstream os;
  const bool automatic = strata.mode == StrataMode::automatic;
  os << (automatic ? "auto_strata" : "manual_strata") << " object.\n\n";
  os << "Analysis set dimensions: " << strata.analysis_set.n_rows() << " X "
     << strata.analysis_set.n_cols() << "\n\n";
  if (strata.pilot_set) {
    os << "Pilot set dimensions: " << strata.pilot_set->n_rows() << " X "
       << strata.pilot_set->n_cols() << "\n\n";
  }
  if (strata.prognostic_model) {
    os << "Prognostic Score Formula:\n" << strata.prognostic_model->formula.to_text() << "\n\n";
  }
  os << "Number of strata: " << strata.n_strata() << "\n\n";
  if (!strata.strata_table.empty()) {
    auto [lo, hi] = std::minmax_element(
        strata.strata_table.begin(), strata.strata_table.end(),
        [](const StrataTableRow& a, const StrataTableRow& b) { return a.size < b.size; });
    os << "\tMin size: " << lo->size << " \tMax size: " << hi->size << "\n";
  }
  return os.str();
}

}  // namespace stratamatch
