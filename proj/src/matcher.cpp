#include "stratamatch/matcher.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "stratamatch/min_cost_flow.hpp"
#include "stratamatch/sampler.hpp"

namespace stratamatch {

double propensity_logit(double p) {
  constexpr double kClamp = 1e-12;
  p = std::clamp(p, kClamp, 1.0 - kClamp);
  return std::log(p) - std::log1p(-p);
}

double match_distance(double treated, double control) {
  return std::abs(propensity_logit(treated) - propensity_logit(control));
}

std::string SetLabel::render() const {
  return std::to_string(stratum) + "." + std::to_string(index);
}

namespace {

// Min-cost assignment of up to `per_treated` controls to each treated unit,
// pushing exactly `total` units of flow.
KMatch solve_assignment(std::span<const double> treated, std::span<const double> controls,
                        int per_treated, int total) {
  const int t = static_cast<int>(treated.size());
  const int c = static_cast<int>(controls.size());
  const int source = 0;
  const int sink = t + c + 1;
  MinCostFlow graph(t + c + 2);

  std::vector<double> tl(treated.size()), cl(controls.size());
  std::transform(treated.begin(), treated.end(), tl.begin(), propensity_logit);
  std::transform(controls.begin(), controls.end(), cl.begin(), propensity_logit);

  for (int i = 0; i < t; ++i) graph.add_edge(source, 1 + i, per_treated, 0.0);
  std::vector<int> pair_edge(static_cast<std::size_t>(t) * static_cast<std::size_t>(c));
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < c; ++j) {
      pair_edge[static_cast<std::size_t>(i) * static_cast<std::size_t>(c) +
                static_cast<std::size_t>(j)] =
          graph.add_edge(1 + i, 1 + t + j, 1,
                         std::abs(tl[static_cast<std::size_t>(i)] - cl[static_cast<std::size_t>(j)]));
    }
  }
  for (int j = 0; j < c; ++j) graph.add_edge(1 + t + j, sink, 1, 0.0);

  auto solved = graph.solve(source, sink, total);
  if (solved.flow < total) {
    throw Error(ErrorCode::Infeasible, "could only route " + std::to_string(solved.flow) +
                                           " of " + std::to_string(total) + " matches");
  }

  KMatch out;
  out.controls_for_treated.resize(treated.size());
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < c; ++j) {
      const auto e = pair_edge[static_cast<std::size_t>(i) * static_cast<std::size_t>(c) +
                               static_cast<std::size_t>(j)];
      if (graph.flow(e) > 0) {
        out.controls_for_treated[static_cast<std::size_t>(i)].push_back(
            static_cast<std::size_t>(j));
        out.total_cost +=
            std::abs(tl[static_cast<std::size_t>(i)] - cl[static_cast<std::size_t>(j)]);
      }
    }
  }
  return out;
}

struct StratumOutcome {
  // (analysis row of treated, analysis rows of its controls)
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> sets;
  std::vector<std::size_t> unmatched_treated;
  std::size_t unmatched_controls = 0;
  double cost = 0.0;
  std::vector<Warning> warnings;
};

StratumOutcome match_stratum(int stratum, const std::vector<std::size_t>& treated_rows,
                             const std::vector<std::size_t>& control_rows,
                             std::span<const double> propensity, int k) {
  StratumOutcome out;
  const std::size_t t = treated_rows.size();
  const std::size_t c = control_rows.size();
  if (t == 0) {
    out.unmatched_controls = c;
    return out;
  }
  std::vector<double> tp, cp;
  for (auto r : treated_rows) tp.push_back(propensity[r]);
  for (auto r : control_rows) cp.push_back(propensity[r]);

  const std::size_t feasible = std::min<std::size_t>(static_cast<std::size_t>(k), c / t);
  KMatch m;
  if (feasible >= 1) {
    if (feasible < static_cast<std::size_t>(k)) {
      out.warnings.push_back(
          {WarningCode::DegradedRatio,
           "stratum " + std::to_string(stratum) + " has " + std::to_string(t) + " treated and " +
               std::to_string(c) + " controls; matching 1:" + std::to_string(feasible) +
               " instead of 1:" + std::to_string(k),
           stratum});
    }
    m = solve_assignment(tp, cp, static_cast<int>(feasible), static_cast<int>(feasible * t));
  } else {
    out.warnings.push_back(
        {WarningCode::InsufficientControls,
         "stratum " + std::to_string(stratum) + " has " + std::to_string(t) +
             " treated but only " + std::to_string(c) + " controls; " + std::to_string(t - c) +
             " treated left unmatched",
         stratum});
    if (c > 0) m = solve_assignment(tp, cp, 1, static_cast<int>(c));
    else m.controls_for_treated.resize(t);
  }

  std::size_t used = 0;
  for (std::size_t i = 0; i < t; ++i) {
    const auto& picks = m.controls_for_treated[i];
    if (picks.empty()) {
      out.unmatched_treated.push_back(treated_rows[i]);
      continue;
    }
    std::vector<std::size_t> rows;
    for (auto j : picks) rows.push_back(control_rows[j]);
    used += rows.size();
    out.sets.emplace_back(treated_rows[i], std::move(rows));
  }
  out.unmatched_controls = c - used;
  out.cost = m.total_cost;
  return out;
}

}  // namespace

KMatch optimal_k_match(std::span<const double> treated, std::span<const double> controls,
                       int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  const auto need = static_cast<std::size_t>(k) * treated.size();
  if (controls.size() < need) {
    throw Error(ErrorCode::Infeasible,
                std::to_string(controls.size()) + " controls cannot supply 1:" +
                    std::to_string(k) + " matches for " + std::to_string(treated.size()) +
                    " treated");
  }
  if (treated.empty()) return {};
  return solve_assignment(treated, controls, k, static_cast<int>(need));
}

PropensityFit fit_propensity(const Strata& strata, const PropensityInput& input,
                             bool stratum_effects, const GlmOptions& glm) {
  const DataFrame& analysis = strata.analysis_set;
  PropensityFit out;
  if (const auto* scores = std::get_if<std::vector<double>>(&input)) {
    if (scores->size() != analysis.n_rows()) {
      throw Error(ErrorCode::ScoreLengthMismatch,
                  std::to_string(scores->size()) + " propensity scores for " +
                      std::to_string(analysis.n_rows()) + " analysis rows");
    }
    out.scores = *scores;
    return out;
  }
  if (const auto* model = std::get_if<FittedGlm>(&input)) {
    out.scores = predict(*model, analysis);
    return out;
  }

  Formula formula = std::get<Formula>(input);
  if (formula.lhs != strata.treat) {
    throw Error(ErrorCode::InvalidArgument, "propensity formula response must be " +
                                                strata.treat + ": " + formula.to_text());
  }
  DataFrame working = analysis;
  std::string shown = formula.to_text();
  const bool has_stratum_term =
      std::find(formula.rhs_terms.begin(), formula.rhs_terms.end(), kStratumColumn) !=
      formula.rhs_terms.end();
  if (stratum_effects && !has_stratum_term) {
    // Dummy-code the stratum with levels ordered by stratum number.
    auto labels = stratum_labels(analysis);
    std::vector<int> distinct = labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<std::string> levels;
    for (int s : distinct) levels.push_back(std::to_string(s));
    std::vector<int> codes;
    codes.reserve(labels.size());
    for (int s : labels) {
      codes.push_back(static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), s) -
                                       distinct.begin()));
    }
    working = working.with_column(
        Column::categorical(std::string(kStratumColumn), std::move(levels), std::move(codes)));
    formula.rhs_terms.emplace_back(kStratumColumn);
    shown += " + strata(" + std::string(kStratumColumn) + ")";
  }
  out.log.push_back("Fitting propensity model: " + shown);
  FittedGlm model = fit_logistic(working, formula, glm);
  out.scores = predict(model, working);
  out.model = std::move(model);
  return out;
}

MatchResult strata_match(const Strata& strata, const PropensityInput& propensity, int k,
                         const MatchOptions& options) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  const DataFrame& analysis = strata.analysis_set;
  const auto labels = stratum_labels(analysis);
  const Column& treat = require_binary_treatment(analysis, strata.treat);

  MatchResult result;
  result.k = k;
  auto fit = fit_propensity(strata, propensity, options.stratum_effects, options.glm);
  result.propensity = std::move(fit.scores);
  result.log = std::move(fit.log);

  // Per-stratum row lists, ordered by row id for deterministic node order.
  std::map<int, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
  for (std::size_t r = 0; r < analysis.n_rows(); ++r) {
    auto& g = groups[labels[r]];
    (treat.value(r) != 0.0 ? g.first : g.second).push_back(r);
  }
  const auto& ids = analysis.row_ids();
  auto by_id = [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; };
  std::vector<int> order;
  std::vector<const std::pair<std::vector<std::size_t>, std::vector<std::size_t>>*> work;
  for (auto& [s, g] : groups) {
    std::sort(g.first.begin(), g.first.end(), by_id);
    std::sort(g.second.begin(), g.second.end(), by_id);
    order.push_back(s);
    work.push_back(&g);
  }

  std::vector<StratumOutcome> outcomes(order.size());
  std::vector<std::exception_ptr> failures(order.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < order.size(); i = next++) {
      try {
        outcomes[i] = match_stratum(order[i], work[i]->first, work[i]->second,
                                    result.propensity, k);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                          : options.threads;
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, order.size())));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  result.assignment.assign(analysis.n_rows(), std::nullopt);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& o = outcomes[i];
    int index = 0;
    for (const auto& [treated_row, control_rows] : o.sets) {
      SetLabel label{order[i], ++index};
      result.assignment[treated_row] = label;
      for (auto r : control_rows) result.assignment[r] = label;
      ++result.set_structure["1:" + std::to_string(control_rows.size())];
    }
    if (!o.unmatched_treated.empty()) result.set_structure["1:0"] += o.unmatched_treated.size();
    if (o.unmatched_controls > 0) result.set_structure["0:1"] += o.unmatched_controls;
    result.total_cost += o.cost;
    result.warnings.insert(result.warnings.end(), o.warnings.begin(), o.warnings.end());
  }
  result.effective_pairs = effective_sample_size(result.set_structure);
  return result;
}

double effective_sample_size(const std::map<std::string, std::size_t>& set_structure) {
  double total = 0.0;
  for (const auto& [shape, count] : set_structure) {
    const auto colon = shape.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "set shape must look like t:c, got " + shape);
    }
    const double t = std::stod(shape.substr(0, colon));
    const double c = std::stod(shape.substr(colon + 1));
    if (t <= 0.0 || c <= 0.0) continue;
    // count * 2tc / (t + c); the numerator is an exact integer in double.
    total += static_cast<double>(count) * 2.0 * t * c / (t + c);
  }
  return total;
}

nlohmann::json summary_json(const MatchResult& result) {
  nlohmann::json structure = nlohmann::json::object();
  for (const auto& [shape, count] : result.set_structure) structure[shape] = count;
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : result.warnings) {
    warnings.push_back({{"code", std::string(to_string(w.code))},
                        {"stratum", w.stratum},
                        {"message", w.message}});
  }
  return {{"k", result.k},
          {"set_structure", structure},
          {"effective_pairs", result.effective_pairs},
          {"total_cost", result.total_cost},
          {"warnings", warnings}};
}

std::string describe(const MatchResult& result) {
  std::ostringstream os;
  os << "Structure of matched sets:\n";
  // Matched shapes first (by ratio), then the unmatched markers.
  std::vector<std::pair<std::string, std::size_t>> shapes(result.set_structure.begin(),
                                                          result.set_structure.end());
  std::stable_sort(shapes.begin(), shapes.end(), [](const auto& a, const auto& b) {
    auto rank = [](const std::string& s) { return s.rfind("0:", 0) == 0 || s.ends_with(":0"); };
    return !rank(a.first) && rank(b.first);
  });
  std::string head, counts;
  for (const auto& [shape, count] : shapes) {
    std::string n = std::to_string(count);
    const std::size_t width = std::max(shape.size(), n.size()) + 1;
    head += std::string(width - shape.size(), ' ') + shape;
    counts += std::string(width - n.size(), ' ') + n;
  }
  os << head << "\n" << counts << "\n";
  os << "Effective Sample Size:  " << format_number(result.effective_pairs, 6) << "\n";
  os << "(equivalent number of matched pairs).\n";
  return os.str();
}

}  // namespace stratamatch
