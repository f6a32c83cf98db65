#include "stratamatch/sampler.hpp"

#include <algorithm>
#include <map>

#include "stratamatch/error.hpp"
#include "stratamatch/random.hpp"

namespace stratamatch {

const Column& require_binary_treatment(const DataFrame& df, const std::string& treat) {
  const Column& col = df.column(treat);
  if (col.kind() != ColumnKind::binary) {
    // An all-zero or all-one numeric column is still a valid indicator.
    bool indicator = col.kind() == ColumnKind::numeric &&
                     std::all_of(col.values().begin(), col.values().end(),
                                 [](double v) { return v == 0.0 || v == 1.0; });
    if (!indicator) {
      throw Error(ErrorCode::NonBinaryTreatment,
                  treat + " is " + std::string(to_string(col.kind())));
    }
  }
  return col;
}

PilotSplit split_pilot_set(const DataFrame& df, const std::string& treat,
                           double pilot_fraction,
                           const std::vector<std::string>& group_by_covariates,
                           std::uint64_t seed) {
  const Column& treatment = require_binary_treatment(df, treat);
  if (!(pilot_fraction > 0.0 && pilot_fraction < 1.0)) {
    throw Error(ErrorCode::BadFraction,
                "pilot_fraction must lie in (0, 1), got " + format_number(pilot_fraction));
  }
  std::vector<const Column*> grouping;
  for (const auto& name : group_by_covariates) {
    const Column& c = df.column(name);
    if (c.kind() == ColumnKind::numeric) {
      throw Error(ErrorCode::ContinuousGroupingCovariate, name);
    }
    grouping.push_back(&c);
  }

  // Controls bucketed by cell key; map ordering fixes the stream index.
  std::map<std::vector<int>, std::vector<std::size_t>> cells;
  for (std::size_t r = 0; r < df.n_rows(); ++r) {
    if (treatment.value(r) != 0.0) continue;
    std::vector<int> key;
    key.reserve(grouping.size());
    for (const Column* c : grouping) {
      key.push_back(c->kind() == ColumnKind::categorical ? c->code(r)
                                                         : static_cast<int>(c->value(r)));
    }
    cells[std::move(key)].push_back(r);
  }

  std::vector<bool> in_pilot(df.n_rows(), false);
  std::uint64_t stream = 0;
  for (const auto& [key, rows] : cells) {
    Rng rng(seed, stream++);
    for (auto r : rows) in_pilot[r] = rng.bernoulli(pilot_fraction);
  }

  std::vector<std::size_t> pilot_rows, analysis_rows;
  for (std::size_t r = 0; r < df.n_rows(); ++r) {
    (in_pilot[r] ? pilot_rows : analysis_rows).push_back(r);
  }

  PilotSplit split{df.subset(pilot_rows), df.subset(analysis_rows), pilot_fraction,
                   group_by_covariates, seed, {}};
  split.log.push_back("Constructing a pilot set by subsampling " +
                      format_number(pilot_fraction * 100.0, 6) + "% of controls.");
  if (!group_by_covariates.empty()) {
    split.log.emplace_back("Subsampling while balancing on:");
    std::string names;
    for (const auto& name : group_by_covariates) {
      if (!names.empty()) names += ' ';
      names += name;
    }
    split.log.push_back(names);
  }
  return split;
}

}  // namespace stratamatch
