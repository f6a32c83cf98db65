#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "reference_tables.hpp"
#include "stratamatch/simgen.hpp"
#include "stratamatch/strata_io.hpp"
#include "stratamatch/stratifier.hpp"

using namespace stratamatch;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

std::map<int, std::size_t> sizes_of(const std::vector<int>& labels) {
  std::map<int, std::size_t> out;
  for (int s : labels) ++out[s];
  return out;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("stratamatch_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("median split") {
  std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  auto bins = quantile_bin(s, 2);
  REQUIRE(bins.cutpoints.size() == 1);
  CHECK(bins.cutpoints[0] == 5.5);
  CHECK(bins.assignment == std::vector<int>{1, 1, 1, 1, 1, 2, 2, 2, 2, 2});
  REQUIRE(bins.bins.size() == 2);
  CHECK(bins.bins[0].render() == "[1,6)");
  CHECK(bins.bins[1].render() == "[6,10]");
}

TEST_CASE("distinct scores give floor/ceil sized bins and match the rank oracle") {
  oracle::TestRng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.integer(1, 400));
    const std::size_t k = static_cast<std::size_t>(rng.integer(1, static_cast<int>(std::min<std::size_t>(n, 30))));
    std::vector<double> s(n);
    for (auto& v : s) v = rng.normal();
    auto bins = quantile_bin(s, k);
    CHECK(bins.assignment == oracle::rank_bins(s, k));
    for (const auto& [stratum, size] : sizes_of(bins.assignment)) {
      CHECK(size >= n / k);
      CHECK(size <= (n + k - 1) / k);
    }
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(bins.bins[static_cast<std::size_t>(bins.assignment[i] - 1)].contains(s[i]));
    }
  }
}

TEST_CASE("9234 distinct scores in 19 strata are all 486") {
  oracle::TestRng rng(4);
  std::vector<double> s(9234);
  for (auto& v : s) v = rng.uniform();
  CHECK(strata_count(9234, 500) == 19);
  CHECK(strata_count(9364, 500) == 19);
  auto bins = quantile_bin(s, 19);
  for (const auto& [stratum, size] : sizes_of(bins.assignment)) CHECK(size == 486);
}

TEST_CASE("ties share a stratum and match the brute-force binning") {
  oracle::TestRng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(100);
    for (auto& v : s) v = static_cast<double>(rng.integer(0, 12));
    auto bins = quantile_bin(s, 4);
    // Oracle: type-7 cut points from the sorted sample, then count cut
    // points strictly below each score; drop empty bins.
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cuts;
    for (int i = 1; i < 4; ++i) {
      const double h = 99.0 * i / 4.0;
      const auto lo = static_cast<std::size_t>(h);
      cuts.push_back(sorted[lo] + (h - static_cast<double>(lo)) * (sorted[std::min<std::size_t>(lo + 1, 99)] - sorted[lo]));
    }
    std::vector<int> raw(100);
    std::set<int> used;
    for (std::size_t i = 0; i < 100; ++i) {
      raw[i] = 1 + static_cast<int>(std::count_if(cuts.begin(), cuts.end(), [&](double c) { return c < s[i]; }));
      used.insert(raw[i]);
    }
    std::map<int, int> renumber;
    for (int b : used) renumber[b] = static_cast<int>(renumber.size()) + 1;
    for (std::size_t i = 0; i < 100; ++i) CHECK(bins.assignment[i] == renumber[raw[i]]);
    for (std::size_t i = 0; i < 100; ++i) {
      for (std::size_t j = 0; j < 100; ++j) {
        if (s[i] == s[j]) CHECK(bins.assignment[i] == bins.assignment[j]);
      }
    }
  }
}

TEST_CASE("quantile_bin errors") {
  std::vector<double> s{1, 2, 3};
  CHECK(code_of([&] { quantile_bin(s, 4); }) == ErrorCode::TooManyStrata);
  CHECK(code_of([&] { quantile_bin(s, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("issue flags reproduce the printed tables") {
  for (const auto& row : reference::kSimulatedIssues) {
    CHECK(row.treat + row.control == row.total);
    CHECK(classify_stratum(row.treat, row.control).render() == row.issues);
  }
  for (const auto& row : reference::kIcuManualIssues) {
    CHECK(row.treat + row.control == row.total);
    CHECK(classify_stratum(row.treat, row.control).render() == row.issues);
  }
}

TEST_CASE("issue flag boundaries") {
  CHECK(classify_stratum(15, 59).has(Issue::TooFewSamples));
  CHECK_FALSE(classify_stratum(15, 60).has(Issue::TooFewSamples));
  CHECK_FALSE(classify_stratum(2500, 2500).has(Issue::TooManySamples));
  CHECK(classify_stratum(2500, 2501).has(Issue::TooManySamples));
  CHECK(classify_stratum(100, 400).has(Issue::NotEnoughTreated));
  CHECK_FALSE(classify_stratum(100, 399).has(Issue::NotEnoughTreated));
  CHECK(classify_stratum(400, 100).render() == "Not enough control samples");
  CHECK(classify_stratum(0, 10).render() == "Too few samples; Not enough treated samples");
  CHECK(classify_stratum(3000, 3000).render() == "Too many samples");
  IssueThresholds loose{10, 100000, 10.0};
  CHECK(classify_stratum(100, 400, loose).render() == "none");
}

TEST_CASE("manual stratification of the ICU-shaped frame") {
  auto df = reference::icu_shaped_frame();
  auto strata = manual_stratify(df, parse_formula(reference::kIcuStrataFormula));
  CHECK(strata.mode == StrataMode::manual);
  CHECK_FALSE(strata.pilot_set);
  CHECK_FALSE(strata.has_prognostic_scores());
  REQUIRE(strata.n_strata() == 16);
  REQUIRE(strata.issue_table.size() == 16);
  std::size_t total = 0;
  for (std::size_t s = 0; s < 16; ++s) {
    const auto& got = strata.issue_table[s];
    const auto& want = reference::kIcuManualIssues[s];
    CHECK(got.stratum == static_cast<int>(s + 1));
    CHECK(got.treat == want.treat);
    CHECK(got.control == want.control);
    CHECK(got.total == want.total);
    CHECK(got.potential_issues.render() == want.issues);
    total += got.total;
  }
  CHECK(total == 10157);
  CHECK(strata.strata_table[0].definition ==
        "Female.pre=0, RaceAsian.pre=0, RaceUnknown.pre=0, RaceOther.pre=0, RaceBlack.pre=0, "
        "RacePacificIslander.pre=0, RaceNativeAmerican.pre=0, all_latinos=0");
  CHECK(strata.strata_table[2].definition.find("RaceNativeAmerican.pre=1") != std::string::npos);
  const auto text = describe(strata);
  CHECK(text.find("Number of strata: 16") != std::string::npos);
  CHECK(text.find("Min size: 17 \tMax size: 3314") != std::string::npos);
}

TEST_CASE("manual stratification contracts") {
  auto df = make_sample_data({300, 1});
  auto two = manual_stratify(df, parse_formula("treat ~ B1"));
  REQUIRE(two.n_strata() == 2);
  CHECK(two.strata_table[0].size + two.strata_table[1].size == 300);
  const auto labels = two.strata();
  for (std::size_t r = 0; r < 300; ++r) {
    CHECK(labels[r] == static_cast<int>(df.column("B1").value(r)) + 1);
  }
  CHECK(code_of([&] { manual_stratify(df, parse_formula("treat ~ B1 + X1")); }) ==
        ErrorCode::ContinuousStratifyingCovariate);
  CHECK(code_of([&] { manual_stratify(df, parse_formula("X1 ~ B1")); }) ==
        ErrorCode::NonBinaryTreatment);
  CHECK(two.analysis_set.column_names().back() == "stratum");
}

TEST_CASE("automatic stratification on simulated data") {
  auto df = make_sample_data({10000, 1});
  AutoStratifyOptions opts;
  opts.treat = "treat";
  opts.prognosis = parse_formula("outcome ~ X1 + X2 + B1 + B2 + C1");
  opts.size = 500;
  opts.seed = 1;
  auto strata = auto_stratify(df, opts);

  REQUIRE(strata.pilot_set);
  for (double t : strata.pilot_set->column("treat").values()) CHECK(t == 0.0);
  CHECK(strata.pilot_set->n_rows() + strata.analysis_set.n_rows() == 10000);
  CHECK(strata.n_strata() == strata_count(strata.analysis_set.n_rows(), 500));
  CHECK(strata.log.front() == "Constructing a pilot set by subsampling 10% of controls.");
  CHECK(strata.log.back() ==
        "Fitting prognostic model via logistic regression: outcome ~ X1 + X2 + B1 + B2 + C1");
  REQUIRE(strata.prognostic_model);
  CHECK(strata.prognostic_scores == predict(*strata.prognostic_model, strata.analysis_set));

  // stratum k's bin lies below stratum k+1's and contains its scores
  const auto labels = strata.strata();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto& row = strata.strata_table[static_cast<std::size_t>(labels[r] - 1)];
    CHECK(row.bin->contains(strata.prognostic_scores[r]));
  }
  for (std::size_t s = 1; s < strata.n_strata(); ++s) {
    CHECK(strata.strata_table[s - 1].bin->hi <= strata.strata_table[s].bin->lo);
  }
  std::size_t total = 0;
  for (const auto& row : strata.strata_table) total += row.size;
  CHECK(total == strata.analysis_set.n_rows());
}

TEST_CASE("prognostic model is fit on pilot controls only") {
  auto df = make_sample_data({2000, 3});
  // A user pilot set mixing treated rows: treated rows must be ignored, so
  // the fit equals a fit on its controls alone.
  std::vector<std::size_t> first(500);
  for (std::size_t i = 0; i < 500; ++i) first[i] = i;
  auto pilot = df.subset(first);
  std::vector<std::size_t> pilot_controls;
  for (std::size_t i = 0; i < 500; ++i) {
    if (pilot.column("treat").value(i) == 0.0) pilot_controls.push_back(i);
  }
  AutoStratifyOptions opts;
  opts.treat = "treat";
  opts.prognosis = parse_formula("outcome ~ X1 + X2");
  opts.pilot_sample = pilot;
  opts.size = 400;
  auto strata = auto_stratify(df, opts);
  CHECK(strata.log.front() == "Using user-specified set for prognostic score modeling.");
  auto direct = fit_logistic(pilot.subset(pilot_controls), parse_formula("outcome ~ X1 + X2"));
  CHECK(strata.prognostic_model->coefficients == direct.coefficients);
  CHECK(strata.analysis_set.n_rows() == 2000);
}

TEST_CASE("continuous outcomes use linear regression") {
  auto df = make_sample_data({1000, 3});
  auto y = df.column("X2").values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 2.0 * df.column("X1").value(i) + 0.1 * y[i];
  df = df.with_column(Column::numeric("y", y));
  AutoStratifyOptions opts;
  opts.treat = "treat";
  opts.prognosis = parse_formula("y ~ X1");
  opts.size = 300;
  auto strata = auto_stratify(df, opts);
  CHECK(strata.log.back() == "Fitting prognostic model via linear regression: y ~ X1");
  CHECK(strata.prognostic_model->family == Family::linear);
}

TEST_CASE("external score vectors") {
  auto df = make_sample_data({600, 2});
  std::vector<double> scores(600);
  for (std::size_t i = 0; i < 600; ++i) scores[i] = df.column("X1").value(i);
  AutoStratifyOptions opts;
  opts.treat = "treat";
  opts.prognosis = scores;
  opts.outcome = "outcome";
  opts.size = 100;
  auto strata = auto_stratify(df, opts);
  CHECK(strata.n_strata() == 6);
  CHECK_FALSE(strata.prognostic_model);
  CHECK(strata.analysis_set.n_rows() == 600);

  opts.prognosis = std::vector<double>(600, 0.3);
  auto flat = auto_stratify(df, opts);
  CHECK(flat.n_strata() == 1);
  REQUIRE_FALSE(flat.warnings.empty());
  CHECK(flat.warnings.back().code == WarningCode::DegenerateScores);

  opts.prognosis = std::vector<double>(599, 0.3);
  CHECK(code_of([&] { auto_stratify(df, opts); }) == ErrorCode::ScoreLengthMismatch);
  opts.prognosis = scores;
  opts.outcome.reset();
  CHECK(code_of([&] { auto_stratify(df, opts); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("oversized strata request a single stratum with a warning") {
  auto df = make_sample_data({800, 2});
  AutoStratifyOptions opts;
  opts.treat = "treat";
  opts.prognosis = parse_formula("outcome ~ X1");
  opts.size = 5000;
  auto strata = auto_stratify(df, opts);
  CHECK(strata.n_strata() == 1);
  REQUIRE_FALSE(strata.warnings.empty());
  CHECK(strata.warnings.front().code == WarningCode::SizeTooLarge);
}

TEST_CASE("prognostic fitting errors propagate") {
  auto df = make_sample_data({1000, 2});
  AutoStratifyOptions opts;
  opts.treat = "treat";
  opts.size = 200;
  // outcome perfectly determined by X1 among pilot controls
  std::vector<double> y(1000);
  for (std::size_t i = 0; i < 1000; ++i) y[i] = df.column("X1").value(i) > 0 ? 1.0 : 0.0;
  opts.prognosis = parse_formula("sep ~ X1");
  CHECK(code_of([&] { auto_stratify(df.with_column(Column::binary("sep", y)), opts); }) ==
        ErrorCode::SeparationDetected);

  // a category present only in the analysis set
  std::vector<std::size_t> rows(1000);
  for (std::size_t i = 0; i < 1000; ++i) rows[i] = i;
  std::vector<std::string> region(1000, "north");
  for (std::size_t i = 0; i < 1000; ++i) {
    if (df.column("treat").value(i) == 1.0 && i % 7 == 0) region[i] = "island";
    else if (i % 2) region[i] = "south";
  }
  auto with_region = df.with_column(Column::categorical_from_text("region", region));
  opts.prognosis = parse_formula("outcome ~ X1 + region");
  CHECK(code_of([&] { auto_stratify(with_region, opts); }) == ErrorCode::UnseenLevel);

  opts.treat = "X1";
  CHECK(code_of([&] { auto_stratify(df, opts); }) == ErrorCode::NonBinaryTreatment);
}

TEST_CASE("strata save and load round trip") {
  auto df = make_sample_data({1500, 8});
  AutoStratifyOptions opts;
  opts.treat = "treat";
  opts.prognosis = parse_formula("outcome ~ X1 + C1");
  opts.size = 250;
  opts.seed = 4;
  auto strata = auto_stratify(df, opts);
  const auto dir = scratch("roundtrip");
  save_strata(strata, dir);
  for (const char* f : {strata_files::kAnalysis, strata_files::kPilot, strata_files::kStrataTable,
                        strata_files::kIssueTable, strata_files::kModel, strata_files::kScores,
                        strata_files::kMeta}) {
    CHECK(fs::exists(dir / f));
  }
  auto back = load_strata(dir);
  CHECK(back.analysis_set == strata.analysis_set);
  CHECK(*back.pilot_set == *strata.pilot_set);
  CHECK(back.prognostic_scores == strata.prognostic_scores);
  CHECK(back.strata() == strata.strata());
  REQUIRE(back.strata_table.size() == strata.strata_table.size());
  for (std::size_t s = 0; s < back.strata_table.size(); ++s) {
    CHECK(back.strata_table[s].definition == strata.strata_table[s].definition);
    CHECK(back.strata_table[s].size == strata.strata_table[s].size);
  }
  std::ostringstream a, b;
  write_issue_table(strata.issue_table, a);
  write_issue_table(back.issue_table, b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("Stratum,Treat,Control,Total,Control_Proportion,Potential_Issues\n", 0) == 0);

  std::ostringstream table;
  write_strata_table(strata, table);
  CHECK(table.str().rfind("stratum,quantile_bin,size\n1,\"[", 0) == 0);

  auto manual = manual_stratify(df, parse_formula("treat ~ B1 + C1"));
  const auto mdir = scratch("manual");
  save_strata(manual, mdir);
  CHECK_FALSE(fs::exists(mdir / strata_files::kPilot));
  auto mback = load_strata(mdir);
  CHECK(mback.mode == StrataMode::manual);
  CHECK(mback.strata_table[3].definition == manual.strata_table[3].definition);
  fs::remove_all(dir);
  fs::remove_all(mdir);
}
