#include "stratamatch/simgen.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "stratamatch/error.hpp"
#include "stratamatch/random.hpp"

namespace stratamatch {

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

DataFrame make_sample_data(const SimConfig& cfg) {
  if (cfg.n < 1) throw Error(ErrorCode::InvalidArgument, "n must be at least 1");
  namespace k = simgen_coefficients;

  const std::size_t n = cfg.n;
  std::vector<double> x1(n), x2(n), b1(n), b2(n), treat(n), outcome(n);
  std::vector<int> c1(n);
  Rng rng(cfg.seed);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = rng.normal();
    x2[i] = rng.normal();
    b1[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    b2[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    c1[i] = static_cast<int>(rng.below(3));
    double treat_lp = k::kTreatIntercept + k::kTreatX1 * x1[i] + k::kTreatX2 * x2[i] +
                      k::kTreatB1 * b1[i];
    treat[i] = rng.bernoulli(sigmoid(treat_lp)) ? 1.0 : 0.0;
    double outcome_lp = k::kOutcomeX1 * x1[i] + k::kOutcomeX2 * x2[i] +
                        k::kOutcomeB2 * b2[i] + k::kOutcomeTreat * treat[i];
    outcome[i] = rng.bernoulli(sigmoid(outcome_lp)) ? 1.0 : 0.0;
  }

  std::vector<Column> cols;
  cols.push_back(Column::numeric("X1", std::move(x1)));
  cols.push_back(Column::numeric("X2", std::move(x2)));
  cols.push_back(Column::binary("B1", std::move(b1)));
  cols.push_back(Column::binary("B2", std::move(b2)));
  cols.push_back(Column::categorical("C1", {"a", "b", "c"}, std::move(c1)));
  cols.push_back(Column::binary("treat", std::move(treat)));
  cols.push_back(Column::binary("outcome", std::move(outcome)));
  return DataFrame(std::move(cols));
}

}  // namespace stratamatch
