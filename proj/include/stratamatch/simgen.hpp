#pragma once

#include <cstddef>
#include <cstdint>

#include "stratamatch/dataset.hpp"

namespace stratamatch {

struct SimConfig {
  std::size_t n = 10000;
  std::uint64_t seed = 0;
};

// Generating process, per row and in this draw order:
//   X1, X2 ~ N(0, 1)
//   B1, B2 ~ Bernoulli(0.5)
//   C1     ~ uniform over {a, b, c}
//   treat  ~ Bernoulli(sigmoid(-1.56 + 0.4 X1 + 0.3 X2 + 0.2 B1))
//   outcome~ Bernoulli(sigmoid(-1.1 X1 + 0.1 X2 + 0.3 B2 + 0.25 treat))
// The treatment intercept puts the expected treated fraction at 0.200.
namespace simgen_coefficients {
inline constexpr double kTreatIntercept = -1.56;
inline constexpr double kTreatX1 = 0.4;
inline constexpr double kTreatX2 = 0.3;
inline constexpr double kTreatB1 = 0.2;
inline constexpr double kOutcomeX1 = -1.1;
inline constexpr double kOutcomeX2 = 0.1;
inline constexpr double kOutcomeB2 = 0.3;
inline constexpr double kOutcomeTreat = 0.25;
}  // namespace simgen_coefficients

// Columns: X1, X2 (numeric), B1, B2 (binary), C1 (categorical a/b/c),
// treat, outcome (binary). Pure function of (n, seed).
DataFrame make_sample_data(const SimConfig& cfg);

}  // namespace stratamatch
