#pragma once

// Reference implementations used to check the library. They share no code
// with it: plain vectors, textbook algorithms, no Eigen.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major: m[i][j]

// SplitMix64; small, seedable, good enough to drive property tests.
class TestRng {
 public:
  explicit TestRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

inline Mat transpose_times(const Mat& x, const Mat& y) {
  const std::size_t p = x.front().size(), q = y.front().size();
  Mat out(p, Vec(q, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < q; ++j) out[i][j] += x[r][i] * y[r][j];
    }
  }
  return out;
}

// Solves A z = b for symmetric positive definite A by Cholesky.
inline Vec cholesky_solve(Mat a, Vec b) {
  const std::size_t n = a.size();
  Mat l(n, Vec(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j][k] * l[j][k];
    if (d <= 0.0) throw std::runtime_error("matrix not positive definite");
    l[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      l[i][j] = s / l[j][j];
    }
  }
  Vec z(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i][k] * z[k];
    z[i] = s / l[i][i];
  }
  Vec x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = z[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l[k][i] * x[k];
    x[i] = s / l[i][i];
  }
  return x;
}

// Gaussian elimination with partial pivoting.
inline Vec gauss_solve(Mat a, Vec b) {
  const std::size_t n = a.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    if (a[piv][c] == 0.0) throw std::runtime_error("singular system");
    std::swap(a[piv], a[c]);
    std::swap(b[piv], b[c]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  Vec x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

// OLS via the normal equations X'X b = X'y.
inline Vec ols_normal_equations(const Mat& x, const Vec& y) {
  Mat ycol(y.size(), Vec(1));
  for (std::size_t i = 0; i < y.size(); ++i) ycol[i][0] = y[i];
  Mat xty = transpose_times(x, ycol);
  Vec rhs(xty.size());
  for (std::size_t i = 0; i < xty.size(); ++i) rhs[i] = xty[i][0];
  return cholesky_solve(transpose_times(x, x), rhs);
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double log1pexp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

inline double loglik(const Mat& x, const Vec& y, const Vec& beta) {
  double ll = 0.0;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double eta = dot(x[r], beta);
    ll += y[r] * eta - log1pexp(eta);
  }
  return ll;
}

// Maximizes the Bernoulli log-likelihood directly: Newton steps on the
// explicit gradient and Hessian with step halving whenever the likelihood
// would drop. Runs until the step is at rounding level.
inline Vec logistic_mle(const Mat& x, const Vec& y) {
  const std::size_t p = x.front().size();
  Vec beta(p, 0.0);
  double ll = loglik(x, y, beta);
  for (int iter = 0; iter < 200; ++iter) {
    Vec grad(p, 0.0);
    Mat hess(p, Vec(p, 0.0));
    for (std::size_t r = 0; r < x.size(); ++r) {
      const double eta = dot(x[r], beta);
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      const double w = mu * (1.0 - mu);
      for (std::size_t i = 0; i < p; ++i) {
        grad[i] += (y[r] - mu) * x[r][i];
        for (std::size_t j = 0; j < p; ++j) hess[i][j] += w * x[r][i] * x[r][j];
      }
    }
    Vec step = gauss_solve(hess, grad);
    double t = 1.0;
    Vec next(p);
    double ll_next = 0.0;
    for (int halving = 0; halving < 60; ++halving) {
      for (std::size_t i = 0; i < p; ++i) next[i] = beta[i] + t * step[i];
      ll_next = loglik(x, y, next);
      if (ll_next >= ll - 1e-12 * std::abs(ll)) break;
      t *= 0.5;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < p; ++i) change = std::max(change, std::abs(next[i] - beta[i]));
    beta = next;
    ll = ll_next;
    if (change < 1e-13) break;
  }
  return beta;
}

inline double logit_clamped(double p) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(p / (1.0 - p));
}

// Exact minimum of sum |logit(t_i) - logit(c_j)| over assignments giving each
// treated unit k distinct controls. Enumerates every choice, treated unit by
// treated unit, memoizing on the set of controls already used.
inline double brute_force_match_cost(const Vec& treated, const Vec& controls, int k) {
  const std::size_t t = treated.size(), c = controls.size();
  if (c > 20) throw std::runtime_error("too many controls for bitmask enumeration");
  if (c < k * t) return std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> cost(t, Vec(c));
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      cost[i][j] = std::abs(logit_clamped(treated[i]) - logit_clamped(controls[j]));
    }
  }
  std::vector<std::unordered_map<std::uint32_t, double>> memo(t + 1);
  auto best = [&](auto&& self, std::size_t i, std::uint32_t used) -> double {
    if (i == t) return 0.0;
    if (auto it = memo[i].find(used); it != memo[i].end()) return it->second;
    double out = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < c; ++a) {
      if (used >> a & 1u) continue;
      if (k == 1) {
        out = std::min(out, cost[i][a] + self(self, i + 1, used | 1u << a));
        continue;
      }
      for (std::size_t b = a + 1; b < c; ++b) {
        if (used >> b & 1u) continue;
        out = std::min(out, cost[i][a] + cost[i][b] + self(self, i + 1, used | 1u << a | 1u << b));
      }
    }
    memo[i][used] = out;
    return out;
  };
  if (k != 1 && k != 2) throw std::runtime_error("brute force supports k = 1 or 2");
  return best(best, 0, 0u);
}

// Type-7 quantile binning for distinct scores, by rank: the score of rank r
// (0-based) lands in 1 + #{i in 1..K-1 : floor((n-1) i / K) < r}.
inline std::vector<int> rank_bins(const Vec& scores, std::size_t k) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    int bin = 1;
    for (std::size_t i = 1; i < k; ++i) {
      if ((n - 1) * i / k < r) ++bin;
    }
    out[order[r]] = bin;
  }
  return out;
}

// Counts per bin for edges e_0 < ... < e_m: bin i holds [e_i, e_{i+1}), the
// last bin also takes e_m.
inline std::vector<std::size_t> count_histogram(const Vec& values, const Vec& edges) {
  const std::size_t m = edges.size() - 1;
  std::vector<std::size_t> counts(m, 0);
  for (double v : values) {
    for (std::size_t i = 0; i < m; ++i) {
      const bool last = i + 1 == m;
      if (v >= edges[i] && (v < edges[i + 1] || (last && v <= edges[i + 1]))) {
        ++counts[i];
        break;
      }
    }
  }
  return counts;
}

// Effective sample size of a set structure keyed "t:c".
inline double ess(const std::map<std::string, std::size_t>& structure) {
  double total = 0.0;
  for (const auto& [shape, count] : structure) {
    const auto colon = shape.find(':');
    const double t = std::stod(shape.substr(0, colon));
    const double c = std::stod(shape.substr(colon + 1));
    if (t == 0.0 || c == 0.0) continue;
    total += static_cast<double>(count) / ((1.0 / t + 1.0 / c) / 2.0);
  }
  return total;
}

}  // namespace oracle
