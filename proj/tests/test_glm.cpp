#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stratamatch/glm.hpp"
#include "stratamatch/simgen.hpp"

using namespace stratamatch;

namespace {

// Random frame with intercept-free numeric predictors x0..x{p-1}, a binary
// response y drawn from a logistic model and a numeric response z.
DataFrame random_problem(oracle::TestRng& rng, std::size_t n, std::size_t p,
                         oracle::Mat& rows) {
  std::vector<std::vector<double>> cols(p, std::vector<double>(n));
  std::vector<double> y(n), z(n);
  std::vector<double> beta(p + 1);
  for (auto& b : beta) b = rng.uniform(-1.0, 1.0);
  rows.assign(n, oracle::Vec(p + 1, 1.0));
  for (std::size_t r = 0; r < n; ++r) {
    double eta = beta[0];
    for (std::size_t j = 0; j < p; ++j) {
      cols[j][r] = rng.normal();
      rows[r][j + 1] = cols[j][r];
      eta += beta[j + 1] * cols[j][r];
    }
    y[r] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    z[r] = eta + 0.5 * rng.normal();
  }
  std::vector<Column> columns;
  for (std::size_t j = 0; j < p; ++j) columns.push_back(Column::numeric("x" + std::to_string(j), cols[j]));
  columns.push_back(Column::binary("y", y));
  columns.push_back(Column::numeric("z", z));
  return DataFrame(std::move(columns));
}

Formula formula_for(const std::string& lhs, std::size_t p) {
  Formula f;
  f.lhs = lhs;
  for (std::size_t j = 0; j < p; ++j) f.rhs_terms.push_back("x" + std::to_string(j));
  return f;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("OLS exact fits") {
  DataFrame line({Column::numeric("x", {1, 2, 3}), Column::numeric("y", {2, 4, 6})});
  auto m = fit_ols(line, parse_formula("y ~ x"));
  CHECK(std::abs(m.coefficients[0]) < 1e-10);
  CHECK(std::abs(m.coefficients[1] - 2.0) < 1e-10);

  DataFrame two({Column::numeric("x", {0, 1}), Column::numeric("y", {1, 3})});
  auto exact = fit_ols(two, parse_formula("y ~ x"));
  CHECK(std::abs(exact.coefficients[0] - 1.0) < 1e-10);
  CHECK(std::abs(exact.coefficients[1] - 2.0) < 1e-10);

  DataFrame one({Column::numeric("x", {0}), Column::numeric("y", {1})});
  CHECK(code_of([&] { fit_ols(one, parse_formula("y ~ x")); }) == ErrorCode::TooFewRows);
}

TEST_CASE("OLS matches the normal equations") {
  oracle::TestRng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    oracle::Mat rows;
    auto df = random_problem(rng, 50, 3, rows);
    std::vector<double> zs(df.column("z").values());
    auto expected = oracle::ols_normal_equations(rows, zs);
    auto m = fit_ols(df, formula_for("z", 3));
    for (std::size_t j = 0; j < expected.size(); ++j) {
      CHECK(std::abs(m.coefficients[static_cast<Eigen::Index>(j)] - expected[j]) < 1e-8);
    }
    auto r = residuals(m, df, ResidualKind::response);
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) s += rows[i][j] * r[i];
      CHECK(std::abs(s) < 1e-8 * 50);
    }
  }
}

TEST_CASE("OLS rank deficiency") {
  DataFrame df({Column::numeric("a", {1, 2, 3, 4, 5}), Column::numeric("b", {2, 4, 6, 8, 10}),
                Column::numeric("y", {1, 0, 2, 1, 3})});
  CHECK(code_of([&] { fit_ols(df, parse_formula("y ~ a + b")); }) == ErrorCode::RankDeficient);
}

TEST_CASE("logistic intercept-only closed form") {
  std::vector<double> y(100, 0.0);
  for (int i = 0; i < 25; ++i) y[static_cast<std::size_t>(i * 4)] = 1.0;
  DataFrame df({Column::numeric("x", std::vector<double>(100, 1.0)), Column::binary("y", y)});
  Formula f;
  f.lhs = "y";
  auto m = fit_logistic(df, f);
  CHECK(m.converged);
  CHECK(std::abs(m.coefficients[0] - std::log(0.25 / 0.75)) < 1e-6);
  for (double p : predict(m, df)) CHECK(std::abs(p - 0.25) < 1e-9);
}

TEST_CASE("logistic matches direct likelihood maximization") {
  oracle::TestRng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    oracle::Mat rows;
    auto df = random_problem(rng, 200, 3, rows);
    std::vector<double> ys(df.column("y").values());
    auto expected = oracle::logistic_mle(rows, ys);
    auto m = fit_logistic(df, formula_for("y", 3));
    REQUIRE(m.converged);
    for (std::size_t j = 0; j < expected.size(); ++j) {
      CHECK(std::abs(m.coefficients[static_cast<Eigen::Index>(j)] - expected[j]) < 1e-6);
    }
    CHECK(std::abs(m.deviance + 2.0 * oracle::loglik(rows, ys, expected)) < 1e-6);

    // score equations at the optimum
    auto r = residuals(m, df, ResidualKind::response);
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) s += rows[i][j] * r[i];
      CHECK(std::abs(s) < 10 * 1e-8 * 200);
    }
    // deviance identity
    double dev = 0.0;
    for (double d : residuals(m, df, ResidualKind::deviance)) dev += d * d;
    CHECK(std::abs(dev - m.deviance) < 1e-8);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  oracle::TestRng rng(8);
  oracle::Mat rows;
  auto df = random_problem(rng, 80, 2, rows);
  Eigen::MatrixXd x(80, 3);
  Eigen::VectorXd y(80);
  for (int i = 0; i < 80; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    y(i) = df.column("y").value(static_cast<std::size_t>(i));
  }
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd beta(3);
    for (int j = 0; j < 3; ++j) beta(j) = rng.uniform(-2, 2);
    Eigen::VectorXd g = logistic_gradient(x, y, beta);
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd up = beta, down = beta;
      up(j) += 1e-5;
      down(j) -= 1e-5;
      const double fd =
          (logistic_log_likelihood(x, y, up) - logistic_log_likelihood(x, y, down)) / 2e-5;
      CHECK(std::abs(fd - g(j)) <= 1e-4 * std::max(1.0, std::abs(g(j))));
    }
  }
}

TEST_CASE("separation and degenerate responses") {
  DataFrame sep({Column::numeric("x", {-3, -2, -1, -0.5, 0.5, 1, 2, 3}),
                 Column::binary("y", {0, 0, 0, 0, 1, 1, 1, 1})});
  CHECK(code_of([&] { fit_logistic(sep, parse_formula("y ~ x")); }) ==
        ErrorCode::SeparationDetected);

  DataFrame single({Column::numeric("x", {1, 2, 3}), Column::binary("y", {1, 1, 1})});
  CHECK(code_of([&] { fit_logistic(single, parse_formula("y ~ x")); }) ==
        ErrorCode::SingleClassOutcome);
  CHECK(code_of([&] { fit_logistic(single, parse_formula("x ~ y")); }) == ErrorCode::TypeMismatch);
}

TEST_CASE("iteration cap yields a NotConverged warning") {
  auto df = make_sample_data({500, 3});
  GlmOptions opts;
  opts.max_iter = 1;
  auto m = fit_logistic(df, parse_formula("outcome ~ X1 + X2"), opts);
  CHECK_FALSE(m.converged);
  REQUIRE(m.warnings.size() == 1);
  CHECK(m.warnings[0].code == WarningCode::NotConverged);
}

TEST_CASE("predict with an unseen level") {
  DataFrame train({Column::categorical("C1", {"a", "b", "c"}, {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2}),
                   Column::numeric("x", {0.1, 0.5, -0.3, 1.2, -1, 0.7, 0.2, -0.4, 0.9, -0.6, 0.3, -1.1}),
                   Column::binary("y", {0, 1, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1})});
  auto m = fit_logistic(train, parse_formula("y ~ C1 + x"));
  DataFrame fresh({Column::categorical("C1", {"d"}, {0}), Column::numeric("x", {0.0})});
  try {
    predict(m, fresh);
    FAIL("expected UnseenLevel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnseenLevel);
    CHECK(std::string(e.what()) == "UnseenLevel: C1=d");
  }
  // same levels, different coding order: matched by text
  DataFrame reordered({Column::categorical("C1", {"c", "a"}, {0, 1}), Column::numeric("x", {0.3, 0.3})});
  DataFrame direct({Column::categorical("C1", {"a", "b", "c"}, {2, 0}), Column::numeric("x", {0.3, 0.3})});
  CHECK(predict(m, reordered) == predict(m, direct));
}

TEST_CASE("predict basics") {
  auto df = make_sample_data({300, 2});
  auto m = fit_logistic(df, parse_formula("outcome ~ X1 + B2 + C1"));
  auto fitted = predict(m, df);
  for (double p : fitted) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  std::vector<std::size_t> perm(df.n_rows());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
  auto shuffled = predict(m, df.subset(perm));
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(shuffled[i] == fitted[perm[i]]);

  FittedGlm zero = m;
  zero.coefficients.setZero();
  for (double p : predict(zero, df)) CHECK(p == 0.5);
}

TEST_CASE("residuals closed forms") {
  DataFrame one({Column::numeric("x", {0.0, 0.0}), Column::binary("y", {1, 0})});
  Formula f;
  f.lhs = "y";
  auto m = fit_logistic(one, f);
  auto dev = residuals(m, one, ResidualKind::deviance);
  CHECK(std::abs(dev[0] - std::sqrt(2.0 * std::log(2.0))) < 1e-9);
  CHECK(std::abs(dev[1] + std::sqrt(2.0 * std::log(2.0))) < 1e-9);
  auto pearson = residuals(m, one, ResidualKind::pearson);
  CHECK(std::abs(pearson[0] - 1.0) < 1e-9);

  DataFrame lin({Column::numeric("x", {1, 2, 3, 4}), Column::numeric("y", {1.1, 1.9, 3.2, 3.9})});
  auto ols = fit_ols(lin, parse_formula("y ~ x"));
  auto a = residuals(ols, lin, ResidualKind::response);
  CHECK(a == residuals(ols, lin, ResidualKind::pearson));
  CHECK(a == residuals(ols, lin, ResidualKind::deviance));
}

TEST_CASE("model JSON round trip") {
  auto df = make_sample_data({400, 12});
  auto m = fit_logistic(df, parse_formula("outcome ~ X1 + B1 + C1"));
  auto j = to_json(m);
  CHECK(j["family"] == "logistic");
  CHECK(j["formula"] == "outcome ~ X1 + B1 + C1");
  CHECK(j["level_catalog"]["C1"] == nlohmann::json::array({"a", "b", "c"}));
  auto back = glm_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.labels == m.labels);
  CHECK(back.coefficients == m.coefficients);
  CHECK(predict(back, df) == predict(m, df));
}

TEST_CASE("softplus and sigmoid are stable") {
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) == 0.0);
  CHECK(std::abs(softplus(0.0) - std::log(2.0)) < 1e-15);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) <= 1.0);
}
