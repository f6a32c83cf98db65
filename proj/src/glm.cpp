#include "stratamatch/glm.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>

namespace stratamatch {

namespace {

// Relative pivot threshold below which a design column is treated as a
// linear combination of earlier ones.
constexpr double kRankThreshold = 1e-10;
// Linear-predictor magnitude at which fitted probabilities are saturated.
constexpr double kSaturatedEta = 30.0;
// Consecutive diverging iterations that confirm separation.
constexpr int kDivergingIterations = 3;

Eigen::VectorXd response_vector(const DataFrame& df, const std::string& name) {
  const Column& col = df.column(name);
  if (col.kind() == ColumnKind::categorical) {
    throw Error(ErrorCode::TypeMismatch, "response " + name + " is categorical");
  }
  const auto& v = col.values();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const std::string& require_lhs(const Formula& formula) {
  if (!formula.lhs) {
    throw Error(ErrorCode::InvalidArgument,
                "model formula needs a response: " + formula.to_text());
  }
  return *formula.lhs;
}

// Solves min ||a b - rhs|| and reports rank deficiency.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs,
                              const std::vector<std::string>& labels) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(kRankThreshold);
  if (qr.rank() < a.cols()) {
    // Name the first column the pivoting pushed past the rank.
    auto dropped = static_cast<std::size_t>(qr.colsPermutation().indices()(qr.rank()));
    throw Error(ErrorCode::RankDeficient,
                "design has rank " + std::to_string(qr.rank()) + " < " +
                    std::to_string(a.cols()) + " (column " + labels.at(dropped) +
                    " is collinear)");
  }
  return qr.solve(rhs);
}

double logistic_deviance(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    dev += softplus(eta(i)) - y(i) * eta(i);
  }
  return 2.0 * dev;
}

FittedGlm prepare(const DataFrame& df, const Formula& formula, Family family,
                  DesignMatrix& dm) {
  FittedGlm model;
  model.family = family;
  model.formula = formula;
  model.encoding = encode_terms(df, formula.rhs_terms);
  dm = design_matrix(df, model.encoding, true);
  model.labels = dm.column_labels;
  if (static_cast<Eigen::Index>(df.n_rows()) < dm.values.cols()) {
    throw Error(ErrorCode::TooFewRows,
                std::to_string(df.n_rows()) + " rows for " +
                    std::to_string(dm.values.cols()) + " coefficients");
  }
  return model;
}

}  // namespace

std::string_view to_string(Family family) {
  return family == Family::linear ? "linear" : "logistic";
}

double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  double e = std::exp(eta);
  return e / (1.0 + e);
}

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::map<std::string, std::vector<std::string>> FittedGlm::level_catalog() const {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& term : encoding) {
    if (term.kind == ColumnKind::categorical) out[term.name] = term.levels;
  }
  return out;
}

FittedGlm fit_ols(const DataFrame& df, const Formula& formula) {
  const auto& lhs = require_lhs(formula);
  Eigen::VectorXd y = response_vector(df, lhs);
  DesignMatrix dm;
  FittedGlm model = prepare(df, formula, Family::linear, dm);

  model.coefficients = least_squares(dm.values, y, model.labels);
  model.iterations = 1;
  model.converged = true;
  model.deviance = (y - dm.values * model.coefficients).squaredNorm();
  return model;
}

FittedGlm fit_logistic(const DataFrame& df, const Formula& formula,
                       const GlmOptions& options) {
  const auto& lhs = require_lhs(formula);
  const Column& response = df.column(lhs);
  if (response.kind() != ColumnKind::binary) {
    throw Error(ErrorCode::TypeMismatch,
                "logistic response " + lhs + " must be binary, is " +
                    std::string(to_string(response.kind())));
  }
  Eigen::VectorXd y = response_vector(df, lhs);
  const double ones = y.sum();
  if (ones == 0.0 || ones == static_cast<double>(y.size())) {
    throw Error(ErrorCode::SingleClassOutcome,
                lhs + " takes a single value over " + std::to_string(y.size()) + " rows");
  }
  DesignMatrix dm;
  FittedGlm model = prepare(df, formula, Family::logistic, dm);
  const Eigen::MatrixXd& x = dm.values;
  const Eigen::Index p = x.cols();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(x.rows());
  double deviance = logistic_deviance(eta, y);
  int diverging = 0;

  auto separation = [&](int iteration) {
    return Error(ErrorCode::SeparationDetected,
                 "linear predictor reached |eta| = " + format_number(eta.cwiseAbs().maxCoeff(), 4) +
                     " with deviance " + format_number(deviance, 4) + " after " +
                     std::to_string(iteration) + " iterations; " + lhs +
                     " is (quasi-)perfectly separated by " + formula.to_text());
  };

  for (int it = 1; it <= options.max_iter; ++it) {
    Eigen::VectorXd w(x.rows()), z(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double mu = sigmoid(eta(i));
      double wi = std::max(mu * (1.0 - mu), 1e-300);
      w(i) = std::sqrt(wi);
      z(i) = eta(i) + (y(i) - mu) / wi;
    }
    Eigen::VectorXd next;
    try {
      next = least_squares(w.asDiagonal() * x, w.cwiseProduct(z), model.labels);
    } catch (const Error&) {
      if (eta.cwiseAbs().maxCoeff() > kSaturatedEta) throw separation(it);
      throw;
    }
    const double step = (next - beta).cwiseAbs().maxCoeff();
    const double prev_norm = beta.cwiseAbs().maxCoeff();
    const double prev_deviance = deviance;
    beta = std::move(next);
    eta = x * beta;
    deviance = logistic_deviance(eta, y);
    model.iterations = it;

    if (step < options.tol) {
      model.converged = true;
      break;
    }
    const bool saturated = eta.cwiseAbs().maxCoeff() > kSaturatedEta;
    const bool growing = beta.cwiseAbs().maxCoeff() > prev_norm;
    diverging = (saturated && growing && deviance < prev_deviance) ? diverging + 1 : 0;
    if (diverging >= kDivergingIterations) throw separation(it);
  }
  if (!model.converged && eta.cwiseAbs().maxCoeff() > kSaturatedEta) {
    throw separation(model.iterations);
  }

  model.coefficients = std::move(beta);
  model.deviance = deviance;
  if (!model.converged) {
    model.warnings.push_back({WarningCode::NotConverged,
                              "IRLS stopped after " + std::to_string(model.iterations) +
                                  " iterations without meeting tol " +
                                  format_number(options.tol, 3),
                              0});
  }
  return model;
}

Eigen::VectorXd linear_predictor(const FittedGlm& model, const DataFrame& df) {
  DesignMatrix dm = design_matrix(df, model.encoding, true);
  return dm.values * model.coefficients;
}

std::vector<double> predict(const FittedGlm& model, const DataFrame& df) {
  Eigen::VectorXd eta = linear_predictor(model, df);
  std::vector<double> out(static_cast<std::size_t>(eta.size()));
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    out[static_cast<std::size_t>(i)] =
        model.family == Family::logistic ? sigmoid(eta(i)) : eta(i);
  }
  return out;
}

std::vector<double> residuals(const FittedGlm& model, const DataFrame& df,
                              ResidualKind kind) {
  Eigen::VectorXd eta = linear_predictor(model, df);
  Eigen::VectorXd y = response_vector(df, require_lhs(model.formula));
  std::vector<double> out(static_cast<std::size_t>(eta.size()));
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    double r = 0.0;
    if (model.family == Family::linear) {
      r = y(i) - eta(i);
    } else {
      const double mu = sigmoid(eta(i));
      const double raw = y(i) - mu;
      switch (kind) {
        case ResidualKind::response:
          r = raw;
          break;
        case ResidualKind::pearson:
          r = raw / std::sqrt(mu * (1.0 - mu));
          break;
        case ResidualKind::deviance: {
          const double unit = 2.0 * (softplus(eta(i)) - y(i) * eta(i));
          r = std::copysign(std::sqrt(std::max(unit, 0.0)), raw);
          break;
        }
      }
    }
    out[static_cast<std::size_t>(i)] = r;
  }
  return out;
}

double logistic_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& beta) {
  return -0.5 * logistic_deviance(x * beta, y);
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = y(i) - sigmoid(eta(i));
  return x.transpose() * resid;
}

nlohmann::json to_json(const FittedGlm& model) {
  nlohmann::json coefficients = nlohmann::json::array();
  for (std::size_t i = 0; i < model.labels.size(); ++i) {
    coefficients.push_back(
        {{"label", model.labels[i]},
         {"estimate", model.coefficients(static_cast<Eigen::Index>(i))}});
  }
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : model.encoding) {
    terms.push_back({{"name", t.name}, {"kind", std::string(to_string(t.kind))}});
  }
  nlohmann::json catalog = nlohmann::json::object();
  for (const auto& [name, levels] : model.level_catalog()) catalog[name] = levels;
  return {
      {"family", std::string(to_string(model.family))},
      {"formula", model.formula.to_text()},
      {"terms", terms},
      {"coefficients", coefficients},
      {"level_catalog", catalog},
      {"iterations", model.iterations},
      {"converged", model.converged},
      {"deviance", model.deviance},
  };
}

FittedGlm glm_from_json(const nlohmann::json& j) {
  try {
    FittedGlm model;
    const auto family = j.at("family").get<std::string>();
    if (family == "linear") {
      model.family = Family::linear;
    } else if (family == "logistic") {
      model.family = Family::logistic;
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown family " + family);
    }
    model.formula = parse_formula(j.at("formula").get<std::string>());
    const auto& catalog = j.at("level_catalog");
    for (const auto& t : j.at("terms")) {
      TermEncoding enc;
      enc.name = t.at("name").get<std::string>();
      const auto kind = t.at("kind").get<std::string>();
      if (kind == "numeric") {
        enc.kind = ColumnKind::numeric;
      } else if (kind == "binary") {
        enc.kind = ColumnKind::binary;
      } else if (kind == "categorical") {
        enc.kind = ColumnKind::categorical;
        enc.levels = catalog.at(enc.name).get<std::vector<std::string>>();
      } else {
        throw Error(ErrorCode::InvalidArgument, "unknown term kind " + kind);
      }
      model.encoding.push_back(std::move(enc));
    }
    const auto& coefs = j.at("coefficients");
    model.coefficients.resize(static_cast<Eigen::Index>(coefs.size()));
    for (std::size_t i = 0; i < coefs.size(); ++i) {
      model.labels.push_back(coefs[i].at("label").get<std::string>());
      model.coefficients(static_cast<Eigen::Index>(i)) = coefs[i].at("estimate").get<double>();
    }
    if (model.labels != design_labels(model.encoding, true)) {
      throw Error(ErrorCode::InvalidArgument,
                  "coefficient labels do not match the term encoding");
    }
    model.iterations = j.at("iterations").get<int>();
    model.converged = j.at("converged").get<bool>();
    model.deviance = j.at("deviance").get<double>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace stratamatch
