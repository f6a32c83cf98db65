#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "stratamatch/dataset.hpp"
#include "stratamatch/error.hpp"

namespace stratamatch {

enum class Family { linear, logistic };
enum class ResidualKind { response, pearson, deviance };

std::string_view to_string(Family family);

struct GlmOptions {
  double tol = 1e-8;  // on max |coefficient update|
  int max_iter = 25;
};

struct FittedGlm {
  Family family = Family::linear;
  Formula formula;
  std::vector<TermEncoding> encoding;  // per rhs term, as seen at fit time
  std::vector<std::string> labels;     // aligned with coefficients
  Eigen::VectorXd coefficients;
  int iterations = 0;
  bool converged = false;
  double deviance = 0.0;
  std::vector<Warning> warnings;

  // Categorical term -> training levels.
  [[nodiscard]] std::map<std::string, std::vector<std::string>> level_catalog() const;
};

// Least squares through a column-pivoted Householder QR of the design.
FittedGlm fit_ols(const DataFrame& df, const Formula& formula);

// Logistic regression by iteratively reweighted least squares, starting from
// zero coefficients. Each step solves the weighted least-squares problem by
// QR. Divergence towards a separating hyperplane raises SeparationDetected;
// running out of iterations otherwise yields converged = false plus a
// NotConverged warning.
FittedGlm fit_logistic(const DataFrame& df, const Formula& formula,
                       const GlmOptions& options = {});

// Linear predictor X beta on `df`, using the fit-time encoding.
Eigen::VectorXd linear_predictor(const FittedGlm& model, const DataFrame& df);
// Mean response: X beta (linear) or sigmoid(X beta) (logistic).
std::vector<double> predict(const FittedGlm& model, const DataFrame& df);
std::vector<double> residuals(const FittedGlm& model, const DataFrame& df,
                              ResidualKind kind);

// Bernoulli log-likelihood and its gradient X^T (y - mu), for diagnostics and
// gradient checks.
double logistic_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& beta);
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& beta);

double sigmoid(double eta);
// log(1 + exp(x)) without overflow.
double softplus(double x);

nlohmann::json to_json(const FittedGlm& model);
FittedGlm glm_from_json(const nlohmann::json& j);

}  // namespace stratamatch
