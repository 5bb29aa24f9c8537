#pragma once

#include "gcf/data_model.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gcf {

struct LearnerSpec {
  enum class Kind { linear, multinomial_logit, plugin };

  Kind kind = Kind::linear;
  std::string plugin_name;  // used when kind == plugin
  double ridge = 0.0;
  int max_iterations = 100;
  double tolerance = 1e-8;

  static LearnerSpec linear(double ridge = 0.0);
  static LearnerSpec multinomial_logit(double ridge = 1e-8, int max_iterations = 100,
                                       double tolerance = 1e-8);
  static LearnerSpec plugin(std::string name);

  // Throws ArgumentError on ridge < 0, tolerance <= 0 or max_iterations < 1.
  void validate() const;
};

std::string to_string(LearnerSpec::Kind kind);
LearnerSpec::Kind parse_learner_kind(const std::string& text);

// Least squares with an unpenalized intercept:
//   min ||y - b0 - X b||^2 + ridge * ||b||^2
// Returns (b0, b). Solved by column-pivoted QR on the augmented system.
Vector fit_ols(const Matrix& features, const Vector& targets, double ridge);

// Per-arm linear regressions of Y on X within each arm's units.
class OutcomeModel {
 public:
  OutcomeModel(std::vector<std::optional<Vector>> coefficients,
               std::vector<double> residual_variance);

  int n_arms() const { return static_cast<int>(coefficients_.size()); }
  bool has_arm(int j) const;
  // Intercept first; throws if arm j was absent from the training data.
  const Vector& coefficients(int j) const;
  // nullopt for absent arms
  const std::vector<std::optional<Vector>>& all_coefficients() const { return coefficients_; }
  double residual_variance(int j) const;

  double predict(const Eigen::Ref<const Vector>& x, int j) const;
  // n x J; every arm must be fitted.
  Matrix predict_all(const Matrix& x) const;

 private:
  std::vector<std::optional<Vector>> coefficients_;
  std::vector<double> residual_variance_;
};

OutcomeModel fit_outcome_model(const Dataset& train, double ridge);

// Multinomial logit with reference arm J (its scores are fixed at zero).
struct PropensityModel {
  Matrix coefficients;  // (J-1) x (p+1), intercept in column 0
  int iterations = 0;
  double gradient_norm = 0.0;  // max-norm of the penalized score divided by m, at exit
  bool converged = false;
  double log_likelihood = 0.0;  // penalized, at exit
  std::vector<double> log_likelihood_trace;  // one entry per accepted iterate, starting at zero

  int n_arms() const { return static_cast<int>(coefficients.rows()) + 1; }
  std::size_t p() const { return static_cast<std::size_t>(coefficients.cols()) - 1; }
};

// Newton/IRLS ascent of the multinomial log-likelihood minus ridge * ||slopes||^2.
// Converged when gradient_norm < spec.tolerance.
// Throws ValidationError("empty arm in training fold") when an arm has no units.
// Hitting max_iterations leaves converged == false and is not an error.
PropensityModel fit_multinomial_logit(const Matrix& features, std::span<const int> labels,
                                      int n_arms, const LearnerSpec& spec);

Vector predict_propensity(const PropensityModel& model, const Vector& x);
Matrix predict_propensity(const PropensityModel& model, const Matrix& x);

// Raises components below xi to xi and rescales the remaining components so
// the vector sums to one, repeating until none is below xi. Every component
// then also lies at or below 1 - xi. Vectors already inside [xi, 1 - xi] are
// returned unchanged, which makes the map idempotent. Requires J * xi < 1.
Vector clip_propensity(const Eigen::Ref<const Vector>& e, double xi);

// ---------------------------------------------------------------------------
// Learner contract. A learner fits on a training dataset and predicts for a
// block of evaluation rows in one call, which is all cross-fitting needs.

class OutcomeLearner {
 public:
  virtual ~OutcomeLearner() = default;
  // Returns x_eval.rows() x J predicted conditional means.
  virtual Matrix fit_predict(const Dataset& train, const Matrix& x_eval) const = 0;
};

class PropensityLearner {
 public:
  virtual ~PropensityLearner() = default;
  // Returns x_eval.rows() x J probability rows (unclipped).
  virtual Matrix fit_predict(const Dataset& train, const Matrix& x_eval) const = 0;
};

class LinearOutcomeLearner final : public OutcomeLearner {
 public:
  explicit LinearOutcomeLearner(double ridge = 0.0);
  Matrix fit_predict(const Dataset& train, const Matrix& x_eval) const override;

 private:
  double ridge_;
};

class MultinomialLogitLearner final : public PropensityLearner {
 public:
  explicit MultinomialLogitLearner(LearnerSpec spec = LearnerSpec::multinomial_logit());
  Matrix fit_predict(const Dataset& train, const Matrix& x_eval) const override;

 private:
  LearnerSpec spec_;
};

struct NuisanceLearners {
  std::shared_ptr<const OutcomeLearner> outcome;
  std::shared_ptr<const PropensityLearner> propensity;

  // Linear outcome (ridge 0) and multinomial logit (ridge 1e-8, tol 1e-8, 100 iterations).
  static NuisanceLearners defaults();
  static NuisanceLearners from_specs(const LearnerSpec& outcome, const LearnerSpec& propensity);
};

// External learners are looked up by name when a spec has kind == plugin.
using OutcomeLearnerFactory =
    std::function<std::shared_ptr<const OutcomeLearner>(const LearnerSpec&)>;
using PropensityLearnerFactory =
    std::function<std::shared_ptr<const PropensityLearner>(const LearnerSpec&)>;

void register_outcome_learner(const std::string& name, OutcomeLearnerFactory factory);
void register_propensity_learner(const std::string& name, PropensityLearnerFactory factory);

std::shared_ptr<const OutcomeLearner> make_outcome_learner(const LearnerSpec& spec);
std::shared_ptr<const PropensityLearner> make_propensity_learner(const LearnerSpec& spec);

}  // namespace gcf
