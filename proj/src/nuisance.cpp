#include "gcf/nuisance.hpp"

#include "gcf/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

namespace gcf {

LearnerSpec LearnerSpec::linear(double ridge) {
  LearnerSpec spec;
  spec.kind = Kind::linear;
  spec.ridge = ridge;
  return spec;
}

LearnerSpec LearnerSpec::multinomial_logit(double ridge, int max_iterations, double tolerance) {
  LearnerSpec spec;
  spec.kind = Kind::multinomial_logit;
  spec.ridge = ridge;
  spec.max_iterations = max_iterations;
  spec.tolerance = tolerance;
  return spec;
}

LearnerSpec LearnerSpec::plugin(std::string name) {
  LearnerSpec spec;
  spec.kind = Kind::plugin;
  spec.plugin_name = std::move(name);
  return spec;
}

void LearnerSpec::validate() const {
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ArgumentError("ridge must be >= 0");
  if (!(tolerance > 0.0)) throw ArgumentError("tolerance must be > 0");
  if (max_iterations < 1) throw ArgumentError("max iterations must be >= 1");
  if (kind == Kind::plugin && plugin_name.empty()) {
    throw ArgumentError("plug-in learner requires a name");
  }
}

std::string to_string(LearnerSpec::Kind kind) {
  switch (kind) {
    case LearnerSpec::Kind::linear: return "linear";
    case LearnerSpec::Kind::multinomial_logit: return "multinomial-logit";
    case LearnerSpec::Kind::plugin: return "plugin";
  }
  return "unknown";
}

LearnerSpec::Kind parse_learner_kind(const std::string& text) {
  if (text == "linear") return LearnerSpec::Kind::linear;
  if (text == "multinomial-logit" || text == "mlogit") return LearnerSpec::Kind::multinomial_logit;
  return LearnerSpec::Kind::plugin;
}

namespace {

Matrix with_intercept(const Matrix& x) {
  Matrix design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

}  // namespace

Vector fit_ols(const Matrix& features, const Vector& targets, double ridge) {
  if (!(ridge >= 0.0)) throw ArgumentError("ridge must be >= 0");
  const auto m = features.rows();
  const auto p = features.cols();
  if (m < 1) throw ArgumentError("fit_ols needs at least one row");
  if (targets.size() != m) throw ArgumentError("fit_ols: feature/target length mismatch");
  if (!features.allFinite() || !targets.allFinite()) throw ArgumentError("fit_ols: non-finite input");

  const Eigen::Index extra = ridge > 0.0 ? p : 0;
  Matrix a = Matrix::Zero(m + extra, p + 1);
  Vector b = Vector::Zero(m + extra);
  a.topRows(m) = with_intercept(features);
  b.head(m) = targets;
  if (extra > 0) {
    a.bottomRightCorner(p, p).diagonal().setConstant(std::sqrt(ridge));
  }
  const Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < p + 1) throw NumericalError("singular system; set ridge > 0");
  return qr.solve(b);
}

OutcomeModel::OutcomeModel(std::vector<std::optional<Vector>> coefficients,
                           std::vector<double> residual_variance)
    : coefficients_(std::move(coefficients)), residual_variance_(std::move(residual_variance)) {
  if (residual_variance_.size() != coefficients_.size()) {
    throw ArgumentError("OutcomeModel: one residual variance per arm required");
  }
  for (const auto& c : coefficients_) {
    if (c && !c->allFinite()) throw NumericalError("OutcomeModel: non-finite coefficients");
  }
}

bool OutcomeModel::has_arm(int j) const {
  return j >= 1 && j <= n_arms() && coefficients_[static_cast<std::size_t>(j - 1)].has_value();
}

const Vector& OutcomeModel::coefficients(int j) const {
  if (!has_arm(j)) {
    throw ValidationError("empty arm in training fold: no outcome model for arm " +
                          std::to_string(j));
  }
  return *coefficients_[static_cast<std::size_t>(j - 1)];
}

double OutcomeModel::residual_variance(int j) const {
  coefficients(j);
  return residual_variance_[static_cast<std::size_t>(j - 1)];
}

double OutcomeModel::predict(const Eigen::Ref<const Vector>& x, int j) const {
  const auto& c = coefficients(j);
  if (x.size() + 1 != c.size()) throw ArgumentError("OutcomeModel: covariate dimension mismatch");
  return c[0] + c.tail(x.size()).dot(x);
}

Matrix OutcomeModel::predict_all(const Matrix& x) const {
  Matrix out(x.rows(), n_arms());
  for (int j = 1; j <= n_arms(); ++j) {
    const auto& c = coefficients(j);
    if (x.cols() + 1 != c.size()) throw ArgumentError("OutcomeModel: covariate dimension mismatch");
    out.col(j - 1) = (x * c.tail(x.cols())).array() + c[0];
  }
  return out;
}

OutcomeModel fit_outcome_model(const Dataset& train, double ridge) {
  const int J = train.n_arms();
  std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(J));
  for (std::size_t i = 0; i < train.n(); ++i) {
    rows[static_cast<std::size_t>(train.treatments()[i] - 1)].push_back(i);
  }
  std::vector<std::optional<Vector>> coefficients;
  std::vector<double> residual_variance;
  for (const auto& arm_rows : rows) {
    if (arm_rows.empty()) {
      coefficients.emplace_back(std::nullopt);
      residual_variance.push_back(0.0);
      continue;
    }
    const auto m = static_cast<Eigen::Index>(arm_rows.size());
    Matrix x(m, train.covariates().cols());
    Vector y(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto src = static_cast<Eigen::Index>(arm_rows[static_cast<std::size_t>(r)]);
      x.row(r) = train.covariates().row(src);
      y[r] = train.outcomes()[src];
    }
    Vector coef = fit_ols(x, y, ridge);
    const Vector residual = y - ((x * coef.tail(x.cols())).array() + coef[0]).matrix();
    const auto dof = std::max<Eigen::Index>(1, m - coef.size());
    residual_variance.push_back(residual.squaredNorm() / static_cast<double>(dof));
    coefficients.emplace_back(std::move(coef));
  }
  return OutcomeModel(std::move(coefficients), std::move(residual_variance));
}

namespace {

// Row-wise log-softmax of scores with an appended zero column (reference arm).
Matrix log_probabilities(const Matrix& design, const Matrix& coefficients) {
  const auto m = design.rows();
  const auto free_arms = coefficients.rows();
  Matrix scores(m, free_arms + 1);
  scores.leftCols(free_arms) = design * coefficients.transpose();
  scores.col(free_arms).setZero();
  for (Eigen::Index i = 0; i < m; ++i) {
    const double top = scores.row(i).maxCoeff();
    const double lse = top + std::log((scores.row(i).array() - top).exp().sum());
    scores.row(i).array() -= lse;
  }
  return scores;
}

double penalized_log_likelihood(const Matrix& log_p, std::span<const int> labels,
                                const Matrix& coefficients, double ridge) {
  double ll = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ll += log_p(static_cast<Eigen::Index>(i), labels[i] - 1);
  }
  if (coefficients.cols() > 1) {
    ll -= ridge * coefficients.rightCols(coefficients.cols() - 1).squaredNorm();
  }
  return ll;
}

}  // namespace

PropensityModel fit_multinomial_logit(const Matrix& features, std::span<const int> labels,
                                      int n_arms, const LearnerSpec& spec) {
  spec.validate();
  if (n_arms < 2) throw ArgumentError("at least two arms required");
  const auto m = features.rows();
  if (static_cast<std::size_t>(m) != labels.size()) {
    throw ArgumentError("fit_multinomial_logit: feature/label length mismatch");
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_arms), 0);
  for (const int z : labels) {
    if (z < 1 || z > n_arms) throw ArgumentError("label outside 1.." + std::to_string(n_arms));
    ++counts[static_cast<std::size_t>(z - 1)];
  }
  for (int j = 1; j <= n_arms; ++j) {
    if (counts[static_cast<std::size_t>(j - 1)] == 0) {
      throw ValidationError("empty arm in training fold: arm " + std::to_string(j));
    }
  }

  const Matrix design = with_intercept(features);
  const auto width = design.cols();
  const auto free_arms = static_cast<Eigen::Index>(n_arms - 1);
  const auto q = free_arms * width;

  // Row-major flattening: parameter (arm a, column c) sits at a * width + c.
  auto unflatten = [&](const Vector& theta) {
    Matrix coef(free_arms, width);
    for (Eigen::Index a = 0; a < free_arms; ++a) coef.row(a) = theta.segment(a * width, width).transpose();
    return coef;
  };

  Matrix indicator = Matrix::Zero(m, free_arms);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int z = labels[static_cast<std::size_t>(i)];
    if (z < n_arms) indicator(i, z - 1) = 1.0;
  }

  PropensityModel model;
  Vector theta = Vector::Zero(q);
  Matrix coef = unflatten(theta);
  Matrix log_p = log_probabilities(design, coef);
  double ll = penalized_log_likelihood(log_p, labels, coef, spec.ridge);
  model.log_likelihood_trace.push_back(ll);

  for (int iter = 0;; ++iter) {
    const Matrix prob = log_p.leftCols(free_arms).array().exp().matrix();
    const Matrix resid = indicator - prob;
    Vector gradient(q);
    for (Eigen::Index a = 0; a < free_arms; ++a) {
      Vector g = design.transpose() * resid.col(a);
      g.tail(width - 1) -= 2.0 * spec.ridge * coef.row(a).tail(width - 1).transpose();
      gradient.segment(a * width, width) = g;
    }
    model.iterations = iter;
    model.gradient_norm = gradient.lpNorm<Eigen::Infinity>() / static_cast<double>(m);
    if (model.gradient_norm < spec.tolerance) {
      model.converged = true;
      break;
    }
    if (iter >= spec.max_iterations) break;

    // Observed information (negative Hessian), block (a, b) = X' diag(p_a (d_ab - p_b)) X.
    Matrix info = Matrix::Zero(q, q);
    for (Eigen::Index a = 0; a < free_arms; ++a) {
      for (Eigen::Index b = a; b < free_arms; ++b) {
        Vector w = -prob.col(a).cwiseProduct(prob.col(b));
        if (a == b) w += prob.col(a);
        const Matrix block = design.transpose() * (design.array().colwise() * w.array()).matrix();
        info.block(a * width, b * width, width, width) = block;
        if (a != b) info.block(b * width, a * width, width, width) = block.transpose();
      }
      for (Eigen::Index c = 1; c < width; ++c) info(a * width + c, a * width + c) += 2.0 * spec.ridge;
    }

    Eigen::LDLT<Matrix> ldlt(info);
    double jitter = 0.0;
    const double scale = 1.0 + info.diagonal().cwiseAbs().maxCoeff();
    while (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
           (ldlt.vectorD().array() <= 0.0).any()) {
      jitter = jitter == 0.0 ? 1e-10 * scale : jitter * 10.0;
      if (jitter > scale) throw NumericalError("multinomial logit: information matrix not invertible");
      ldlt.compute(info + jitter * Matrix::Identity(q, q));
    }
    const Vector step = ldlt.solve(gradient);

    // Step halving keeps the penalized log-likelihood non-decreasing.
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 50; ++halving, t *= 0.5) {
      const Vector candidate = theta + t * step;
      const Matrix cand_coef = unflatten(candidate);
      Matrix cand_log_p = log_probabilities(design, cand_coef);
      const double cand_ll = penalized_log_likelihood(cand_log_p, labels, cand_coef, spec.ridge);
      if (std::isfinite(cand_ll) && cand_ll >= ll) {
        theta = candidate;
        coef = cand_coef;
        log_p = std::move(cand_log_p);
        ll = cand_ll;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      model.iterations = iter + 1;
      break;
    }
    model.log_likelihood_trace.push_back(ll);
  }

  model.coefficients = coef;
  model.log_likelihood = ll;
  if (!model.coefficients.allFinite()) throw NumericalError("multinomial logit: non-finite coefficients");
  return model;
}

Vector predict_propensity(const PropensityModel& model, const Vector& x) {
  const auto free_arms = model.coefficients.rows();
  if (x.size() + 1 != model.coefficients.cols()) {
    throw ArgumentError("PropensityModel: covariate dimension mismatch");
  }
  Vector scores(free_arms + 1);
  scores.head(free_arms) = model.coefficients.col(0) + model.coefficients.rightCols(x.size()) * x;
  scores[free_arms] = 0.0;
  const double top = scores.maxCoeff();
  Vector e = (scores.array() - top).exp().matrix();
  return e / e.sum();
}

Matrix predict_propensity(const PropensityModel& model, const Matrix& x) {
  if (x.cols() + 1 != model.coefficients.cols()) {
    throw ArgumentError("PropensityModel: covariate dimension mismatch");
  }
  return log_probabilities(with_intercept(x), model.coefficients).array().exp().matrix();
}

Vector clip_propensity(const Eigen::Ref<const Vector>& e, double xi) {
  if (!(xi > 0.0 && xi < 0.5)) throw ArgumentError("xi must lie in (0, 0.5)");
  const auto J = e.size();
  if (static_cast<double>(J) * xi >= 1.0) throw ArgumentError("xi too large for the number of arms");
  if (e.minCoeff() >= xi && e.maxCoeff() <= 1.0 - xi) return e;

  // Only the lower bound is ever pinned: once every component is >= xi, each
  // is at most 1 - (J-1) xi <= 1 - xi.
  std::vector<bool> pinned(static_cast<std::size_t>(J), false);
  Vector out = e;
  for (;;) {
    bool changed = false;
    for (Eigen::Index j = 0; j < J; ++j) {
      if (!pinned[static_cast<std::size_t>(j)] && out[j] < xi) {
        pinned[static_cast<std::size_t>(j)] = true;
        changed = true;
      }
    }
    if (!changed) break;
    double fixed_mass = 0.0;
    double free_mass = 0.0;
    for (Eigen::Index j = 0; j < J; ++j) {
      if (pinned[static_cast<std::size_t>(j)]) fixed_mass += xi;
      else free_mass += e[j];
    }
    // J * xi < 1 keeps at least one component free with positive mass.
    for (Eigen::Index j = 0; j < J; ++j) {
      out[j] = pinned[static_cast<std::size_t>(j)] ? xi : e[j] * (1.0 - fixed_mass) / free_mass;
    }
  }
  return out;
}

LinearOutcomeLearner::LinearOutcomeLearner(double ridge) : ridge_(ridge) {
  if (!(ridge >= 0.0)) throw ArgumentError("ridge must be >= 0");
}

Matrix LinearOutcomeLearner::fit_predict(const Dataset& train, const Matrix& x_eval) const {
  return fit_outcome_model(train, ridge_).predict_all(x_eval);
}

MultinomialLogitLearner::MultinomialLogitLearner(LearnerSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

Matrix MultinomialLogitLearner::fit_predict(const Dataset& train, const Matrix& x_eval) const {
  const auto model =
      fit_multinomial_logit(train.covariates(), train.treatments(), train.n_arms(), spec_);
  return predict_propensity(model, x_eval);
}

namespace {

struct Registry {
  std::mutex mutex;
  std::map<std::string, OutcomeLearnerFactory> outcome;
  std::map<std::string, PropensityLearnerFactory> propensity;
};

Registry& registry() {
  static Registry instance;
  return instance;
}

}  // namespace

void register_outcome_learner(const std::string& name, OutcomeLearnerFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.outcome[name] = std::move(factory);
}

void register_propensity_learner(const std::string& name, PropensityLearnerFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.propensity[name] = std::move(factory);
}

std::shared_ptr<const OutcomeLearner> make_outcome_learner(const LearnerSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case LearnerSpec::Kind::linear:
      return std::make_shared<LinearOutcomeLearner>(spec.ridge);
    case LearnerSpec::Kind::multinomial_logit:
      throw ArgumentError("multinomial-logit is a propensity learner, not an outcome learner");
    case LearnerSpec::Kind::plugin: {
      auto& r = registry();
      std::lock_guard lock(r.mutex);
      const auto it = r.outcome.find(spec.plugin_name);
      if (it == r.outcome.end()) throw ArgumentError("unknown outcome learner '" + spec.plugin_name + "'");
      return it->second(spec);
    }
  }
  throw ArgumentError("unknown learner kind");
}

std::shared_ptr<const PropensityLearner> make_propensity_learner(const LearnerSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case LearnerSpec::Kind::multinomial_logit:
      return std::make_shared<MultinomialLogitLearner>(spec);
    case LearnerSpec::Kind::linear:
      throw ArgumentError("linear is an outcome learner, not a propensity learner");
    case LearnerSpec::Kind::plugin: {
      auto& r = registry();
      std::lock_guard lock(r.mutex);
      const auto it = r.propensity.find(spec.plugin_name);
      if (it == r.propensity.end()) {
        throw ArgumentError("unknown propensity learner '" + spec.plugin_name + "'");
      }
      return it->second(spec);
    }
  }
  throw ArgumentError("unknown learner kind");
}

NuisanceLearners NuisanceLearners::defaults() {
  return from_specs(LearnerSpec::linear(), LearnerSpec::multinomial_logit());
}

NuisanceLearners NuisanceLearners::from_specs(const LearnerSpec& outcome,
                                              const LearnerSpec& propensity) {
  return {make_outcome_learner(outcome), make_propensity_learner(propensity)};
}

}  // namespace gcf
