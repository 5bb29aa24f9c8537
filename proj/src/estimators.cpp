#include "gcf/estimators.hpp"

#include "gcf/error.hpp"
#include "gcf/normal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace gcf {

std::string to_string(Method method) {
  switch (method) {
    case Method::dif: return "DIF";
    case Method::gaipw: return "GAIPW";
    case Method::gcf: return "GCF";
    case Method::oracle: return "ORACLE";
  }
  return "UNKNOWN";
}

Method parse_method(const std::string& text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "dif") return Method::dif;
  if (lower == "gaipw") return Method::gaipw;
  if (lower == "gcf") return Method::gcf;
  if (lower == "oracle") return Method::oracle;
  throw ArgumentError("unknown estimator '" + text + "' (expected dif, gaipw, gcf, oracle)");
}

std::string to_string(Interval interval) {
  return interval == Interval::simultaneous ? "simultaneous" : "per-pair";
}

Interval parse_interval(const std::string& text) {
  if (text == "simultaneous") return Interval::simultaneous;
  if (text == "per-pair") return Interval::per_pair;
  throw ArgumentError("unknown interval '" + text + "' (expected simultaneous, per-pair)");
}

AteEstimate::AteEstimate(Method method, int n_arms, std::size_t n_used, double alpha,
                         Interval interval)
    : method_(method),
      n_arms_(n_arms),
      n_used_(n_used),
      alpha_(alpha),
      interval_(interval),
      estimates_(Matrix::Zero(n_arms, n_arms)),
      variances_(Matrix::Zero(n_arms, n_arms)),
      lower_(Matrix::Zero(n_arms, n_arms)),
      upper_(Matrix::Zero(n_arms, n_arms)) {
  if (n_arms < 2) throw ArgumentError("at least two arms required");
}

void AteEstimate::check_arm(int j) const {
  if (j < 1 || j > n_arms_) throw ArgumentError("arm outside 1.." + std::to_string(n_arms_));
}

void AteEstimate::set_pair(PairIndex pair, double estimate, double variance, double lower,
                           double upper) {
  check_arm(pair.j);
  check_arm(pair.j_prime);
  if (pair.j == pair.j_prime) throw ArgumentError("pair arms must differ");
  const auto a = pair.j - 1;
  const auto b = pair.j_prime - 1;
  estimates_(a, b) = estimate;
  estimates_(b, a) = -estimate;
  variances_(a, b) = variances_(b, a) = variance;
  lower_(a, b) = lower;
  upper_(a, b) = upper;
  lower_(b, a) = -upper;
  upper_(b, a) = -lower;
}

double AteEstimate::estimate(int j, int j_prime) const {
  check_arm(j);
  check_arm(j_prime);
  return estimates_(j - 1, j_prime - 1);
}

double AteEstimate::variance(int j, int j_prime) const {
  check_arm(j);
  check_arm(j_prime);
  return variances_(j - 1, j_prime - 1);
}

double AteEstimate::multiplier() const { return interval_multiplier(n_arms_, alpha_, interval_); }

double AteEstimate::std_error(int j, int j_prime) const {
  return std::sqrt(variance(j, j_prime) / static_cast<double>(n_used_));
}

std::pair<double, double> AteEstimate::ci(int j, int j_prime) const {
  check_arm(j);
  check_arm(j_prime);
  return {lower_(j - 1, j_prime - 1), upper_(j - 1, j_prime - 1)};
}

double simultaneous_multiplier(int n_arms, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  if (n_arms < 2) throw ArgumentError("at least two arms required");
  const double n_pairs = 0.5 * n_arms * (n_arms - 1);
  return normal_quantile(1.0 - alpha / (2.0 * n_pairs));
}

double interval_multiplier(int n_arms, double alpha, Interval interval) {
  if (interval == Interval::simultaneous) return simultaneous_multiplier(n_arms, alpha);
  return simultaneous_multiplier(2, alpha);
}

std::pair<double, double> wald_ci(double tau_hat, double v_hat, std::size_t n, int n_arms,
                                  double alpha, Interval interval) {
  if (!(v_hat >= 0.0)) throw ArgumentError("variance must be >= 0");
  if (n == 0) throw ArgumentError("n must be >= 1");
  const double half =
      interval_multiplier(n_arms, alpha, interval) * std::sqrt(v_hat) / std::sqrt(static_cast<double>(n));
  return {tau_hat - half, tau_hat + half};
}

std::pair<double, double> simultaneous_ci(double tau_hat, double v_hat, std::size_t n, int n_arms,
                                          double alpha) {
  return wald_ci(tau_hat, v_hat, n, n_arms, alpha, Interval::simultaneous);
}

double variance_estimate(const Vector& s, double tau_hat) {
  if (s.size() < 2) throw ArgumentError("variance estimate needs n >= 2");
  return (s.array() - tau_hat).square().sum() / static_cast<double>(s.size() - 1);
}

AteEstimate dif_estimate(const Dataset& d, double alpha) {
  EstimatorOptions options;
  options.alpha = alpha;
  return dif_estimate(d, options);
}

AteEstimate dif_estimate(const Dataset& d, const EstimatorOptions& options) {
  const auto summary = arm_counts(d);
  if (const auto empty = summary.empty_arms(); !empty.empty()) {
    throw ValidationError("empty arm " + d.arm_name(empty.front()) + ": DIF undefined");
  }
  const int J = d.n_arms();
  std::vector<double> sq(static_cast<std::size_t>(J), 0.0);
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto arm = static_cast<std::size_t>(d.treatments()[i] - 1);
    const double dev = d.outcomes()[static_cast<Eigen::Index>(i)] - *summary.means[arm];
    sq[arm] += dev * dev;
  }
  // Singleton arms contribute zero sample variance.
  std::vector<double> var_over_n(static_cast<std::size_t>(J), 0.0);
  for (std::size_t a = 0; a < sq.size(); ++a) {
    const auto count = static_cast<double>(summary.counts[a]);
    var_over_n[a] = summary.counts[a] > 1 ? sq[a] / (count - 1.0) / count : 0.0;
  }
  const auto n = d.n();
  AteEstimate est(Method::dif, J, n, options.alpha, options.interval);
  for (const auto& pair : all_pairs(J)) {
    const auto a = static_cast<std::size_t>(pair.j - 1);
    const auto b = static_cast<std::size_t>(pair.j_prime - 1);
    const double tau = *summary.means[a] - *summary.means[b];
    const double v = static_cast<double>(n) * (var_over_n[a] + var_over_n[b]);
    const auto [lo, hi] = wald_ci(tau, v, n, J, options.alpha, options.interval);
    est.set_pair(pair, tau, v, lo, hi);
  }
  return est;
}

namespace {

void check_shapes(const Dataset& d, const NuisancePredictions& np) {
  if (np.n() != d.n() || np.n_arms() != d.n_arms() || np.e_hat.rows() != np.mu_hat.rows() ||
      np.e_hat.cols() != np.mu_hat.cols()) {
    throw ArgumentError("nuisance predictions do not match the dataset shape");
  }
}

double checked_denominator(double value, std::size_t unit) {
  if (!(value > 0.0)) {
    throw NumericalError("zero propensity denominator at unit " + std::to_string(unit) +
                         "; clip propensities first");
  }
  return value;
}

// Column j: mu_j + 1{Z=j} (Y - mu_j) / w_j with w = e (or 1 - e).
Matrix augmented_terms(const Dataset& d, const NuisancePredictions& np, bool complement) {
  check_shapes(d, np);
  Matrix terms = np.mu_hat;
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto col = static_cast<Eigen::Index>(d.treatments()[i] - 1);
    const double e = np.e_hat(row, col);
    const double w = checked_denominator(complement ? 1.0 - e : e, i);
    terms(row, col) += (d.outcomes()[row] - np.mu_hat(row, col)) / w;
  }
  return terms;
}

double fold_weighted_mean(const Vector& s, const FoldPlan& plan) {
  const auto n = static_cast<double>(s.size());
  std::vector<double> sums(static_cast<std::size_t>(plan.k()), 0.0);
  std::vector<double> sizes(static_cast<std::size_t>(plan.k()), 0.0);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const auto k = static_cast<std::size_t>(plan.assignment()[static_cast<std::size_t>(i)] - 1);
    sums[k] += s[i];
    sizes[k] += 1.0;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < sums.size(); ++k) total += (sizes[k] / n) * (sums[k] / sizes[k]);
  return total;
}

// Shared driver for the augmented estimators: one pass over the one-arm terms,
// then every canonical pair as a difference of columns.
AteEstimate augmented_estimate(Method method, const Dataset& d, const NuisancePredictions& np,
                               const FoldPlan* plan, const EstimatorOptions& options) {
  const int J = d.n_arms();
  const auto n = d.n();
  if (n < 2) throw ArgumentError("estimation needs n >= 2");
  const auto summary = arm_counts(d);
  if (const auto empty = summary.empty_arms(); !empty.empty()) {
    throw ValidationError("empty arm " + d.arm_name(empty.front()) + ": estimation undefined");
  }
  const Matrix terms = augmented_terms(d, np, false);
  Matrix complement_terms;
  if (options.binary_style_denominator) complement_terms = augmented_terms(d, np, true);
  const Matrix& subtrahend = options.binary_style_denominator ? complement_terms : terms;

  AteEstimate est(method, J, n, options.alpha, options.interval);
  for (const auto& pair : all_pairs(J)) {
    const Vector s = terms.col(pair.j - 1) - subtrahend.col(pair.j_prime - 1);
    const double pooled = s.mean();
    double tau = pooled;
    if (plan != nullptr) {
      tau = fold_weighted_mean(s, *plan);
      if (std::abs(tau - pooled) > 1e-12 * std::max(1.0, std::abs(pooled))) {
        throw NumericalError("fold-weighted and pooled means disagree for pair " + to_string(pair));
      }
    }
    const double v = variance_estimate(s, tau);
    const auto [lo, hi] = wald_ci(tau, v, n, J, options.alpha, options.interval);
    est.set_pair(pair, tau, v, lo, hi);
  }
  return est;
}

}  // namespace

Matrix arm_terms(const Dataset& d, const NuisancePredictions& np) {
  return augmented_terms(d, np, false);
}

Vector pseudo_outcome(const Dataset& d, const NuisancePredictions& np, PairIndex pair,
                      bool binary_style_denominator) {
  check_shapes(d, np);
  const int j = pair.j;
  const int jp = pair.j_prime;
  if (j == jp || j < 1 || jp < 1 || j > d.n_arms() || jp > d.n_arms()) {
    throw ArgumentError("invalid pair " + to_string(pair));
  }
  Vector s(static_cast<Eigen::Index>(d.n()));
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double mu_j = np.mu_hat(r, j - 1);
    const double mu_jp = np.mu_hat(r, jp - 1);
    const double y = d.outcomes()[r];
    const int z = d.treatments()[i];
    double value = mu_j - mu_jp;
    if (z == j) value += (y - mu_j) / checked_denominator(np.e_hat(r, j - 1), i);
    if (z == jp) {
      const double e = np.e_hat(r, jp - 1);
      value -= (y - mu_jp) / checked_denominator(binary_style_denominator ? 1.0 - e : e, i);
    }
    s[r] = value;
  }
  return s;
}

Vector gcf_arm_effects(const Dataset& d, const FoldPlan& plan, const NuisancePredictions& np) {
  if (plan.n() != d.n()) throw ArgumentError("fold plan size does not match dataset");
  const Matrix terms = arm_terms(d, np);
  Vector effects(terms.cols());
  for (Eigen::Index j = 0; j < terms.cols(); ++j) effects[j] = fold_weighted_mean(terms.col(j), plan);
  return effects;
}

AteEstimate gcf_estimate(const Dataset& d, const FoldPlan& plan, const NuisancePredictions& np,
                         const EstimatorOptions& options) {
  if (plan.n() != d.n()) throw ArgumentError("fold plan size does not match dataset");
  return augmented_estimate(Method::gcf, d, np, &plan, options);
}

AteEstimate gaipw_estimate(const Dataset& d, const NuisancePredictions& np,
                           const EstimatorOptions& options) {
  return augmented_estimate(Method::gaipw, d, np, nullptr, options);
}

AteEstimate gaipw_estimate(const Dataset& d, const OutcomeModel& om, const PropensityModel& pm,
                           double alpha, double xi) {
  const auto np = NuisancePredictions::from_raw(om.predict_all(d.covariates()),
                                                predict_propensity(pm, d.covariates()), xi);
  EstimatorOptions options;
  options.alpha = alpha;
  return gaipw_estimate(d, np, options);
}

AteEstimate oracle_gaipw(const Dataset& d, const Matrix& true_mu, const Matrix& true_e,
                         double alpha) {
  EstimatorOptions options;
  options.alpha = alpha;
  return oracle_gaipw(d, true_mu, true_e, options);
}

AteEstimate oracle_gaipw(const Dataset& d, const Matrix& true_mu, const Matrix& true_e,
                         const EstimatorOptions& options) {
  NuisancePredictions np;
  try {
    np = NuisancePredictions::injected(true_mu, true_e);
  } catch (const NumericalError& err) {
    throw ValidationError(std::string("oracle: ") + err.what());
  }
  return augmented_estimate(Method::oracle, d, np, nullptr, options);
}

}  // namespace gcf
