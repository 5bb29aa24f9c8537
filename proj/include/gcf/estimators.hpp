#pragma once

#include "gcf/crossfit.hpp"
#include "gcf/data_model.hpp"
#include "gcf/nuisance.hpp"

#include <string>
#include <utility>
#include <vector>

namespace gcf {

enum class Method { dif, gaipw, gcf, oracle };

std::string to_string(Method method);
// Accepts "dif", "gaipw", "gcf", "oracle" (case-insensitive).
Method parse_method(const std::string& text);

// simultaneous: Bonferroni over all C(J,2) pairs (family level 1 - alpha).
// per_pair: each pair at its own level 1 - alpha.
enum class Interval { simultaneous, per_pair };

std::string to_string(Interval interval);
Interval parse_interval(const std::string& text);

struct EstimatorOptions {
  double alpha = 0.05;
  Interval interval = Interval::simultaneous;
  // Use 1 - e_j'(x) as the j' denominator, the literal two-arm form of the
  // cross-fitted summand. Off by default: e_j'(x) is the consistent choice for J > 2.
  bool binary_style_denominator = false;
};

// Pairwise effects for every ordered arm pair. Entry (j, j') holds
// tau(j, j') = E[Y(j) - Y(j')]; the matrix is exactly antisymmetric and the
// per-pair variance is on the sqrt(n)-scale (the CI divides by sqrt(n)).
class AteEstimate {
 public:
  AteEstimate(Method method, int n_arms, std::size_t n_used, double alpha,
              Interval interval = Interval::simultaneous);

  // Stores the canonical pair and its mirror image (negated, flipped interval).
  void set_pair(PairIndex pair, double estimate, double variance, double lower, double upper);

  Method method() const { return method_; }
  int n_arms() const { return n_arms_; }
  std::size_t n_used() const { return n_used_; }
  double alpha() const { return alpha_; }
  Interval interval() const { return interval_; }
  double multiplier() const;

  double estimate(int j, int j_prime) const;
  double variance(int j, int j_prime) const;
  double std_error(int j, int j_prime) const;
  std::pair<double, double> ci(int j, int j_prime) const;

  const Matrix& estimates() const { return estimates_; }
  const Matrix& variances() const { return variances_; }
  const Matrix& ci_lower() const { return lower_; }
  const Matrix& ci_upper() const { return upper_; }

 private:
  void check_arm(int j) const;

  Method method_;
  int n_arms_;
  std::size_t n_used_;
  double alpha_;
  Interval interval_;
  Matrix estimates_;
  Matrix variances_;
  Matrix lower_;
  Matrix upper_;
};

// Bonferroni-corrected normal multiplier: Phi^-1(1 - alpha / (2 * C(J,2))).
double simultaneous_multiplier(int n_arms, double alpha);

// Phi^-1(1 - alpha / 2) or the simultaneous multiplier.
double interval_multiplier(int n_arms, double alpha, Interval interval);
// tau_hat -/+ multiplier * sqrt(v_hat) / sqrt(n).
std::pair<double, double> simultaneous_ci(double tau_hat, double v_hat, std::size_t n, int n_arms,
                                          double alpha);
std::pair<double, double> wald_ci(double tau_hat, double v_hat, std::size_t n, int n_arms,
                                  double alpha, Interval interval);

// (1 / (n - 1)) * sum_i (s_i - tau_hat)^2
double variance_estimate(const Vector& s, double tau_hat);

// Difference of arm means with variance n * (s_j^2/n_j + s_j'^2/n_j').
AteEstimate dif_estimate(const Dataset& d, const EstimatorOptions& options);
AteEstimate dif_estimate(const Dataset& d, double alpha = 0.05);

// One-arm augmented terms: column j holds mu_j(X_i) + 1{Z_i=j}(Y_i - mu_j(X_i)) / e_j(X_i).
Matrix arm_terms(const Dataset& d, const NuisancePredictions& np);

// Per-unit doubly robust summand S_i for a pair, evaluated directly from the
// nuisance values of unit i.
Vector pseudo_outcome(const Dataset& d, const NuisancePredictions& np, PairIndex pair,
                      bool binary_style_denominator = false);

// Fold-size-weighted average of the per-fold means of the one-arm terms (length J).
Vector gcf_arm_effects(const Dataset& d, const FoldPlan& plan, const NuisancePredictions& np);

// Cross-fitted estimator. np must come from fit_out_of_fold with the same plan
// (or be fold-independent, e.g. injected true nuisances).
AteEstimate gcf_estimate(const Dataset& d, const FoldPlan& plan, const NuisancePredictions& np,
                         const EstimatorOptions& options = {});

// Same summand with full-sample nuisance predictions.
AteEstimate gaipw_estimate(const Dataset& d, const NuisancePredictions& np,
                           const EstimatorOptions& options = {});
AteEstimate gaipw_estimate(const Dataset& d, const OutcomeModel& om, const PropensityModel& pm,
                           double alpha, double xi);

// Infeasible estimator with the true nuisance functions; no clipping.
AteEstimate oracle_gaipw(const Dataset& d, const Matrix& true_mu, const Matrix& true_e,
                         const EstimatorOptions& options);
AteEstimate oracle_gaipw(const Dataset& d, const Matrix& true_mu, const Matrix& true_e,
                         double alpha = 0.05);

}  // namespace gcf
