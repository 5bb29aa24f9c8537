#pragma once

#include "gcf/crossfit.hpp"
#include "gcf/estimators.hpp"
#include "gcf/nuisance.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gcf {

// Six covariates: (X1, X2, X3) trivariate normal, X4 ~ U[-3, 3], X5 ~ chi^2_1,
// X6 ~ Bernoulli(0.5). Coefficient rows act on (1, X1, ..., X6).
inline constexpr int kSimulatedCovariates = 6;

struct SimulationDesign {
  std::string name = "custom";
  int n_arms = 3;
  std::size_t n = 1500;
  Matrix alphas;  // J x 7, outcome coefficients per arm
  Matrix betas;   // J x 7, multinomial-logit scores per arm
  double noise_sd = 1.0;
  std::size_t reps = 2000;
  int folds = 3;
  std::vector<Method> estimators{Method::dif, Method::gaipw, Method::gcf};
  std::uint64_t seed = 1;
  double xi = 1e-3;
  double alpha = 0.05;
  // Coverage is judged on these intervals; per-pair 1 - alpha by default.
  Interval interval = Interval::per_pair;
  bool stratified = true;
  LearnerSpec outcome_learner = LearnerSpec::linear();
  LearnerSpec propensity_learner = LearnerSpec::multinomial_logit();

  // Throws ArgumentError when any invariant fails.
  void validate() const;
  bool uses(Method method) const;
};

SimulationDesign design1_adequate();
SimulationDesign design2_lack();
SimulationDesign design3_j6();
std::vector<std::string> builtin_design_names();
// Throws ArgumentError listing the valid names.
SimulationDesign builtin_design(const std::string& name);

// E[(1, X1, ..., X6)] = (1, 2, 1, 1, 0, 1, 0.5).
Vector covariate_means();

// n x 6 draw from the covariate law.
Matrix sample_covariates(std::size_t n, std::mt19937_64& rng);

// n x J: rows of softmax(X~ beta_j) and X~ alpha_j for the design.
Matrix true_propensities(const SimulationDesign& design, const Matrix& x);
Matrix true_outcome_means(const SimulationDesign& design, const Matrix& x);

struct SimulatedData {
  Dataset data;
  Matrix true_mu;
  Matrix true_e;
};

SimulatedData generate_dataset(const SimulationDesign& design, std::uint64_t seed);

// tau(j, j') = E[X~]' (alpha_j - alpha_j'), antisymmetric J x J.
Matrix true_ate(const SimulationDesign& design);

// Semiparametric variance bound per pair,
//   Var[mu_j - mu_j'] + E[sigma^2 / e_j] + E[sigma^2 / e_j'],
// by Monte Carlo over `draws` covariate vectors. Symmetric J x J, zero diagonal.
Matrix efficiency_bound(const SimulationDesign& design, std::size_t draws, std::uint64_t seed);

// Learners that ignore their training data and return the design's true
// nuisance functions.
NuisanceLearners true_nuisance_learners(const SimulationDesign& design);

std::uint64_t replication_seed(std::uint64_t base_seed, std::size_t rep_index);

struct ReplicationResult {
  std::size_t rep_index = 0;
  std::vector<AteEstimate> estimates;  // in design.estimators order
  std::size_t clipped_units = 0;       // cross-fitted rows touched by clipping

  const AteEstimate* find(Method method) const;
};

struct ReplicationOutcome {
  std::optional<ReplicationResult> result;
  std::string error;  // set when the replication failed
};

struct MonteCarloOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  // Overrides the learners built from the design's specs.
  std::optional<NuisanceLearners> learners;
};

// One seeded draw plus every estimator in the design.
ReplicationResult run_replication(const SimulationDesign& design, std::size_t rep_index,
                                  const NuisanceLearners& learners);
ReplicationResult run_replication(const SimulationDesign& design, std::size_t rep_index);

// All replications; entry r holds replication r regardless of scheduling.
std::vector<ReplicationOutcome> run_replications(const SimulationDesign& design,
                                                 const MonteCarloOptions& options = {});

struct MetricsCell {
  Method method = Method::gcf;
  PairIndex pair;
  double truth = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
  double mean_ci_width = 0.0;
  double mean_variance = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  std::string design_name;
  int n_arms = 0;
  std::size_t n = 0;
  std::size_t reps_requested = 0;
  std::size_t reps_succeeded = 0;
  std::size_t reps_failed = 0;
  double wall_clock_seconds = 0.0;
  std::vector<MetricsCell> cells;  // estimator-major, pairs in canonical order
  std::vector<std::string> failures;  // first few failure messages

  const MetricsCell& cell(Method method, PairIndex pair) const;
  double failure_rate() const;
};

// Order-independent aggregation: sums over successful replications taken in
// replication order. Throws NumericalError when every replication failed.
MetricsReport summarize(const SimulationDesign& design,
                        const std::vector<ReplicationOutcome>& outcomes);

MetricsReport run_monte_carlo(const SimulationDesign& design, const MonteCarloOptions& options = {});

}  // namespace gcf
