#include "gcf/simulation.hpp"

#include "gcf/error.hpp"
#include "gcf/random.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace gcf {

namespace {

Matrix rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (const double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Matrix design12_alphas() {
  return rows_of({{-1.5, 1, 1, 1, 1, 1, 1}, {-2, 2, 3, 1, 2, 2, 2}, {2, 3, 1, 2, -1, -1, -1}});
}

Matrix design12_betas(double arm2_scale) {
  Matrix betas = rows_of({{0, 0, 0, 0, 0, 0, 0}, {0, 1, 1, 1, -1, 1, 1}, {0, 1, 1, 1, 1, 1, 1}});
  betas.row(1) *= arm2_scale;
  betas.row(2) *= 0.1;
  return betas;
}

const Eigen::Matrix3d& normal_block_factor() {
  static const Eigen::Matrix3d factor = [] {
    Eigen::Matrix3d sigma;
    sigma << 2.0, 1.0, -1.0, 1.0, 1.0, -0.5, -1.0, -0.5, 1.0;
    const Eigen::LLT<Eigen::Matrix3d> llt(sigma);
    if (llt.info() != Eigen::Success) throw NumericalError("covariate covariance is not positive definite");
    return Eigen::Matrix3d(llt.matrixL());
  }();
  return factor;
}

Matrix augmented(const Matrix& x) {
  Matrix design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

class TrueOutcomeLearner final : public OutcomeLearner {
 public:
  explicit TrueOutcomeLearner(SimulationDesign design) : design_(std::move(design)) {}
  Matrix fit_predict(const Dataset&, const Matrix& x_eval) const override {
    return true_outcome_means(design_, x_eval);
  }

 private:
  SimulationDesign design_;
};

class TruePropensityLearner final : public PropensityLearner {
 public:
  explicit TruePropensityLearner(SimulationDesign design) : design_(std::move(design)) {}
  Matrix fit_predict(const Dataset&, const Matrix& x_eval) const override {
    return true_propensities(design_, x_eval);
  }

 private:
  SimulationDesign design_;
};

}  // namespace

void SimulationDesign::validate() const {
  if (n_arms < 2) throw ArgumentError("design: at least two arms required");
  const auto width = kSimulatedCovariates + 1;
  if (alphas.rows() != n_arms || alphas.cols() != width) {
    throw ArgumentError("design: alphas must be " + std::to_string(n_arms) + " x " +
                        std::to_string(width));
  }
  if (betas.rows() != n_arms || betas.cols() != width) {
    throw ArgumentError("design: betas must be " + std::to_string(n_arms) + " x " +
                        std::to_string(width));
  }
  if (!alphas.allFinite() || !betas.allFinite()) throw ArgumentError("design: non-finite coefficients");
  if (n < 50) throw ArgumentError("design: N must be >= 50");
  if (reps < 1) throw ArgumentError("design: replications must be >= 1");
  if (folds < 2 || folds > 10) throw ArgumentError("design: folds must lie in 2..10");
  if (!(noise_sd >= 0.0)) throw ArgumentError("design: noise sd must be >= 0");
  if (!(xi > 0.0 && xi < 0.5)) throw ArgumentError("xi must lie in (0, 0.5)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  if (estimators.empty()) throw ArgumentError("design: no estimators selected");
  outcome_learner.validate();
  propensity_learner.validate();
}

bool SimulationDesign::uses(Method method) const {
  return std::find(estimators.begin(), estimators.end(), method) != estimators.end();
}

SimulationDesign design1_adequate() {
  SimulationDesign d;
  d.name = "design1-adequate";
  d.n_arms = 3;
  d.alphas = design12_alphas();
  d.betas = design12_betas(0.3);
  return d;
}

SimulationDesign design2_lack() {
  SimulationDesign d;
  d.name = "design2-lack";
  d.n_arms = 3;
  d.alphas = design12_alphas();
  d.betas = design12_betas(0.9);
  return d;
}

SimulationDesign design3_j6() {
  SimulationDesign d;
  d.name = "design3-j6";
  d.n_arms = 6;
  d.alphas = rows_of({{-1.5, 1, 1, 1, 1, 1, 1},
                      {-3, 2, 3, 1, 2, 2, 2},
                      {3, 3, 1, 2, -1, -1, 4},
                      {2.5, 4, 1, 2, -1, -1, -3},
                      {2, 5, 1, 2, -1, -1, -2},
                      {1.5, 6, 1, 2, -1, -1, -1}});
  Matrix betas = rows_of({{0, 0, 0, 0, 0, 0, 0},
                          {0, 1, 1, 2, 1, 1, 1},
                          {0, 1, 1, 1, 1, 1, -5},
                          {0, 1, 1, 1, 1, 1, 5},
                          {0, 1, 1, 1, -2, 1, 1},
                          {0, 1, 1, 1, -2, -1, 1}});
  const double scale[] = {0.0, 0.2, 0.3, 0.4, 0.5, 0.6};
  for (Eigen::Index j = 0; j < 6; ++j) betas.row(j) *= scale[j];
  d.betas = betas;
  return d;
}

std::vector<std::string> builtin_design_names() {
  return {"design1-adequate", "design2-lack", "design3-j6"};
}

SimulationDesign builtin_design(const std::string& name) {
  if (name == "design1-adequate") return design1_adequate();
  if (name == "design2-lack") return design2_lack();
  if (name == "design3-j6") return design3_j6();
  std::string valid;
  for (const auto& known : builtin_design_names()) valid += (valid.empty() ? "" : ", ") + known;
  throw ArgumentError("unknown design '" + name + "'; valid names: " + valid);
}

Vector covariate_means() {
  Vector m(kSimulatedCovariates + 1);
  m << 1.0, 2.0, 1.0, 1.0, 0.0, 1.0, 0.5;
  return m;
}

Matrix sample_covariates(std::size_t n, std::mt19937_64& rng) {
  const auto& factor = normal_block_factor();
  const Eigen::Vector3d mean(2.0, 1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-3.0, 3.0);
  std::bernoulli_distribution coin(0.5);
  Matrix x(static_cast<Eigen::Index>(n), kSimulatedCovariates);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Vector3d z;
    z << normal(rng), normal(rng), normal(rng);
    const Eigen::Vector3d block = mean + factor * z;
    const double chi = normal(rng);
    x(i, 0) = block[0];
    x(i, 1) = block[1];
    x(i, 2) = block[2];
    x(i, 3) = uniform(rng);
    x(i, 4) = chi * chi;
    x(i, 5) = coin(rng) ? 1.0 : 0.0;
  }
  return x;
}

Matrix true_propensities(const SimulationDesign& design, const Matrix& x) {
  Matrix scores = augmented(x) * design.betas.transpose();
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - top).exp().matrix();
    scores.row(i) /= scores.row(i).sum();
  }
  return scores;
}

Matrix true_outcome_means(const SimulationDesign& design, const Matrix& x) {
  return augmented(x) * design.alphas.transpose();
}

SimulatedData generate_dataset(const SimulationDesign& design, std::uint64_t seed) {
  design.validate();
  std::mt19937_64 rng(seed);
  const Matrix x = sample_covariates(design.n, rng);
  Matrix true_e = true_propensities(design, x);
  Matrix true_mu = true_outcome_means(design, x);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<int> z(design.n);
  Vector y(static_cast<Eigen::Index>(design.n));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double u = unit(rng);
    int arm = design.n_arms;
    double cumulative = 0.0;
    for (int j = 1; j < design.n_arms; ++j) {
      cumulative += true_e(i, j - 1);
      if (u < cumulative) {
        arm = j;
        break;
      }
    }
    z[static_cast<std::size_t>(i)] = arm;
    y[i] = true_mu(i, arm - 1) + design.noise_sd * noise(rng);
  }
  return {Dataset(x, std::move(z), std::move(y), design.n_arms), std::move(true_mu),
          std::move(true_e)};
}

Matrix true_ate(const SimulationDesign& design) {
  design.validate();
  const Vector arm_means = design.alphas * covariate_means();
  Matrix tau(design.n_arms, design.n_arms);
  for (Eigen::Index a = 0; a < tau.rows(); ++a) {
    for (Eigen::Index b = 0; b < tau.cols(); ++b) tau(a, b) = arm_means[a] - arm_means[b];
  }
  return tau;
}

Matrix efficiency_bound(const SimulationDesign& design, std::size_t draws, std::uint64_t seed) {
  design.validate();
  if (draws < 2) throw ArgumentError("efficiency bound needs at least two draws");
  const int J = design.n_arms;
  std::mt19937_64 rng(seed);
  const std::size_t chunk = 100000;
  // Accumulate shifted sums per pair for Var(mu_j - mu_j'), and E[1 / e_j].
  Matrix diff_sum = Matrix::Zero(J, J);
  Matrix diff_sq = Matrix::Zero(J, J);
  Vector inv_e_sum = Vector::Zero(J);
  std::size_t done = 0;
  while (done < draws) {
    const auto batch = std::min(chunk, draws - done);
    const Matrix x = sample_covariates(batch, rng);
    const Matrix mu = true_outcome_means(design, x);
    const Matrix e = true_propensities(design, x);
    inv_e_sum += e.cwiseInverse().colwise().sum().transpose();
    for (int a = 0; a < J; ++a) {
      for (int b = a + 1; b < J; ++b) {
        const Vector diff = mu.col(a) - mu.col(b);
        diff_sum(a, b) += diff.sum();
        diff_sq(a, b) += diff.squaredNorm();
      }
    }
    done += batch;
  }
  const auto m = static_cast<double>(draws);
  const double sigma2 = design.noise_sd * design.noise_sd;
  Matrix bound = Matrix::Zero(J, J);
  for (int a = 0; a < J; ++a) {
    for (int b = a + 1; b < J; ++b) {
      const double mean = diff_sum(a, b) / m;
      const double var = (diff_sq(a, b) - m * mean * mean) / (m - 1.0);
      bound(a, b) = bound(b, a) = var + sigma2 * (inv_e_sum[a] + inv_e_sum[b]) / m;
    }
  }
  return bound;
}

NuisanceLearners true_nuisance_learners(const SimulationDesign& design) {
  design.validate();
  return {std::make_shared<TrueOutcomeLearner>(design),
          std::make_shared<TruePropensityLearner>(design)};
}

std::uint64_t replication_seed(std::uint64_t base_seed, std::size_t rep_index) {
  return derive_seed(base_seed, rep_index);
}

const AteEstimate* ReplicationResult::find(Method method) const {
  for (const auto& est : estimates) {
    if (est.method() == method) return &est;
  }
  return nullptr;
}

ReplicationResult run_replication(const SimulationDesign& design, std::size_t rep_index,
                                  const NuisanceLearners& learners) {
  const auto seed = replication_seed(design.seed, rep_index);
  const auto sim = generate_dataset(design, seed);
  const auto& data = sim.data;
  EstimatorOptions options;
  options.alpha = design.alpha;
  options.interval = design.interval;

  ReplicationResult result;
  result.rep_index = rep_index;
  for (const auto method : design.estimators) {
    switch (method) {
      case Method::dif:
        result.estimates.push_back(dif_estimate(data, options));
        break;
      case Method::gaipw: {
        const auto np = fit_full_sample(data, learners, design.xi);
        result.estimates.push_back(gaipw_estimate(data, np, options));
        break;
      }
      case Method::gcf: {
        const auto plan = make_folds(data, design.folds, derive_seed(seed, 1), design.stratified);
        const auto np = fit_out_of_fold(data, plan, learners, design.xi);
        result.clipped_units = static_cast<std::size_t>(
            std::count(np.clipped.begin(), np.clipped.end(), true));
        result.estimates.push_back(gcf_estimate(data, plan, np, options));
        break;
      }
      case Method::oracle:
        result.estimates.push_back(oracle_gaipw(data, sim.true_mu, sim.true_e, options));
        break;
    }
  }
  return result;
}

ReplicationResult run_replication(const SimulationDesign& design, std::size_t rep_index) {
  return run_replication(design, rep_index,
                         NuisanceLearners::from_specs(design.outcome_learner,
                                                      design.propensity_learner));
}

std::vector<ReplicationOutcome> run_replications(const SimulationDesign& design,
                                                 const MonteCarloOptions& options) {
  design.validate();
  const auto learners = options.learners.value_or(
      NuisanceLearners::from_specs(design.outcome_learner, design.propensity_learner));
  std::vector<ReplicationOutcome> outcomes(design.reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto rep = next.fetch_add(1); rep < design.reps; rep = next.fetch_add(1)) {
      try {
        outcomes[rep].result = run_replication(design, rep, learners);
      } catch (const std::exception& err) {
        outcomes[rep].error = err.what();
      }
    }
  };
  unsigned threads = options.threads != 0 ? options.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(design.reps)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return outcomes;
}

const MetricsCell& MetricsReport::cell(Method method, PairIndex pair) const {
  for (const auto& c : cells) {
    if (c.method == method && c.pair == pair) return c;
  }
  throw ArgumentError("no metrics for " + to_string(method) + " " + to_string(pair));
}

double MetricsReport::failure_rate() const {
  return reps_requested == 0 ? 0.0
                             : static_cast<double>(reps_failed) / static_cast<double>(reps_requested);
}

MetricsReport summarize(const SimulationDesign& design,
                        const std::vector<ReplicationOutcome>& outcomes) {
  const Matrix truth = true_ate(design);
  const auto pairs = all_pairs(design.n_arms);

  MetricsReport report;
  report.design_name = design.name;
  report.n_arms = design.n_arms;
  report.n = design.n;
  report.reps_requested = outcomes.size();

  struct Sums {
    double err = 0.0, err2 = 0.0, covered = 0.0, width = 0.0, variance = 0.0;
    std::size_t count = 0;
  };
  std::vector<Sums> sums(design.estimators.size() * pairs.size());
  for (const auto& outcome : outcomes) {
    if (!outcome.result) {
      ++report.reps_failed;
      if (report.failures.size() < 10) report.failures.push_back(outcome.error);
      continue;
    }
    ++report.reps_succeeded;
    for (std::size_t m = 0; m < design.estimators.size(); ++m) {
      const auto* est = outcome.result->find(design.estimators[m]);
      if (est == nullptr) continue;
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [j, jp] = pairs[p];
        const double tau = truth(j - 1, jp - 1);
        const double err = est->estimate(j, jp) - tau;
        const auto [lo, hi] = est->ci(j, jp);
        auto& s = sums[m * pairs.size() + p];
        s.err += err;
        s.err2 += err * err;
        s.covered += (lo <= tau && tau <= hi) ? 1.0 : 0.0;
        s.width += hi - lo;
        s.variance += est->variance(j, jp);
        ++s.count;
      }
    }
  }
  if (report.reps_succeeded == 0) {
    throw NumericalError("all " + std::to_string(outcomes.size()) + " replications failed" +
                         (report.failures.empty() ? "" : ": " + report.failures.front()));
  }
  for (std::size_t m = 0; m < design.estimators.size(); ++m) {
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto& s = sums[m * pairs.size() + p];
      const auto count = static_cast<double>(s.count);
      MetricsCell c;
      c.method = design.estimators[m];
      c.pair = pairs[p];
      c.truth = truth(pairs[p].j - 1, pairs[p].j_prime - 1);
      c.count = s.count;
      c.bias = s.err / count;
      c.rmse = std::sqrt(s.err2 / count);
      c.coverage = s.covered / count;
      c.mean_ci_width = s.width / count;
      c.mean_variance = s.variance / count;
      report.cells.push_back(c);
    }
  }
  return report;
}

MetricsReport run_monte_carlo(const SimulationDesign& design, const MonteCarloOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  auto report = summarize(design, run_replications(design, options));
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace gcf
