#include "gcf/crossfit.hpp"

#include "gcf/error.hpp"
#include "gcf/random.hpp"

#include <cmath>
#include <ostream>

namespace gcf {

FoldPlan::FoldPlan(int k, std::vector<int> assignment, std::uint64_t seed)
    : k_(k), assignment_(std::move(assignment)), seed_(seed) {
  if (k_ < 2) throw ArgumentError("K must be >= 2");
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k_), 0);
  for (const int f : assignment_) {
    if (f < 1 || f > k_) throw ArgumentError("fold index outside 1.." + std::to_string(k_));
    ++sizes[static_cast<std::size_t>(f - 1)];
  }
  for (int f = 1; f <= k_; ++f) {
    if (sizes[static_cast<std::size_t>(f - 1)] == 0) {
      throw ArgumentError("fold " + std::to_string(f) + " is empty");
    }
  }
}

std::vector<std::size_t> FoldPlan::members(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment_.size(); ++i) {
    if (assignment_[i] == k) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::complement(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment_.size(); ++i) {
    if (assignment_[i] != k) out.push_back(i);
  }
  return out;
}

std::size_t FoldPlan::fold_size(int k) const {
  std::size_t count = 0;
  for (const int f : assignment_) count += (f == k);
  return count;
}

FoldPlan make_folds(const Dataset& d, int k, std::uint64_t seed, bool stratified) {
  const auto n = d.n();
  if (k < 2) throw ArgumentError("K must be >= 2");
  if (static_cast<std::size_t>(k) > n) {
    throw ArgumentError("K = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);

  // Units are dealt round-robin in a shuffled order; with stratification the
  // order is arm by arm, so each arm spreads evenly and fold sizes still
  // differ by at most one.
  std::vector<std::size_t> order;
  order.reserve(n);
  if (stratified) {
    const auto summary = arm_counts(d);
    for (int j = 1; j <= d.n_arms(); ++j) {
      const auto count = summary.counts[static_cast<std::size_t>(j - 1)];
      if (count < static_cast<std::size_t>(k)) {
        throw ArgumentError("stratified folds need at least K = " + std::to_string(k) +
                            " units per arm; arm " + d.arm_name(j) + " has " +
                            std::to_string(count));
      }
    }
    for (int j = 1; j <= d.n_arms(); ++j) {
      std::vector<std::size_t> arm_units;
      for (std::size_t i = 0; i < n; ++i) {
        if (d.treatments()[i] == j) arm_units.push_back(i);
      }
      shuffle_in_place(std::span<std::size_t>(arm_units), rng);
      order.insert(order.end(), arm_units.begin(), arm_units.end());
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) order.push_back(i);
    shuffle_in_place(std::span<std::size_t>(order), rng);
  }

  std::vector<int> assignment(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos) {
    assignment[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k)) + 1;
  }
  return FoldPlan(k, std::move(assignment), seed);
}

int fold_of(const FoldPlan& plan, std::size_t i) {
  if (i >= plan.n()) {
    throw ArgumentError("unit index " + std::to_string(i) + " out of range (n = " +
                        std::to_string(plan.n()) + ")");
  }
  return plan.assignment()[i];
}

void write_folds_csv(const FoldPlan& plan, std::ostream& out) {
  out << "unit,fold\n";
  for (std::size_t i = 0; i < plan.n(); ++i) out << i << ',' << plan.assignment()[i] << '\n';
}

namespace {

void check_simplex_rows(const Matrix& e, const char* what) {
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    if (!e.row(i).allFinite() || e.row(i).minCoeff() < 0.0 ||
        std::abs(e.row(i).sum() - 1.0) > 1e-10) {
      throw NumericalError(std::string(what) + ": row " + std::to_string(i) +
                           " is not a probability vector");
    }
  }
}

void clip_rows(NuisancePredictions& np, double xi) {
  np.e_hat = np.e_raw;
  np.clipped.assign(static_cast<std::size_t>(np.e_raw.rows()), false);
  for (Eigen::Index i = 0; i < np.e_raw.rows(); ++i) {
    const Vector row = np.e_raw.row(i).transpose();
    const Vector clipped = clip_propensity(row, xi);
    if (clipped != row) {
      np.e_hat.row(i) = clipped.transpose();
      np.clipped[static_cast<std::size_t>(i)] = true;
    }
  }
}

void check_prediction_block(const Matrix& block, Eigen::Index rows, int J, const char* what) {
  if (block.rows() != rows || block.cols() != J) {
    throw NumericalError(std::string(what) + " learner returned a " +
                         std::to_string(block.rows()) + "x" + std::to_string(block.cols()) +
                         " block, expected " + std::to_string(rows) + "x" + std::to_string(J));
  }
  if (!block.allFinite()) throw NumericalError(std::string(what) + " learner returned non-finite values");
}

}  // namespace

NuisancePredictions NuisancePredictions::injected(Matrix mu, Matrix e) {
  if (mu.rows() != e.rows() || mu.cols() != e.cols()) {
    throw ArgumentError("injected nuisances: outcome and propensity shapes differ");
  }
  if (!mu.allFinite()) throw ArgumentError("injected nuisances: non-finite outcome values");
  check_simplex_rows(e, "injected propensities");
  NuisancePredictions np;
  np.mu_hat = std::move(mu);
  np.e_raw = e;
  np.e_hat = std::move(e);
  np.clipped.assign(static_cast<std::size_t>(np.e_hat.rows()), false);
  return np;
}

NuisancePredictions NuisancePredictions::from_raw(Matrix mu, Matrix e_raw, double xi) {
  if (mu.rows() != e_raw.rows() || mu.cols() != e_raw.cols()) {
    throw ArgumentError("nuisance predictions: outcome and propensity shapes differ");
  }
  check_simplex_rows(e_raw, "propensities");
  NuisancePredictions np;
  np.mu_hat = std::move(mu);
  np.e_raw = std::move(e_raw);
  clip_rows(np, xi);
  return np;
}

NuisancePredictions fit_out_of_fold(const Dataset& d, const FoldPlan& plan,
                                    const NuisanceLearners& learners, double xi) {
  if (!learners.outcome || !learners.propensity) throw ArgumentError("learners not set");
  if (plan.n() != d.n()) throw ArgumentError("fold plan size does not match dataset");
  const int J = d.n_arms();
  const auto n = static_cast<Eigen::Index>(d.n());
  NuisancePredictions np;
  np.mu_hat = Matrix::Zero(n, J);
  np.e_raw = Matrix::Zero(n, J);

  for (int k = 1; k <= plan.k(); ++k) {
    const auto train_rows = plan.complement(k);
    const auto eval_rows = plan.members(k);
    const Dataset train = d.subset(train_rows);
    const auto present = arm_counts(train);
    for (int j = 1; j <= J; ++j) {
      if (present.counts[static_cast<std::size_t>(j - 1)] == 0) {
        throw ValidationError("empty arm in training fold: training complement of fold " +
                              std::to_string(k) + " has no units in arm " + d.arm_name(j));
      }
    }
    Matrix x_eval(static_cast<Eigen::Index>(eval_rows.size()), d.covariates().cols());
    for (std::size_t r = 0; r < eval_rows.size(); ++r) {
      x_eval.row(static_cast<Eigen::Index>(r)) =
          d.covariates().row(static_cast<Eigen::Index>(eval_rows[r]));
    }
    const Matrix mu = learners.outcome->fit_predict(train, x_eval);
    const Matrix e = learners.propensity->fit_predict(train, x_eval);
    check_prediction_block(mu, x_eval.rows(), J, "outcome");
    check_prediction_block(e, x_eval.rows(), J, "propensity");
    check_simplex_rows(e, "propensity learner");
    for (std::size_t r = 0; r < eval_rows.size(); ++r) {
      const auto dst = static_cast<Eigen::Index>(eval_rows[r]);
      np.mu_hat.row(dst) = mu.row(static_cast<Eigen::Index>(r));
      np.e_raw.row(dst) = e.row(static_cast<Eigen::Index>(r));
    }
  }
  clip_rows(np, xi);
  return np;
}

NuisancePredictions fit_out_of_fold(const Dataset& d, const FoldPlan& plan,
                                    const LearnerSpec& outcome, const LearnerSpec& propensity,
                                    double xi) {
  return fit_out_of_fold(d, plan, NuisanceLearners::from_specs(outcome, propensity), xi);
}

NuisancePredictions fit_full_sample(const Dataset& d, const NuisanceLearners& learners, double xi) {
  if (!learners.outcome || !learners.propensity) throw ArgumentError("learners not set");
  const auto summary = arm_counts(d);
  for (const int j : summary.empty_arms()) {
    throw ValidationError("empty arm in training fold: arm " + d.arm_name(j) + " has no units");
  }
  NuisancePredictions np;
  const auto n = static_cast<Eigen::Index>(d.n());
  np.mu_hat = learners.outcome->fit_predict(d, d.covariates());
  np.e_raw = learners.propensity->fit_predict(d, d.covariates());
  check_prediction_block(np.mu_hat, n, d.n_arms(), "outcome");
  check_prediction_block(np.e_raw, n, d.n_arms(), "propensity");
  check_simplex_rows(np.e_raw, "propensity learner");
  clip_rows(np, xi);
  return np;
}

}  // namespace gcf
