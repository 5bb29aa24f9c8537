#pragma once

#include "gcf/data_model.hpp"
#include "gcf/nuisance.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace gcf {

// Partition of units 0..n-1 into folds 1..K.
class FoldPlan {
 public:
  FoldPlan(int k, std::vector<int> assignment, std::uint64_t seed);

  int k() const { return k_; }
  std::size_t n() const { return assignment_.size(); }
  std::uint64_t seed() const { return seed_; }
  const std::vector<int>& assignment() const { return assignment_; }

  // Units of fold k (1-based), ascending.
  std::vector<std::size_t> members(int k) const;
  // Units outside fold k, ascending.
  std::vector<std::size_t> complement(int k) const;
  std::size_t fold_size(int k) const;

 private:
  int k_;
  std::vector<int> assignment_;
  std::uint64_t seed_;
};

// Random near-equal split; with stratified == true the split is done within
// each arm so that every fold's training complement sees every arm.
FoldPlan make_folds(const Dataset& d, int k, std::uint64_t seed, bool stratified = true);

// The fold containing unit i (0-based unit index, 1-based fold).
int fold_of(const FoldPlan& plan, std::size_t i);

void write_folds_csv(const FoldPlan& plan, std::ostream& out);

// Per-unit nuisance values. For cross-fitted predictions, row i comes from
// models trained without fold t(i).
struct NuisancePredictions {
  Matrix mu_hat;  // n x J
  Matrix e_hat;   // n x J, clipped rows (these enter the estimators)
  Matrix e_raw;   // n x J, rows before clipping
  std::vector<bool> clipped;

  std::size_t n() const { return static_cast<std::size_t>(mu_hat.rows()); }
  int n_arms() const { return static_cast<int>(mu_hat.cols()); }

  // Takes values as given with no clipping; rows of e must lie on the
  // simplex within 1e-10. Used to inject known nuisance functions.
  static NuisancePredictions injected(Matrix mu, Matrix e);
  // Clips each propensity row with clip_propensity(., xi).
  static NuisancePredictions from_raw(Matrix mu, Matrix e_raw, double xi);
};

// Cross-fitted nuisance predictions. Throws ValidationError naming the fold
// and arm when a training complement lacks an arm.
NuisancePredictions fit_out_of_fold(const Dataset& d, const FoldPlan& plan,
                                    const NuisanceLearners& learners, double xi);
NuisancePredictions fit_out_of_fold(const Dataset& d, const FoldPlan& plan,
                                    const LearnerSpec& outcome, const LearnerSpec& propensity,
                                    double xi);

// Learners fit once on all of d and evaluated on d (no sample splitting).
NuisancePredictions fit_full_sample(const Dataset& d, const NuisanceLearners& learners, double xi);

}  // namespace gcf
