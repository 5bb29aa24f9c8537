#include "doctest.h"

#include "gcf/error.hpp"
#include "gcf/simulation.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace gcf;

namespace {

SimulationDesign two_arm_design(double shift) {
  SimulationDesign d;
  d.name = "two-arm";
  d.n_arms = 2;
  d.n = 100;
  d.alphas = Matrix::Zero(2, 7);
  d.alphas(0, 0) = shift;
  d.betas = Matrix::Zero(2, 7);
  d.estimators = {Method::gcf};
  return d;
}

ReplicationOutcome fake_outcome(std::size_t rep, double estimate, double half_width) {
  AteEstimate est(Method::gcf, 2, 100, 0.05);
  est.set_pair({1, 2}, estimate, 1.0, estimate - half_width, estimate + half_width);
  ReplicationResult result;
  result.rep_index = rep;
  result.estimates.push_back(est);
  return {result, ""};
}

}  // namespace

TEST_CASE("built-in designs") {
  CHECK(builtin_design_names() == std::vector<std::string>{"design1-adequate", "design2-lack", "design3-j6"});
  for (const auto& name : builtin_design_names()) CHECK_NOTHROW(builtin_design(name).validate());
  CHECK(builtin_design("design3-j6").n_arms == 6);
  CHECK_THROWS_WITH_AS(builtin_design("design9"), doctest::Contains("design1-adequate"), ArgumentError);

  const auto d1 = design1_adequate();
  CHECK(d1.alphas.row(0) == (Vector(7) << -1.5, 1, 1, 1, 1, 1, 1).finished().transpose());
  CHECK(d1.betas.row(1).isApprox(0.3 * (Vector(7) << 0, 1, 1, 1, -1, 1, 1).finished().transpose()));
  CHECK(d1.betas.row(2).isApprox(0.1 * (Vector(7) << 0, 1, 1, 1, 1, 1, 1).finished().transpose()));
  CHECK(design2_lack().betas.row(1).isApprox(0.9 * (Vector(7) << 0, 1, 1, 1, -1, 1, 1).finished().transpose()));
}

TEST_CASE("design validation") {
  auto d = design1_adequate();
  d.n = 49;
  CHECK_THROWS_AS(d.validate(), ArgumentError);
  d = design1_adequate();
  d.folds = 11;
  CHECK_THROWS_AS(d.validate(), ArgumentError);
  d = design1_adequate();
  d.alphas = Matrix::Zero(2, 7);
  CHECK_THROWS_AS(d.validate(), ArgumentError);
}

TEST_CASE("zero propensity scores give uniform assignment") {
  auto design = design1_adequate();
  design.betas.setZero();
  design.n = 3000;
  const auto sim = generate_dataset(design, 11);
  CHECK((sim.true_e.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
  const auto counts = arm_counts(sim.data).counts;
  const double sd = std::sqrt(3000.0 * (1.0 / 3.0) * (2.0 / 3.0));
  for (const auto c : counts) CHECK(std::abs(static_cast<double>(c) - 1000.0) < 4.0 * sd);
}

TEST_CASE("identical arms without noise") {
  auto design = design1_adequate();
  design.noise_sd = 0.0;
  for (int j = 1; j < 3; ++j) design.alphas.row(j) = design.alphas.row(0);
  const auto sim = generate_dataset(design, 3);
  CHECK(true_ate(design).cwiseAbs().maxCoeff() == 0.0);
  const Matrix expected = sim.true_mu.col(0);
  for (std::size_t i = 0; i < sim.data.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    CHECK(sim.data.outcomes()[r] == doctest::Approx(expected(r, 0)).epsilon(1e-12));
  }
}

TEST_CASE("covariate moments match the design law") {
  std::mt19937_64 rng(2024);
  const std::size_t n = 100000;
  const Matrix x = sample_covariates(n, rng);
  const Vector expected = covariate_means().tail(6);
  CHECK(expected == (Vector(6) << 2, 1, 1, 0, 1, 0.5).finished());
  // Standard deviations of X1..X6: sqrt 2, 1, 1, sqrt 3, sqrt 2, 1/2.
  const double sds[6] = {std::sqrt(2.0), 1.0, 1.0, std::sqrt(3.0), std::sqrt(2.0), 0.5};
  for (Eigen::Index c = 0; c < 6; ++c) {
    CHECK(std::abs(x.col(c).mean() - expected[c]) < 4.0 * sds[c] / std::sqrt(static_cast<double>(n)));
  }
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  const double sigma[3][3] = {{2.0, 1.0, -1.0}, {1.0, 1.0, -0.5}, {-1.0, -0.5, 1.0}};
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) CHECK(std::abs(cov(a, b) - sigma[a][b]) < 0.05);
  }
  CHECK(std::abs(cov(3, 3) - 3.0) < 0.05);  // U[-3, 3]
  CHECK(std::abs(cov(4, 4) - 2.0) < 0.1);   // chi^2_1
  CHECK(x.col(3).minCoeff() >= -3.0);
  CHECK(x.col(3).maxCoeff() <= 3.0);
  CHECK(x.col(4).minCoeff() >= 0.0);
  CHECK(((x.col(5).array() == 0.0) || (x.col(5).array() == 1.0)).all());
}

TEST_CASE("true ATEs of design 1 against an independent Monte Carlo oracle") {
  const auto design = design1_adequate();
  const Matrix tau = true_ate(design);
  CHECK(tau(0, 1) == doctest::Approx(-5.0).epsilon(1e-12));
  CHECK(tau(0, 2) == doctest::Approx(-5.5).epsilon(1e-12));
  CHECK(tau(1, 2) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(std::abs(tau(1, 2) - (tau(0, 2) - tau(0, 1))) < 1e-12);
  CHECK((tau + tau.transpose()).cwiseAbs().maxCoeff() == 0.0);

  // Oracle: average alpha_j'X~ - alpha_j''X~ over 10^7 independent draws.
  oracle::CovariateSampler sampler(99);
  const std::size_t draws = 10000000;
  double sum[3] = {0, 0, 0};
  double sum2[3] = {0, 0, 0};
  const int pj[3] = {0, 0, 1};
  const int pk[3] = {1, 2, 2};
  for (std::size_t r = 0; r < draws; ++r) {
    const auto x = sampler.draw();
    for (int p = 0; p < 3; ++p) {
      double v = 0.0;
      for (int c = 0; c < 7; ++c) v += (design.alphas(pj[p], c) - design.alphas(pk[p], c)) * x[static_cast<std::size_t>(c)];
      sum[p] += v;
      sum2[p] += v * v;
    }
  }
  for (int p = 0; p < 3; ++p) {
    const double mean = sum[p] / static_cast<double>(draws);
    const double se = std::sqrt((sum2[p] / static_cast<double>(draws) - mean * mean) / static_cast<double>(draws));
    CHECK(std::abs(mean - tau(pj[p], pk[p])) < 4.0 * se);
  }
}

TEST_CASE("generated data follow the design") {
  const auto design = design1_adequate();
  const auto sim = generate_dataset(design, 8);
  CHECK(sim.data.n() == design.n);
  CHECK(sim.data.p() == 6);
  CHECK(sim.data.n_arms() == 3);
  CHECK((sim.true_e.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(sim.true_mu.isApprox(true_outcome_means(design, sim.data.covariates())));

  const auto again = generate_dataset(design, 8);
  CHECK(again.data.outcomes() == sim.data.outcomes());
  CHECK(again.data.treatments() == sim.data.treatments());
  CHECK(generate_dataset(design, 9).data.outcomes() != sim.data.outcomes());
}

TEST_CASE("replications are deterministic") {
  auto design = design1_adequate();
  design.n = 300;
  const auto a = run_replication(design, 5);
  const auto b = run_replication(design, 5);
  REQUIRE(a.estimates.size() == 3);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(a.estimates[m].estimates() == b.estimates[m].estimates());
    CHECK(a.estimates[m].variances() == b.estimates[m].variances());
  }
  CHECK(replication_seed(1, 5) == replication_seed(1, 5));
  CHECK(replication_seed(1, 5) != replication_seed(1, 6));
  CHECK(replication_seed(1, 5) != replication_seed(2, 5));
}

TEST_CASE("estimator selection") {
  auto design = design1_adequate();
  design.n = 200;
  design.reps = 3;
  design.estimators = {Method::dif};
  const auto report = run_monte_carlo(design, {1, std::nullopt});
  CHECK(report.cells.size() == 3);
  for (const auto& c : report.cells) CHECK(c.method == Method::dif);
  CHECK_THROWS_AS(report.cell(Method::gcf, {1, 2}), ArgumentError);
}

TEST_CASE("summary metrics on degenerate inputs") {
  const auto design = two_arm_design(1.0);  // tau_12 = 1
  SUBCASE("estimates equal to the truth") {
    std::vector<ReplicationOutcome> outcomes;
    for (std::size_t r = 0; r < 10; ++r) outcomes.push_back(fake_outcome(r, 1.0, 0.5));
    const auto cell = summarize(design, outcomes).cell(Method::gcf, {1, 2});
    CHECK(cell.bias == 0.0);
    CHECK(cell.rmse == 0.0);
    CHECK(cell.coverage == 1.0);
  }
  SUBCASE("alternating errors") {
    std::vector<ReplicationOutcome> outcomes;
    for (std::size_t r = 0; r < 10; ++r) {
      const double est = 1.0 + (r % 2 == 0 ? -1.0 : 1.0);
      AteEstimate a(Method::gcf, 2, 100, 0.05);
      a.set_pair({1, 2}, est, 1.0, 1.0 - 2.0, 1.0 + 2.0);  // truth-centred, half-width 2
      ReplicationResult result;
      result.rep_index = r;
      result.estimates.push_back(a);
      outcomes.push_back({result, ""});
    }
    const auto report = summarize(design, outcomes);
    const auto& cell = report.cell(Method::gcf, {1, 2});
    CHECK(cell.bias == 0.0);
    CHECK(cell.rmse == 1.0);
    CHECK(cell.coverage == 1.0);
    CHECK(cell.mean_ci_width == 4.0);
  }
  SUBCASE("failures are counted, all-failed is an error") {
    std::vector<ReplicationOutcome> outcomes{fake_outcome(0, 1.0, 0.1), {std::nullopt, "boom"}};
    const auto report = summarize(design, outcomes);
    CHECK(report.reps_failed == 1);
    CHECK(report.failure_rate() == 0.5);
    CHECK(report.failures == std::vector<std::string>{"boom"});
    CHECK_THROWS_AS(summarize(design, {{std::nullopt, "a"}, {std::nullopt, "b"}}), NumericalError);
  }
}

TEST_CASE("Monte Carlo results do not depend on the thread count") {
  auto design = design1_adequate();
  design.n = 200;
  design.reps = 6;
  const auto one = run_monte_carlo(design, {1, std::nullopt});
  const auto three = run_monte_carlo(design, {3, std::nullopt});
  REQUIRE(one.cells.size() == three.cells.size());
  for (std::size_t c = 0; c < one.cells.size(); ++c) {
    CHECK(one.cells[c].bias == three.cells[c].bias);
    CHECK(one.cells[c].rmse == three.cells[c].rmse);
    CHECK(one.cells[c].coverage == three.cells[c].coverage);
    // RMSE is never below |bias|.
    CHECK(one.cells[c].rmse >= std::abs(one.cells[c].bias));
  }
}

TEST_CASE("randomized assignment makes every estimator nearly unbiased") {
  auto design = design1_adequate();
  design.betas.setZero();
  design.n = 300;
  design.reps = 40;
  const auto report = run_monte_carlo(design, {1, std::nullopt});
  CHECK(report.reps_failed == 0);
  for (const auto& c : report.cells) {
    // Bias bound: 4 Monte Carlo standard errors, with RMSE as the spread.
    CHECK(std::abs(c.bias) < 4.0 * c.rmse / std::sqrt(40.0));
  }
}

TEST_CASE("efficiency bound") {
  // Constant outcomes and uniform assignment: V = sigma^2 (3 + 3).
  auto design = design1_adequate();
  design.alphas.setZero();
  design.betas.setZero();
  const Matrix v = efficiency_bound(design, 1000, 1);
  CHECK(v(0, 1) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(v(1, 2) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(v(0, 0) == 0.0);
  CHECK((v - v.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("true nuisance learners ignore the training data") {
  const auto design = design1_adequate();
  const auto sim = generate_dataset(design, 4);
  const auto learners = true_nuisance_learners(design);
  const Matrix x = sim.data.covariates().topRows(5);
  CHECK(learners.outcome->fit_predict(sim.data, x).isApprox(sim.true_mu.topRows(5)));
  CHECK(learners.propensity->fit_predict(sim.data, x).isApprox(sim.true_e.topRows(5)));
}
