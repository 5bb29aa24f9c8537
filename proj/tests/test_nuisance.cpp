#include "doctest.h"

#include "gcf/error.hpp"
#include "gcf/nuisance.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace gcf;

namespace {

oracle::Rows to_rows(const Matrix& m) {
  oracle::Rows rows(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) rows[static_cast<std::size_t>(r)].push_back(m(r, c));
  }
  return rows;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("fit_ols exact interpolation") {
  Matrix x(5, 1);
  x << -2, -1, 0, 1, 2.5;
  const Vector y = (2.0 * x.col(0)).array() + 3.0;
  const Vector coef = fit_ols(x, y, 0.0);
  CHECK(coef[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(coef[1] == doctest::Approx(2.0).epsilon(1e-12));
  const Vector resid = y - ((x * coef.tail(1)).array() + coef[0]).matrix();
  CHECK(resid.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fit_ols on constant targets gives intercept only") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  Matrix x(20, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  const Vector coef = fit_ols(x, Vector::Constant(20, 4.25), 0.0);
  CHECK(coef[0] == doctest::Approx(4.25).epsilon(1e-12));
  CHECK(coef.tail(3).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_ols ridge matches the closed-form oracle") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  Matrix x(50, 3);
  Vector y(50);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = 1.0 + x(i, 0) - 2.0 * x(i, 2) + normal(rng);

  for (const double ridge : {0.1, 0.0}) {
    const auto expected = oracle::ridge_closed_form(to_rows(x), to_std(y), ridge);
    const Vector coef = fit_ols(x, y, ridge);
    for (std::size_t c = 0; c < expected.size(); ++c) {
      CHECK(std::abs(coef[static_cast<Eigen::Index>(c)] - expected[c]) < 1e-8);
    }
  }
}

TEST_CASE("fit_ols rank-deficient design") {
  Matrix x(6, 2);
  x << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
  const Vector y = Vector::LinSpaced(6, 0, 5);
  CHECK_THROWS_WITH_AS(fit_ols(x, y, 0.0), doctest::Contains("singular system; set ridge > 0"),
                       NumericalError);
  CHECK_NOTHROW(fit_ols(x, y, 1e-3));
}

TEST_CASE("predict_propensity") {
  SUBCASE("zero coefficients are uniform") {
    PropensityModel m;
    m.coefficients = Matrix::Zero(3, 3);
    const Vector e = predict_propensity(m, Vector{{0.3, -7.0}});
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(e[j] == doctest::Approx(0.25));
  }
  SUBCASE("scalar softmax by hand") {
    PropensityModel m;
    m.coefficients = Matrix{{1.0, 0.0}};  // score 1 for arm 1, 0 for the reference arm
    const Vector e = predict_propensity(m, Vector{{5.0}});
    const double hand = std::exp(1.0) / (1.0 + std::exp(1.0));
    CHECK(e[0] == doctest::Approx(hand).epsilon(1e-14));
    CHECK(e[1] == doctest::Approx(1.0 - hand).epsilon(1e-14));
    CHECK(e[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(e[1] == doctest::Approx(0.2689).epsilon(1e-4));
  }
  SUBCASE("valid probability vectors for arbitrary finite inputs") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> wide(0.0, 30.0);
    for (int trial = 0; trial < 200; ++trial) {
      const int J = 2 + static_cast<int>(rng() % 6);
      PropensityModel m;
      m.coefficients = Matrix(J - 1, 4);
      for (Eigen::Index i = 0; i < m.coefficients.size(); ++i) m.coefficients.data()[i] = wide(rng);
      Vector x(3);
      for (Eigen::Index i = 0; i < 3; ++i) x[i] = wide(rng);
      const Vector e = predict_propensity(m, x);
      CHECK(e.allFinite());
      CHECK(e.minCoeff() >= 0.0);
      CHECK(std::abs(e.sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("intercept-only multinomial logit reproduces label frequencies") {
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(1);
  for (int i = 0; i < 30; ++i) labels.push_back(2);
  for (int i = 0; i < 20; ++i) labels.push_back(3);
  const Matrix x(100, 0);
  const auto model = fit_multinomial_logit(x, labels, 3, LearnerSpec::multinomial_logit());
  CHECK(model.converged);
  const Matrix e = predict_propensity(model, x);
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    CHECK(e(i, 0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(e(i, 1) == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(e(i, 2) == doctest::Approx(0.2).epsilon(1e-9));
  }
}

TEST_CASE("two-arm multinomial logit equals binary logistic regression") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  const int m = 400;
  Matrix x(m, 2);
  std::vector<int> labels(m);
  for (int i = 0; i < m; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = normal(rng);
    const double p1 = 1.0 / (1.0 + std::exp(-(0.4 + 1.2 * x(i, 0) - 0.7 * x(i, 1))));
    labels[static_cast<std::size_t>(i)] = unit(rng) < p1 ? 1 : 2;
  }
  const auto spec = LearnerSpec::multinomial_logit(1e-8, 100, 1e-10);
  const auto model = fit_multinomial_logit(x, labels, 2, spec);
  const auto expected = oracle::binary_logit(to_rows(x), labels, spec.ridge);
  REQUIRE(model.converged);
  for (Eigen::Index c = 0; c < 3; ++c) {
    CHECK(std::abs(model.coefficients(0, c) - expected[static_cast<std::size_t>(c)]) < 1e-6);
  }
}

TEST_CASE("multinomial logit recovers known coefficients at m = 50000") {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  const Matrix truth{{0.5, 1.0, -0.5}, {-0.3, 0.2, 0.8}};  // arms 1, 2; arm 3 reference
  const int m = 50000;
  Matrix x(m, 2);
  std::vector<int> labels(m);
  for (int i = 0; i < m; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = normal(rng);
    const double s1 = truth(0, 0) + truth(0, 1) * x(i, 0) + truth(0, 2) * x(i, 1);
    const double s2 = truth(1, 0) + truth(1, 1) * x(i, 0) + truth(1, 2) * x(i, 1);
    const double denom = std::exp(s1) + std::exp(s2) + 1.0;
    const double u = unit(rng);
    labels[static_cast<std::size_t>(i)] = u < std::exp(s1) / denom ? 1 : (u < (std::exp(s1) + std::exp(s2)) / denom ? 2 : 3);
  }
  const auto model = fit_multinomial_logit(x, labels, 3, LearnerSpec::multinomial_logit());
  REQUIRE(model.converged);

  // Standard errors from the inverse Fisher information at the estimate,
  // assembled here from scratch.
  const std::size_t q = 6;
  oracle::Rows info(q, std::vector<double>(q, 0.0));
  for (int i = 0; i < m; ++i) {
    const double xi[3] = {1.0, x(i, 0), x(i, 1)};
    double s[2];
    for (int a = 0; a < 2; ++a) {
      s[a] = model.coefficients(a, 0) + model.coefficients(a, 1) * xi[1] + model.coefficients(a, 2) * xi[2];
    }
    const double denom = std::exp(s[0]) + std::exp(s[1]) + 1.0;
    const double p[2] = {std::exp(s[0]) / denom, std::exp(s[1]) / denom};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double w = p[a] * ((a == b ? 1.0 : 0.0) - p[b]);
        for (int c = 0; c < 3; ++c) {
          for (int d = 0; d < 3; ++d) info[static_cast<std::size_t>(a * 3 + c)][static_cast<std::size_t>(b * 3 + d)] += w * xi[c] * xi[d];
        }
      }
    }
  }
  for (std::size_t k = 0; k < q; ++k) {
    std::vector<double> unit_vec(q, 0.0);
    unit_vec[k] = 1.0;
    const double var = oracle::solve_dense(info, unit_vec)[k];
    const auto a = static_cast<Eigen::Index>(k / 3);
    const auto c = static_cast<Eigen::Index>(k % 3);
    CHECK(std::abs(model.coefficients(a, c) - truth(a, c)) < 3.0 * std::sqrt(var));
  }
}

TEST_CASE("multinomial logit log-likelihood never decreases") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 60;
    Matrix x(m, 3);
    std::vector<int> labels(m);
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < 3; ++c) x(i, c) = normal(rng);
      // Nearly separable in x0 so that Newton steps need damping.
      labels[static_cast<std::size_t>(i)] = x(i, 0) + 0.1 * normal(rng) > 0.3 ? 1 : (x(i, 0) < -0.3 ? 2 : 3);
    }
    for (int j = 1; j <= 3; ++j) {
      if (std::find(labels.begin(), labels.end(), j) == labels.end()) labels[static_cast<std::size_t>(j)] = j;
    }
    const auto model = fit_multinomial_logit(x, labels, 3, LearnerSpec::multinomial_logit(1e-8, 30));
    REQUIRE(model.log_likelihood_trace.size() >= 2);
    for (std::size_t s = 1; s < model.log_likelihood_trace.size(); ++s) {
      CHECK(model.log_likelihood_trace[s] >= model.log_likelihood_trace[s - 1]);
    }
    CHECK(model.coefficients.allFinite());
  }
}

TEST_CASE("multinomial logit errors and warnings") {
  const Matrix x = Matrix::Random(6, 1);
  const std::vector<int> labels{1, 1, 2, 2, 1, 2};
  CHECK_THROWS_WITH_AS(fit_multinomial_logit(x, labels, 3, LearnerSpec::multinomial_logit()),
                       doctest::Contains("empty arm in training fold"), ValidationError);

  // Perfect separation: not fatal, flagged as not converged.
  Matrix sep(6, 1);
  sep << -3, -2, -1, 1, 2, 3;
  const std::vector<int> split{1, 1, 1, 2, 2, 2};
  const auto model = fit_multinomial_logit(sep, split, 2, LearnerSpec::multinomial_logit(0.0, 15));
  CHECK_FALSE(model.converged);
  CHECK(model.iterations <= 15);
  CHECK(model.coefficients.allFinite());
}

TEST_CASE("learner spec validation") {
  CHECK_THROWS_AS(LearnerSpec::multinomial_logit(-1.0).validate(), ArgumentError);
  CHECK_THROWS_AS(LearnerSpec::multinomial_logit(0.0, 0).validate(), ArgumentError);
  CHECK_THROWS_AS(LearnerSpec::multinomial_logit(0.0, 10, 0.0).validate(), ArgumentError);
  CHECK_NOTHROW(LearnerSpec::linear(0.0).validate());
}

TEST_CASE("clip_propensity") {
  SUBCASE("boundary rule") {
    const Vector e = clip_propensity(Vector{{0.0005, 0.9995}}, 0.001);
    CHECK(e[0] == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(e[1] == doctest::Approx(0.999).epsilon(1e-15));
  }
  SUBCASE("interior vectors are unchanged") {
    const Vector in{{0.3, 0.7}};
    CHECK(clip_propensity(in, 0.01) == in);
  }
  SUBCASE("clamped mass is fixed, the rest rescaled") {
    // Rule: the zero component is pinned at xi = 0.01, the remaining mass
    // 0.99 is shared by the free components in proportion 0.5 : 0.5.
    const Vector e = clip_propensity(Vector{{0.0, 0.5, 0.5}}, 0.01);
    CHECK(e[0] == 0.01);
    CHECK(e[1] == doctest::Approx(0.495).epsilon(1e-15));
    CHECK(e[2] == doctest::Approx(0.495).epsilon(1e-15));
    CHECK(e.sum() == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("one large component with several small ones") {
    const Vector e = clip_propensity(Vector{{0.998, 0.001, 0.001}}, 0.01);
    CHECK(e[0] == doctest::Approx(0.98).epsilon(1e-15));
    CHECK(e[1] == 0.01);
    CHECK(e[2] == 0.01);
  }
  SUBCASE("idempotent and inside the band on random simplex vectors") {
    std::mt19937_64 rng(77);
    std::exponential_distribution<double> expo(1.0);
    for (int trial = 0; trial < 500; ++trial) {
      const int J = 2 + static_cast<int>(rng() % 5);
      Vector e(J);
      for (Eigen::Index j = 0; j < J; ++j) e[j] = std::pow(expo(rng), 6.0);
      e /= e.sum();
      const double xi = 0.001 + 0.1 / J * std::uniform_real_distribution<double>()(rng);
      const Vector once = clip_propensity(e, xi);
      const Vector twice = clip_propensity(once, xi);
      CHECK(twice == once);
      CHECK(once.minCoeff() >= xi);
      CHECK(once.maxCoeff() <= 1.0 - xi);
      CHECK(std::abs(once.sum() - 1.0) < 1e-12);
    }
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(clip_propensity(Vector{{0.5, 0.5}}, 0.6), ArgumentError);
    CHECK_THROWS_AS(clip_propensity(Vector::Constant(4, 0.25), 0.3), ArgumentError);
  }
}

TEST_CASE("outcome model is fitted per arm") {
  Matrix x(6, 1);
  x << 0, 1, 2, 0, 1, 2;
  const Dataset d(x, {1, 1, 1, 2, 2, 2}, Vector{{1, 2, 3, 5, 3, 1}}, 3);
  const auto model = fit_outcome_model(d, 0.0);
  CHECK(model.has_arm(1));
  CHECK(model.has_arm(2));
  CHECK_FALSE(model.has_arm(3));
  CHECK(model.predict(Vector{{10.0}}, 1) == doctest::Approx(11.0));
  CHECK(model.predict(Vector{{10.0}}, 2) == doctest::Approx(-15.0));
  CHECK_THROWS_WITH_AS(model.predict_all(x), doctest::Contains("empty arm"), ValidationError);
}

TEST_CASE("plug-in learner registry") {
  struct Constant final : OutcomeLearner {
    Matrix fit_predict(const Dataset& train, const Matrix& x_eval) const override {
      return Matrix::Constant(x_eval.rows(), train.n_arms(), 7.0);
    }
  };
  register_outcome_learner("constant-seven", [](const LearnerSpec&) {
    return std::make_shared<Constant>();
  });
  const auto learner = make_outcome_learner(LearnerSpec::plugin("constant-seven"));
  const Dataset d(Matrix::Zero(2, 1), {1, 2}, Vector::Zero(2), 2);
  CHECK(learner->fit_predict(d, Matrix::Zero(3, 1))(2, 1) == 7.0);
  CHECK_THROWS_AS(make_outcome_learner(LearnerSpec::plugin("missing")), ArgumentError);
  CHECK_THROWS_AS(make_propensity_learner(LearnerSpec::linear()), ArgumentError);
}
