#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "qrs/error.hpp"
#include "qrs/propensity.hpp"
#include "test_data.hpp"

using namespace qrs;

namespace {

Dataset probit_sample(std::size_t n, std::uint64_t seed) {
  testdata::Design g;
  g.g0 = 0.2;
  g.gz = 0.8;
  g.gx = -0.5;
  return testdata::two_groups(g, g, n, seed);
}

double mean_s(const Dataset& ds, int d, const std::vector<double>& w = {}) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.d()[i] != d) continue;
    const double wi = w.empty() ? 1.0 : w[i];
    num += wi * ds.s()[i];
    den += wi;
  }
  return num / den;
}

}  // namespace

TEST_CASE("constant instrument is collinear with the intercept") {
  testdata::Rows r;
  for (int i = 0; i < 40; ++i) {
    r.s.push_back(i % 2);
    r.y.push_back(1.0);
    r.d.push_back(i < 38 ? 0 : 1);
    r.z1.push_back(2.0);
    r.x1.push_back(0.1 * i);
  }
  try {
    fit_propensity(r.build(), 0, PropensitySpec{});
    FAIL("expected collinearity");
  } catch (const CollinearityError& e) {
    REQUIRE(e.columns().size() == 1);
    CHECK((e.columns()[0] == "z1" || e.columns()[0] == "(intercept)"));
  }
}

TEST_CASE("balanced binary instrument gives gamma 0 under both links") {
  testdata::Rows r;
  for (int i = 0; i < 82; ++i) {
    r.s.push_back((i / 2) % 2);
    r.y.push_back(r.s.back() ? 1.0 : 0.0);
    r.z1.push_back(i % 2);
    r.x1.push_back(0.0);
    r.d.push_back(i < 80 ? 0 : 1);
  }
  PropensitySpec spec;
  spec.covariates = std::vector<std::string>{};
  for (Link link : {Link::probit, Link::logit}) {
    spec.link = link;
    const auto m = fit_propensity(r.build(), 0, spec);
    CHECK(m.converged);
    CHECK(std::abs(m.gamma(0)) < 1e-10);
    CHECK(std::abs(m.gamma(1)) < 1e-10);
  }
}

TEST_CASE("recovers simulated probit coefficients") {
  const Dataset ds = probit_sample(20000, 17);
  const auto m = fit_propensity(ds, 0, PropensitySpec{});
  REQUIRE(m.gamma.size() == 3);
  CHECK(std::abs(m.gamma(0) - 0.2) < 0.05);
  CHECK(std::abs(m.gamma(1) - 0.8) < 0.05);
  CHECK(std::abs(m.gamma(2) + 0.5) < 0.05);
  CHECK(m.names == std::vector<std::string>{"(intercept)", "z1", "x1"});
}

TEST_CASE("weights") {
  const Dataset ds = probit_sample(3000, 5);
  const auto plain = fit_propensity(ds, 1, PropensitySpec{});
  const std::vector<double> ones(ds.size(), 1.0), twos(ds.size(), 2.0);
  const auto w1 = fit_propensity(ds, 1, PropensitySpec{}, ones);
  CHECK(w1.gamma == plain.gamma);
  CHECK(w1.loglik == plain.loglik);
  const auto w2 = fit_propensity(ds, 1, PropensitySpec{}, twos);
  for (int j = 0; j < 3; ++j) CHECK(w2.gamma(j) == doctest::Approx(plain.gamma(j)).epsilon(1e-9));
  std::vector<double> bad = ones;
  bad[3] = -1.0;
  CHECK_THROWS_AS(fit_propensity(ds, 1, PropensitySpec{}, bad), Error);
}

TEST_CASE("converged fits satisfy the score equations") {
  const Dataset ds = probit_sample(4000, 9);
  Rng rng(1);
  std::vector<double> w(ds.size());
  for (double& v : w) v = rng.exponential();
  for (Link link : {Link::probit, Link::logit}) {
    PropensitySpec spec;
    spec.link = link;
    const auto m = fit_propensity(ds, 0, spec, w);
    CHECK(m.converged);
    // Logit: the intercept score is sum w (s - p), so mean p equals mean s.
    if (link == Link::logit) {
      const auto p = predict_rows(m, ds);
      double num = 0, den = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.d()[i] != 0) continue;
        num += w[i] * p[i];
        den += w[i];
      }
      CHECK(std::abs(num / den - mean_s(ds, 0, w)) < 1e-8);
    } else {
      // Probit matches the mean only approximately.
      const auto p = predict_rows(m, ds);
      double num = 0, den = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.d()[i] != 0) continue;
        num += w[i] * p[i];
        den += w[i];
      }
      CHECK(std::abs(num / den - mean_s(ds, 0, w)) < 5e-3);
    }
  }
}

TEST_CASE("separation and other errors") {
  testdata::Rows r;
  for (int i = 0; i < 60; ++i) {
    r.z1.push_back(i % 3);
    r.s.push_back(r.z1.back() > 0);
    r.y.push_back(1.0);
    r.x1.push_back(0.01 * i);
    r.d.push_back(0);
  }
  r.d[0] = 1;
  try {
    fit_propensity(r.build(), 0, PropensitySpec{});
    FAIL("expected separation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::separation);
  }
  testdata::Rows all = r;
  for (auto& s : all.s) s = 1;
  try {
    fit_propensity(all.build(), 0, PropensitySpec{});
    FAIL("expected separation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::separation);
  }
  testdata::Rows dup = r;
  for (std::size_t i = 0; i < dup.x1.size(); ++i) dup.x1[i] = 2.0 * dup.z1[i];
  for (std::size_t i = 0; i < dup.s.size(); ++i) dup.s[i] = i % 2;
  try {
    fit_propensity(dup.build(), 0, PropensitySpec{});
    FAIL("expected collinearity");
  } catch (const CollinearityError& e) {
    REQUIRE(e.columns().size() == 1);
    CHECK((e.columns()[0] == "x1" || e.columns()[0] == "z1"));
  }
}

TEST_CASE("prediction") {
  PropensityModel m;
  m.gamma = Eigen::VectorXd::Zero(3);
  const std::vector<double> z{1.0, 2.0, 0.5};
  m.link = Link::probit;
  CHECK(predict(m, z) == 0.5);
  m.link = Link::logit;
  CHECK(predict(m, z) == 0.5);
  m.gamma << 40.0, 0.0, 0.0;
  CHECK(predict(m, z) == 1.0 - kPropensityClamp);
  m.gamma << -40.0, 0.0, 0.0;
  CHECK(predict(m, z) == kPropensityClamp);
  CHECK_THROWS_AS(predict(m, std::vector<double>{1.0}), Error);
  CHECK(parse_link("logit") == Link::logit);
  CHECK_THROWS_AS(parse_link("cloglog"), Error);
}

TEST_CASE("interactions and covariate subsets") {
  const Dataset ds = probit_sample(2000, 3);
  PropensitySpec spec;
  spec.covariates = std::vector<std::string>{};
  spec.interactions = {{"z1", "x1"}};
  CHECK(propensity_names(ds, spec) == std::vector<std::string>{"(intercept)", "z1", "z1:x1"});
  const RowMatrix z = propensity_design(ds, spec);
  CHECK(z(5, 2) == ds.z1()[5] * ds.x()(5, 1));
  CHECK(fit_propensity(ds, 0, spec).converged);
  spec.interactions = {{"z1", "nope"}};
  CHECK_THROWS_AS(propensity_names(ds, spec), Error);
}
