#include <doctest.h>

#include <cmath>
#include <random>

#include "panelamm/varying.hpp"
#include "test_support.hpp"

using namespace panelamm;
using namespace panelamm::testing;

namespace {

ModelSpec spec_from(const std::string& json) { return ModelSpec::from_json(nlohmann::json::parse(json)); }

// Years 2000-2009; the second half repeats the first half row for row.
PanelDataset mirrored_panel(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int units = 6, half = 5;
  SimPanel s = make_grid(units, 2 * half);
  const Eigen::Index n = s.rows();
  Eigen::VectorXd x(n), a(n);
  for (int u = 0; u < units; ++u)
    for (int t = 0; t < half; ++t) {
      const Eigen::Index r = u * 2 * half + t;
      x(r) = x(r + half) = std::uniform_real_distribution<double>(-2, 2)(rng);
      a(r) = a(r + half) = std::normal_distribution<double>()(rng);
      s.y(r) = s.y(r + half) = std::sin(x(r)) + 0.7 * a(r) + 0.2 * std::normal_distribution<double>()(rng);
    }
  s.numeric = {{"x", x}, {"a", a}};
  return to_panel(s);
}

}  // namespace

TEST_CASE("break years that leave an empty period are rejected") {
  const auto panel = mirrored_panel(1);
  const auto spec = spec_from(R"({"linear":["a"]})");
  CHECK_THROWS_AS(fit_varying_coefficients(spec, panel, 2009), PreconditionError);
  CHECK_THROWS_AS(fit_varying_coefficients(spec, panel, 1999), PreconditionError);
  const auto v = fit_varying_coefficients(spec, panel, 2004);
  CHECK(v.pre_years == 5);
  CHECK(v.post_years == 5);
  CHECK(v.pre_rows + v.post_rows == panel.rows());
}

TEST_CASE("every base term is estimated once per period") {
  const auto panel = mirrored_panel(2);
  const auto spec = spec_from(
      R"({"linear":["a"],"smooth":[{"col":"x","k":6}],"linear_pairs":[["a","x"]],
          "tensor_pairs":[{"col1":"x","col2":"a","k1":4,"k2":4}],"effects":"fixed"})");
  const auto base = fit_model(panel, spec);
  int base_terms = 0;
  for (const auto& t : base.design.terms)
    if (t.kind == TermKind::linear || t.kind == TermKind::smooth || t.kind == TermKind::tensor) ++base_terms;
  const auto v = fit_varying_coefficients(spec, panel, 2004);
  CHECK(static_cast<int>(v.terms.size()) == 2 * base_terms);
  for (std::size_t i = 0; i + 1 < v.terms.size(); i += 2) {
    CHECK(v.terms[i].base == v.terms[i + 1].base);
    CHECK(v.terms[i].period == Period::pre);
    CHECK(v.terms[i + 1].period == Period::post);
  }
  CHECK(v.table().rows.size() == v.terms.size());
  CHECK(v.fit.design.unit_term()->kind == base.design.unit_term()->kind);
}

TEST_CASE("period columns of a linear term add up to the base column") {
  const auto panel = mirrored_panel(3);
  const auto spec = spec_from(R"({"linear":["a"],"effects":"none"})");
  const auto base = build_design(panel, spec);
  auto split = spec;
  split.break_year = 2004;
  const auto varying = build_design(panel, split);
  const auto& all = base.term("a");
  const auto& pre = varying.term("a:pre");
  const auto& post = varying.term("a:post");
  CHECK((varying.X.col(pre.first) + varying.X.col(post.first) - base.X.col(all.first)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mirrored periods give equal estimates") {
  const auto panel = mirrored_panel(4);
  const auto v = fit_varying_coefficients(spec_from(R"({"linear":["a"],"smooth":[{"col":"x","k":6}],"effects":"none"})"),
                                          panel, 2004);
  REQUIRE(v.fit.converged);
  for (const std::string base : {"a", "s(x)"}) {
    const auto& pre = v.term(base, Period::pre);
    const auto& post = v.term(base, Period::post);
    CAPTURE(base);
    CHECK((pre.estimates - post.estimates).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(pre.edf - post.edf) < 1e-6);
  }
  const auto pre_curve = smooth_effect_curve(v.fit, "s(x):pre", support_grid(v.fit, "s(x):pre", 21));
  const auto post_curve = smooth_effect_curve(v.fit, "s(x):post", support_grid(v.fit, "s(x):post", 21));
  CHECK((pre_curve.effect - post_curve.effect).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("a term without variation in one period is dropped there") {
  std::mt19937_64 rng(5);
  SimPanel s = make_grid(5, 8);
  const Eigen::Index n = s.rows();
  Eigen::VectorXd policy = normal_vector(rng, n);
  for (Eigen::Index r = 0; r < n; ++r)
    if (s.years[r % 8] > 2003) policy(r) = 0.0;
  s.y = policy + 0.1 * normal_vector(rng, n);
  s.numeric = {{"policy", policy}};
  const auto v = fit_varying_coefficients(spec_from(R"({"linear":["policy"]})"), to_panel(s), 2003);
  CHECK_NOTHROW(v.term("policy", Period::pre));
  CHECK_THROWS_AS(v.term("policy", Period::post), LookupError);
  CHECK_FALSE(v.annotations.empty());
}

TEST_CASE("an injected slope break is recovered in both periods") {
  std::mt19937_64 rng(6);
  const int reps = 20;
  int covered = 0;
  for (int rep = 0; rep < reps; ++rep) {
    SimPanel s = make_grid(10, 10);
    const Eigen::Index n = s.rows();
    const Eigen::VectorXd a = normal_vector(rng, n);
    std::normal_distribution<double> g;
    Eigen::Index r = 0;
    for (int u = 0; u < 10; ++u) {
      const double b0 = 0.5 * g(rng);
      for (int t = 0; t < 10; ++t, ++r) s.y(r) = (t < 5 ? 0.5 : 1.5) * a(r) + b0 + 0.5 * g(rng);
    }
    s.numeric = {{"a", a}};
    const auto v = fit_varying_coefficients(spec_from(R"({"linear":["a"]})"), to_panel(s), 2004);
    const auto& pre = v.term("a", Period::pre);
    const auto& post = v.term("a", Period::post);
    if (std::abs(pre.estimates(0) - 0.5) < 3 * pre.se(0) && std::abs(post.estimates(0) - 1.5) < 3 * post.se(0))
      ++covered;
  }
  CHECK(covered >= reps - 1);
}
