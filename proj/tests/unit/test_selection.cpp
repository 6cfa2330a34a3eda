#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "panelamm/selection.hpp"
#include "test_support.hpp"

using namespace panelamm;
using namespace panelamm::testing;

namespace {

ModelSpec spec_from(const std::string& json) { return ModelSpec::from_json(nlohmann::json::parse(json)); }

// y = sin(x) + 0.5 a + unit intercept; column "late" is observed only from
// 2005 on, column "flat" is constant.
PanelDataset tournament_panel(std::uint64_t seed, int units = 8, int years = 10) {
  std::mt19937_64 rng(seed);
  SimPanel s = make_grid(units, years);
  const Eigen::Index n = s.rows();
  const Eigen::VectorXd x = uniform_vector(rng, n, -2, 2);
  const Eigen::VectorXd a = normal_vector(rng, n);
  const Eigen::VectorXd noise = normal_vector(rng, n);
  Eigen::VectorXd late = normal_vector(rng, n);
  std::normal_distribution<double> g(0.0, 0.5);
  Eigen::Index r = 0;
  for (int u = 0; u < units; ++u) {
    const double b0 = g(rng);
    for (int t = 0; t < years; ++t, ++r) {
      s.y(r) = std::sin(x(r)) + 0.5 * a(r) + b0 + 0.3 * noise(r);
      if (s.years[t] < 2005) late(r) = std::numeric_limits<double>::quiet_NaN();
    }
  }
  s.numeric = {{"x", x}, {"a", a}, {"late", late}, {"flat", Eigen::VectorXd::Constant(n, 2.0)}};
  return to_panel(s);
}

TheoryGroup group(const std::string& label, std::vector<std::string> specs, SubsampleFilter sub = {}) {
  TheoryGroup g;
  g.label = label;
  for (const auto& s : specs) g.specs.push_back(spec_from(s));
  g.subsample = sub;
  return g;
}

TournamentOptions quick() {
  TournamentOptions o;
  o.mundlak = false;
  return o;
}

}  // namespace

TEST_CASE("Mundlak test: df counts unit averages, identical fits give zero") {
  const auto panel = tournament_panel(1);
  const auto res = mundlak_lrt(panel, spec_from(R"({"linear":["a"],"smooth":[{"col":"x","k":6}]})"));
  // one unit average per regressor
  CHECK(res.df == 2);
  CHECK(res.p_value >= 0.0);
  CHECK(res.p_value <= 1.0);
  CHECK_FALSE(res.inconclusive);

  const auto fit = fit_model(panel, spec_from(R"({"linear":["a"]})"));
  for (auto kind : {LrtLikelihood::marginal, LrtLikelihood::conditional})
    CHECK(lrt_statistic(fit, fit, kind) == 0.0);
  CHECK_THROWS_AS(mundlak_lrt(panel, spec_from(R"({"linear":["a"],"effects":"fixed"})")), PreconditionError);
}

TEST_CASE("Mundlak test rejects when the unit effect tracks the regressor average") {
  std::mt19937_64 rng(7);
  SimPanel s = make_grid(40, 8);
  const Eigen::Index n = s.rows();
  Eigen::VectorXd a(n);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Index r = 0;
  for (int u = 0; u < 40; ++u) {
    const double level = 2.0 * g(rng);
    double avg = 0.0;
    for (int t = 0; t < 8; ++t) avg += (a(r + t) = level + g(rng));
    avg /= 8.0;
    for (int t = 0; t < 8; ++t, ++r) s.y(r) = a(r) + avg + 0.2 * g(rng);
  }
  s.numeric = {{"a", a}};
  const auto res = mundlak_lrt(to_panel(s), spec_from(R"({"linear":["a"]})"));
  CHECK(res.df == 1);
  CHECK(res.p_value < 0.01);
  CHECK(res.decision == EffectsMode::fixed);
}

TEST_CASE("tournament config parsing") {
  const auto groups = parse_tournament(nlohmann::json::parse(R"({"groups":[
      {"label":"g","specs":[{"label":"A","linear":["a"]},{"smooth":["x"]}],"subsample":{"years":[2005,2009]}},
      {"specs":[{"label":"C"}]}]})"),
                                       ".");
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].specs[1].label == "g#2");
  CHECK(groups[0].subsample.id() == "years:2005-2009");
  CHECK(groups[1].label == "group2");
  CHECK_THROWS_AS(parse_tournament(nlohmann::json::parse(R"({"groups":[]})"), "."), ConfigError);
  CHECK_THROWS_AS(parse_tournament(nlohmann::json::parse(R"({"groups":[{"specs":[]}]})"), "."), ConfigError);
  CHECK_THROWS_AS(parse_tournament(nlohmann::json::parse(R"({"groups":[{"specs":[{}],"weight":1}]})"), "."),
                  ConfigError);
  CHECK_THROWS_AS(parse_tournament(nlohmann::json::parse(
                                       R"({"groups":[{"specs":[{"label":"A"}]},{"specs":[{"label":"A"}]}]})"),
                                   "."),
                  ConfigError);
}

TEST_CASE("first stage: singleton groups, ties and failures") {
  const auto panel = tournament_panel(2);
  const std::vector<TheoryGroup> groups = {
      group("solo", {R"({"label":"S","linear":["a"]})"}),
      group("tie", {R"({"label":"T1","linear":["a"]})", R"({"label":"T2","linear":["a"]})"}),
      group("broken", {R"({"label":"F","smooth":["flat"]})", R"({"label":"G","smooth":["x"]})"}),
      group("dead", {R"({"label":"D","smooth":["flat"]})"})};
  const auto out = run_first_stage(groups, panel, quick());
  REQUIRE(out.candidates.size() == 6);
  REQUIRE(out.groups.size() == 4);
  CHECK(out.candidates[*out.groups[0].winner].label == "S");
  CHECK(out.candidates[1].caic.caic == out.candidates[2].caic.caic);
  CHECK(out.candidates[*out.groups[1].winner].label == "T1");
  CHECK(out.candidates[3].failed());
  CHECK(std::isinf(out.candidates[3].caic.caic));
  CHECK_FALSE(out.candidates[3].error.empty());
  CHECK(out.candidates[*out.groups[2].winner].label == "G");
  CHECK_FALSE(out.groups[3].winner.has_value());
  CHECK(std::count_if(out.annotations.begin(), out.annotations.end(),
                      [](const std::string& a) { return a.find("dead") != std::string::npos; }) == 1);
}

TEST_CASE("winners do not depend on declaration order or thread count") {
  const auto panel = tournament_panel(3);
  std::vector<std::string> specs = {R"({"label":"L","linear":["a","x"]})", R"({"label":"M","smooth":["x"]})",
                                    R"({"label":"N","linear":["a"],"smooth":["x"]})", R"({"label":"O"})"};
  auto opts = quick();
  const auto base = run_first_stage({group("g", specs)}, panel, opts);
  const std::string winner = base.candidates[*base.groups[0].winner].label;
  CHECK(winner == "N");
  std::mt19937_64 rng(11);
  for (int k = 0; k < 3; ++k) {
    std::shuffle(specs.begin(), specs.end(), rng);
    opts.jobs = 1 + k;
    const auto out = run_first_stage({group("g", specs)}, panel, opts);
    CHECK(out.candidates[*out.groups[0].winner].label == winner);
  }
  opts.jobs = 3;
  const auto threaded = run_second_stage(run_first_stage({group("g", specs)}, panel, opts), std::nullopt,
                                         {group("g", specs)}, panel, opts);
  opts.jobs = 1;
  const auto serial = run_second_stage(run_first_stage({group("g", specs)}, panel, opts), std::nullopt,
                                       {group("g", specs)}, panel, opts);
  CHECK(threaded.audit().dump() == serial.audit().dump());
}

TEST_CASE("second stage: subsample winners are refitted, incomplete ones deferred") {
  const auto panel = tournament_panel(4);
  SubsampleFilter late;
  late.first_year = 2005;
  late.last_year = 2009;
  const std::vector<TheoryGroup> groups = {
      group("full", {R"({"label":"A","linear":["a"]})", R"({"label":"B","linear":["a"],"smooth":["x"]})"}),
      group("sub", {R"({"label":"C","smooth":["x"]})"}, late),
      group("late", {R"({"label":"D","linear":["a","late"],"smooth":["x"]})"}, late)};
  const auto first = run_first_stage(groups, panel, quick());
  const auto out = run_second_stage(first, spec_from(R"({"label":"M_B","linear":["a","x"]})"), groups, panel, quick());

  REQUIRE(out.pool.size() == 3);
  CHECK(out.pool[0].label == "B");
  CHECK(out.pool[1].label == "C");
  CHECK(out.pool[1].data_id == "full");
  CHECK(out.pool[1].n_obs == panel.rows());
  CHECK(out.pool[2].label == "M_B");
  REQUIRE(out.deferred.size() == 1);
  CHECK(out.deferred[0].label == "D");
  CHECK(out.pool_winner == "B");

  REQUIRE(out.challenges.size() == 1);
  CHECK(out.challenges[0].label == "B");
  CHECK(out.challenges[0].data_id == late.id());
  const bool d_wins = better(out.deferred[0], out.challenges[0]);
  CHECK(out.overall_winner == (d_wins ? "D" : "B"));
  CHECK(out.overall_data == (d_wins ? late.id() : "full"));

  const Table t = out.table();
  REQUIRE(t.rows.size() == 7);
  const auto caic_col = std::find(t.header.begin(), t.header.end(), "caic") - t.header.begin();
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    const double prev = std::stod(t.rows[i - 1][caic_col]);
    const double cur = std::stod(t.rows[i][caic_col]);
    CHECK(prev <= cur);
  }
  const auto ow = std::find(t.header.begin(), t.header.end(), "overall_winner") - t.header.begin();
  CHECK(std::count_if(t.rows.begin(), t.rows.end(), [&](const auto& r) { return r[ow] == "1"; }) == 1);
}

TEST_CASE("failed candidates sort last in the table") {
  const auto panel = tournament_panel(5);
  const auto out = run_first_stage({group("g", {R"({"label":"bad","smooth":["flat"]})", R"({"label":"ok"})"})},
                                   panel, quick());
  const Table t = out.table();
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "ok");
  CHECK(t.rows[1][0] == "bad");
  CHECK(t.rows[1][9] == "inf");
  CHECK(t.rows[1].back().rfind("failed", 0) == 0);
}
