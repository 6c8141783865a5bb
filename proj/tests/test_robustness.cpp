#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <gtlcirl/robustness.hpp>

#include "oracles/boolean_semantics.hpp"
#include "oracles/generators.hpp"

using namespace gtlcirl;
using Catch::Approx;

namespace {

GraphTrajectory single_node(const std::vector<double>& values, const std::string& feature = "f")
{
  GraphTrajectory traj(std::make_shared<Graph>(1, std::vector<Edge>{}), {feature});
  for (double v : values)
    traj.push_frame(std::vector<double>{v}, std::vector<double>{});
  return traj;
}

// Star: center 0 with leaves 1..3, single node feature x, edge feature P.
GraphTrajectory star(std::vector<double> x, double flow)
{
  auto g = std::make_shared<Graph>(4, std::vector<Edge>{{0, 1}, {0, 2}, {0, 3}});
  GraphTrajectory traj(g, {"x"}, {"P"});
  traj.push_frame(x, std::vector<double>(3, flow));
  return traj;
}

} // namespace

TEST_CASE("atomic and negation margins", "[robustness]")
{
  auto traj = single_node({0.95}, "V");
  CHECK(robustness(traj, make::atomic("V", 0.90)).value == Approx(0.05).epsilon(1e-12));
  CHECK(robustness(traj, parse_formula("(V < 0.90)")).value == Approx(-0.05).epsilon(1e-12));
}

TEST_CASE("eventually and always take window extrema", "[robustness]")
{
  auto traj = single_node({-1.0, 0.3, 0.2});
  CHECK(robustness(traj, parse_formula("F[0,2](f >= 0)")).value == 0.3);
  CHECK(robustness(traj, parse_formula("G[0,2](f >= 0)")).value == -1.0);
  CHECK(robustness(traj, parse_formula("G[1,2](f >= 0)")).value == 0.2);
  CHECK(robustness(traj, parse_formula("F[0,1](f >= 0)"), 1).value == 0.3);
}

TEST_CASE("evaluation errors", "[robustness]")
{
  auto traj = single_node({0.0, 1.0});
  CHECK_THROWS_AS(robustness(traj, parse_formula("F[0,2](f >= 0)")), EvaluationError);
  CHECK_THROWS_AS(robustness(traj, parse_formula("(g >= 0)")), EvaluationError);
  CHECK_THROWS_AS(robustness(traj, parse_formula("(f >= 0)"), 3, 0), EvaluationError);
  CHECK_THROWS_AS(robustness(traj, parse_formula("E1{Q > 0}(f >= 0)")), EvaluationError);
}

TEST_CASE("eligible neighbors follow edge propositions", "[neighbors]")
{
  auto traj = star({0, 0, 0, 0}, 1.0);
  std::vector<EdgeProp> any{EdgeProp::always_true()};
  CHECK(eligible_neighbors(traj, 0, any, 0) == std::vector<NodeId>{1, 2, 3});

  auto idle = star({0, 0, 0, 0}, 0.0);
  std::vector<EdgeProp> powered{{"P", Comparison::gt, 0.0}};
  CHECK(eligible_neighbors(idle, 0, powered, 0).empty());
  CHECK(eligible_neighbors(traj, 0, powered, 0) == std::vector<NodeId>{1, 2, 3});

  // chain a-b-c: two hops from a reach only c (simple paths)
  auto chain = std::make_shared<Graph>(3, std::vector<Edge>{{0, 1}, {1, 2}});
  GraphTrajectory ct(chain, {"x"}, {"P"});
  ct.push_frame(std::vector<double>{0, 0, 0}, std::vector<double>{1, 1});
  std::vector<EdgeProp> two{EdgeProp::always_true(), EdgeProp::always_true()};
  CHECK(eligible_neighbors(ct, 0, two, 0) == std::vector<NodeId>{2});
  CHECK(eligible_neighbors(ct, 1, two, 0).empty());
}

TEST_CASE("exists-N is the N-th largest neighbor margin", "[robustness]")
{
  auto traj = star({5.0, 0.4, -0.2, 0.1}, 1.0);
  CHECK(robustness(traj, parse_formula("E1{true}(x >= 0)"), 0, 0).value == 0.4);
  CHECK(robustness(traj, parse_formula("E2{true}(x >= 0)"), 0, 0).value == 0.1);
  CHECK(robustness(traj, parse_formula("E3{true}(x >= 0)"), 0, 0).value == -0.2);
  CHECK(robustness(traj, parse_formula("E4{true}(x >= 0)"), 0, 0).value == kNoNeighbors);
  CHECK(robustness(traj, parse_formula("EV (x >= 0)"), 2, 0).value == 5.0);
}

TEST_CASE("robustness sign agrees with boolean semantics", "[robustness][property]")
{
  Rng rng(7);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const bool grid = i % 4 == 0;
    auto traj = gen::trajectory(rng, 5, 8, grid);
    Formula f = gen::formula(rng, 3, 7, grid);
    const int node = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(traj.graph().node_count())));
    const double r = robustness(traj, f, node, 0).value;
    if (r == 0.0)
      continue;
    INFO(to_string(f));
    REQUIRE((r > 0) == oracle::satisfies(traj, f, node, 0));
    ++checked;
  }
  CHECK(checked > 1500);
}

TEST_CASE("semantic identities hold exactly", "[robustness][property]")
{
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    auto traj = gen::trajectory(rng, 5, 8);
    Formula a = gen::formula(rng, 2, 3);
    Formula b = gen::formula(rng, 2, 3);
    const int node = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(traj.graph().node_count())));

    CHECK(robustness(traj, make::negation(a), node, 0).value == -robustness(traj, a, node, 0).value);
    CHECK(robustness(traj, make::negation(make::conj(a, b)), node, 0).value ==
          robustness(traj, make::disj(make::negation(a), make::negation(b)), node, 0).value);

    const int a0 = static_cast<int>(rng.uniform_int(2)), b0 = a0 + static_cast<int>(rng.uniform_int(2));
    const int a1 = a0 - static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(a0 + 1)));
    const int b1 = b0 + static_cast<int>(rng.uniform_int(2));
    CHECK(robustness(traj, make::eventually(a0, b0, a), node, 0).value <=
          robustness(traj, make::eventually(a1, b1, a), node, 0).value);
    CHECK(robustness(traj, make::always(a0, b0, a), node, 0).value >=
          robustness(traj, make::always(a1, b1, a), node, 0).value);

    std::vector<EdgeProp> props{gen::edge_prop(rng)};
    const int n = 1 + static_cast<int>(rng.uniform_int(3));
    CHECK(robustness(traj, make::exists(n + 1, props, a), node, 0).value <=
          robustness(traj, make::exists(n, props, a), node, 0).value);
  }
}

TEST_CASE("trajectory text round-trips exactly", "[io]")
{
  Rng rng(3);
  auto traj = gen::trajectory(rng, 5, 4);
  std::string text = "# provenance: test\n" + to_text(traj);
  CHECK(trajectory_from_text(text) == traj);
  CHECK_THROWS_AS(trajectory_from_text("0 0 x=1\n"), ParseError);
  CHECK_THROWS_AS(trajectory_from_text("graph nodes=2 edges=0-1\n0 0 x=1\n"), ParseError);
}
