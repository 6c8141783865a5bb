#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include <gtlcirl/causal.hpp>
#include <gtlcirl/gene_env.hpp>
#include <gtlcirl/grid_env.hpp>
#include <gtlcirl/robustness.hpp>

#include "oracles/grid_step.hpp"

using namespace gtlcirl;

namespace {

std::vector<ActionId> scripted_gene_edits(const GeneEnv& env, NodeId unit)
{
  std::vector<ActionId> acts(static_cast<std::size_t>(env.episode_length()), kNoOp);
  acts[0] = GeneEnv::modify_action(unit, 1);
  acts[3] = GeneEnv::modify_action(unit, 2);
  acts[6] = GeneEnv::modify_action(unit, 4);
  return acts;
}

bool cause_at(const GraphTrajectory& traj, NodeId b, int t)
{
  if (traj.node_value(b, t, GridEnv::V) >= 0.90)
    return false;
  for (const auto& inc : traj.graph().incident(b))
    if (traj.edge_value(inc.edge, t, 0) > 0.0 && traj.node_value(inc.neighbor, t, GridEnv::V) >= 0.90)
      return false;
  return true;
}

} // namespace

TEST_CASE("gene env basics", "[env][gene]")
{
  GeneEnv env;
  env.reset(1);
  CHECK(env.action_count() == 25);
  CHECK(env.episode_length() == 16);
  CHECK(env.trajectory().graph().node_count() == 8);
  CHECK(env.trajectory().graph().edges().size() == 12);
  CHECK(env.action_name(0) == "NoOp");
  CHECK(env.action_name(GeneEnv::modify_action(2, 4)) == "ModifyG4(2)");
  CHECK_FALSE(env.forceable_units(env.trajectory()).empty());
  CHECK(env.progression() == 0.5);
  CHECK_THROWS_AS(env.step(25), EnvironmentError);
  CHECK_THROWS_AS(GeneEnv::modify_action(0, 3), EnvironmentError);

  const ActionId edit = GeneEnv::modify_action(3, 2);
  env.step(edit);
  CHECK(env.trajectory().node_value(3, 1, GeneEnv::ModifyG2) == 1.0);
  CHECK(env.trajectory().node_value(3, 0, GeneEnv::ModifyG2) == 0.0);
  rollout(env, {});
  CHECK(env.trajectory().horizon() == 16);
  CHECK(env.done());
  CHECK(env.gene(3, 2) == 0);
  CHECK_THROWS_AS(env.step(kNoOp), EnvironmentError);
}

TEST_CASE("gene drift without the rule", "[env][gene]")
{
  GeneEnv env;
  env.reset(2);
  rollout(env, {});
  CHECK_FALSE(env.rule_fired());
  const auto& traj = env.trajectory();
  for (int t = 0; t < traj.horizon(); ++t) {
    int diseased = 0;
    for (NodeId v = 0; v < 8; ++v)
      diseased += traj.node_value(v, t, GeneEnv::G1) == 1 && traj.node_value(v, t, GeneEnv::G2) == 1 &&
                  traj.node_value(v, t, GeneEnv::G4) == 1 && traj.node_value(v, t, GeneEnv::G3) == 0;
    const double d = traj.node_value(0, t, GeneEnv::Progression);
    CHECK(traj.node_value(0, t + 1, GeneEnv::Progression) == Catch::Approx(std::min(1.0, d + 0.02 * diseased / 8.0)));
  }
}

TEST_CASE("gene scripted edits fire the rule", "[env][gene]")
{
  GeneEnv env;
  env.reset(3);
  const NodeId unit = env.forceable_units(env.trajectory()).front();
  rollout(env, scripted_gene_edits(env, unit));
  CHECK(env.rule_fired());
  for (int t = 12; t <= 16; ++t)
    CHECK(env.trajectory().node_value(0, t, GeneEnv::Progression) == 0.0);
  CHECK(robustness(env.trajectory(), parse_formula(kGeneEffectText)).satisfied());
  CHECK(robustness(env.trajectory(), parse_formula(gene_cause_text(0, 3, 3, 6, 6, 9))).satisfied());
}

TEST_CASE("gene rule engine and GTL monitor agree over 1000 seeds", "[env][gene]")
{
  const auto cause = parse_formula(gene_cause_text(0, 3, 3, 6, 6, 9));
  const auto effect = parse_formula(kGeneEffectText);
  int fired = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    GeneEnv env;
    env.reset(seed);
    std::vector<ActionId> acts;
    if (seed % 2 == 0) {
      acts = scripted_gene_edits(env, env.forceable_units(env.trajectory()).front());
    } else {
      Rng rng(seed);
      for (int t = 0; t < env.episode_length(); ++t)
        acts.push_back(static_cast<ActionId>(rng.uniform_int(env.action_count())));
    }
    rollout(env, acts);
    const auto& traj = env.trajectory();
    bool zero = false;
    for (int t = 12; t <= 15; ++t)
      zero |= traj.node_value(0, t, GeneEnv::Progression) == 0.0;
    const bool monitor = robustness(traj, cause).value > 0.0;
    fired += env.rule_fired();
    mismatches += (zero != monitor) + (monitor != robustness(traj, effect).satisfied()) +
                  (env.rule_fired() != env.rule_holds(traj));
  }
  CHECK(mismatches == 0);
  CHECK(fired >= 500);
}

TEST_CASE("gene forcing soundness", "[env][gene]")
{
  const auto cause = parse_formula(gene_cause_text(0, 3, 3, 6, 6, 9));
  const auto effect = parse_formula(kGeneEffectText);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    GeneEnv env;
    env.reset(seed);
    Rng rng(seed + 100);
    std::vector<ActionId> base;
    for (int t = 0; t < 16; ++t)
      base.push_back(static_cast<ActionId>(rng.uniform_int(25)));
    auto start = env.clone();
    rollout(env, base);
    for (bool negate : {false, true}) {
      auto cf = start->clone();
      const auto iv = cf->plan_intervention(cause, env.trajectory(), base, negate, rng);
      rollout(*cf, base, &iv);
      const double rc = robustness(cf->trajectory(), cause).value;
      const double re = robustness(cf->trajectory(), effect).value;
      if (negate) {
        CHECK(rc < 0.0);
        CHECK(re < 0.0);
      } else {
        CHECK(rc > 0.0);
        CHECK(re > 0.0);
      }
    }
  }
}

TEST_CASE("gene restore_initial rewinds to frame 0", "[env][gene]")
{
  GeneEnv env;
  env.reset(8);
  auto copy = env.clone();
  rollout(env, std::vector<ActionId>(16, GeneEnv::modify_action(1, 1)));
  const auto base = env.trajectory();
  env.restore_initial(base);
  CHECK(env.time() == 0);
  CHECK(env.trajectory() == copy->trajectory());
}

TEST_CASE("grid env basics", "[env][grid]")
{
  GridEnv env;
  env.reset(1);
  CHECK(env.action_count() == 17);
  CHECK(env.trajectory().graph().node_count() == 14);
  CHECK(env.trajectory().graph().edges().size() == 20);
  CHECK(env.load_buses().size() == 11);
  CHECK(env.action_name(env.increase_action(5)) == "IncreaseGen(5)");
  CHECK(env.action_name(env.shed_action(13)) == "ShedLoad(13)");
  CHECK_THROWS_AS(env.increase_action(3), EnvironmentError);
  env.step(env.increase_action(1));
  CHECK(env.trajectory().node_value(1, 1, GridEnv::G) == 1.0);
  CHECK(env.trajectory().node_value(1, 0, GridEnv::G) == 0.0);
  rollout(env, {});
  CHECK(env.trajectory().horizon() == 20);
}

TEST_CASE("bundled line list matches the built-in topology", "[env][grid]")
{
  const auto lines = load_grid_lines(std::string(GTLCIRL_DATA_DIR) + "/ieee14_lines.txt");
  const auto builtin = ieee14_lines();
  REQUIRE(lines.size() == builtin.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    CHECK(lines[i].from == builtin[i].from);
    CHECK(lines[i].to == builtin[i].to);
    CHECK(lines[i].limit == builtin[i].limit);
  }
  CHECK_THROWS_AS(load_grid_lines("/nonexistent/lines.txt"), ConfigError);
}

TEST_CASE("grid 20-step scripted episode matches hand-stepped update", "[env][grid]")
{
  GridEnv env;
  env.reset(5);
  auto o = oracle::grid_from(env);
  const std::vector<ActionId> script{0, 1, 0, 6, 2, 0, 0, 3, 12, 0, 4, 5, 0, 16, 0, 1, 0, 9, 0, 0};
  for (std::size_t t = 0; t < script.size(); ++t) {
    env.step(script[t]);
    o.step(env, script[t]);
    for (NodeId b = 0; b < 14; ++b)
      CHECK(env.voltage(b) == Catch::Approx(o.v[static_cast<std::size_t>(b)]).margin(1e-12));
    for (std::size_t e = 0; e < 20; ++e)
      CHECK(env.line_in_service(e) == (o.live[e] != 0));
  }
}

TEST_CASE("grid low-voltage bus drags its neighbors", "[env][grid]")
{
  GridEnv env;
  env.reset(6);
  for (NodeId b = 0; b < 14; ++b)
    env.force({b, "V"}, 0.95);
  env.force({13, "V"}, 0.88);
  auto o = oracle::grid_from(env);
  for (int t = 0; t < 6; ++t) {
    env.step(kNoOp);
    o.step(env, kNoOp);
  }
  for (NodeId b = 0; b < 14; ++b)
    CHECK(env.voltage(b) == Catch::Approx(o.v[static_cast<std::size_t>(b)]).margin(1e-12));
  // bus 13 touches 8 and 12
  CHECK(env.trajectory().node_value(8, 1, GridEnv::V) < env.trajectory().node_value(8, 0, GridEnv::V));
  CHECK(env.trajectory().node_value(12, 1, GridEnv::V) < env.trajectory().node_value(12, 0, GridEnv::V));
}

TEST_CASE("grid isolated low bus stays low without generation", "[env][grid]")
{
  int cases = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    GridEnv env;
    env.reset(seed);
    Rng rng(seed);
    for (int t = 0; t < 20; ++t) {
      // no-ops and load shedding only
      const auto k = rng.uniform_int(1 + env.load_buses().size());
      env.step(k == 0 ? kNoOp : env.shed_action(env.load_buses()[k - 1]));
    }
    const auto& traj = env.trajectory();
    for (int t = 0; t + 5 <= 20; ++t)
      for (NodeId b = 0; b < 14; ++b)
        if (cause_at(traj, b, t)) {
          ++cases;
          CHECK(traj.node_value(b, t + 5, GridEnv::V) < 0.90);
        }
  }
  CHECK(cases > 0);
}

TEST_CASE("grid forcing soundness", "[env][grid]")
{
  for (double c : {0.82, 0.90, 0.97}) {
    CauseTemplate tmpl(kGridCauseSkeleton, {{"vth", SlotKind::threshold, 0.80, 1.00}});
    const auto cause = tmpl.instantiate(std::vector<double>{c});
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      GridEnv env;
      env.reset(seed);
      auto start = env.clone();
      rollout(env, {});
      Rng rng(seed);
      for (bool negate : {false, true}) {
        auto cf = start->clone();
        const auto iv = cf->plan_intervention(cause, env.trajectory(), env.actions(), negate, rng);
        rollout(*cf, env.actions(), &iv);
        const double rc = robustness(cf->trajectory(), cause).value;
        CHECK((negate ? rc < 0.0 : rc > 0.0));
      }
    }
  }
}

TEST_CASE("grid restore_initial requires a reset", "[env][grid]")
{
  GridEnv a, b;
  a.reset(3);
  rollout(a, {});
  CHECK_THROWS_AS(b.restore_initial(a.trajectory()), EnvironmentError);
  b.reset(3);
  auto fresh = b.clone();
  rollout(b, std::vector<ActionId>(20, 1));
  b.restore_initial(a.trajectory());
  CHECK(b.trajectory() == fresh->trajectory());
}
