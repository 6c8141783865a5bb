#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include <gtlcirl/counterexample.hpp>
#include <gtlcirl/gene_env.hpp>
#include <gtlcirl/grid_env.hpp>
#include <gtlcirl/sne.hpp>

#include "oracles/alg1.hpp"

using namespace gtlcirl;
using Catch::Approx;

namespace {

// One node with features c and e held constant over a two-step episode.
// Enforcing the cause sets c = forced_c, negating it sets c = -forced_c;
// e becomes forced_e in either case.
class ToyEnv : public Environment
{
public:
  double c0 = 0.0, e0 = -1.0, forced_c = 0.5, forced_e = 0.3;

  std::string name() const override { return "toy"; }
  void reset(std::uint64_t) override { start(c0, e0); }
  void step(ActionId a) override
  {
    actions_.push_back(a);
    ++t_;
    traj_.push_frame(std::vector<double>{c_, e_}, std::vector<double>{});
  }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ToyEnv>(*this); }
  void force(const VariableRef& var, double value) override
  {
    (var.feature == "c" ? c_ : e_) = value;
    traj_.set_node_value(0, t_, var.feature == "c" ? 0 : 1, value);
  }
  const GraphTrajectory& trajectory() const override { return traj_; }
  const std::vector<ActionId>& actions() const override { return actions_; }
  std::size_t action_count() const override { return 2; }
  std::string action_name(ActionId a) const override { return a ? "Go" : "NoOp"; }
  std::vector<PerturbableVariable> perturbable_variables() const override
  {
    return {{{0, "c"}, 0.1}, {{0, "e"}, 0.1}};
  }
  int episode_length() const override { return 2; }
  int time() const override { return t_; }
  double raw_reward() const override { return e_; }
  void restore_initial(const GraphTrajectory& base) override
  {
    start(base.node_value(0, 0, 0), base.node_value(0, 0, 1));
  }
  Intervention plan_intervention(const Formula&, const GraphTrajectory&, std::span<const ActionId>, bool negate,
                                 Rng&) const override
  {
    Intervention iv;
    iv.forces.push_back({{{0, "c"}, negate ? -forced_c : forced_c}, {{0, "e"}, forced_e}});
    return iv;
  }

private:
  void start(double c, double e)
  {
    c_ = c;
    e_ = e;
    t_ = 0;
    actions_.clear();
    traj_ = GraphTrajectory(std::make_shared<Graph>(1, std::vector<Edge>{}), {"c", "e"});
    traj_.push_frame(std::vector<double>{c_, e_}, std::vector<double>{});
  }

  double c_ = 0, e_ = 0;
  int t_ = 0;
  std::vector<ActionId> actions_;
  GraphTrajectory traj_;
};

CausalSpec toy_spec()
{
  return CausalSpec::from_template(CauseTemplate("(c >= ${k})", {{"k", SlotKind::threshold, -1, 1}}), {0.0},
                                   parse_formula("(e >= 0)"));
}

CausalSpec grid_spec(double vth)
{
  return CausalSpec::from_template(CauseTemplate(kGridCauseSkeleton, {{"vth", SlotKind::threshold, 0.80, 1.00}}),
                                   {vth}, parse_formula(kGridEffectText));
}

CausalSpec gene_spec(std::vector<double> theta = {0, 3, 6})
{
  CauseTemplate t(kGeneCauseSkeleton, {{"a1", SlotKind::window_lo, 0, 12},
                                       {"a2", SlotKind::window_lo, 0, 12},
                                       {"a3", SlotKind::window_lo, 0, 12}});
  return CausalSpec::from_template(std::move(t), std::move(theta), parse_formula(kGeneEffectText));
}

Episode toy_episode(ToyEnv& env)
{
  env.reset(0);
  return rollout(env, {});
}

} // namespace

TEST_CASE("buffer holds effect violations oldest-first", "[ce]")
{
  ToyEnv env;
  const auto spec = toy_spec();
  CounterexampleBuffer buf(2);
  CHECK_THROWS_AS(CounterexampleBuffer(0), ConfigError);
  for (double e : {-1.0, -2.0, -3.0}) {
    env.e0 = e;
    buf.insert(toy_episode(env), Provenance::episode_violation, spec.effect);
  }
  CHECK(buf.size() == 2);
  CHECK(buf.inserted() == 3);
  CHECK(buf[0].episode.trajectory.node_value(0, 0, 1) == -2.0);
  CHECK(buf[1].episode.trajectory.node_value(0, 0, 1) == -3.0);
  env.e0 = 0.5;
  CHECK_THROWS_AS(buf.insert(toy_episode(env), Provenance::perturbation, spec.effect), GtlError);
  CHECK(buf.size() == 2);

  std::ostringstream os;
  buf.dump(os);
  CHECK(os.str().rfind("# counterexample 0 provenance=episode-violation\n", 0) == 0);
}

TEST_CASE("valid counterexample definition", "[ce]")
{
  const auto spec = toy_spec();
  auto trace = [](double c, double e) {
    GraphTrajectory t(std::make_shared<Graph>(1, std::vector<Edge>{}), {"c", "e"});
    t.push_frame(std::vector<double>{c, e}, std::vector<double>{});
    return t;
  };
  CHECK(is_valid_counterexample(trace(0.3, -0.1), spec));
  CHECK_FALSE(is_valid_counterexample(trace(-0.3, -0.1), spec));
  CHECK_FALSE(is_valid_counterexample(trace(0.3, 0.1), spec));
}

TEST_CASE("perturbation enumerates two rollouts per variable", "[ce]")
{
  ToyEnv env;
  env.c0 = -0.05;
  env.e0 = -1.0;
  env.reset(0);
  auto start = env.clone();
  rollout(env, {});
  const auto spec = toy_spec();
  auto r = generate_counterexamples(*start, kNoOp, env.trajectory(), spec, 0.1);
  CHECK(r.rollouts == 4);
  REQUIRE(r.counterexamples.size() == 1); // only c + 0.1 crosses zero
  for (const auto& ep : r.counterexamples)
    CHECK(is_valid_counterexample(ep.trajectory, spec));

  ToyEnv ok;
  ok.e0 = 1.0;
  ok.reset(0);
  auto ok_start = ok.clone();
  rollout(ok, {});
  auto none = generate_counterexamples(*ok_start, kNoOp, ok.trajectory(), spec, 0.1);
  CHECK(none.rollouts == 0);
  CHECK(none.counterexamples.empty());
}

TEST_CASE("grid perturbation across the voltage threshold", "[ce]")
{
  GridEnv env;
  env.reset(11);
  for (NodeId b = 0; b < 14; ++b)
    env.force({b, "V"}, 0.95);
  env.force({13, "V"}, 0.895);
  env.force({8, "V"}, 0.895);
  env.force({12, "V"}, 0.895);
  auto start = env.clone();
  rollout(env, {});
  const auto spec = grid_spec(0.90);
  REQUIRE(robustness(env.trajectory(), spec.effect).value <= 0.0);
  REQUIRE(robustness(env.trajectory(), spec.cause).value > 0.0);
  const auto r = generate_counterexamples(*start, kNoOp, env.trajectory(), spec, 0.01);
  const std::size_t d = start->perturbable_variables().size();
  CHECK(r.rollouts == 2 * d);

  // bus 13 lifted by +eps: its neighbors 8 and 12 still sit below 0.90
  auto up = start->clone();
  up->force({13, "V"}, 0.895 + 0.01);
  rollout(*up, {});
  auto down = start->clone();
  down->force({13, "V"}, 0.895 - 0.01);
  rollout(*down, {});
  const auto at13 = parse_formula("G[0,0](V < 0.9) & !E1{P>0}(V >= 0.9)");
  CHECK(robustness(up->trajectory(), at13, 13, 0).value < 0.0);
  CHECK(robustness(down->trajectory(), at13, 13, 0).value > 0.0);

  const auto again = generate_counterexamples(*start, kNoOp, env.trajectory(), spec, 0.01);
  REQUIRE(again.counterexamples.size() == r.counterexamples.size());
  for (std::size_t i = 0; i < r.counterexamples.size(); ++i)
    CHECK(again.counterexamples[i].trajectory == r.counterexamples[i].trajectory);
}

TEST_CASE("gene perturbations use per-variable defaults", "[ce]")
{
  GeneEnv env;
  env.reset(3);
  auto start = env.clone();
  rollout(env, {});
  const auto spec = gene_spec();
  const auto r = generate_counterexamples(*start, kNoOp, env.trajectory(), spec);
  CHECK(r.rollouts == 2 * (8 * 4 + 1));
  for (const auto& ep : r.counterexamples)
    CHECK(is_valid_counterexample(ep.trajectory, spec));
}

TEST_CASE("gene counterfactual forcing fires the hidden rule", "[ce]")
{
  const auto spec = gene_spec();
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GeneEnv env;
    env.reset(seed);
    const auto base = rollout(env, {});
    const auto pos = generate_counterfactual(env, base, spec, false, rng);
    CHECK(env.rule_fired());
    CHECK(robustness(pos.trajectory, spec.cause).value > 0.0);
    for (int t = 12; t <= 15; ++t)
      CHECK(pos.trajectory.node_value(0, t, GeneEnv::Progression) == 0.0);
    // idempotent on an already-satisfying base
    const auto again = generate_counterfactual(env, pos, spec, false, rng);
    CHECK(robustness(again.trajectory, spec.cause).value > 0.0);
    const auto neg = generate_counterfactual(env, base, spec, true, rng);
    CHECK(robustness(neg.trajectory, spec.cause).value < 0.0);
  }
}

TEST_CASE("grid cause without a voltage atom is unforceable", "[ce]")
{
  GridEnv env;
  env.reset(1);
  const auto base = rollout(env, {});
  auto spec = grid_spec(0.9);
  spec.cause = parse_formula("(load >= 0.2)");
  Rng rng(1);
  CHECK_THROWS_AS(generate_counterfactual(env, base, spec, false, rng), UnforceableError);
}

TEST_CASE("evaluate_sne on a single trace", "[sne]")
{
  ToyEnv env;
  CounterexampleBuffer buf;
  const auto spec = toy_spec();
  buf.insert(toy_episode(env), Provenance::episode_violation, spec.effect);
  Rng rng(1);
  SneOptions opts;
  opts.iterations = 1;
  auto s = evaluate_sne(buf, spec, env, opts, rng);
  CHECK(s.sufficiency == Approx(0.3));
  CHECK(s.existence == Approx(std::exp(-0.5)));
  CHECK(s.necessity_empty);
  CHECK(s.necessity == 0.0);

  opts.iterations = 2;
  s = evaluate_sne(buf, spec, env, opts, rng);
  CHECK(s.necessity == Approx(std::exp(-0.3)));
  CHECK(s.existence == Approx(1.0));

  env.forced_c = 0.0;
  opts.eps_d1 = opts.eps_d2 = 0.1;
  opts.iterations = 6;
  s = evaluate_sne(buf, spec, env, opts, rng);
  CHECK(s.sufficiency_empty);
  CHECK(s.necessity_empty);
  CHECK(s.existence == 1.0);
}

TEST_CASE("evaluate_sne rejects bad input", "[sne]")
{
  ToyEnv env;
  CounterexampleBuffer buf;
  Rng rng(1);
  CHECK_THROWS_AS(evaluate_sne(buf, toy_spec(), env, {}, rng), GtlError);
  buf.insert(toy_episode(env), Provenance::episode_violation, toy_spec().effect);
  SneOptions bad;
  bad.iterations = 0;
  CHECK_THROWS_AS(evaluate_sne(buf, toy_spec(), env, bad, rng), ConfigError);
  bad.iterations = 1;
  bad.eps_d1 = -1;
  CHECK_THROWS_AS(evaluate_sne(buf, toy_spec(), env, bad, rng), ConfigError);
}

TEST_CASE("evaluate_sne matches the straight-line oracle", "[sne]")
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GeneEnv env;
    const auto spec = gene_spec({static_cast<double>(seed % 4), 3, 6});
    CounterexampleBuffer buf;
    Rng fill(seed);
    while (buf.size() < 5) {
      env.reset(fill.next_u64());
      std::vector<ActionId> acts;
      for (int t = 0; t < 16; ++t)
        acts.push_back(static_cast<ActionId>(fill.uniform_int(25)));
      auto ep = rollout(env, acts);
      if (robustness(ep.trajectory, spec.effect).value <= 0.0)
        buf.insert(ep, Provenance::episode_violation, spec.effect);
    }
    SneOptions opts;
    Rng a(seed + 1), b(seed + 1);
    const auto got = evaluate_sne(buf, spec, env, opts, a);
    GeneEnv env2;
    const auto want = oracle::alg1(buf, spec, env2, opts.iterations, opts.eps_d1, opts.eps_d2, b);
    CHECK(got.sufficiency == want.s);
    CHECK(got.necessity == want.n);
    CHECK(got.existence == want.e);
  }
}
