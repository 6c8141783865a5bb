#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "formula.hpp"
#include "graph.hpp"
#include "random.hpp"

namespace gtlcirl {

using ActionId = int;

/// Action 0 is the no-op in every environment.
inline constexpr ActionId kNoOp = 0;

struct VariableRef
{
  NodeId node = 0;
  std::string feature;

  friend bool operator==(const VariableRef&, const VariableRef&) = default;
};

struct PerturbableVariable
{
  VariableRef var;
  double default_epsilon = 0.05;
};

/// A do-intervention: per-step action overrides plus state assignments
/// applied at time t before the action of step t.
struct Intervention
{
  std::vector<std::optional<ActionId>> actions;
  std::vector<std::vector<std::pair<VariableRef, double>>> forces;

  std::optional<ActionId> action_at(int t) const
  {
    return t < static_cast<int>(actions.size()) ? actions[static_cast<std::size_t>(t)] : std::nullopt;
  }
};

struct Episode
{
  GraphTrajectory trajectory;
  std::vector<ActionId> actions;
};

/// Discrete-time, seeded, cloneable simulator with a do-operator hook.
///
/// Frame t+1 is the state after the action of step t and carries that
/// action's indicator features; recorded frames are not rewritten by later
/// steps.
class Environment
{
public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual void reset(std::uint64_t seed) = 0;
  virtual void step(ActionId action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Overrides a state variable at the current time.
  virtual void force(const VariableRef& var, double value) = 0;

  virtual const GraphTrajectory& trajectory() const = 0;
  virtual const std::vector<ActionId>& actions() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual std::string action_name(ActionId action) const = 0;
  virtual std::vector<PerturbableVariable> perturbable_variables() const = 0;
  virtual int episode_length() const = 0;
  virtual int time() const = 0;
  bool done() const { return time() >= episode_length(); }

  /// Native reward of the most recent step, used by the baselines.
  virtual double raw_reward() const = 0;

  /// Rewinds to the state recorded in frame 0 of `base`, which must come from
  /// an environment with the same parameters.
  virtual void restore_initial(const GraphTrajectory& base) = 0;

  /// Maps a cause formula onto concrete assignments that make it hold
  /// (negate = false) or fail (negate = true) when replaying `base_actions`.
  /// Throws UnforceableError when the cause has no mapping here.
  virtual Intervention plan_intervention(const Formula& cause, const GraphTrajectory& base,
                                         std::span<const ActionId> base_actions, bool negate, Rng& rng) const = 0;

  Episode episode() const { return {trajectory(), actions()}; }
};

/// Steps `env` to the end of its episode, replaying `actions` (no-op past
/// their end) under an optional intervention.
inline Episode rollout(Environment& env, std::span<const ActionId> actions, const Intervention* iv = nullptr)
{
  while (!env.done()) {
    const int t = env.time();
    if (iv && t < static_cast<int>(iv->forces.size()))
      for (const auto& [var, value] : iv->forces[static_cast<std::size_t>(t)])
        env.force(var, value);
    ActionId a = t < static_cast<int>(actions.size()) ? actions[static_cast<std::size_t>(t)] : kNoOp;
    if (iv)
      if (auto over = iv->action_at(t))
        a = *over;
    env.step(a);
  }
  return env.episode();
}

/// Reads a node feature of the most recent frame.
inline double current_value(const Environment& env, NodeId node, const std::string& feature)
{
  const auto& traj = env.trajectory();
  return traj.node_value(node, traj.horizon(), *traj.node_feature_index(feature));
}

} // namespace gtlcirl
