#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "causal.hpp"
#include "environment.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "robustness.hpp"

namespace gtlcirl {

enum class Provenance { episode_violation, perturbation };

inline std::string to_string(Provenance p)
{
  return p == Provenance::episode_violation ? "episode-violation" : "perturbation-synthesized";
}

struct Counterexample
{
  Episode episode;
  Provenance provenance = Provenance::episode_violation;
};

/// Bounded FIFO of effect-violating episodes.
class CounterexampleBuffer
{
public:
  explicit CounterexampleBuffer(std::size_t capacity = 256) : capacity_(capacity)
  {
    if (capacity_ == 0)
      throw ConfigError("counterexample buffer capacity must be positive");
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  std::size_t inserted() const noexcept { return inserted_; }
  const Counterexample& operator[](std::size_t i) const { return items_.at(i); }

  /// Rejects traces on which `effect` holds; evicts the oldest when full.
  void insert(Episode ep, Provenance p, const Formula& effect)
  {
    const double rho = robustness(ep.trajectory, effect, 0).value;
    if (rho > 0.0)
      throw GtlError("counterexample buffer: trace satisfies the effect (robustness " + format_real(rho) + ")");
    if (items_.size() == capacity_)
      items_.pop_front();
    items_.push_back({std::move(ep), p});
    ++inserted_;
  }

  /// Each trace in the trajectory text format under a provenance header.
  void dump(std::ostream& os) const
  {
    for (std::size_t i = 0; i < items_.size(); ++i) {
      os << "# counterexample " << i << " provenance=" << to_string(items_[i].provenance) << '\n';
      write_trajectory(os, items_[i].episode.trajectory);
    }
  }

private:
  std::size_t capacity_;
  std::deque<Counterexample> items_;
  std::size_t inserted_ = 0;
};

/// Cause holds and effect fails, both at t = 0.
inline bool is_valid_counterexample(const GraphTrajectory& traj, const CausalSpec& spec)
{
  return robustness(traj, spec.cause, 0).value > 0.0 && robustness(traj, spec.effect, 0).value <= 0.0;
}

struct PerturbationResult
{
  std::vector<Episode> counterexamples;
  std::size_t rollouts = 0;
};

/// Perturbs each declared state variable of `start` by -eps and +eps and
/// replays `action` to the end of the episode. Nothing is tried when `base`
/// satisfies the effect. eps <= 0 selects each variable's own default.
inline PerturbationResult generate_counterexamples(const Environment& start, ActionId action,
                                                   const GraphTrajectory& base, const CausalSpec& spec,
                                                   double epsilon = 0.0)
{
  PerturbationResult out;
  if (robustness(base, spec.effect, 0).value > 0.0)
    return out;
  for (const auto& pv : start.perturbable_variables()) {
    const double eps = epsilon > 0.0 ? epsilon : pv.default_epsilon;
    const double value = current_value(start, pv.var.node, pv.var.feature);
    for (double delta : {-eps, eps}) {
      auto env = start.clone();
      env->force(pv.var, value + delta);
      ++out.rollouts;
      while (!env->done())
        env->step(action);
      if (is_valid_counterexample(env->trajectory(), spec))
        out.counterexamples.push_back(env->episode());
    }
  }
  return out;
}

/// Rewinds `env` to the first frame of `base` and replays its actions under
/// the environment's intervention for the cause (or its negation).
inline Episode generate_counterfactual(Environment& env, const Episode& base, const CausalSpec& spec, bool negate,
                                       Rng& rng)
{
  env.restore_initial(base.trajectory);
  const auto iv = env.plan_intervention(spec.cause, base.trajectory, base.actions, negate, rng);
  return rollout(env, base.actions, &iv);
}

} // namespace gtlcirl
