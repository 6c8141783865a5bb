#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "causal.hpp"
#include "environment.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "random.hpp"
#include "robustness.hpp"

namespace gtlcirl {

// ---------------------------------------------------------------------------
// tau-MDP state

/// Digest of one frame with every feature quantized to 0.01.
inline std::uint64_t frame_digest(const GraphTrajectory& traj, int t)
{
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  auto feed = [&](double v) { h = mix64(h ^ static_cast<std::uint64_t>(std::llround(v * 100.0))); };
  for (double v : traj.node_frame(t))
    feed(v);
  for (double v : traj.edge_frame(t))
    feed(v);
  return h;
}

/// Window of the last tau frames, keyed by quantized frame digests.
struct TauState
{
  std::vector<std::uint64_t> frames;

  friend bool operator==(const TauState&, const TauState&) = default;

  std::string key() const
  {
    std::string out;
    out.reserve(frames.size() * 16);
    char buf[17];
    for (auto f : frames) {
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f));
      out += buf;
    }
    return out;
  }
};

struct TauStateHash
{
  std::size_t operator()(const TauState& s) const noexcept
  {
    std::uint64_t h = 0;
    for (auto f : s.frames)
      h = mix64(h ^ f);
    return static_cast<std::size_t>(h);
  }
};

/// State ending at frame `end`; frames before 0 repeat frame 0.
inline TauState tau_state(const GraphTrajectory& traj, int end, int tau)
{
  TauState s;
  s.frames.reserve(static_cast<std::size_t>(tau));
  for (int i = end - tau + 1; i <= end; ++i)
    s.frames.push_back(frame_digest(traj, std::max(i, 0)));
  return s;
}

// ---------------------------------------------------------------------------
// Q-table

class QTable
{
public:
  explicit QTable(std::size_t actions = 1) : actions_(actions), zeros_(actions, 0.0) {}

  std::size_t action_count() const noexcept { return actions_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::uint64_t update_count() const noexcept { return updates_; }

  std::span<const double> values(const TauState& s) const
  {
    auto it = values_.find(s);
    return it == values_.end() ? std::span<const double>(zeros_) : std::span<const double>(it->second.q);
  }

  double value(const TauState& s, ActionId a) const { return values(s)[static_cast<std::size_t>(a)]; }

  double max_value(const TauState& s) const
  {
    auto v = values(s);
    return *std::max_element(v.begin(), v.end());
  }

  /// argmax with ties broken toward the lowest action id.
  ActionId greedy(const TauState& s) const
  {
    auto v = values(s);
    return static_cast<ActionId>(std::max_element(v.begin(), v.end()) - v.begin());
  }

  std::uint64_t visits(const TauState& s, ActionId a) const
  {
    auto it = values_.find(s);
    return it == values_.end() ? 0 : it->second.visits[static_cast<std::size_t>(a)];
  }

  /// Stores a new value and bumps the visit count.
  void store(const TauState& s, ActionId a, double value)
  {
    auto [it, inserted] = values_.try_emplace(s);
    if (inserted) {
      it->second.q.assign(actions_, 0.0);
      it->second.visits.assign(actions_, 0);
    }
    it->second.q[static_cast<std::size_t>(a)] = value;
    ++it->second.visits[static_cast<std::size_t>(a)];
    ++updates_;
  }

  /// Checkpoint: "statekey action value" lines, lexicographically sorted.
  void write(std::ostream& os) const
  {
    std::vector<std::string> lines;
    lines.reserve(values_.size() * actions_);
    for (const auto& [s, entry] : values_) {
      const std::string key = s.key();
      for (std::size_t a = 0; a < actions_; ++a)
        if (entry.visits[a])
          lines.push_back(key + " " + std::to_string(a) + " " + format_real(entry.q[a]));
    }
    std::sort(lines.begin(), lines.end());
    for (const auto& l : lines)
      os << l << '\n';
  }

private:
  struct Entry
  {
    std::vector<double> q;
    std::vector<std::uint64_t> visits;
  };

  std::size_t actions_;
  std::vector<double> zeros_;
  std::unordered_map<TauState, Entry, TauStateHash> values_;
  std::uint64_t updates_ = 0;
};

// ---------------------------------------------------------------------------
// Configuration

struct EpsilonSchedule
{
  double initial = 1.0;
  double decay = 0.995;
  double floor = 0.05;

  double at(int episode) const { return std::max(floor, initial * std::pow(decay, episode)); }
};

struct RlConfig
{
  double alpha = 0.1;
  double gamma = 0.95;
  double beta = 1.0;
  EpsilonSchedule epsilon;
  int episodes = 300;
  /// Robbins-Monro step size alpha = (1 + visits(s, a))^-rm_exponent instead
  /// of the fixed alpha; any exponent in (0.5, 1] satisfies the step-size sums.
  bool robbins_monro = false;
  double rm_exponent = 0.6;

  void validate() const
  {
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw ConfigError("rl.alpha must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0))
      throw ConfigError("rl.gamma must lie in [0, 1)");
    if (!(beta > 0.0))
      throw ConfigError("rl.beta must be positive");
    if (!(epsilon.initial >= 0.0 && epsilon.initial <= 1.0) || !(epsilon.floor >= 0.0 && epsilon.floor <= 1.0))
      throw ConfigError("rl.epsilon values must lie in [0, 1]");
    if (!(epsilon.decay > 0.0 && epsilon.decay <= 1.0))
      throw ConfigError("rl.epsilon_decay must lie in (0, 1]");
    if (robbins_monro && !(rm_exponent > 0.5 && rm_exponent <= 1.0))
      throw ConfigError("rl.rm_exponent must lie in (0.5, 1]");
    if (episodes < 1)
      throw ConfigError("rl.episodes must be at least 1");
  }
};

// ---------------------------------------------------------------------------
// Reward and updates

enum class RewardMode { eventually, always };

/// Always-rooted effects are penalized for low robustness; everything else is
/// rewarded for high robustness.
inline RewardMode reward_mode_for(const Formula& effect)
{
  return std::holds_alternative<Always>(effect.node().v) ? RewardMode::always : RewardMode::eventually;
}

/// exp(beta * rho) or -exp(-beta * rho), rho evaluated at the window's first frame.
inline double robustness_reward(const GraphTrajectory& window, const Formula& phi, RewardMode mode, double beta)
{
  if (window.horizon() < horizon(phi))
    throw EvaluationError("reward window of " + std::to_string(window.frame_count()) +
                          " frames is shorter than the formula horizon " + std::to_string(horizon(phi)));
  const double rho = robustness(window, phi, 0).value;
  return mode == RewardMode::eventually ? std::exp(beta * rho) : -std::exp(-beta * rho);
}

inline double q_update(QTable& table, const TauState& s, ActionId a, double r, const TauState& s_next,
                       const RlConfig& cfg)
{
  const double alpha =
      cfg.robbins_monro ? std::pow(1.0 + static_cast<double>(table.visits(s, a)), -cfg.rm_exponent) : cfg.alpha;
  const double old = table.value(s, a);
  const double updated = old + alpha * (r + cfg.gamma * table.max_value(s_next) - old);
  table.store(s, a, updated);
  return updated;
}

inline ActionId select_action(const QTable& table, const TauState& s, double epsilon, Rng& rng)
{
  if (rng.uniform() < epsilon)
    return static_cast<ActionId>(rng.uniform_int(table.action_count()));
  return table.greedy(s);
}

// ---------------------------------------------------------------------------
// Episodes

struct EpisodeResult
{
  Episode episode;
  bool counterexample = false;
  bool aborted = false;
  double cumulative_reward = 0.0;
  double effect_robustness = 0.0;
  /// Environment clone captured at the start of the episode, before any action.
  std::unique_ptr<Environment> initial_state;
};

struct NoStepHook
{
  void operator()(const Environment&, const TauState&, ActionId) const {}
};

/// One epsilon-greedy Q-learning episode. `reward(traj, t)` scores the
/// transition into frame t; `hook(env, s, a)` runs before each real step.
template <class RewardFn, class StepHook = NoStepHook>
EpisodeResult run_q_episode(Environment& env, QTable& table, const RlConfig& cfg, int tau, double epsilon, Rng& rng,
                            std::uint64_t env_seed, RewardFn&& reward, StepHook&& hook = {})
{
  if (tau < 1)
    throw ConfigError("tau must be at least 1");
  env.reset(env_seed);
  EpisodeResult out;
  out.initial_state = env.clone();
  while (!env.done()) {
    const int t = env.time();
    const TauState s = tau_state(env.trajectory(), t, tau);
    const ActionId a = select_action(table, s, epsilon, rng);
    hook(static_cast<const Environment&>(env), s, a);
    try {
      env.step(a);
    } catch (const EnvironmentError&) {
      out.aborted = true;
      break;
    }
    const double r = reward(env.trajectory(), t + 1);
    out.cumulative_reward += r;
    q_update(table, s, a, r, tau_state(env.trajectory(), t + 1, tau), cfg);
  }
  out.episode = env.episode();
  return out;
}

/// Window length for a formula-shaped tau-MDP.
inline int tau_for(const Formula& phi) { return horizon(phi) + 1; }

/// Robustness-shaped reward on the effect over the trailing tau window.
inline auto effect_reward(const CausalSpec& spec, const RlConfig& cfg)
{
  const int tau = tau_for(spec.effect);
  const RewardMode mode = reward_mode_for(spec.effect);
  return [effect = spec.effect, tau, mode, beta = cfg.beta](const GraphTrajectory& traj, int t) {
    return robustness_reward(traj.window(t, tau), effect, mode, beta);
  };
}

/// GTL-shaped episode; flags the trace as a counterexample when the effect
/// robustness at t=0 is <= 0.
inline EpisodeResult run_episode(Environment& env, QTable& table, const CausalSpec& spec, const RlConfig& cfg,
                                 double epsilon, Rng& rng, std::uint64_t env_seed)
{
  auto out = run_q_episode(env, table, cfg, tau_for(spec.effect), epsilon, rng, env_seed, effect_reward(spec, cfg));
  const auto& traj = out.episode.trajectory;
  if (traj.horizon() >= horizon(spec.effect)) {
    out.effect_robustness = robustness(traj, spec.effect, 0).value;
    out.counterexample = out.effect_robustness <= 0.0;
  } else {
    out.effect_robustness = 0.0;
    out.counterexample = false;
  }
  return out;
}

/// Off-policy Q-updates along a recorded episode, last transition first so
/// a terminal reward reaches the first step in one pass.
template <class RewardFn>
void replay_episode(QTable& table, const Episode& ep, int tau, const RlConfig& cfg, RewardFn&& reward)
{
  const int steps = std::min(static_cast<int>(ep.actions.size()), ep.trajectory.horizon());
  for (int t = steps - 1; t >= 0; --t) {
    const TauState s = tau_state(ep.trajectory, t, tau);
    q_update(table, s, ep.actions[static_cast<std::size_t>(t)], reward(ep.trajectory, t + 1),
             tau_state(ep.trajectory, t + 1, tau), cfg);
  }
}

} // namespace gtlcirl
