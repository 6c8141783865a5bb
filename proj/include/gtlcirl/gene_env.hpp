#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "environment.hpp"
#include "errors.hpp"

namespace gtlcirl {

struct GeneWindow
{
  int gene = 1; // 1, 2 or 4
  int a = 0;
  int b = 0;
};

struct GeneConfig
{
  int units = 8;
  double mean_degree = 3.0;
  int episode_length = 16;
  double initial_progression = 0.5;
  double drift = 0.02;
  /// Diseased pattern must hold over [0, hold_until].
  int hold_until = 10;
  /// Gene edits issued before this time take effect at this time.
  int edit_effect_time = 11;
  /// DiseaseProgression drops to zero from this time when the rule fires.
  int fire_time = 12;
  std::vector<GeneWindow> windows{{1, 0, 3}, {2, 3, 6}, {4, 6, 9}};
};

/// Gene-regulation network of biological units (BUs) with four binary genes.
///
/// Edits issued at step t are labeled ModifyG*=1 on frame t+1.
///
/// A hidden rule drives DiseaseProgression to zero: some BU carries the
/// diseased pattern G1=G2=G4=1, G3=0 throughout [0, hold_until], has at least
/// one conn-neighbor with G1, G2 or G4 active at t=0, and receives ModifyG1,
/// ModifyG2 and ModifyG4 inside their respective windows. Otherwise the
/// progression drifts up with the fraction of diseased BUs.
class GeneEnv : public Environment
{
public:
  static constexpr std::array<int, 3> kEditableGenes{1, 2, 4};

  enum Feature : std::size_t { G1, G2, G3, G4, ModifyG1, ModifyG2, ModifyG4, Progression, kFeatureCount };

  explicit GeneEnv(GeneConfig cfg = {}) : cfg_(std::move(cfg)) {}

  static std::vector<std::string> feature_names()
  {
    return {"G1", "G2", "G3", "G4", "ModifyG1", "ModifyG2", "ModifyG4", "DiseaseProgression"};
  }

  const GeneConfig& config() const noexcept { return cfg_; }

  std::string name() const override { return "gene"; }

  void reset(std::uint64_t seed) override
  {
    Rng rng = Rng::derive(seed, "gene.reset");
    const int n = cfg_.units;
    if (n < 2)
      throw EnvironmentError("gene env needs at least two units");
    const auto max_edges = static_cast<std::size_t>(n * (n - 1) / 2);
    const auto edge_target =
        std::min(max_edges, static_cast<std::size_t>(std::lround(cfg_.mean_degree * n / 2.0)));
    std::vector<Edge> pairs;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        pairs.push_back({a, b});
    // partial Fisher-Yates
    for (std::size_t i = 0; i < edge_target; ++i)
      std::swap(pairs[i], pairs[i + rng.uniform_int(pairs.size() - i)]);
    pairs.resize(edge_target);
    std::sort(pairs.begin(), pairs.end(), [](Edge x, Edge y) { return x.u != y.u ? x.u < y.u : x.v < y.v; });
    graph_ = std::make_shared<Graph>(n, pairs);

    genes_.assign(static_cast<std::size_t>(n), {0, 0, 0, 0});
    for (auto& g : genes_)
      for (auto& bit : g)
        bit = rng.bernoulli(0.5) ? 1 : 0;

    std::vector<NodeId> candidates;
    for (NodeId v = 0; v < n; ++v)
      if (!graph_->incident(v).empty())
        candidates.push_back(v);
    if (!candidates.empty()) {
      const NodeId v = candidates[rng.uniform_int(candidates.size())];
      genes_[static_cast<std::size_t>(v)] = {1, 1, 0, 1};
      if (!has_support(v)) {
        const auto& inc = graph_->incident(v);
        const NodeId u = inc[rng.uniform_int(inc.size())].neighbor;
        genes_[static_cast<std::size_t>(u)][0] = 1;
      }
    }

    progression_ = cfg_.initial_progression;
    t_ = 0;
    fired_ = false;
    pending_.clear();
    actions_.clear();
    traj_ = GraphTrajectory(graph_, feature_names(), {"conn"});
    push_frame();
  }

  void step(ActionId action) override
  {
    if (done())
      throw EnvironmentError("gene env: step past the end of the episode");
    if (action < 0 || static_cast<std::size_t>(action) >= action_count())
      throw EnvironmentError("gene env: invalid action " + std::to_string(action));
    actions_.push_back(action);
    std::optional<std::pair<NodeId, int>> label;
    if (action != kNoOp) {
      label = decode(action);
      pending_.push_back(
          {std::max(t_ + 1, cfg_.edit_effect_time), label->first, kEditableGenes[static_cast<std::size_t>(label->second)]});
    }

    const int diseased = diseased_count();
    ++t_;
    for (const auto& e : pending_)
      if (e.time == t_)
        genes_[static_cast<std::size_t>(e.unit)][static_cast<std::size_t>(e.gene - 1)] = 0;
    std::erase_if(pending_, [&](const PendingEdit& e) { return e.time <= t_; });

    if (t_ == cfg_.fire_time)
      fired_ = rule_fires();
    if (fired_ && t_ >= cfg_.fire_time)
      progression_ = 0.0;
    else
      progression_ = std::min(1.0, progression_ + cfg_.drift * diseased / static_cast<double>(cfg_.units));
    push_frame();
    if (label)
      traj_.set_node_value(label->first, t_, ModifyG1 + static_cast<std::size_t>(label->second), 1.0);
  }

  std::unique_ptr<Environment> clone() const override { return std::make_unique<GeneEnv>(*this); }

  void force(const VariableRef& var, double value) override
  {
    if (!graph_ || !graph_->contains(var.node))
      throw EnvironmentError("gene env: force on unknown unit " + std::to_string(var.node));
    if (var.feature == "DiseaseProgression") {
      progression_ = std::clamp(value, 0.0, 1.0);
      for (NodeId v = 0; v < cfg_.units; ++v)
        traj_.set_node_value(v, t_, Progression, progression_);
      return;
    }
    for (std::size_t g = 0; g < 4; ++g) {
      if (var.feature == "G" + std::to_string(g + 1)) {
        const int bit = value >= 0.5 ? 1 : 0;
        genes_[static_cast<std::size_t>(var.node)][g] = bit;
        traj_.set_node_value(var.node, t_, G1 + g, bit);
        return;
      }
    }
    throw EnvironmentError("gene env: '" + var.feature + "' is not a forceable state variable");
  }

  const GraphTrajectory& trajectory() const override { return traj_; }
  const std::vector<ActionId>& actions() const override { return actions_; }
  std::size_t action_count() const override { return 1 + kEditableGenes.size() * static_cast<std::size_t>(cfg_.units); }

  std::string action_name(ActionId action) const override
  {
    if (action == kNoOp)
      return "NoOp";
    const auto [unit, slot] = decode(action);
    return "ModifyG" + std::to_string(kEditableGenes[static_cast<std::size_t>(slot)]) + "(" + std::to_string(unit) + ")";
  }

  static ActionId modify_action(NodeId unit, int gene)
  {
    const auto it = std::find(kEditableGenes.begin(), kEditableGenes.end(), gene);
    if (it == kEditableGenes.end())
      throw EnvironmentError("gene env: G" + std::to_string(gene) + " is not editable");
    return 1 + 3 * unit + static_cast<int>(it - kEditableGenes.begin());
  }

  std::vector<PerturbableVariable> perturbable_variables() const override
  {
    std::vector<PerturbableVariable> out;
    for (NodeId v = 0; v < cfg_.units; ++v)
      for (int g = 1; g <= 4; ++g)
        out.push_back({{v, "G" + std::to_string(g)}, 1.0});
    out.push_back({{0, "DiseaseProgression"}, 0.05});
    return out;
  }

  int episode_length() const override { return cfg_.episode_length; }
  int time() const override { return t_; }
  double raw_reward() const override { return -progression_; }
  bool rule_fired() const noexcept { return fired_; }
  double progression() const noexcept { return progression_; }
  int gene(NodeId unit, int g) const { return genes_.at(static_cast<std::size_t>(unit)).at(static_cast<std::size_t>(g - 1)); }

  void restore_initial(const GraphTrajectory& base) override
  {
    if (base.frame_count() == 0 || base.graph().node_count() != cfg_.units)
      throw EnvironmentError("gene env: base trajectory does not match this network");
    graph_ = base.graph_ptr();
    genes_.assign(static_cast<std::size_t>(cfg_.units), {0, 0, 0, 0});
    for (NodeId v = 0; v < cfg_.units; ++v)
      for (std::size_t g = 0; g < 4; ++g)
        genes_[static_cast<std::size_t>(v)][g] = base.node_value(v, 0, G1 + g) >= 0.5 ? 1 : 0;
    progression_ = base.node_value(0, 0, Progression);
    t_ = 0;
    fired_ = false;
    pending_.clear();
    actions_.clear();
    traj_ = GraphTrajectory(graph_, feature_names(), {"conn"});
    push_frame();
  }

  /// Units carrying the diseased pattern with neighbor support at t=0 of `traj`.
  std::vector<NodeId> forceable_units(const GraphTrajectory& traj) const
  {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < traj.graph().node_count(); ++v)
      if (pattern_at(traj, v, 0) && support_at(traj, v, 0))
        out.push_back(v);
    return out;
  }

  Intervention plan_intervention(const Formula& cause, const GraphTrajectory& base,
                                 std::span<const ActionId> base_actions, bool negate, Rng& rng) const override
  {
    std::vector<GeneWindow> windows;
    collect_edit_windows(cause, windows);
    if (windows.empty())
      throw UnforceableError("gene env: cause has no timed ModifyG windows to force");
    const auto units = forceable_units(base);
    if (units.empty())
      throw UnforceableError("gene env: no unit carries the diseased pattern with neighbor support");
    const NodeId target = units.front();
    const int last_step = cfg_.episode_length - 1;

    Intervention iv;
    iv.actions.assign(static_cast<std::size_t>(cfg_.episode_length), std::nullopt);
    for (int t = 0; t <= last_step; ++t)
      iv.actions[static_cast<std::size_t>(t)] =
          t < static_cast<int>(base_actions.size()) ? base_actions[static_cast<std::size_t>(t)] : kNoOp;

    auto edits = [&](ActionId a, NodeId& unit, int& gene) {
      if (a == kNoOp)
        return false;
      auto [u, slot] = decode(a);
      unit = u;
      gene = kEditableGenes[static_cast<std::size_t>(slot)];
      return true;
    };
    // The intervention takes over the target's edits of the cause genes.
    for (auto& slot : iv.actions) {
      NodeId u;
      int g;
      if (edits(*slot, u, g) && u == target &&
          std::any_of(windows.begin(), windows.end(), [&](const GeneWindow& w) { return w.gene == g; }))
        slot = kNoOp;
    }

    const std::size_t broken = negate ? rng.uniform_int(windows.size()) : windows.size();
    if (negate) {
      // No unit may keep an edit of the broken gene inside its window.
      const GeneWindow& w = windows[broken];
      for (int t = std::max(w.a - 1, 0); t <= std::min(w.b - 1, last_step); ++t) {
        NodeId u;
        int g;
        if (edits(*iv.actions[static_cast<std::size_t>(t)], u, g) && g == w.gene)
          iv.actions[static_cast<std::size_t>(t)] = kNoOp;
      }
    }

    std::vector<char> taken(static_cast<std::size_t>(cfg_.episode_length), 0);
    auto place = [&](std::vector<int> steps, int gene) {
      std::erase_if(steps, [&](int t) { return taken[static_cast<std::size_t>(t)]; });
      if (steps.empty())
        return false;
      const int t = steps[rng.uniform_int(steps.size())];
      taken[static_cast<std::size_t>(t)] = 1;
      iv.actions[static_cast<std::size_t>(t)] = modify_action(target, gene);
      return true;
    };
    for (std::size_t j = 0; j < windows.size(); ++j) {
      const GeneWindow& w = windows[j];
      std::vector<int> inside, outside;
      for (int t = 0; t <= last_step; ++t)
        (t + 1 >= w.a && t + 1 <= w.b ? inside : outside).push_back(t);
      if (j == broken) {
        place(outside, w.gene); // no room outside: the edit is simply withheld
        continue;
      }
      if (!place(inside, w.gene))
        throw UnforceableError("gene env: window [" + std::to_string(w.a) + "," + std::to_string(w.b) +
                               "] has no free step for ModifyG" + std::to_string(w.gene));
    }
    return iv;
  }

  /// Procedural check of the hidden rule against a recorded trajectory.
  bool rule_holds(const GraphTrajectory& traj) const
  {
    for (NodeId v = 0; v < traj.graph().node_count(); ++v) {
      bool pattern = true;
      for (int t = 0; t <= cfg_.hold_until && pattern; ++t)
        pattern = pattern_at(traj, v, t);
      if (!pattern || !support_at(traj, v, 0))
        continue;
      bool all = true;
      for (const auto& w : cfg_.windows) {
        bool hit = false;
        const std::size_t feature = ModifyG1 + slot_of(w.gene);
        for (int t = w.a; t <= w.b && t <= traj.horizon(); ++t)
          hit |= traj.node_value(v, t, feature) >= 0.5;
        all &= hit;
      }
      if (all)
        return true;
    }
    return false;
  }

private:
  struct PendingEdit
  {
    int time;
    NodeId unit;
    int gene;
  };

  static std::size_t slot_of(int gene) { return gene == 4 ? 2 : static_cast<std::size_t>(gene - 1); }

  std::pair<NodeId, int> decode(ActionId action) const { return {(action - 1) / 3, (action - 1) % 3}; }

  static bool pattern_at(const GraphTrajectory& traj, NodeId v, int t)
  {
    return traj.node_value(v, t, G1) >= 0.5 && traj.node_value(v, t, G2) >= 0.5 && traj.node_value(v, t, G4) >= 0.5 &&
           traj.node_value(v, t, G3) < 0.5;
  }

  static bool support_at(const GraphTrajectory& traj, NodeId v, int t)
  {
    for (const auto& inc : traj.graph().incident(v)) {
      if (traj.edge_value(inc.edge, t, 0) < 1.0)
        continue;
      const NodeId u = inc.neighbor;
      if (traj.node_value(u, t, G1) >= 0.5 || traj.node_value(u, t, G2) >= 0.5 || traj.node_value(u, t, G4) >= 0.5)
        return true;
    }
    return false;
  }

  bool has_support(NodeId v) const
  {
    for (const auto& inc : graph_->incident(v)) {
      const auto& g = genes_[static_cast<std::size_t>(inc.neighbor)];
      if (g[0] || g[1] || g[3])
        return true;
    }
    return false;
  }

  int diseased_count() const
  {
    int n = 0;
    for (const auto& g : genes_)
      n += (g[0] && g[1] && g[3] && !g[2]) ? 1 : 0;
    return n;
  }

  bool rule_fires() const { return rule_holds(traj_); }

  static void collect_edit_windows(const Formula& f, std::vector<GeneWindow>& out)
  {
    std::visit(overloaded{
                   [&](const Eventually& x) {
                     if (auto* at = std::get_if<Atomic>(&x.inner.node().v)) {
                       for (int g : kEditableGenes)
                         if (at->feature == "ModifyG" + std::to_string(g)) {
                           out.push_back({g, x.a, x.b});
                           return;
                         }
                     }
                     collect_edit_windows(x.inner, out);
                   },
                   [&](const And& x) {
                     collect_edit_windows(x.left, out);
                     collect_edit_windows(x.right, out);
                   },
                   [&](const ExistsNode& x) { collect_edit_windows(x.inner, out); },
                   [](const auto&) {},
               },
               f.node().v);
  }

  void push_frame()
  {
    std::vector<double> nodes(traj_.node_frame_size(), 0.0);
    for (NodeId v = 0; v < cfg_.units; ++v) {
      double* row = nodes.data() + static_cast<std::size_t>(v) * kFeatureCount;
      for (std::size_t g = 0; g < 4; ++g)
        row[G1 + g] = genes_[static_cast<std::size_t>(v)][g];
      row[Progression] = progression_;
    }
    std::vector<double> edges(traj_.edge_frame_size(), 1.0);
    traj_.push_frame(nodes, edges);
  }

  GeneConfig cfg_;
  std::shared_ptr<const Graph> graph_;
  std::vector<std::array<int, 4>> genes_;
  double progression_ = 0.0;
  int t_ = 0;
  bool fired_ = false;
  std::vector<PendingEdit> pending_;
  std::vector<ActionId> actions_;
  GraphTrajectory traj_;
};

/// Causal formula of the gene case study with the given edit windows.
inline std::string gene_cause_text(int a1, int b1, int a2, int b2, int a3, int b3)
{
  auto w = [](int a, int b) { return "[" + std::to_string(a) + "," + std::to_string(b) + "]"; };
  return "EV((G[0,10]((G1 = 1) & (G2 = 1) & (G4 = 1) & (G3 = 0)) & E1{conn >= 1}((G1 = 1) | (G2 = 1) | (G4 = 1)))"
         " & F" + w(a1, b1) + "(ModifyG1 = 1) & F" + w(a2, b2) + "(ModifyG2 = 1) & F" + w(a3, b3) + "(ModifyG4 = 1))";
}

/// Cause skeleton with the three edit-window starts as slots a1, a2, a3; each
/// window spans three steps.
inline const char* kGeneCauseSkeleton =
    "EV((G[0,10]((G1 = 1) & (G2 = 1) & (G4 = 1) & (G3 = 0)) & E1{conn >= 1}((G1 = 1) | (G2 = 1) | (G4 = 1)))"
    " & F[${a1},${a1+3}](ModifyG1 = 1) & F[${a2},${a2+3}](ModifyG2 = 1) & F[${a3},${a3+3}](ModifyG4 = 1))";

inline const char* kGeneEffectText = "F[12,15](DiseaseProgression < 0.01)";

} // namespace gtlcirl
