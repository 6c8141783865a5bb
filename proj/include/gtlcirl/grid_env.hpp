#pragma once

#include <algorithm>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "environment.hpp"
#include "errors.hpp"

namespace gtlcirl {

struct GridLine
{
  NodeId from = 0; // 0-indexed
  NodeId to = 0;
  double limit = 1.0;
};

/// IEEE 14-bus branch list, 0-indexed.
inline std::vector<GridLine> ieee14_lines()
{
  return {{0, 1, 1.2},  {0, 4, 1.0},  {1, 2, 1.0},  {1, 3, 0.9},  {1, 4, 0.9},  {2, 3, 1.0},  {3, 4, 1.0},
          {3, 6, 0.8},  {3, 8, 0.8},  {4, 5, 0.8},  {5, 10, 0.6}, {5, 11, 0.6}, {5, 12, 0.6}, {6, 7, 0.6},
          {6, 8, 0.8},  {8, 9, 0.6},  {8, 13, 0.6}, {9, 10, 0.6}, {11, 12, 0.6}, {12, 13, 0.6}};
}

/// Reads "from to limit" lines with 1-indexed buses; '#' starts a comment.
inline std::vector<GridLine> load_grid_lines(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open line list '" + path + "'");
  std::vector<GridLine> out;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (auto hash = text.find('#'); hash != std::string::npos)
      text.resize(hash);
    std::istringstream is(text);
    int a, b;
    double limit;
    if (!(is >> a))
      continue;
    if (!(is >> b >> limit) || a < 1 || b < 1)
      throw ConfigError(path + ":" + std::to_string(line) + ": expected 'from to limit'");
    out.push_back({a - 1, b - 1, limit});
  }
  return out;
}

struct GridConfig
{
  int buses = 14;
  std::vector<GridLine> lines = ieee14_lines();
  std::vector<NodeId> generators{0, 1, 2, 5, 7};
  std::vector<double> generator_max{3.324, 1.4, 1.0, 1.0, 1.0};
  /// Nominal per-unit loads of the IEEE 14-bus case.
  std::vector<double> loads{0.0, 0.217, 0.942, 0.478, 0.076, 0.112, 0.0, 0.0, 0.295, 0.09, 0.035, 0.061, 0.135, 0.149};
  int episode_length = 20;
  double threshold = 0.90;
  double support_gain = 0.04;
  double overload_drop = 0.01;
  double coupling = 0.5;
  double generator_boost = 0.05;
  double generator_step = 0.1;
  double shed_factor = 0.8;
  double v_min = 0.80;
  double v_max = 1.10;
  double trip_voltage = 0.85;
  double initial_v_lo = 0.86;
  double initial_v_hi = 1.02;
  double capacity_lo = 0.85;
  double capacity_hi = 1.30;
  /// Forced voltages sit this far on the requested side of the cause threshold.
  double force_margin = 0.02;
};

/// Simplified voltage-response model on the IEEE 14-bus topology.
///
/// Per step, from the post-action state:
///   V' = V + support_gain * [generation raised at b or a powered neighbor]
///          - overload_drop * [load > capacity]
///          + coupling * mean_{in-service neighbors u} min(0, V_u - threshold)
/// clamped to [v_min, v_max]. IncreaseGen(g) also lifts V_g by generator_boost
/// before the update. A line trips for the rest of the episode when an end
/// falls below trip_voltage or its flow exceeds the limit. Line flow is
/// 0.1 + 0.5 * (load_u + load_v) in service and 0 when tripped.
class GridEnv : public Environment
{
public:
  enum Feature : std::size_t { V, Load, G, Pg, kFeatureCount };

  explicit GridEnv(GridConfig cfg = {}) : cfg_(std::move(cfg))
  {
    if (cfg_.generators.size() != cfg_.generator_max.size())
      throw ConfigError("grid: generator list and limits differ in length");
    if (static_cast<int>(cfg_.loads.size()) != cfg_.buses)
      throw ConfigError("grid: load vector must have one entry per bus");
    std::vector<Edge> edges;
    for (const auto& l : cfg_.lines)
      edges.push_back({l.from, l.to});
    graph_ = std::make_shared<Graph>(cfg_.buses, edges);
    for (NodeId b = 0; b < cfg_.buses; ++b)
      if (cfg_.loads[static_cast<std::size_t>(b)] > 0.0)
        load_buses_.push_back(b);
  }

  static std::vector<std::string> feature_names() { return {"V", "load", "G", "Pg"}; }

  const GridConfig& config() const noexcept { return cfg_; }
  const std::vector<NodeId>& load_buses() const noexcept { return load_buses_; }

  std::string name() const override { return "grid"; }

  void reset(std::uint64_t seed) override
  {
    Rng rng = Rng::derive(seed, "grid.reset");
    const auto n = static_cast<std::size_t>(cfg_.buses);
    voltage_.resize(n);
    load_ = cfg_.loads;
    capacity_.resize(n);
    for (std::size_t b = 0; b < n; ++b)
      voltage_[b] = rng.uniform(cfg_.initial_v_lo, cfg_.initial_v_hi);
    for (std::size_t b = 0; b < n; ++b)
      capacity_[b] = load_[b] * rng.uniform(cfg_.capacity_lo, cfg_.capacity_hi);
    output_.resize(cfg_.generators.size());
    for (std::size_t g = 0; g < output_.size(); ++g)
      output_[g] = 0.5 * cfg_.generator_max[g];
    in_service_.assign(cfg_.lines.size(), 1);
    start();
  }

  void step(ActionId action) override
  {
    if (done())
      throw EnvironmentError("grid env: step past the end of the episode");
    if (action < 0 || static_cast<std::size_t>(action) >= action_count())
      throw EnvironmentError("grid env: invalid action " + std::to_string(action));
    actions_.push_back(action);

    const auto n = static_cast<std::size_t>(cfg_.buses);
    std::vector<char> support(n, 0);
    std::optional<NodeId> raised;
    if (is_increase(action)) {
      const std::size_t g = static_cast<std::size_t>(action - 1);
      const NodeId bus = cfg_.generators[g];
      raised = bus;
      output_[g] = std::min(cfg_.generator_max[g], output_[g] + cfg_.generator_step);
      voltage_[static_cast<std::size_t>(bus)] += cfg_.generator_boost;
      support[static_cast<std::size_t>(bus)] = 1;
      for (const auto& inc : graph_->incident(bus))
        if (in_service_[inc.edge])
          support[static_cast<std::size_t>(inc.neighbor)] = 1;
    } else if (action != kNoOp) {
      const NodeId bus = load_buses_[static_cast<std::size_t>(action - 1) - cfg_.generators.size()];
      load_[static_cast<std::size_t>(bus)] *= cfg_.shed_factor;
    }

    std::vector<double> next(n);
    for (std::size_t b = 0; b < n; ++b) {
      double deviation = 0.0;
      int count = 0;
      for (const auto& inc : graph_->incident(static_cast<NodeId>(b))) {
        if (!in_service_[inc.edge])
          continue;
        deviation += std::min(0.0, voltage_[static_cast<std::size_t>(inc.neighbor)] - cfg_.threshold);
        ++count;
      }
      const double mean_dev = count ? deviation / count : 0.0;
      const double overload = load_[b] > capacity_[b] ? 1.0 : 0.0;
      next[b] = std::clamp(voltage_[b] + cfg_.support_gain * support[b] - cfg_.overload_drop * overload +
                               cfg_.coupling * mean_dev,
                           cfg_.v_min, cfg_.v_max);
    }
    voltage_ = next;
    for (std::size_t e = 0; e < cfg_.lines.size(); ++e) {
      const auto& l = cfg_.lines[e];
      if (voltage_[static_cast<std::size_t>(l.from)] < cfg_.trip_voltage ||
          voltage_[static_cast<std::size_t>(l.to)] < cfg_.trip_voltage || nominal_flow(e) > l.limit)
        in_service_[e] = 0;
    }
    ++t_;
    push_frame();
    if (raised)
      traj_.set_node_value(*raised, t_, G, 1.0);
  }

  std::unique_ptr<Environment> clone() const override { return std::make_unique<GridEnv>(*this); }

  void force(const VariableRef& var, double value) override
  {
    if (!graph_->contains(var.node))
      throw EnvironmentError("grid env: force on unknown bus " + std::to_string(var.node));
    const auto b = static_cast<std::size_t>(var.node);
    if (var.feature == "V") {
      voltage_[b] = value;
      traj_.set_node_value(var.node, t_, V, value);
    } else if (var.feature == "load") {
      load_[b] = std::max(0.0, value);
      traj_.set_node_value(var.node, t_, Load, load_[b]);
      for (const auto& inc : graph_->incident(var.node))
        traj_.set_edge_value(inc.edge, t_, 0, flow(inc.edge));
    } else {
      throw EnvironmentError("grid env: '" + var.feature + "' is not a forceable state variable");
    }
  }

  const GraphTrajectory& trajectory() const override { return traj_; }
  const std::vector<ActionId>& actions() const override { return actions_; }
  std::size_t action_count() const override { return 1 + cfg_.generators.size() + load_buses_.size(); }

  std::string action_name(ActionId action) const override
  {
    if (action == kNoOp)
      return "NoOp";
    if (is_increase(action))
      return "IncreaseGen(" + std::to_string(cfg_.generators[static_cast<std::size_t>(action - 1)]) + ")";
    return "ShedLoad(" +
           std::to_string(load_buses_[static_cast<std::size_t>(action - 1) - cfg_.generators.size()]) + ")";
  }

  ActionId increase_action(NodeId generator_bus) const
  {
    auto it = std::find(cfg_.generators.begin(), cfg_.generators.end(), generator_bus);
    if (it == cfg_.generators.end())
      throw EnvironmentError("grid env: bus " + std::to_string(generator_bus) + " has no generator");
    return 1 + static_cast<ActionId>(it - cfg_.generators.begin());
  }

  ActionId shed_action(NodeId bus) const
  {
    auto it = std::find(load_buses_.begin(), load_buses_.end(), bus);
    if (it == load_buses_.end())
      throw EnvironmentError("grid env: bus " + std::to_string(bus) + " has no load");
    return 1 + static_cast<ActionId>(cfg_.generators.size()) + static_cast<ActionId>(it - load_buses_.begin());
  }

  std::vector<PerturbableVariable> perturbable_variables() const override
  {
    std::vector<PerturbableVariable> out;
    for (NodeId b = 0; b < cfg_.buses; ++b)
      out.push_back({{b, "V"}, 0.05});
    for (NodeId b : load_buses_)
      out.push_back({{b, "load"}, 0.05});
    return out;
  }

  int episode_length() const override { return cfg_.episode_length; }
  int time() const override { return t_; }

  double raw_reward() const override
  {
    int low = 0;
    for (double v : voltage_)
      low += v < cfg_.threshold ? 1 : 0;
    return -static_cast<double>(low);
  }

  double voltage(NodeId b) const { return voltage_.at(static_cast<std::size_t>(b)); }
  double capacity(NodeId b) const { return capacity_.at(static_cast<std::size_t>(b)); }
  double load(NodeId b) const { return load_.at(static_cast<std::size_t>(b)); }
  bool line_in_service(std::size_t e) const { return in_service_.at(e) != 0; }

  void restore_initial(const GraphTrajectory& base) override
  {
    if (base.frame_count() == 0 || base.graph().node_count() != cfg_.buses ||
        base.graph().edges().size() != cfg_.lines.size())
      throw EnvironmentError("grid env: base trajectory does not match this grid");
    if (capacity_.empty())
      throw EnvironmentError("grid env: restore_initial needs a prior reset for bus capacities");
    for (NodeId b = 0; b < cfg_.buses; ++b) {
      voltage_[static_cast<std::size_t>(b)] = base.node_value(b, 0, V);
      load_[static_cast<std::size_t>(b)] = base.node_value(b, 0, Load);
    }
    for (std::size_t g = 0; g < cfg_.generators.size(); ++g)
      output_[g] = base.node_value(cfg_.generators[g], 0, Pg);
    for (std::size_t e = 0; e < cfg_.lines.size(); ++e)
      in_service_[e] = base.edge_value(e, 0, 0) > 0.0 ? 1 : 0;
    start();
  }

  /// Cause-to-assignment map: "(V < c) at some bus with no powered neighbor at
  /// or above c" is forced at t=0 by pulling the lowest bus and its powered
  /// neighbors to c - margin; negation lifts every bus below c to c + margin.
  Intervention plan_intervention(const Formula& cause, const GraphTrajectory& base, std::span<const ActionId>,
                                 bool negate, Rng&) const override
  {
    auto c = voltage_threshold(cause);
    if (!c)
      throw UnforceableError("grid env: cause has no voltage atom to force");
    Intervention iv;
    iv.forces.resize(1);
    auto& at0 = iv.forces[0];
    if (negate) {
      for (NodeId b = 0; b < cfg_.buses; ++b)
        if (base.node_value(b, 0, V) <= *c)
          at0.push_back({{b, "V"}, *c + cfg_.force_margin});
      return iv;
    }
    NodeId low = 0;
    for (NodeId b = 1; b < cfg_.buses; ++b)
      if (base.node_value(b, 0, V) < base.node_value(low, 0, V))
        low = b;
    at0.push_back({{low, "V"}, *c - cfg_.force_margin});
    for (const auto& inc : graph_->incident(low))
      if (base.edge_value(inc.edge, 0, 0) > 0.0 && base.node_value(inc.neighbor, 0, V) >= *c)
        at0.push_back({{inc.neighbor, "V"}, *c - cfg_.force_margin});
    return iv;
  }

private:
  bool is_increase(ActionId a) const
  {
    return a >= 1 && static_cast<std::size_t>(a) <= cfg_.generators.size();
  }

  double nominal_flow(std::size_t e) const
  {
    const auto& l = cfg_.lines[e];
    return 0.1 + 0.5 * (load_[static_cast<std::size_t>(l.from)] + load_[static_cast<std::size_t>(l.to)]);
  }

  double flow(std::size_t e) const { return in_service_[e] ? nominal_flow(e) : 0.0; }

  static std::optional<double> voltage_threshold(const Formula& f)
  {
    std::optional<double> out;
    std::visit(overloaded{
                   [&](const Atomic& x) {
                     if (x.feature == "V")
                       out = x.threshold;
                   },
                   [&](const Not& x) { out = voltage_threshold(x.inner); },
                   [&](const And& x) {
                     out = voltage_threshold(x.left);
                     if (!out)
                       out = voltage_threshold(x.right);
                   },
                   [&](const Or& x) {
                     out = voltage_threshold(x.left);
                     if (!out)
                       out = voltage_threshold(x.right);
                   },
                   [&](const auto& x) { out = voltage_threshold(x.inner); },
               },
               f.node().v);
    return out;
  }

  void start()
  {
    t_ = 0;
    actions_.clear();
    traj_ = GraphTrajectory(graph_, feature_names(), {"P"});
    push_frame();
  }

  void push_frame()
  {
    std::vector<double> nodes(traj_.node_frame_size(), 0.0);
    for (NodeId b = 0; b < cfg_.buses; ++b) {
      double* row = nodes.data() + static_cast<std::size_t>(b) * kFeatureCount;
      row[V] = voltage_[static_cast<std::size_t>(b)];
      row[Load] = load_[static_cast<std::size_t>(b)];
    }
    for (std::size_t g = 0; g < cfg_.generators.size(); ++g)
      nodes[static_cast<std::size_t>(cfg_.generators[g]) * kFeatureCount + Pg] = output_[g];
    std::vector<double> edges(traj_.edge_frame_size());
    for (std::size_t e = 0; e < cfg_.lines.size(); ++e)
      edges[e] = flow(e);
    traj_.push_frame(nodes, edges);
  }

  GridConfig cfg_;
  std::shared_ptr<const Graph> graph_;
  std::vector<NodeId> load_buses_;
  std::vector<double> voltage_, load_, capacity_, output_;
  std::vector<char> in_service_;
  int t_ = 0;
  std::vector<ActionId> actions_;
  GraphTrajectory traj_;
};

inline const char* kGridCauseSkeleton = "EV(G[0,0](V < ${vth}) & !E1{P>0}(V >= ${vth}))";
inline const char* kGridEffectText = "EV F[1,5](G > 0)";

} // namespace gtlcirl
