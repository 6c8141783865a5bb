#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "formula.hpp"
#include "graph.hpp"

namespace gtlcirl {

/// Robustness of a counting quantifier with fewer eligible neighbors than required.
inline constexpr double kNoNeighbors = -1e6;

struct Robustness
{
  double value = 0.0;

  bool satisfied() const noexcept { return value > 0.0; }
  bool violated() const noexcept { return value < 0.0; }
  operator double() const noexcept { return value; }
};

/// Nodes at the end of a simple path from `node` whose i-th edge satisfies
/// props[i] at time t. Sorted ascending, without duplicates.
inline std::vector<NodeId> eligible_neighbors(const GraphTrajectory& traj, NodeId node, std::span<const EdgeProp> props,
                                              int t)
{
  const Graph& g = traj.graph();
  if (!g.contains(node))
    throw EvaluationError("node " + std::to_string(node) + " is not in the graph");

  std::vector<std::size_t> feature(props.size());
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (props[i].is_true())
      continue;
    auto idx = traj.edge_feature_index(props[i].feature);
    if (!idx)
      throw EvaluationError("unknown edge feature '" + props[i].feature + "'");
    feature[i] = *idx;
  }

  std::vector<NodeId> out;
  std::vector<char> on_path(static_cast<std::size_t>(g.node_count()), 0);
  std::function<void(NodeId, std::size_t)> walk = [&](NodeId at, std::size_t depth) {
    if (depth == props.size()) {
      out.push_back(at);
      return;
    }
    on_path[static_cast<std::size_t>(at)] = 1;
    for (const auto& inc : g.incident(at)) {
      if (on_path[static_cast<std::size_t>(inc.neighbor)])
        continue;
      const EdgeProp& p = props[depth];
      if (!p.is_true() && !p.holds(traj.edge_value(inc.edge, t, feature[depth])))
        continue;
      walk(inc.neighbor, depth + 1);
    }
    on_path[static_cast<std::size_t>(at)] = 0;
  };
  if (!props.empty())
    walk(node, 0);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace detail {

inline double rho(const GraphTrajectory& traj, const Formula& f, NodeId node, int t)
{
  return std::visit(
      overloaded{
          [&](const Atomic& x) {
            auto idx = traj.node_feature_index(x.feature);
            if (!idx)
              throw EvaluationError("unknown node feature '" + x.feature + "'");
            return traj.node_value(node, t, *idx) - x.threshold;
          },
          [&](const Not& x) { return -rho(traj, x.inner, node, t); },
          [&](const And& x) { return std::min(rho(traj, x.left, node, t), rho(traj, x.right, node, t)); },
          [&](const Or& x) { return std::max(rho(traj, x.left, node, t), rho(traj, x.right, node, t)); },
          [&](const ExistsN& x) {
            auto nbrs = eligible_neighbors(traj, node, x.edge_props, t);
            if (nbrs.size() < static_cast<std::size_t>(x.n))
              return kNoNeighbors;
            std::vector<double> values;
            values.reserve(nbrs.size());
            for (NodeId u : nbrs)
              values.push_back(rho(traj, x.inner, u, t));
            auto nth = values.begin() + (x.n - 1);
            std::nth_element(values.begin(), nth, values.end(), std::greater<>());
            return *nth;
          },
          [&](const ExistsNode& x) {
            double best = -std::numeric_limits<double>::infinity();
            for (NodeId u = 0; u < traj.graph().node_count(); ++u)
              best = std::max(best, rho(traj, x.inner, u, t));
            return traj.graph().node_count() > 0 ? best : kNoNeighbors;
          },
          [&](const Eventually& x) {
            double best = -std::numeric_limits<double>::infinity();
            for (int s = t + x.a; s <= t + x.b; ++s)
              best = std::max(best, rho(traj, x.inner, node, s));
            return best;
          },
          [&](const Always& x) {
            double worst = std::numeric_limits<double>::infinity();
            for (int s = t + x.a; s <= t + x.b; ++s)
              worst = std::min(worst, rho(traj, x.inner, node, s));
            return worst;
          },
      },
      f.node().v);
}

} // namespace detail

/// Signed satisfaction margin of `f` on `traj` at (node, t).
inline Robustness robustness(const GraphTrajectory& traj, const Formula& f, NodeId node, int t)
{
  if (!traj.graph().contains(node))
    throw EvaluationError("node " + std::to_string(node) + " is not in the graph");
  if (t < 0 || t + horizon(f) > traj.horizon())
    throw EvaluationError("formula window [" + std::to_string(t) + "," + std::to_string(t + horizon(f)) +
                          "] exceeds trajectory horizon " + std::to_string(traj.horizon()));
  return {detail::rho(traj, f, node, t)};
}

/// Trajectory-level robustness: evaluated at node 0. Formulas over a single
/// node are written with EV or refer to graph-wide features replicated on
/// every node.
inline Robustness robustness(const GraphTrajectory& traj, const Formula& f, int t = 0)
{
  return robustness(traj, f, 0, t);
}

} // namespace gtlcirl
