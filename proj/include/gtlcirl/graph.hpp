#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace gtlcirl {

using NodeId = int;

struct Edge
{
  NodeId u;
  NodeId v;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected simple graph on nodes 0..node_count-1.
class Graph
{
public:
  struct Incidence
  {
    NodeId neighbor;
    std::size_t edge;
  };

  Graph() = default;

  Graph(int node_count, std::vector<Edge> edges) : node_count_(node_count)
  {
    if (node_count < 0)
      throw GtlError("graph: negative node count");
    adjacency_.resize(static_cast<std::size_t>(node_count));
    for (auto e : edges)
      add_edge(e.u, e.v);
  }

  int node_count() const noexcept { return node_count_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  bool contains(NodeId n) const noexcept { return n >= 0 && n < node_count_; }

  const std::vector<Incidence>& incident(NodeId n) const { return adjacency_.at(static_cast<std::size_t>(n)); }

  std::optional<std::size_t> edge_index(NodeId a, NodeId b) const
  {
    if (!contains(a))
      return std::nullopt;
    for (const auto& inc : incident(a))
      if (inc.neighbor == b)
        return inc.edge;
    return std::nullopt;
  }

private:
  void add_edge(NodeId a, NodeId b)
  {
    if (!contains(a) || !contains(b))
      throw GtlError("graph: edge endpoint " + std::to_string(a) + "-" + std::to_string(b) + " is not a node");
    if (a == b)
      throw GtlError("graph: self-loop on node " + std::to_string(a));
    if (edge_index(a, b))
      throw GtlError("graph: duplicate edge " + std::to_string(a) + "-" + std::to_string(b));
    const std::size_t idx = edges_.size();
    edges_.push_back({std::min(a, b), std::max(a, b)});
    adjacency_[static_cast<std::size_t>(a)].push_back({b, idx});
    adjacency_[static_cast<std::size_t>(b)].push_back({a, idx});
  }

  int node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Incidence>> adjacency_;
};

/// Time-indexed node and edge labels of a fixed graph.
///
/// Labels are records of named real features with one schema per trajectory;
/// storage is dense, frame-major: frame t holds node_count * |node features|
/// values followed by edge_count * |edge features| values in a separate array.
class GraphTrajectory
{
public:
  GraphTrajectory() : graph_(std::make_shared<Graph>()) {}

  GraphTrajectory(std::shared_ptr<const Graph> graph, std::vector<std::string> node_features,
                  std::vector<std::string> edge_features = {})
    : graph_(std::move(graph)), node_features_(std::move(node_features)), edge_features_(std::move(edge_features))
  {
  }

  const Graph& graph() const noexcept { return *graph_; }
  const std::shared_ptr<const Graph>& graph_ptr() const noexcept { return graph_; }

  const std::vector<std::string>& node_features() const noexcept { return node_features_; }
  const std::vector<std::string>& edge_features() const noexcept { return edge_features_; }

  std::size_t frame_count() const noexcept { return frames_; }
  /// Last valid time index; -1 for a trajectory with no frames.
  int horizon() const noexcept { return static_cast<int>(frames_) - 1; }

  std::optional<std::size_t> node_feature_index(std::string_view name) const
  {
    return index_of(node_features_, name);
  }
  std::optional<std::size_t> edge_feature_index(std::string_view name) const
  {
    return index_of(edge_features_, name);
  }

  double node_value(NodeId n, int t, std::size_t feature) const { return node_data_[node_offset(n, t, feature)]; }
  double edge_value(std::size_t edge, int t, std::size_t feature) const
  {
    return edge_data_[edge_offset(edge, t, feature)];
  }

  void set_node_value(NodeId n, int t, std::size_t feature, double value)
  {
    node_data_[node_offset(n, t, feature)] = value;
  }
  void set_edge_value(std::size_t edge, int t, std::size_t feature, double value)
  {
    edge_data_[edge_offset(edge, t, feature)] = value;
  }

  std::size_t node_frame_size() const noexcept
  {
    return static_cast<std::size_t>(graph_->node_count()) * node_features_.size();
  }
  std::size_t edge_frame_size() const noexcept { return graph_->edges().size() * edge_features_.size(); }

  std::span<const double> node_frame(int t) const
  {
    return {node_data_.data() + static_cast<std::size_t>(t) * node_frame_size(), node_frame_size()};
  }
  std::span<const double> edge_frame(int t) const
  {
    return {edge_data_.data() + static_cast<std::size_t>(t) * edge_frame_size(), edge_frame_size()};
  }

  void push_frame(std::span<const double> nodes, std::span<const double> edges)
  {
    if (nodes.size() != node_frame_size() || edges.size() != edge_frame_size())
      throw GtlError("trajectory: frame size does not match the feature schema");
    node_data_.insert(node_data_.end(), nodes.begin(), nodes.end());
    edge_data_.insert(edge_data_.end(), edges.begin(), edges.end());
    ++frames_;
  }

  /// Drops frames after time t.
  void truncate(int t)
  {
    const auto keep = static_cast<std::size_t>(std::max(t + 1, 0));
    if (keep >= frames_)
      return;
    frames_ = keep;
    node_data_.resize(frames_ * node_frame_size());
    edge_data_.resize(frames_ * edge_frame_size());
  }

  /// Frames [end-length+1, end], left-padded with frame 0 when that range
  /// starts before the first frame.
  GraphTrajectory window(int end, int length) const
  {
    GraphTrajectory out(graph_, node_features_, edge_features_);
    out.node_data_.reserve(static_cast<std::size_t>(length) * node_frame_size());
    for (int i = end - length + 1; i <= end; ++i)
      out.push_frame(node_frame(std::max(i, 0)), edge_frame(std::max(i, 0)));
    return out;
  }

  friend bool operator==(const GraphTrajectory& a, const GraphTrajectory& b)
  {
    return a.graph_->node_count() == b.graph_->node_count() && a.graph_->edges() == b.graph_->edges() &&
           a.node_features_ == b.node_features_ && a.edge_features_ == b.edge_features_ && a.frames_ == b.frames_ &&
           a.node_data_ == b.node_data_ && a.edge_data_ == b.edge_data_;
  }

private:
  static std::optional<std::size_t> index_of(const std::vector<std::string>& names, std::string_view name)
  {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name)
        return i;
    return std::nullopt;
  }

  std::size_t node_offset(NodeId n, int t, std::size_t feature) const
  {
    return static_cast<std::size_t>(t) * node_frame_size() + static_cast<std::size_t>(n) * node_features_.size() +
           feature;
  }
  std::size_t edge_offset(std::size_t edge, int t, std::size_t feature) const
  {
    return static_cast<std::size_t>(t) * edge_frame_size() + edge * edge_features_.size() + feature;
  }

  std::shared_ptr<const Graph> graph_;
  std::vector<std::string> node_features_;
  std::vector<std::string> edge_features_;
  std::size_t frames_ = 0;
  std::vector<double> node_data_;
  std::vector<double> edge_data_;
};

/// Shortest decimal text that reads back to the same double.
inline std::string format_real(double v)
{
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_real(std::string_view s)
{
  double v = 0.0;
  const auto* first = s.data();
  if (!s.empty() && s.front() == '+')
    ++first;
  auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

// Trajectory text format:
//
//   # comment lines are ignored
//   graph nodes=<n> edges=<u-v>,<u-v>,...
//   <t> <node> feat=value feat=value ...
//   <t> <u>-<v> feat=value ...
//
// Feature order is the order of first appearance.

inline void write_trajectory(std::ostream& os, const GraphTrajectory& traj)
{
  const Graph& g = traj.graph();
  os << "graph nodes=" << g.node_count() << " edges=";
  for (std::size_t i = 0; i < g.edges().size(); ++i)
    os << (i ? "," : "") << g.edges()[i].u << '-' << g.edges()[i].v;
  os << '\n';
  for (int t = 0; t <= traj.horizon(); ++t) {
    for (NodeId n = 0; n < g.node_count(); ++n) {
      os << t << ' ' << n;
      for (std::size_t f = 0; f < traj.node_features().size(); ++f)
        os << ' ' << traj.node_features()[f] << '=' << format_real(traj.node_value(n, t, f));
      os << '\n';
    }
    if (traj.edge_features().empty())
      continue;
    for (std::size_t e = 0; e < g.edges().size(); ++e) {
      os << t << ' ' << g.edges()[e].u << '-' << g.edges()[e].v;
      for (std::size_t f = 0; f < traj.edge_features().size(); ++f)
        os << ' ' << traj.edge_features()[f] << '=' << format_real(traj.edge_value(e, t, f));
      os << '\n';
    }
  }
}

inline std::string to_text(const GraphTrajectory& traj)
{
  std::ostringstream os;
  write_trajectory(os, traj);
  return os.str();
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos)
      pos = s.size();
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> tokens(std::string_view s)
{
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r'))
      ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r')
      ++j;
    if (j > i)
      out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline int parse_int(std::string_view s, int line)
{
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("expected integer, got '" + std::string(s) + "'", line, 1);
  return v;
}

} // namespace detail

inline GraphTrajectory read_trajectory(std::istream& is)
{
  using Record = std::vector<std::pair<std::string, double>>;
  std::optional<Graph> graph;
  std::map<std::pair<int, int>, Record> node_records;
  std::map<std::pair<int, std::size_t>, Record> edge_records;
  std::vector<std::string> node_features, edge_features;
  int max_t = -1;

  auto note_feature = [](std::vector<std::string>& names, const std::string& f) {
    if (std::find(names.begin(), names.end(), f) == names.end())
      names.push_back(f);
  };
  auto parse_record = [&](const std::vector<std::string_view>& toks, int line, std::vector<std::string>& names) {
    Record rec;
    for (std::size_t i = 2; i < toks.size(); ++i) {
      auto eq = toks[i].find('=');
      if (eq == std::string_view::npos)
        throw ParseError("expected feat=value", line, 1);
      auto value = parse_real(toks[i].substr(eq + 1));
      if (!value)
        throw ParseError("bad value '" + std::string(toks[i].substr(eq + 1)) + "'", line, 1);
      std::string name(toks[i].substr(0, eq));
      note_feature(names, name);
      rec.emplace_back(name, *value);
    }
    return rec;
  };

  std::string text;
  int line = 0;
  while (std::getline(is, text)) {
    ++line;
    auto toks = detail::tokens(text);
    if (toks.empty() || toks[0].front() == '#')
      continue;
    if (toks[0] == "graph") {
      int nodes = -1;
      std::vector<Edge> edges;
      for (std::size_t i = 1; i < toks.size(); ++i) {
        if (toks[i].starts_with("nodes="))
          nodes = detail::parse_int(toks[i].substr(6), line);
        else if (toks[i].starts_with("edges=")) {
          auto list = toks[i].substr(6);
          if (list.empty())
            continue;
          for (auto item : detail::split(list, ',')) {
            auto dash = item.find('-');
            if (dash == std::string_view::npos)
              throw ParseError("bad edge '" + std::string(item) + "'", line, 1);
            edges.push_back(
                {detail::parse_int(item.substr(0, dash), line), detail::parse_int(item.substr(dash + 1), line)});
          }
        }
      }
      if (nodes < 0)
        throw ParseError("graph header needs nodes=<n>", line, 1);
      graph.emplace(nodes, std::move(edges));
      continue;
    }
    if (!graph)
      throw ParseError("record before graph header", line, 1);
    if (toks.size() < 2)
      throw ParseError("record needs a time and a node or edge", line, 1);
    const int t = detail::parse_int(toks[0], line);
    if (t < 0)
      throw ParseError("negative time index", line, 1);
    max_t = std::max(max_t, t);
    auto dash = toks[1].find('-');
    if (dash == std::string_view::npos) {
      const int n = detail::parse_int(toks[1], line);
      if (!graph->contains(n))
        throw ParseError("unknown node " + std::to_string(n), line, 1);
      node_records[{t, n}] = parse_record(toks, line, node_features);
    } else {
      const int u = detail::parse_int(toks[1].substr(0, dash), line);
      const int v = detail::parse_int(toks[1].substr(dash + 1), line);
      auto e = graph->edge_index(u, v);
      if (!e)
        throw ParseError("unknown edge " + std::string(toks[1]), line, 1);
      edge_records[{t, *e}] = parse_record(toks, line, edge_features);
    }
  }
  if (!graph)
    throw ParseError("missing graph header", line, 1);

  GraphTrajectory traj(std::make_shared<Graph>(*graph), node_features, edge_features);
  std::vector<double> nodes(traj.node_frame_size()), edges(traj.edge_frame_size());
  for (int t = 0; t <= max_t; ++t) {
    for (NodeId n = 0; n < graph->node_count(); ++n) {
      auto it = node_records.find({t, n});
      if (it == node_records.end() || it->second.size() != node_features.size())
        throw ParseError("node labels missing for t=" + std::to_string(t) + " node=" + std::to_string(n), line, 1);
      for (const auto& [name, value] : it->second)
        nodes[static_cast<std::size_t>(n) * node_features.size() + *traj.node_feature_index(name)] = value;
    }
    for (std::size_t e = 0; e < graph->edges().size() && !edge_features.empty(); ++e) {
      auto it = edge_records.find({t, e});
      if (it == edge_records.end() || it->second.size() != edge_features.size())
        throw ParseError("edge labels missing for t=" + std::to_string(t), line, 1);
      for (const auto& [name, value] : it->second)
        edges[e * edge_features.size() + *traj.edge_feature_index(name)] = value;
    }
    traj.push_frame(nodes, edges);
  }
  return traj;
}

inline GraphTrajectory trajectory_from_text(const std::string& text)
{
  std::istringstream is(text);
  return read_trajectory(is);
}

} // namespace gtlcirl
