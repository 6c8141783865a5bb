#pragma once

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "causal.hpp"
#include "errors.hpp"
#include "gene_env.hpp"
#include "grid_env.hpp"
#include "rl.hpp"
#include "sne.hpp"

namespace gtlcirl {

enum class Method { gtl_cirl, standard_rl, counterfactual_rl };

inline std::string to_string(Method m)
{
  switch (m) {
  case Method::gtl_cirl:
    return "gtl_cirl";
  case Method::standard_rl:
    return "standard_rl";
  case Method::counterfactual_rl:
    return "counterfactual_rl";
  }
  return "?";
}

inline Method method_from_string(const std::string& s)
{
  if (s == "gtl_cirl")
    return Method::gtl_cirl;
  if (s == "standard_rl")
    return Method::standard_rl;
  if (s == "counterfactual_rl")
    return Method::counterfactual_rl;
  throw ConfigError("unknown method '" + s + "' (expected gtl_cirl, standard_rl or counterfactual_rl)");
}

struct RunConfig
{
  std::string env = "gene";
  Method method = Method::gtl_cirl;
  std::uint64_t seed = 7;
  std::string out = "results";

  RlConfig rl;
  /// Window length of the baselines' tau-MDP; 0 means the episode length.
  int baseline_tau = 0;

  std::string skeleton;
  std::vector<Slot> slots;
  std::vector<double> initial_theta;
  std::string effect;

  double lambda_s = 1.0;
  double lambda_n = 1.0;
  SneOptions sne;
  /// Refine the cause every n episodes.
  int sne_every = 1;
  /// Feed counterfactual episodes from the SNE step back into the Q-table.
  bool replay_counterfactuals = true;

  double gp_length_scale = 0.2;
  double gp_noise = 1e-4;
  double ucb_c = 2.0;

  /// <= 0 uses each variable's default perturbation.
  double perturbation = 0.0;
  std::size_t buffer_capacity = 256;
  bool perturb = true;

  GeneConfig gene;
  GridConfig grid;

  static RunConfig defaults_for(const std::string& env)
  {
    RunConfig c;
    c.env = env;
    if (env == "gene") {
      c.skeleton = kGeneCauseSkeleton;
      c.slots = {{"a1", SlotKind::window_lo, 0, 12}, {"a2", SlotKind::window_lo, 0, 12}, {"a3", SlotKind::window_lo, 0, 12}};
      c.initial_theta = {6, 6, 6};
      c.effect = kGeneEffectText;
      c.gp_noise = 1e-2;
      c.baseline_tau = 16;
    } else if (env == "grid") {
      c.skeleton = kGridCauseSkeleton;
      c.slots = {{"vth", SlotKind::threshold, 0.80, 1.00}};
      c.initial_theta = {0.85};
      c.effect = kGridEffectText;
      c.baseline_tau = 6;
    } else {
      throw ConfigError("unknown environment '" + env + "' (expected gene or grid)");
    }
    return c;
  }

  CauseTemplate cause_template() const { return CauseTemplate(skeleton, slots); }

  int episode_length() const { return env == "gene" ? gene.episode_length : grid.episode_length; }

  void validate() const
  {
    if (env != "gene" && env != "grid")
      throw ConfigError("unknown environment '" + env + "'");
    rl.validate();
    sne.validate();
    if (sne_every < 1)
      throw ConfigError("causal.sne_every must be at least 1");
    if (buffer_capacity < 1)
      throw ConfigError("counterexample.capacity must be at least 1");
    if (!(gp_length_scale > 0.0) || !(gp_noise >= 0.0) || !(ucb_c > 0.0))
      throw ConfigError("gp settings out of range");
    if (baseline_tau < 0)
      throw ConfigError("rl.baseline_tau must be non-negative");
    const auto tmpl = cause_template();
    if (initial_theta.size() != tmpl.dimension())
      throw ConfigError("template.initial has " + std::to_string(initial_theta.size()) + " values for " +
                        std::to_string(tmpl.dimension()) + " slots");
    if (!tmpl.within_bounds(initial_theta))
      throw ConfigError("template.initial lies outside the slot bounds");
    const auto eff = parse_formula(effect);
    const int t = episode_length();
    if (horizon(eff) > t)
      throw ConfigError("effect horizon " + std::to_string(horizon(eff)) + " exceeds episode length " +
                        std::to_string(t));
    if (horizon(tmpl.instantiate(tmpl.upper_corner())) > t)
      throw ConfigError("cause horizon exceeds episode length " + std::to_string(t));
  }
};

namespace detail {

using boost::property_tree::ptree;

inline std::vector<std::string> split_list(const std::string& s, char sep)
{
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos)
      out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v)
{
  auto r = parse_real(v);
  if (!r)
    throw ConfigError(key + ": '" + v + "' is not a number");
  return *r;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v)
{
  std::vector<double> out;
  for (const auto& item : split_list(v, ','))
    out.push_back(to_double(key, item));
  return out;
}

class Section
{
public:
  Section(const ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  template <class T>
  void get(const std::string& key, T& out)
  {
    if (!tree_)
      return;
    auto v = tree_->get_optional<std::string>(ptree::path_type(key, '\0'));
    if (!v)
      return;
    used_.insert(key);
    const std::string full = name_ + "." + key;
    if constexpr (std::is_same_v<T, std::string>) {
      out = *v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (*v == "true" || *v == "1" || *v == "yes")
        out = true;
      else if (*v == "false" || *v == "0" || *v == "no")
        out = false;
      else
        throw ConfigError(full + ": expected true or false, got '" + *v + "'");
    } else if constexpr (std::is_floating_point_v<T>) {
      out = to_double(full, *v);
    } else {
      const double d = to_double(full, *v);
      if (d != std::floor(d) || (d < 0 && std::is_unsigned_v<T>))
        throw ConfigError(full + ": expected a non-negative integer, got '" + *v + "'");
      out = static_cast<T>(d);
    }
  }

  bool has(const std::string& key) const
  {
    return tree_ && tree_->get_optional<std::string>(ptree::path_type(key, '\0')).has_value();
  }

  std::string raw(const std::string& key)
  {
    used_.insert(key);
    return tree_->get<std::string>(ptree::path_type(key, '\0'));
  }

  void reject_unknown() const
  {
    if (!tree_)
      return;
    for (const auto& [k, v] : *tree_)
      if (!used_.count(k))
        throw ConfigError("unknown key '" + name_ + "." + k + "'");
  }

private:
  const ptree* tree_;
  std::string name_;
  std::set<std::string> used_;
};

} // namespace detail

/// Reads an INI run configuration. Unset keys keep the environment defaults;
/// unknown sections or keys are rejected. A relative grid line-list path is
/// resolved against the config file's directory.
inline RunConfig load_config(const std::string& path)
{
  using detail::ptree;
  ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  static const std::set<std::string> known{"experiment", "rl", "template", "causal", "gp", "counterexample", "gene",
                                           "grid"};
  for (const auto& [name, child] : pt) {
    if (!known.count(name))
      throw ConfigError(path + ": unknown section [" + name + "]");
    if (child.empty() && !child.data().empty())
      throw ConfigError(path + ": key '" + name + "' outside any section");
  }
  auto section = [&](const std::string& n) { return detail::Section(pt.get_child_optional(n).get_ptr(), n); };

  auto ex = section("experiment");
  std::string env = "gene";
  ex.get("env", env);
  RunConfig c = RunConfig::defaults_for(env);
  std::string method = to_string(c.method);
  ex.get("method", method);
  c.method = method_from_string(method);
  ex.get("seed", c.seed);
  ex.get("episodes", c.rl.episodes);
  ex.get("out", c.out);
  ex.reject_unknown();

  auto rl = section("rl");
  rl.get("alpha", c.rl.alpha);
  rl.get("gamma", c.rl.gamma);
  rl.get("beta", c.rl.beta);
  rl.get("epsilon", c.rl.epsilon.initial);
  rl.get("epsilon_decay", c.rl.epsilon.decay);
  rl.get("epsilon_min", c.rl.epsilon.floor);
  rl.get("robbins_monro", c.rl.robbins_monro);
  rl.get("rm_exponent", c.rl.rm_exponent);
  rl.get("baseline_tau", c.baseline_tau);
  rl.reject_unknown();

  auto tp = section("template");
  tp.get("skeleton", c.skeleton);
  if (tp.has("slots")) {
    c.slots.clear();
    for (const auto& item : detail::split_list(tp.raw("slots"), ',')) {
      const auto parts = detail::split_list(item, ':');
      if (parts.size() != 4)
        throw ConfigError("template.slots: expected name:kind:lower:upper, got '" + item + "'");
      c.slots.push_back({parts[0], slot_kind_from_string(parts[1]), detail::to_double("template.slots", parts[2]),
                         detail::to_double("template.slots", parts[3])});
    }
  }
  if (tp.has("initial"))
    c.initial_theta = detail::to_doubles("template.initial", tp.raw("initial"));
  tp.reject_unknown();

  auto ca = section("causal");
  ca.get("effect", c.effect);
  ca.get("lambda_s", c.lambda_s);
  ca.get("lambda_n", c.lambda_n);
  ca.get("eps_d1", c.sne.eps_d1);
  ca.get("eps_d2", c.sne.eps_d2);
  ca.get("iterations", c.sne.iterations);
  ca.get("sne_every", c.sne_every);
  ca.get("replay_counterfactuals", c.replay_counterfactuals);
  ca.reject_unknown();

  auto gp = section("gp");
  gp.get("length_scale", c.gp_length_scale);
  gp.get("noise", c.gp_noise);
  gp.get("ucb_c", c.ucb_c);
  gp.reject_unknown();

  auto ce = section("counterexample");
  ce.get("epsilon", c.perturbation);
  ce.get("capacity", c.buffer_capacity);
  ce.get("perturb", c.perturb);
  ce.reject_unknown();

  auto ge = section("gene");
  ge.get("units", c.gene.units);
  ge.get("mean_degree", c.gene.mean_degree);
  ge.get("episode_length", c.gene.episode_length);
  ge.get("initial_progression", c.gene.initial_progression);
  ge.get("drift", c.gene.drift);
  ge.get("hold_until", c.gene.hold_until);
  ge.get("edit_effect_time", c.gene.edit_effect_time);
  ge.get("fire_time", c.gene.fire_time);
  if (ge.has("windows")) {
    c.gene.windows.clear();
    for (const auto& item : detail::split_list(ge.raw("windows"), ',')) {
      const auto parts = detail::split_list(item, ':');
      if (parts.size() != 3)
        throw ConfigError("gene.windows: expected gene:a:b, got '" + item + "'");
      c.gene.windows.push_back({static_cast<int>(detail::to_double("gene.windows", parts[0])),
                                static_cast<int>(detail::to_double("gene.windows", parts[1])),
                                static_cast<int>(detail::to_double("gene.windows", parts[2]))});
    }
  }
  ge.reject_unknown();

  auto gr = section("grid");
  if (gr.has("lines")) {
    std::filesystem::path p = gr.raw("lines");
    if (p.is_relative())
      p = std::filesystem::path(path).parent_path() / p;
    c.grid.lines = load_grid_lines(p.string());
  }
  gr.get("episode_length", c.grid.episode_length);
  gr.get("threshold", c.grid.threshold);
  gr.get("support_gain", c.grid.support_gain);
  gr.get("overload_drop", c.grid.overload_drop);
  gr.get("coupling", c.grid.coupling);
  gr.get("generator_boost", c.grid.generator_boost);
  gr.get("generator_step", c.grid.generator_step);
  gr.get("shed_factor", c.grid.shed_factor);
  gr.get("trip_voltage", c.grid.trip_voltage);
  gr.get("initial_v_lo", c.grid.initial_v_lo);
  gr.get("initial_v_hi", c.grid.initial_v_hi);
  gr.get("capacity_lo", c.grid.capacity_lo);
  gr.get("capacity_hi", c.grid.capacity_hi);
  gr.get("force_margin", c.grid.force_margin);
  gr.reject_unknown();

  c.validate();
  return c;
}

} // namespace gtlcirl
