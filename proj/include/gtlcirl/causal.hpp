#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "formula.hpp"
#include "graph.hpp"
#include "robustness.hpp"

namespace gtlcirl {

enum class SlotKind { threshold, window_lo, window_hi };

inline std::string to_string(SlotKind k)
{
  switch (k) {
  case SlotKind::threshold:
    return "threshold";
  case SlotKind::window_lo:
    return "window_lo";
  case SlotKind::window_hi:
    return "window_hi";
  }
  return "?";
}

inline SlotKind slot_kind_from_string(std::string_view s)
{
  if (s == "threshold")
    return SlotKind::threshold;
  if (s == "window_lo")
    return SlotKind::window_lo;
  if (s == "window_hi")
    return SlotKind::window_hi;
  throw ConfigError("unknown slot kind '" + std::string(s) + "'");
}

struct Slot
{
  std::string name;
  SlotKind kind = SlotKind::threshold;
  double lower = 0.0;
  double upper = 1.0;

  bool is_window() const noexcept { return kind != SlotKind::threshold; }
};

/// Formula skeleton with `${slot}` or `${slot+k}` placeholders.
///
/// Window slots are continuous in parameter space and rounded to the nearest
/// step on instantiation; an inverted window produced by independent lo/hi
/// slots collapses to [lo,lo].
class CauseTemplate
{
public:
  CauseTemplate() = default;

  CauseTemplate(std::string skeleton, std::vector<Slot> slots) : skeleton_(std::move(skeleton)), slots_(std::move(slots))
  {
    for (const auto& s : slots_) {
      if (!(s.lower <= s.upper) || !std::isfinite(s.lower) || !std::isfinite(s.upper))
        throw ConfigError("slot '" + s.name + "' has invalid bounds");
      if (skeleton_.find("${" + s.name + "}") == std::string::npos &&
          skeleton_.find("${" + s.name + "+") == std::string::npos &&
          skeleton_.find("${" + s.name + "-") == std::string::npos)
        throw ConfigError("slot '" + s.name + "' does not appear in the skeleton");
    }
    // Validates placeholders and grammar at both corners of the box.
    (void)instantiate(lower_corner());
    (void)instantiate(upper_corner());
  }

  const std::string& skeleton() const noexcept { return skeleton_; }
  const std::vector<Slot>& slots() const noexcept { return slots_; }
  std::size_t dimension() const noexcept { return slots_.size(); }

  std::vector<double> lower_corner() const
  {
    std::vector<double> out;
    for (const auto& s : slots_)
      out.push_back(s.lower);
    return out;
  }
  std::vector<double> upper_corner() const
  {
    std::vector<double> out;
    for (const auto& s : slots_)
      out.push_back(s.upper);
    return out;
  }

  std::vector<double> clamp(std::span<const double> theta) const
  {
    check_dimension(theta);
    std::vector<double> out(theta.begin(), theta.end());
    for (std::size_t i = 0; i < slots_.size(); ++i)
      out[i] = std::clamp(out[i], slots_[i].lower, slots_[i].upper);
    return out;
  }

  bool within_bounds(std::span<const double> theta) const
  {
    if (theta.size() != slots_.size())
      return false;
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (!(theta[i] >= slots_[i].lower && theta[i] <= slots_[i].upper))
        return false;
    return true;
  }

  /// Skeleton text with every placeholder replaced.
  std::string text(std::span<const double> theta) const
  {
    const auto clamped = clamp(theta);
    std::string out;
    std::size_t i = 0;
    while (i < skeleton_.size()) {
      auto open = skeleton_.find("${", i);
      if (open == std::string::npos) {
        out.append(skeleton_, i, std::string::npos);
        break;
      }
      out.append(skeleton_, i, open - i);
      auto close = skeleton_.find('}', open);
      if (close == std::string::npos)
        throw ConfigError("unterminated placeholder in template");
      out += substitute(std::string_view(skeleton_).substr(open + 2, close - open - 2), clamped);
      i = close + 1;
    }
    return out;
  }

  Formula instantiate(std::span<const double> theta) const
  {
    ParseOptions opts;
    opts.clamp_inverted_windows = true;
    return parse_formula(text(theta), opts);
  }

private:
  void check_dimension(std::span<const double> theta) const
  {
    if (theta.size() != slots_.size())
      throw ConfigError("template expects " + std::to_string(slots_.size()) + " parameters, got " +
                        std::to_string(theta.size()));
  }

  std::string substitute(std::string_view expr, const std::vector<double>& theta) const
  {
    std::string_view name = expr;
    double offset = 0.0;
    auto op = expr.find_first_of("+-");
    if (op != std::string_view::npos) {
      name = expr.substr(0, op);
      auto v = parse_real(expr.substr(op + 1));
      if (!v)
        throw ConfigError("bad placeholder offset in '${" + std::string(expr) + "}'");
      offset = expr[op] == '-' ? -*v : *v;
    }
    for (std::size_t k = 0; k < slots_.size(); ++k) {
      if (slots_[k].name != name)
        continue;
      if (slots_[k].is_window())
        return std::to_string(std::lround(theta[k]) + std::lround(offset));
      return format_real(theta[k] + offset);
    }
    throw ConfigError("placeholder '${" + std::string(expr) + "}' names no slot");
  }

  std::string skeleton_;
  std::vector<Slot> slots_;
};

/// do(cause) ~> effect, with the cause instantiated from a template.
struct CausalSpec
{
  Formula cause;
  Formula effect;
  CauseTemplate tmpl;
  std::vector<double> theta;

  static CausalSpec from_template(CauseTemplate t, std::vector<double> theta, Formula effect)
  {
    CausalSpec s;
    s.theta = t.clamp(theta);
    s.cause = t.instantiate(s.theta);
    s.effect = std::move(effect);
    s.tmpl = std::move(t);
    return s;
  }

  CausalSpec with_theta(std::vector<double> new_theta) const
  {
    return from_template(tmpl, std::move(new_theta), effect);
  }

  /// Both formulas are evaluated at t = 0, so the episode must cover the longer one.
  int horizon() const { return std::max(gtlcirl::horizon(cause), gtlcirl::horizon(effect)); }
};

struct SneScores
{
  double sufficiency = 0.0;
  double necessity = 0.0;
  double existence = 0.0;
  bool sufficiency_empty = false;
  bool necessity_empty = false;
  std::size_t sufficiency_count = 0;
  std::size_t necessity_count = 0;
};

/// Mean over a partition; `empty` marks "no evidence" with value 0.
struct Degree
{
  double value = 0.0;
  bool empty = false;
  std::size_t count = 0;
};

namespace detail {

inline void check_dataset(std::span<const GraphTrajectory> dataset, const CausalSpec& spec)
{
  if (dataset.empty())
    throw GtlError("causal degree over an empty dataset");
  const int need = spec.horizon();
  for (const auto& traj : dataset)
    if (traj.horizon() < need)
      throw EvaluationError("trajectory horizon " + std::to_string(traj.horizon()) + " is shorter than spec horizon " +
                            std::to_string(need));
}

} // namespace detail

/// Mean effect robustness over traces whose cause robustness at t=0 is > 0.
inline Degree sufficiency_degree(std::span<const GraphTrajectory> dataset, const CausalSpec& spec)
{
  detail::check_dataset(dataset, spec);
  Degree d;
  double sum = 0.0;
  for (const auto& traj : dataset) {
    if (robustness(traj, spec.cause, 0).value > 0.0) {
      sum += robustness(traj, spec.effect, 0).value;
      ++d.count;
    }
  }
  d.empty = d.count == 0;
  d.value = d.empty ? 0.0 : sum / static_cast<double>(d.count);
  return d;
}

/// Negated mean effect robustness over traces whose cause robustness at t=0 is < 0.
inline Degree necessity_degree(std::span<const GraphTrajectory> dataset, const CausalSpec& spec)
{
  detail::check_dataset(dataset, spec);
  Degree d;
  double sum = 0.0;
  for (const auto& traj : dataset) {
    if (robustness(traj, spec.cause, 0).value < 0.0) {
      sum += robustness(traj, spec.effect, 0).value;
      ++d.count;
    }
  }
  d.empty = d.count == 0;
  d.value = d.empty ? 0.0 : -(sum / static_cast<double>(d.count));
  return d;
}

/// Mean of exp(-(rho(tau, cause) - rho(nominal, cause))) over the dataset.
inline double existence_degree(std::span<const GraphTrajectory> dataset, const CausalSpec& spec,
                               const GraphTrajectory& nominal)
{
  detail::check_dataset(dataset, spec);
  if (nominal.horizon() < horizon(spec.cause))
    throw EvaluationError("nominal trajectory is shorter than the cause horizon");
  const double reference = robustness(nominal, spec.cause, 0).value;
  double sum = 0.0;
  for (const auto& traj : dataset)
    sum += std::exp(-(robustness(traj, spec.cause, 0).value - reference));
  return sum / static_cast<double>(dataset.size());
}

inline double objective_J(const SneScores& s, double lambda_s, double lambda_n)
{
  return -s.existence + lambda_s * s.sufficiency + lambda_n * s.necessity;
}

} // namespace gtlcirl
