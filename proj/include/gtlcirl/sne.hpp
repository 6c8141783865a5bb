#pragma once

#include <cmath>
#include <vector>

#include "causal.hpp"
#include "counterexample.hpp"
#include "environment.hpp"
#include "errors.hpp"
#include "random.hpp"
#include "robustness.hpp"

namespace gtlcirl {

struct SneOptions
{
  int iterations = 20;
  double eps_d1 = 0.05;
  double eps_d2 = 0.05;

  void validate() const
  {
    if (iterations < 1)
      throw ConfigError("sne iterations must be at least 1");
    if (!(eps_d1 >= 0.0) || !(eps_d2 >= 0.0))
      throw ConfigError("sne thresholds eps_d1 and eps_d2 must be non-negative");
  }
};

/// Counterfactual S, N, E over `iterations` draws from the buffer. Odd
/// iterations negate the cause, even ones enforce it. Means accumulate in
/// iteration order. Empty S or N lists give 0 with the matching flag set.
inline SneScores evaluate_sne(const CounterexampleBuffer& buffer, const CausalSpec& spec, Environment& env,
                              const SneOptions& opts, Rng& rng, std::vector<Episode>* counterfactuals = nullptr)
{
  opts.validate();
  if (buffer.empty())
    throw GtlError("evaluate_sne: counterexample buffer is empty");
  double s_sum = 0.0, n_sum = 0.0, e_sum = 0.0;
  std::size_t s_count = 0, n_count = 0, e_count = 0;
  for (int i = 0; i < opts.iterations; ++i) {
    const auto& base = buffer[rng.uniform_int(buffer.size())].episode;
    Episode cf = generate_counterfactual(env, base, spec, i % 2 == 1, rng);
    const double rc = robustness(cf.trajectory, spec.cause, 0).value;
    const double re = robustness(cf.trajectory, spec.effect, 0).value;
    if (rc > opts.eps_d1) {
      s_sum += re;
      ++s_count;
    }
    if (rc < -opts.eps_d2) {
      n_sum += re;
      ++n_count;
    }
    e_sum += rc;
    ++e_count;
    if (counterfactuals)
      counterfactuals->push_back(std::move(cf));
  }
  SneScores out;
  out.sufficiency_count = s_count;
  out.necessity_count = n_count;
  out.sufficiency_empty = s_count == 0;
  out.necessity_empty = n_count == 0;
  out.sufficiency = s_count ? s_sum / static_cast<double>(s_count) : 0.0;
  out.necessity = n_count ? std::exp(-(n_sum / static_cast<double>(n_count))) : 0.0;
  out.existence = std::exp(-(e_sum / static_cast<double>(e_count)));
  return out;
}

} // namespace gtlcirl
