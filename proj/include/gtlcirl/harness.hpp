#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "causal.hpp"
#include "config.hpp"
#include "counterexample.hpp"
#include "environment.hpp"
#include "gene_env.hpp"
#include "gp.hpp"
#include "grid_env.hpp"
#include "rl.hpp"
#include "sne.hpp"

namespace gtlcirl {

struct EpisodeRow
{
  int episode = 0;
  bool success = false;
  double cumulative_reward = 0.0;
  double effect_robustness = 0.0;
  std::size_t counterexamples = 0;
  std::vector<double> theta;
  double S = 0.0, N = 0.0, E = 0.0, J = 0.0;
};

struct OptimizationRow
{
  int iter = 0;
  std::vector<double> theta;
  SneScores scores;
  double J = 0.0;
  double ucb = 0.0;
};

/// Objects the learner itself built; the success monitor is not counted.
struct Instrumentation
{
  std::size_t formulas = 0;
  std::size_t buffers = 0;
  std::size_t gp_models = 0;
  std::size_t sne_evaluations = 0;
  std::size_t synthesized_counterexamples = 0;
  std::size_t replayed_counterfactuals = 0;
  std::uint64_t q_updates = 0;
  std::uint64_t hypothetical_updates = 0;
};

struct RunRecord
{
  std::string env;
  Method method = Method::gtl_cirl;
  std::uint64_t seed = 0;
  std::vector<std::string> slot_names;
  std::vector<EpisodeRow> rows;
  std::vector<OptimizationRow> optimization;
  std::vector<double> final_theta;
  std::string mined_formula;
  QTable qtable;
  CounterexampleBuffer buffer{1};
  Instrumentation counters;

  /// Fraction of successful episodes among the last `window`.
  double success_rate(std::size_t window = 50) const
  {
    if (rows.empty())
      return 0.0;
    const std::size_t from = rows.size() > window ? rows.size() - window : 0;
    std::size_t hits = 0;
    for (std::size_t i = from; i < rows.size(); ++i)
      hits += rows[i].success ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(rows.size() - from);
  }
};

inline std::unique_ptr<Environment> make_environment(const RunConfig& cfg)
{
  if (cfg.env == "gene")
    return std::make_unique<GeneEnv>(cfg.gene);
  if (cfg.env == "grid")
    return std::make_unique<GridEnv>(cfg.grid);
  throw ConfigError("unknown environment '" + cfg.env + "'");
}

/// Effect check shared by all methods for the success column.
class SuccessMonitor
{
public:
  explicit SuccessMonitor(const std::string& effect) : effect_(parse_formula(effect)) {}
  double robustness_of(const GraphTrajectory& traj) const { return robustness(traj, effect_, 0).value; }

private:
  Formula effect_;
};

/// Every episode of a run starts from the same initial state, drawn from the
/// master seed.
inline std::uint64_t episode_seed(const RunConfig& cfg) { return Rng::derive_seed(cfg.seed, "env"); }

inline RunRecord run_gtl_cirl(const RunConfig& cfg)
{
  cfg.validate();
  RunRecord rec;
  rec.env = cfg.env;
  rec.method = Method::gtl_cirl;
  rec.seed = cfg.seed;
  for (const auto& s : cfg.slots)
    rec.slot_names.push_back(s.name);

  auto env = make_environment(cfg);
  auto cf_env = make_environment(cfg);
  const std::uint64_t env_seed = episode_seed(cfg);
  // Counterfactuals rewind to a recorded first frame; hidden parameters such
  // as line capacities come from this reset.
  cf_env->reset(env_seed);
  Rng policy_rng = Rng::derive(cfg.seed, "policy");
  Rng sne_rng = Rng::derive(cfg.seed, "sne");
  Rng gp_rng = Rng::derive(cfg.seed, "gp");
  const SuccessMonitor monitor(cfg.effect);

  const CauseTemplate tmpl = cfg.cause_template();
  CausalSpec spec = CausalSpec::from_template(tmpl, cfg.initial_theta, parse_formula(cfg.effect));
  rec.counters.formulas += 2;
  rec.qtable = QTable(env->action_count());
  rec.buffer = CounterexampleBuffer(cfg.buffer_capacity);
  ++rec.counters.buffers;
  GpModel gp = GpModel::for_template(tmpl, cfg.gp_length_scale, cfg.gp_noise);
  ++rec.counters.gp_models;
  const UcbSchedule ucb{cfg.ucb_c};
  const int tau = tau_for(spec.effect);

  for (int k = 0; k < cfg.rl.episodes; ++k) {
    auto res = run_episode(*env, rec.qtable, spec, cfg.rl, cfg.rl.epsilon.at(k), policy_rng, env_seed);
    EpisodeRow row;
    row.episode = k;
    row.cumulative_reward = res.cumulative_reward;
    row.effect_robustness = monitor.robustness_of(res.episode.trajectory);
    row.success = row.effect_robustness > 0.0;
    row.theta = spec.theta;

    if (res.counterexample) {
      rec.buffer.insert(res.episode, Provenance::episode_violation, spec.effect);
      if (cfg.perturb && !res.episode.actions.empty()) {
        auto found = generate_counterexamples(*res.initial_state, res.episode.actions.front(), res.episode.trajectory,
                                              spec, cfg.perturbation);
        for (auto& ep : found.counterexamples) {
          rec.buffer.insert(std::move(ep), Provenance::perturbation, spec.effect);
          ++rec.counters.synthesized_counterexamples;
        }
      }
    }
    row.counterexamples = rec.buffer.size();

    if (!rec.buffer.empty() && (k + 1) % cfg.sne_every == 0) {
      std::vector<Episode> counterfactuals;
      const SneScores scores = evaluate_sne(rec.buffer, spec, *cf_env, cfg.sne, sne_rng, &counterfactuals);
      ++rec.counters.sne_evaluations;
      const double J = objective_J(scores, cfg.lambda_s, cfg.lambda_n);
      row.S = scores.sufficiency;
      row.N = scores.necessity;
      row.E = scores.existence;
      row.J = J;
      update_model(gp, spec.theta, J);
      // Only do-traces that reach the effect are replayed. The exponential
      // reward is positive even on failure, so replaying failing traces would
      // inflate the values of the actions they contain.
      if (cfg.replay_counterfactuals) {
        const auto reward = effect_reward(spec, cfg.rl);
        for (const auto& cf : counterfactuals)
          if (robustness(cf.trajectory, spec.effect, 0).value > 0.0) {
            replay_episode(rec.qtable, cf, tau, cfg.rl, reward);
            ++rec.counters.replayed_counterfactuals;
          }
      }
      const Proposal next = propose_theta(gp, tmpl, ucb, static_cast<int>(gp.size()), gp_rng);
      rec.optimization.push_back({static_cast<int>(rec.optimization.size()), spec.theta, scores, J, next.ucb});
      spec = spec.with_theta(next.theta);
      ++rec.counters.formulas;
    }
    rec.rows.push_back(std::move(row));
  }

  // The mined cause is the posterior-mean maximizer once learning stops.
  if (gp.size() > 0) {
    const Proposal final = propose_from(gp, candidate_set(tmpl, gp_rng), 0.0);
    spec = spec.with_theta(final.theta);
    ++rec.counters.formulas;
  }
  rec.final_theta = spec.theta;
  rec.mined_formula = to_string(spec.cause);
  rec.counters.q_updates = rec.qtable.update_count();
  return rec;
}

inline RunRecord run_baseline(const RunConfig& cfg)
{
  cfg.validate();
  if (cfg.method == Method::gtl_cirl)
    throw ConfigError("run_baseline: method must be standard_rl or counterfactual_rl");
  RunRecord rec;
  rec.env = cfg.env;
  rec.method = cfg.method;
  rec.seed = cfg.seed;

  auto env = make_environment(cfg);
  const std::uint64_t env_seed = episode_seed(cfg);
  Rng policy_rng = Rng::derive(cfg.seed, "policy");
  const SuccessMonitor monitor(cfg.effect);
  const int tau = cfg.baseline_tau > 0 ? cfg.baseline_tau : env->episode_length();
  rec.qtable = QTable(env->action_count());
  QTable& q = rec.qtable;
  const bool hypothetical = cfg.method == Method::counterfactual_rl;
  auto raw = [&](const GraphTrajectory&, int) { return env->raw_reward(); };
  auto hook = [&](const Environment& e, const TauState& s, ActionId taken) {
    if (!hypothetical)
      return;
    for (ActionId a = 0; a < static_cast<ActionId>(e.action_count()); ++a) {
      if (a == taken)
        continue;
      auto sim = e.clone();
      sim->step(a);
      q_update(q, s, a, sim->raw_reward(), tau_state(sim->trajectory(), sim->time(), tau), cfg.rl);
      ++rec.counters.hypothetical_updates;
    }
  };

  for (int k = 0; k < cfg.rl.episodes; ++k) {
    auto res = run_q_episode(*env, q, cfg.rl, tau, cfg.rl.epsilon.at(k), policy_rng, env_seed, raw, hook);
    EpisodeRow row;
    row.episode = k;
    row.cumulative_reward = res.cumulative_reward;
    row.effect_robustness = monitor.robustness_of(res.episode.trajectory);
    row.success = row.effect_robustness > 0.0;
    rec.rows.push_back(std::move(row));
  }
  rec.counters.q_updates = q.update_count();
  return rec;
}

inline RunRecord run(const RunConfig& cfg)
{
  return cfg.method == Method::gtl_cirl ? run_gtl_cirl(cfg) : run_baseline(cfg);
}

// ---------------------------------------------------------------------------
// Output

/// Fixed six-decimal rendering; negative zero prints as 0.
inline std::string fixed6(double v)
{
  if (std::abs(v) < 5e-7)
    v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p)
{
  std::ofstream os(p, std::ios::binary);
  if (!os)
    throw GtlError("cannot write '" + p.string() + "'");
  return os;
}

inline void close_out(std::ofstream& os, const std::filesystem::path& p)
{
  os.close();
  if (!os)
    throw GtlError("write failed for '" + p.string() + "'");
}

} // namespace detail

inline void write_episodes_csv(std::ostream& os, const RunRecord& rec)
{
  os << "episode,success,cumulative_reward,effect_robustness,counterexamples";
  for (std::size_t i = 0; i < rec.slot_names.size(); ++i)
    os << ",theta_" << (i + 1);
  os << ",S,N,E,J\n";
  for (const auto& r : rec.rows) {
    os << r.episode << ',' << (r.success ? 1 : 0) << ',' << fixed6(r.cumulative_reward) << ','
       << fixed6(r.effect_robustness) << ',' << r.counterexamples;
    for (std::size_t i = 0; i < rec.slot_names.size(); ++i)
      os << ',' << fixed6(i < r.theta.size() ? r.theta[i] : 0.0);
    os << ',' << fixed6(r.S) << ',' << fixed6(r.N) << ',' << fixed6(r.E) << ',' << fixed6(r.J) << '\n';
  }
}

inline void write_optimization_csv(std::ostream& os, const RunRecord& rec)
{
  os << "iter";
  for (std::size_t i = 0; i < rec.slot_names.size(); ++i)
    os << ",theta_" << (i + 1);
  os << ",S,N,E,J,ucb_value\n";
  for (const auto& r : rec.optimization) {
    os << r.iter;
    for (double t : r.theta)
      os << ',' << fixed6(t);
    os << ',' << fixed6(r.scores.sufficiency) << ',' << fixed6(r.scores.necessity) << ',' << fixed6(r.scores.existence)
       << ',' << fixed6(r.J) << ',' << fixed6(r.ucb) << '\n';
  }
}

struct SummaryRow
{
  std::string method;
  std::string env;
  std::size_t seeds = 0;
  double mean_success = 0.0;
  double std_success = 0.0;
};

/// Mean and population standard deviation of final-window success per method.
inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& runs, std::size_t window = 50)
{
  std::vector<SummaryRow> out;
  for (Method m : {Method::gtl_cirl, Method::standard_rl, Method::counterfactual_rl}) {
    std::vector<double> rates;
    std::string env;
    for (const auto& r : runs)
      if (r.method == m) {
        rates.push_back(r.success_rate(window));
        env = r.env;
      }
    if (rates.empty())
      continue;
    double mean = 0.0;
    for (double x : rates)
      mean += x;
    mean /= static_cast<double>(rates.size());
    double var = 0.0;
    for (double x : rates)
      var += (x - mean) * (x - mean);
    var /= static_cast<double>(rates.size());
    out.push_back({to_string(m), env, rates.size(), mean, std::sqrt(var)});
  }
  return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows)
{
  os << "method,env,seeds,mean_success,std_success\n";
  for (const auto& r : rows)
    os << r.method << ',' << r.env << ',' << r.seeds << ',' << fixed6(r.mean_success) << ',' << fixed6(r.std_success)
       << '\n';
}

/// episodes.csv, qtable.txt and summary.csv for every run; mined_formula.txt,
/// optimization.csv and counterexamples.txt for GTL-CIRL runs.
inline void emit_results(const RunRecord& rec, const std::filesystem::path& dir)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw GtlError("cannot create '" + dir.string() + "': " + ec.message());
  auto put = [&](const std::string& name, auto&& writer) {
    const auto p = dir / name;
    auto os = detail::open_out(p);
    writer(os);
    detail::close_out(os, p);
  };
  put("episodes.csv", [&](std::ostream& os) { write_episodes_csv(os, rec); });
  put("qtable.txt", [&](std::ostream& os) { rec.qtable.write(os); });
  put("summary.csv", [&](std::ostream& os) { write_summary_csv(os, summarize({rec})); });
  if (rec.method == Method::gtl_cirl) {
    put("mined_formula.txt", [&](std::ostream& os) { os << rec.mined_formula << '\n'; });
    put("optimization.csv", [&](std::ostream& os) { write_optimization_csv(os, rec); });
    put("counterexamples.txt", [&](std::ostream& os) { rec.buffer.dump(os); });
  }
}

/// Runs every method for seeds [first, last], one after another, into
/// `out/<method>/seed_<n>`, and writes the across-seed summary to
/// `out/summary.csv`.
inline std::vector<RunRecord> sweep(RunConfig cfg, std::uint64_t first, std::uint64_t last,
                                    const std::filesystem::path& out, std::vector<Method> methods = {})
{
  if (last < first)
    throw ConfigError("sweep: empty seed range");
  if (methods.empty())
    methods.push_back(cfg.method);
  std::vector<RunRecord> runs;
  for (Method m : methods) {
    cfg.method = m;
    for (std::uint64_t s = first; s <= last; ++s) {
      cfg.seed = s;
      runs.push_back(run(cfg));
      emit_results(runs.back(), out / to_string(m) / ("seed_" + std::to_string(s)));
    }
  }
  const auto p = out / "summary.csv";
  auto os = detail::open_out(p);
  write_summary_csv(os, summarize(runs));
  detail::close_out(os, p);
  return runs;
}

} // namespace gtlcirl
