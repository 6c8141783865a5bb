#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "gtlcirl/harness.hpp"

using namespace gtlcirl;

namespace {

constexpr const char* kVersion = "gtlcirl 1.0.0";

std::string read_file(const std::string& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw GtlError("cannot open '" + path + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

/// "a..b" or a single seed.
std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text)
{
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const auto s = std::stoull(text);
      return {s, s};
    }
    return {std::stoull(text.substr(0, dots)), std::stoull(text.substr(dots + 2))};
  } catch (const std::exception&) {
    throw ConfigError("--seeds: expected a..b, got '" + text + "'");
  }
}

std::vector<Method> parse_methods(const std::string& text)
{
  if (text == "all")
    return {Method::gtl_cirl, Method::standard_rl, Method::counterfactual_rl};
  std::vector<Method> out;
  for (const auto& item : detail::split_list(text, ','))
    out.push_back(method_from_string(item));
  return out;
}

void print_summary(const std::vector<SummaryRow>& rows)
{
  for (const auto& r : rows)
    std::cout << r.method << " on " << r.env << ": final-50 success " << fixed6(r.mean_success) << " +/- "
              << fixed6(r.std_success) << " over " << r.seeds << " seed(s)\n";
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Causal graph-temporal-logic specification mining and reward shaping"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seeds_text, methods_text, formula_path, trace_path;
  std::uint64_t seed = 0;
  int episodes = 0;

  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  run_cmd->add_option("--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Master seed (overrides the config)");
  auto* episodes_opt = run_cmd->add_option("--episodes", episodes, "Episode count K (overrides the config)");
  auto* out_opt = run_cmd->add_option("--out", out_dir, "Output directory (overrides the config)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a range of seeds and summarize");
  sweep_cmd->add_option("--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--seeds", seeds_text, "Seed range a..b")->required();
  sweep_cmd->add_option("--methods", methods_text, "Comma-separated methods or 'all' (default: the config's)");
  auto* sweep_episodes = sweep_cmd->add_option("--episodes", episodes, "Episode count K (overrides the config)");
  auto* sweep_out = sweep_cmd->add_option("--out", out_dir, "Output directory (overrides the config)");

  auto* monitor_cmd = app.add_subcommand("monitor", "Robustness of a formula on a recorded trace");
  monitor_cmd->add_option("--formula", formula_path, "File holding one formula")->required()->check(CLI::ExistingFile);
  monitor_cmd->add_option("--trace", trace_path, "Trajectory file")->required()->check(CLI::ExistingFile);

  app.add_subcommand("version", "Print the version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("version")) {
      std::cout << kVersion << '\n';
      return 0;
    }
    if (app.got_subcommand(monitor_cmd)) {
      const auto phi = parse_formula(read_file(formula_path));
      std::ifstream is(trace_path);
      const auto traj = read_trajectory(is);
      const double rho = robustness(traj, phi, 0).value;
      std::cout << "robustness " << format_real(rho) << '\n' << (rho > 0.0 ? "satisfied" : "violated") << '\n';
      return rho > 0.0 ? 0 : 2;
    }

    RunConfig cfg = load_config(config_path);
    if (*episodes_opt || *sweep_episodes)
      cfg.rl.episodes = episodes;
    if (*out_opt || *sweep_out)
      cfg.out = out_dir;

    if (app.got_subcommand(run_cmd)) {
      if (*seed_opt)
        cfg.seed = seed;
      cfg.validate();
      const auto rec = run(cfg);
      emit_results(rec, cfg.out);
      print_summary(summarize({rec}));
      if (rec.method == Method::gtl_cirl)
        std::cout << "mined cause: " << rec.mined_formula << '\n';
      std::cout << "results in " << cfg.out << '\n';
      return 0;
    }

    const auto [first, last] = parse_seed_range(seeds_text);
    cfg.validate();
    const auto methods = methods_text.empty() ? std::vector<Method>{} : parse_methods(methods_text);
    const auto runs = sweep(cfg, first, last, cfg.out, methods);
    print_summary(summarize(runs));
    std::cout << "results in " << cfg.out << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
