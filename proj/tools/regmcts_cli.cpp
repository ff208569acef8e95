// regmcts: experiment runner for regularized tree search.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "regmcts/regmcts.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "-";
  std::optional<unsigned> workers;
  std::vector<std::string> overrides;
};

regmcts::RunConfig load_config(const CommonOptions& opts) {
  regmcts::RunConfig cfg = opts.config_path.empty() ? regmcts::RunConfig{}
                                                    : regmcts::RunConfig::from_file(opts.config_path);
  for (const std::string& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw regmcts::ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    }
    cfg.set(regmcts::detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

unsigned resolve_workers(const CommonOptions& opts) {
  return opts.workers ? *opts.workers : regmcts::default_workers();
}

int emit(const regmcts::CommandOutput& out, const CommonOptions& opts) {
  out.table.write(opts.out);
  for (const std::string& note : out.notes) std::cerr << note << '\n';
  return out.ok ? 0 : 1;
}

void print_sweep_summary(const regmcts::CommandOutput& out, const regmcts::RunConfig& cfg) {
  const int last = std::max(1, cfg.episodes / 5);
  for (const auto& s : regmcts::summarize_sweep(out.table, last)) {
    std::cerr << fmt::format("n_sim={:<4} {:<9} final-{} mean return {:.4f} (se {:.4f}, {} seeds)\n",
                             s.n_sim, s.variant, last, s.mean, s.stderr_, s.seeds);
  }
}

std::vector<double> parse_reals(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const std::string& item : regmcts::detail::split_list(text)) {
    out.push_back(regmcts::detail::parse_number<double>(what, item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularized tree-search experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions opts;
  app.add_option("--config", opts.config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", opts.seed, "Base seed (u64)");
  app.add_option("--out", opts.out, "Output path ('-' for stdout)");
  app.add_option("--workers", opts.workers, "Worker threads (default: $REGMCTS_WORKERS or cores)")
      ->check(CLI::PositiveNumber);
  app.add_option("--set", opts.overrides, "Override a config key: key=value (repeatable)");

  auto* track = app.add_subcommand("track", "Bandit tracking of pi_bar by pi_hat");
  auto* bound = app.add_subcommand("bound", "1/N tracking bound harness");
  auto* props = app.add_subcommand("props", "Randomized checks of the selection identities");
  auto* sweep = app.add_subcommand("sweep", "Variant x budget training sweep");
  auto* solve = app.add_subcommand("solve", "One-shot regularized policy");

  std::string q_text, prior_text, kind_text = "reverse_kl";
  double lambda = 0.0;
  solve->add_option("--q", q_text, "Q-values, comma separated")->required();
  solve->add_option("--prior", prior_text, "Prior, comma separated (default uniform)");
  solve->add_option("--lambda", lambda, "Regularization weight")->required();
  solve->add_option("--kind", kind_text, "reverse_kl | forward_kl | hellinger");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      const std::vector<double> q = parse_reals(q_text, "q");
      const regmcts::ActionDistribution prior =
          prior_text.empty() ? regmcts::ActionDistribution::uniform(q.size())
                             : regmcts::ActionDistribution::prior(parse_reals(prior_text, "prior"));
      regmcts::SolverConfig solver;
      solver.kind = regmcts::parse_divergence_kind(kind_text);
      const auto report = regmcts::solve_one_shot(q, prior, lambda, solver.kind, solver);
      const std::string text = regmcts::format_solve_report(report);
      if (opts.out.empty() || opts.out == "-") {
        std::cout << text;
      } else {
        std::ofstream file(opts.out, std::ios::binary);
        if (!(file << text)) throw std::runtime_error(fmt::format("cannot write '{}'", opts.out));
      }
      return 0;
    }

    const regmcts::RunConfig cfg = load_config(opts);
    const unsigned workers = resolve_workers(opts);
    if (track->parsed()) return emit(regmcts::cmd_track(cfg, opts.seed, workers), opts);
    if (bound->parsed()) return emit(regmcts::cmd_bound(cfg, opts.seed, workers), opts);
    if (props->parsed()) return emit(regmcts::cmd_props(cfg, opts.seed, workers), opts);
    if (sweep->parsed()) {
      const auto out = regmcts::cmd_sweep(cfg, opts.seed, workers);
      print_sweep_summary(out, cfg);
      return emit(out, opts);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
