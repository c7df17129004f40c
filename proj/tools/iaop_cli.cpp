#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iaop/iaop.hpp"

using namespace iaop;

namespace {

struct DomainFlags {
  std::string domain = "gac";
  int n_agents = 5;
  double p = 0.0;
  double obs_flip_prob = 0.2;
  int grid = 3;
  int lane_len = 6;

  void add(CLI::App* app) {
    app->add_option("--domain", domain, "gac or gtc")->check(CLI::IsMember({"gac", "gtc"}));
    app->add_option("--n-agents", n_agents, "GAC: number of agents");
    app->add_option("--p", p, "GAC: chance of obtaining a contested chair");
    app->add_option("--obs-flip-prob", obs_flip_prob, "GAC: observation noise");
    app->add_option("--grid", grid, "GTC: intersections per side (1..3)");
    app->add_option("--lane-len", lane_len, "GTC: grids per lane");
  }

  gac::GacConfig gac_config(int horizon) const {
    gac::GacConfig c;
    c.n_agents = n_agents;
    c.p = p;
    c.obs_flip_prob = obs_flip_prob;
    if (horizon > 0) c.horizon = horizon;
    return c;
  }

  gtc::GtcConfig gtc_config(int horizon) const {
    gtc::GtcConfig c;
    c.rows = c.cols = grid;
    c.lane_len = lane_len;
    if (horizon > 0) c.horizon = horizon;
    return c;
  }
};

int run_collect(const DomainFlags& d, int episodes, int horizon, const std::string& out,
                std::uint64_t seed) {
  const RngStream rng(seed);
  InfluenceDataset ds;
  if (d.domain == "gac") {
    const auto cfg = d.gac_config(horizon);
    ds = collect_dataset(gac::GacGlobalSimulator(cfg), gac::GacLocalSimulator(cfg), UniformPolicy{2},
                         episodes, cfg.horizon, rng);
  } else {
    const auto cfg = d.gtc_config(horizon);
    ds = collect_dataset(gtc::GtcGlobalSimulator(cfg), gtc::GtcLocalSimulator(cfg), UniformPolicy{2},
                         episodes, cfg.horizon, rng);
  }
  save_dataset(ds, out);
  std::cerr << "wrote " << ds.episodes.size() << " episodes of length " << ds.seq_len << " to "
            << out << '\n';
  return 0;
}

int run_train(const std::string& dataset, TrainConfig cfg, const std::string& cell,
              const std::string& optimizer, const std::string& out, const std::string& curve_path) {
  cfg.cell_kind = cell_kind_from_string(cell);
  cfg.optimizer = optimizer_from_string(optimizer);
  const InfluenceDataset ds = load_dataset(dataset);
  const TrainResult r = train(ds, cfg);
  save_model(r.predictor, out, &cfg);
  if (!curve_path.empty()) save_learning_curve(r.curve, curve_path);
  const auto best = static_cast<std::size_t>(r.curve.best_epoch);
  std::cerr << "best epoch " << best << ": train CE " << r.curve.train_ce[best] << ", validation CE "
            << r.curve.val_ce[best] << " nats per source variable\n";
  return 0;
}

void enumerate_oracle(const gac::GacExactFilter& filter, std::string history, int depth,
                      int max_depth, std::ostream& out) {
  const auto d = filter.predict();
  out << depth << ',' << (history.empty() ? "-" : history);
  for (double v : d) out << ',' << format_number(v);
  out << '\n';
  if (depth == max_depth) return;
  for (ActionId a = 0; a < 2; ++a)
    for (gac::GacLocalState x = 0; x < 2; ++x) {
      gac::GacExactFilter next = filter;
      try {
        next.update(a, x);
      } catch (const std::domain_error&) {
        continue;
      }
      std::string h = history;
      if (!h.empty()) h += ' ';
      h += (a == 0 ? 'L' : 'R');
      h += static_cast<char>('0' + x);
      enumerate_oracle(next, h, depth + 1, max_depth, out);
    }
}

int run_oracle(const DomainFlags& d, int horizon, const std::string& out_path) {
  const auto cfg = d.gac_config(horizon);
  gac::GacExactFilter root(cfg);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file = open_out(out_path);
    out = &file;
  }
  *out << "length,history,p_none,p_left,p_right,p_both\n";
  enumerate_oracle(root, "", 0, horizon - 1, *out);
  return 0;
}

int run_plan(const std::string& config_path, std::uint64_t seed, std::size_t index) {
  auto configs = load_configs(config_path);
  if (index >= configs.size()) throw ConfigError("config index out of range");
  auto cfg = configs[index];
  cfg.seed = seed;
  std::cout << "domain=" << to_string(cfg.domain) << " simulator=" << to_string(cfg.simulator)
            << " horizon=" << cfg.horizon() << " seed=" << seed << '\n';
  const EpisodeMetrics m = run_episode(cfg, 0, &std::cout);
  std::cout << "return=" << m.undiscounted_return << " discounted_return=" << m.discounted_return
            << " sims_per_step=" << m.sims_per_step << " sim_time_per_step=" << m.sim_time_per_step
            << " steps_to_go_on_depletion=" << m.steps_to_go_on_depletion << '\n';
  return 0;
}

int run_bench(const std::string& config_path, int workers, const std::string& out_dir,
              const std::optional<std::uint64_t>& seed, bool timing, bool plots) {
  auto configs = load_configs(config_path);
  if (seed)
    for (auto& c : configs) c.seed = *seed;
  const auto rows = run_grid(configs, GridOptions{workers, &std::cerr});
  const auto failures = emit_results(rows, out_dir, EmitOptions{timing, plots});
  for (const auto& f : failures) std::cerr << "config failed: " << f << '\n';
  return failures.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Influence-augmented online planning toolkit"};
  app.require_subcommand(1);

  DomainFlags collect_domain;
  int collect_episodes = 1000, collect_horizon = 0;
  std::uint64_t collect_seed = 0;
  std::string collect_out;
  auto* collect = app.add_subcommand("collect", "Record an influence dataset from the global simulator");
  collect_domain.add(collect);
  collect->add_option("--episodes", collect_episodes, "Episodes to record");
  collect->add_option("--horizon", collect_horizon, "Steps per episode (default: the domain horizon)");
  collect->add_option("--out", collect_out, "Dataset file")->required();
  collect->add_option("--seed", collect_seed, "RNG seed");

  TrainConfig train_cfg;
  std::string train_dataset, train_out, train_curve, train_cell = "gru", train_optimizer = "sgd";
  auto* trn = app.add_subcommand("train", "Fit a recurrent influence predictor");
  trn->add_option("--dataset", train_dataset, "Dataset file")->required();
  trn->add_option("--cell", train_cell, "gru or elman")->check(CLI::IsMember({"gru", "elman"}));
  trn->add_option("--hidden", train_cfg.hidden_width, "Hidden units");
  trn->add_option("--lr", train_cfg.learning_rate, "Learning rate");
  trn->add_option("--batch", train_cfg.batch_size, "Mini-batch size");
  trn->add_option("--epochs", train_cfg.epochs, "Epochs");
  trn->add_option("--weight-decay", train_cfg.weight_decay, "L2 coefficient");
  trn->add_option("--optimizer", train_optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}));
  trn->add_option("--clip", train_cfg.grad_clip_norm, "Global gradient-norm clip (0 disables)");
  trn->add_option("--out", train_out, "Model file")->required();
  trn->add_option("--curve", train_curve, "Learning-curve CSV");
  trn->add_option("--seed", train_cfg.seed, "RNG seed");

  DomainFlags oracle_domain;
  int oracle_horizon = 3;
  std::string oracle_out;
  auto* oracle = app.add_subcommand("oracle", "Tabulate the exact influence for a small GAC instance");
  oracle->add_option("--n-agents", oracle_domain.n_agents, "Number of agents (3..5)");
  oracle->add_option("--p", oracle_domain.p, "Chance of obtaining a contested chair");
  oracle->add_option("--obs-flip-prob", oracle_domain.obs_flip_prob, "Observation noise");
  oracle->add_option("--horizon", oracle_horizon, "Horizon; histories up to horizon-1 steps");
  oracle->add_option("--out", oracle_out, "CSV file (default stdout)");

  std::string plan_config;
  std::uint64_t plan_seed = 0;
  std::size_t plan_index = 0;
  auto* plan = app.add_subcommand("plan", "Run one episode with a verbose trace");
  plan->add_option("--config", plan_config, "Config JSON")->required();
  plan->add_option("--seed", plan_seed, "Episode seed");
  plan->add_option("--index", plan_index, "Which config of the file to run");

  std::string bench_config, bench_out = "results";
  int bench_workers = 1;
  std::optional<std::uint64_t> bench_seed;
  bool bench_no_timing = false, bench_no_plots = false;
  auto* bench = app.add_subcommand("bench", "Run an experiment grid");
  bench->add_option("--config", bench_config, "Grid JSON")->required();
  bench->add_option("--workers", bench_workers, "Parallel workers")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "Output directory");
  bench->add_option("--seed", bench_seed, "Override every config's seed");
  bench->add_flag("--no-timing", bench_no_timing, "Write 0 in the timing columns");
  bench->add_flag("--no-plots", bench_no_plots, "Skip SVG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*collect) return run_collect(collect_domain, collect_episodes, collect_horizon, collect_out, collect_seed);
    if (*trn) return run_train(train_dataset, train_cfg, train_cell, train_optimizer, train_out, train_curve);
    if (*oracle) return run_oracle(oracle_domain, oracle_horizon, oracle_out);
    if (*plan) return run_plan(plan_config, plan_seed, plan_index);
    if (*bench) return run_bench(bench_config, bench_workers, bench_out, bench_seed, !bench_no_timing, !bench_no_plots);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
