#pragma once

// Experiment harness: configs, the online planning loop against the real
// (global) environment, parallel grids and result files.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "iaop/core.hpp"
#include "iaop/exact_gac.hpp"
#include "iaop/gac.hpp"
#include "iaop/gtc.hpp"
#include "iaop/ials.hpp"
#include "iaop/io.hpp"
#include "iaop/pomcp.hpp"
#include "iaop/rnn.hpp"

namespace iaop {

enum class Domain { gac, gtc };
enum class SimulatorKind { global, ials_learned, ials_uniform, ials_oracle };

inline std::string to_string(Domain d) { return d == Domain::gac ? "gac" : "gtc"; }

inline Domain domain_from_string(const std::string& s) {
  if (s == "gac") return Domain::gac;
  if (s == "gtc") return Domain::gtc;
  throw ConfigError("unknown domain '" + s + "'");
}

inline std::string to_string(SimulatorKind k) {
  switch (k) {
    case SimulatorKind::global: return "global";
    case SimulatorKind::ials_learned: return "ials_learned";
    case SimulatorKind::ials_uniform: return "ials_uniform";
    case SimulatorKind::ials_oracle: return "ials_oracle";
  }
  return "?";
}

inline SimulatorKind simulator_kind_from_string(const std::string& s) {
  if (s == "global") return SimulatorKind::global;
  if (s == "ials_learned") return SimulatorKind::ials_learned;
  if (s == "ials_uniform") return SimulatorKind::ials_uniform;
  if (s == "ials_oracle") return SimulatorKind::ials_oracle;
  throw ConfigError("unknown simulator '" + s + "'");
}

struct ExperimentConfig {
  Domain domain = Domain::gac;
  gac::GacConfig gac;
  gtc::GtcConfig gtc;
  SimulatorKind simulator = SimulatorKind::global;
  std::string model_path;
  PlannerConfig planner;
  int n_episodes = 1;
  std::uint64_t seed = 0;
  std::string grid_var = "budget";
  double grid_value = 0.0;

  int horizon() const { return domain == Domain::gac ? gac.horizon : gtc.horizon; }

  void validate() const {
    if (domain == Domain::gac) gac.validate(); else gtc.validate();
    planner.validate();
    if (planner.horizon != horizon()) throw ConfigError("planner horizon must equal the domain horizon");
    if (n_episodes < 1) throw ConfigError("n_episodes must be positive");
    if ((simulator == SimulatorKind::ials_learned) != !model_path.empty())
      throw ConfigError("model_path is required exactly when simulator is ials_learned");
    if (simulator == SimulatorKind::ials_oracle) {
      if (domain != Domain::gac) throw ConfigError("ials_oracle is only available for gac");
      if (gac.n_agents > gac::kExactMaxAgents || gac.horizon > gac::kExactMaxHistory)
        throw ConfigError("ials_oracle needs n_agents <= " + std::to_string(gac::kExactMaxAgents) +
                          " and horizon <= " + std::to_string(gac::kExactMaxHistory));
    }
  }
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "domain", "simulator", "model_path", "n_episodes", "seed", "grid_var",
      "n_agents", "p", "obs_flip_prob", "horizon",
      "rows", "cols", "lane_len", "init_occupancy_prob", "exit_prob",
      "ucb_c", "gamma", "effective_horizon", "budget", "budget_kind",
      "n_initial_particles", "reinvigoration_divisor"};
  return keys;
}

}  // namespace detail

/// Reads one flat config object. Unset keys take the domain defaults
/// (GAC: c=100, γ=1, 1000 simulations; GTC: c=10, γ=0.95, effective horizon 18, 1 s).
inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("each config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(detail::known_config_keys().begin(), detail::known_config_keys().end(), key) ==
        detail::known_config_keys().end())
      throw ConfigError("unknown config key '" + key + "'");
  try {
    ExperimentConfig c;
    c.domain = domain_from_string(j.at("domain").get<std::string>());
    c.simulator = simulator_kind_from_string(detail::get_or<std::string>(j, "simulator", "global"));
    c.model_path = detail::get_or<std::string>(j, "model_path", "");
    c.n_episodes = detail::get_or(j, "n_episodes", 1);
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    c.grid_var = detail::get_or<std::string>(j, "grid_var", "budget");

    auto& pl = c.planner;
    if (c.domain == Domain::gac) {
      c.gac.n_agents = detail::get_or(j, "n_agents", c.gac.n_agents);
      c.gac.p = detail::get_or(j, "p", c.gac.p);
      c.gac.obs_flip_prob = detail::get_or(j, "obs_flip_prob", c.gac.obs_flip_prob);
      c.gac.horizon = detail::get_or(j, "horizon", c.gac.horizon);
      pl.ucb_c = 100.0;
      pl.gamma = 1.0;
      pl.horizon = c.gac.horizon;
      pl.effective_horizon = c.gac.horizon;
      pl.budget = SimulatorBudget::simulations(1000);
    } else {
      c.gtc.rows = detail::get_or(j, "rows", c.gtc.rows);
      c.gtc.cols = detail::get_or(j, "cols", c.gtc.cols);
      c.gtc.lane_len = detail::get_or(j, "lane_len", c.gtc.lane_len);
      c.gtc.init_occupancy_prob = detail::get_or(j, "init_occupancy_prob", c.gtc.init_occupancy_prob);
      c.gtc.exit_prob = detail::get_or(j, "exit_prob", c.gtc.exit_prob);
      c.gtc.horizon = detail::get_or(j, "horizon", c.gtc.horizon);
      pl.ucb_c = 10.0;
      pl.gamma = 0.95;
      pl.horizon = c.gtc.horizon;
      pl.effective_horizon = std::min(18, c.gtc.horizon);
      pl.budget = SimulatorBudget::seconds(1.0);
    }
    pl.ucb_c = detail::get_or(j, "ucb_c", pl.ucb_c);
    pl.gamma = detail::get_or(j, "gamma", pl.gamma);
    pl.effective_horizon = detail::get_or(j, "effective_horizon", pl.effective_horizon);
    const auto kind = j.contains("budget_kind")
                          ? budget_kind_from_string(j.at("budget_kind").get<std::string>())
                          : pl.budget.kind;
    pl.budget = SimulatorBudget::make(kind, detail::get_or(j, "budget", pl.budget.amount));
    pl.n_initial_particles = detail::get_or(j, "n_initial_particles", pl.n_initial_particles);
    pl.reinvigoration_divisor = detail::get_or(j, "reinvigoration_divisor", pl.reinvigoration_divisor);
    pl.seed = c.seed;

    if (c.grid_var == "budget") {
      c.grid_value = pl.budget.amount;
    } else if (c.grid_var == "n_agents" && c.domain == Domain::gac) {
      c.grid_value = c.gac.n_agents;
    } else if (c.grid_var == "p" && c.domain == Domain::gac) {
      c.grid_value = c.gac.p;
    } else if (j.contains(c.grid_var) && j.at(c.grid_var).is_number()) {
      c.grid_value = j.at(c.grid_var).get<double>();
    } else {
      throw ConfigError("grid_var '" + c.grid_var + "' does not name a numeric config value");
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

/// A grid file is a top-level array of configs, or an object with "configs"
/// and optional "defaults" merged under every entry.
inline std::vector<ExperimentConfig> configs_from_json(const json& doc) {
  json defaults = json::object();
  json list;
  if (doc.is_array()) {
    list = doc;
  } else if (doc.is_object() && doc.contains("configs")) {
    list = doc.at("configs");
    if (doc.contains("defaults")) defaults = doc.at("defaults");
  } else {
    throw ConfigError("grid file must be an array of configs or an object with \"configs\"");
  }
  if (!list.is_array()) throw ConfigError("\"configs\" must be an array");
  std::vector<ExperimentConfig> out;
  for (const auto& entry : list) {
    json merged = defaults;
    merged.update(entry);
    out.push_back(config_from_json(merged));
  }
  return out;
}

inline std::vector<ExperimentConfig> load_configs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config '" + path + "': " + e.what());
  }
  return configs_from_json(doc);
}

struct EpisodeMetrics {
  double undiscounted_return = 0.0;
  double discounted_return = 0.0;
  double sim_time_per_step = 0.0;  ///< seconds inside simulator step calls, per planned step
  double sims_per_step = 0.0;
  int steps_to_go_on_depletion = 0;
  double wall_time = 0.0;
};

/// Forwards to a simulator while accumulating the time spent in step calls.
template <GenerativeSimulator Sim>
class TimedSimulator {
 public:
  using State = typename Sim::State;

  explicit TimedSimulator(const Sim& sim) : sim_(&sim) {}

  int action_count() const { return sim_->action_count(); }
  State sample_initial(RngStream& rng) const { return sim_->sample_initial(rng); }

  StepResult<State> step(State s, ActionId a, RngStream& rng) const {
    const auto start = Clock::now();
    auto res = sim_->step(std::move(s), a, rng);
    elapsed_ += Clock::now() - start;
    return res;
  }

  double seconds() const { return std::chrono::duration<double>(elapsed_).count(); }

 private:
  const Sim* sim_;
  mutable Clock::duration elapsed_{0};
};

/// The online loop: plan on `plan_sim`, act in `real`, feed the observation
/// back. After depletion the agent acts uniformly at random.
template <GenerativeSimulator Real, GenerativeSimulator PlanSim>
EpisodeMetrics run_episode_with(const Real& real, const PlanSim& plan_sim, const PlannerConfig& pc,
                                int horizon, std::uint64_t seed, std::uint64_t episode,
                                std::ostream* trace = nullptr) {
  const auto start = Clock::now();
  const RngStream er = RngStream(seed).fork(episode);
  RngStream planner_rng = er.fork(0);
  RngStream world_rng = er.fork(1);
  RngStream fallback_rng = er.fork(2);

  TimedSimulator<PlanSim> timed(plan_sim);
  Pomcp planner(timed, pc, planner_rng);
  auto state = real.sample_initial(world_rng);

  EpisodeMetrics m;
  m.steps_to_go_on_depletion = horizon;
  std::vector<double> rewards;
  long sims = 0;
  int planned = 0;
  bool depleted = false;
  for (int t = 0; t < horizon; ++t) {
    ActionId a;
    if (!depleted) {
      a = planner.plan();
      sims += planner.last_stats().simulations;
      ++planned;
    } else {
      a = static_cast<ActionId>(fallback_rng.below(static_cast<std::uint32_t>(real.action_count())));
    }
    auto res = real.step(std::move(state), a, world_rng);
    rewards.push_back(res.reward);
    if (trace) {
      *trace << "t=" << t << " action=" << a << " observation=" << res.observation
             << " reward=" << res.reward;
      if (!depleted)
        *trace << " sims=" << planner.last_stats().simulations
               << " particles=" << planner.root().particles.size();
      else
        *trace << " (random)";
      *trace << '\n';
    }
    state = std::move(res.next_state);
    if (!depleted && t + 1 < horizon &&
        planner.observe(a, res.observation) == ObserveStatus::depleted) {
      depleted = true;
      m.steps_to_go_on_depletion = horizon - (t + 1);
      if (trace) *trace << "particle depletion with " << m.steps_to_go_on_depletion << " steps to go\n";
    }
  }
  for (double r : rewards) m.undiscounted_return += r;
  m.discounted_return = discounted_return(rewards, pc.gamma);
  m.sims_per_step = static_cast<double>(sims) / planned;
  m.sim_time_per_step = timed.seconds() / planned;
  m.wall_time = seconds_since(start);
  return m;
}

/// Read-only resources shared by every episode of a config.
struct PreparedConfig {
  ExperimentConfig cfg;
  std::shared_ptr<const RnnPredictor> model;
};

inline PreparedConfig prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedConfig p{cfg, nullptr};
  if (cfg.simulator == SimulatorKind::ials_learned) {
    auto model = std::make_shared<RnnPredictor>(load_model(cfg.model_path));
    const int width = cfg.domain == Domain::gac ? gac::GacLocalSimulator(cfg.gac).input_width()
                                                : gtc::GtcLocalSimulator(cfg.gtc).input_width();
    const SourceSpec spec = cfg.domain == Domain::gac ? gac::gac_source_spec() : gtc::gtc_source_spec();
    if (model->input_width() != width)
      throw ConfigError("model input width " + std::to_string(model->input_width()) +
                        " does not match the local simulator's " + std::to_string(width));
    if (model->source_spec().heads != spec.heads)
      throw ConfigError("model output heads do not match the domain's influence sources");
    p.model = std::move(model);
  }
  return p;
}

template <class Global, class Local, class Predictor>
EpisodeMetrics run_ials_episode(const Global& real, const Local& local, Predictor predictor,
                                const ExperimentConfig& cfg, std::uint64_t episode, std::ostream* trace) {
  IalsSimulator<Local, Predictor> sim(local, std::move(predictor));
  return run_episode_with(real, sim, cfg.planner, cfg.horizon(), cfg.seed, episode, trace);
}

template <class Global, class Local>
EpisodeMetrics run_domain_episode(const PreparedConfig& p, std::uint64_t episode, std::ostream* trace) {
  const auto& cfg = p.cfg;
  const auto& dcfg = [&]() -> const auto& {
    if constexpr (std::is_same_v<Global, gac::GacGlobalSimulator>) return cfg.gac;
    else return cfg.gtc;
  }();
  const Global real(dcfg);
  const Local local(dcfg);
  switch (cfg.simulator) {
    case SimulatorKind::global: {
      const Global planning(dcfg);
      return run_episode_with(real, planning, cfg.planner, cfg.horizon(), cfg.seed, episode, trace);
    }
    case SimulatorKind::ials_learned:
      return run_ials_episode(real, local, *p.model, cfg, episode, trace);
    case SimulatorKind::ials_uniform:
      return run_ials_episode(real, local, UniformPredictor(local.source_spec()), cfg, episode, trace);
    case SimulatorKind::ials_oracle:
      if constexpr (std::is_same_v<Global, gac::GacGlobalSimulator>)
        return run_ials_episode(real, local, gac::ExactGacPredictor(cfg.gac), cfg, episode, trace);
      else
        throw ConfigError("ials_oracle is only available for gac");
  }
  throw ConfigError("unknown simulator kind");
}

inline EpisodeMetrics run_episode(const PreparedConfig& p, std::uint64_t episode,
                                  std::ostream* trace = nullptr) {
  if (p.cfg.domain == Domain::gac)
    return run_domain_episode<gac::GacGlobalSimulator, gac::GacLocalSimulator>(p, episode, trace);
  return run_domain_episode<gtc::GtcGlobalSimulator, gtc::GtcLocalSimulator>(p, episode, trace);
}

inline EpisodeMetrics run_episode(const ExperimentConfig& cfg, std::uint64_t episode,
                                  std::ostream* trace = nullptr) {
  return run_episode(prepare(cfg), episode, trace);
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

/// Mean and standard error (sample standard deviation / √n).
inline MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe r;
  if (xs.empty()) return r;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) r.mean += x;
  r.mean /= n;
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return r;
}

struct AggregateRow {
  Domain domain = Domain::gac;
  SimulatorKind simulator = SimulatorKind::global;
  std::string grid_var;
  double grid_value = 0.0;
  int n_episodes = 0;
  MeanSe ret, disc_ret, sim_time, sims_per_step, steps_to_go;
  std::string error;  ///< non-empty when the config failed

  bool ok() const { return error.empty(); }
};

inline AggregateRow aggregate(const ExperimentConfig& cfg, const std::vector<EpisodeMetrics>& eps) {
  AggregateRow row;
  row.domain = cfg.domain;
  row.simulator = cfg.simulator;
  row.grid_var = cfg.grid_var;
  row.grid_value = cfg.grid_value;
  row.n_episodes = static_cast<int>(eps.size());
  const auto column = [&](auto field) {
    std::vector<double> xs;
    xs.reserve(eps.size());
    for (const auto& e : eps) xs.push_back(static_cast<double>(e.*field));
    return mean_se(xs);
  };
  row.ret = column(&EpisodeMetrics::undiscounted_return);
  row.disc_ret = column(&EpisodeMetrics::discounted_return);
  row.sim_time = column(&EpisodeMetrics::sim_time_per_step);
  row.sims_per_step = column(&EpisodeMetrics::sims_per_step);
  row.steps_to_go = column(&EpisodeMetrics::steps_to_go_on_depletion);
  return row;
}

struct GridOptions {
  int workers = 1;
  std::ostream* progress = nullptr;
};

/// Runs every episode of every config on a pool of workers. Results are stored
/// by (config, episode) index, so aggregates do not depend on scheduling. A
/// failing config is reported in its row and the rest of the grid continues.
inline std::vector<AggregateRow> run_grid(const std::vector<ExperimentConfig>& configs,
                                          const GridOptions& opt = {}) {
  const std::size_t n_cfg = configs.size();
  std::vector<std::optional<PreparedConfig>> prepared(n_cfg);
  std::vector<std::string> errors(n_cfg);
  std::vector<std::vector<EpisodeMetrics>> results(n_cfg);
  std::vector<std::pair<std::size_t, int>> tasks;
  for (std::size_t c = 0; c < n_cfg; ++c) {
    try {
      prepared[c] = prepare(configs[c]);
    } catch (const std::exception& e) {
      errors[c] = e.what();
      continue;
    }
    results[c].resize(static_cast<std::size_t>(configs[c].n_episodes));
    for (int e = 0; e < configs[c].n_episodes; ++e) tasks.emplace_back(c, e);
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::vector<std::size_t> done(n_cfg, 0);
  const auto work = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      const auto [c, e] = tasks[k];
      {
        std::lock_guard lock(mu);
        if (!errors[c].empty()) continue;
      }
      try {
        results[c][static_cast<std::size_t>(e)] = run_episode(*prepared[c], static_cast<std::uint64_t>(e));
      } catch (const std::exception& ex) {
        std::lock_guard lock(mu);
        if (errors[c].empty()) errors[c] = "episode " + std::to_string(e) + ": " + ex.what();
        continue;
      }
      std::lock_guard lock(mu);
      if (++done[c] == results[c].size() && opt.progress)
        *opt.progress << "config " << c << " (" << to_string(configs[c].domain) << ' '
                      << to_string(configs[c].simulator) << ' ' << configs[c].grid_var << '='
                      << configs[c].grid_value << ") done\n" << std::flush;
    }
  };
  const int workers = std::max(1, opt.workers);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::vector<AggregateRow> rows;
  for (std::size_t c = 0; c < n_cfg; ++c) {
    if (errors[c].empty()) {
      rows.push_back(aggregate(configs[c], results[c]));
    } else {
      AggregateRow row;
      row.domain = configs[c].domain;
      row.simulator = configs[c].simulator;
      row.grid_var = configs[c].grid_var;
      row.grid_value = configs[c].grid_value;
      row.error = errors[c];
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

struct EmitOptions {
  bool timing = true;  ///< false writes 0 in the timing columns
  bool plots = true;
};

inline const char* results_header() {
  return "domain,simulator,grid_var,grid_value,n_episodes,mean_return,se_return,mean_disc_return,"
         "se_disc_return,mean_sim_time,se_sim_time,mean_sims_per_step,se_sims_per_step,"
         "mean_steps_to_go,se_steps_to_go";
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// CSV of the successful rows; failed configs are left out.
inline void write_results_csv(const std::vector<AggregateRow>& rows, std::ostream& out,
                              const EmitOptions& opt = {}) {
  out << results_header() << '\n';
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    const MeanSe time = opt.timing ? r.sim_time : MeanSe{};
    out << to_string(r.domain) << ',' << to_string(r.simulator) << ',' << r.grid_var << ','
        << format_number(r.grid_value) << ',' << r.n_episodes;
    for (const MeanSe& m : {r.ret, r.disc_ret, time, r.sims_per_step, r.steps_to_go})
      out << ',' << format_number(m.mean) << ',' << format_number(m.se);
    out << '\n';
  }
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace detail

/// Line plot of one metric against the grid variable, one series per
/// (domain, simulator), with ±1 standard-error bars.
inline void write_metric_svg(const std::vector<AggregateRow>& rows, const std::string& title,
                             MeanSe AggregateRow::*metric, std::ostream& out) {
  constexpr double W = 640, H = 400, L = 70, R = 170, T = 40, B = 50;
  std::map<std::string, std::vector<const AggregateRow*>> series;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  std::string xlabel;
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    series[to_string(r.domain) + " " + to_string(r.simulator)].push_back(&r);
    const MeanSe& m = r.*metric;
    x0 = std::min(x0, r.grid_value);
    x1 = std::max(x1, r.grid_value);
    y0 = std::min(y0, m.mean - m.se);
    y1 = std::max(y1, m.mean + m.se);
    if (xlabel.empty()) xlabel = r.grid_var;
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << detail::xml_escape(title)
      << "</text>\n";
  if (series.empty()) {
    out << "</svg>\n";
    return;
  }
  const bool log_x = x0 > 0 && x1 / x0 >= 16;
  const auto fx = [&](double v) { return log_x ? std::log2(v) : v; };
  double ax0 = fx(x0), ax1 = fx(x1);
  if (ax1 == ax0) { ax0 -= 1; ax1 += 1; }
  if (y1 == y0) { y0 -= 1; y1 += 1; }
  const auto px = [&](double v) { return L + (fx(v) - ax0) / (ax1 - ax0) * (W - L - R); };
  const auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\""
      << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0;
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << format_number(yv) << "</text>\n";
  }
  std::vector<double> xs;
  for (const auto& r : rows)
    if (r.ok()) xs.push_back(r.grid_value);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double xv : xs)
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
        << format_number(xv) << "</text>\n";
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
      << detail::xml_escape(xlabel) << (log_x ? " (log scale)" : "") << "</text>\n";

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  int idx = 0;
  for (auto& [name, pts] : series) {
    std::sort(pts.begin(), pts.end(),
              [](const AggregateRow* a, const AggregateRow* b) { return a->grid_value < b->grid_value; });
    const char* color = colors[idx % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto* r : pts) out << px(r->grid_value) << ',' << py((r->*metric).mean) << ' ';
    out << "\"/>\n";
    for (const auto* r : pts) {
      const MeanSe& m = r->*metric;
      const double x = px(r->grid_value);
      out << "<line x1=\"" << x << "\" y1=\"" << py(m.mean - m.se) << "\" x2=\"" << x << "\" y2=\""
          << py(m.mean + m.se) << "\" stroke=\"" << color << "\"/>\n"
          << "<circle cx=\"" << x << "\" cy=\"" << py(m.mean) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    const double ly = T + 16 * idx;
    out << "<rect x=\"" << W - R + 12 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\""
        << color << "\"/>\n<text x=\"" << W - R + 28 << "\" y=\"" << ly << "\">"
        << detail::xml_escape(name) << "</text>\n";
    ++idx;
  }
  out << "</svg>\n";
}

/// Writes results.csv plus one SVG per metric into `dir`. Returns the failed
/// rows' messages, one per failed config.
inline std::vector<std::string> emit_results(const std::vector<AggregateRow>& rows,
                                             const std::string& dir, const EmitOptions& opt = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  {
    auto out = open_out((fs::path(dir) / "results.csv").string());
    write_results_csv(rows, out, opt);
    if (!out) throw IoError("failed writing results.csv");
  }
  if (opt.plots) {
    const std::vector<std::pair<std::string, MeanSe AggregateRow::*>> metrics = {
        {"return", &AggregateRow::ret},
        {"disc_return", &AggregateRow::disc_ret},
        {"sim_time", &AggregateRow::sim_time},
        {"sims_per_step", &AggregateRow::sims_per_step},
        {"steps_to_go", &AggregateRow::steps_to_go}};
    for (const auto& [name, field] : metrics) {
      if (name == "sim_time" && !opt.timing) continue;
      auto out = open_out((fs::path(dir) / (name + ".svg")).string());
      write_metric_svg(rows, name, field, out);
      if (!out) throw IoError("failed writing " + name + ".svg");
    }
  }
  std::vector<std::string> failures;
  for (const auto& r : rows)
    if (!r.ok())
      failures.push_back(to_string(r.domain) + " " + to_string(r.simulator) + " " + r.grid_var + "=" +
                         format_number(r.grid_value) + ": " + r.error);
  return failures;
}

}  // namespace iaop
