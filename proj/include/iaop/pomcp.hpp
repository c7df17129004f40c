#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "iaop/core.hpp"

namespace iaop {

struct PlannerConfig {
  double ucb_c = 100.0;
  double gamma = 1.0;
  int horizon = 10;
  int effective_horizon = 10;
  SimulatorBudget budget = SimulatorBudget::simulations(1000);
  int n_initial_particles = 1000;
  int reinvigoration_divisor = 6;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(ucb_c >= 0)) throw ConfigError("ucb_c must be non-negative");
    if (!(gamma >= 0 && gamma <= 1)) throw ConfigError("gamma must lie in [0, 1]");
    if (horizon < 1) throw ConfigError("horizon must be positive");
    if (effective_horizon < 1 || effective_horizon > horizon)
      throw ConfigError("effective_horizon must lie in [1, horizon]");
    if (!(budget.amount > 0)) throw ConfigError("budget amount must be positive");
    if (n_initial_particles < 1) throw ConfigError("n_initial_particles must be positive");
    if (reinvigoration_divisor < 1) throw ConfigError("reinvigoration_divisor must be positive");
  }
};

class EmptyBelief : public std::runtime_error {
 public:
  EmptyBelief() : std::runtime_error("root particle pool is empty") {}
};

template <class State>
struct SearchNode {
  struct ActionEdge {
    long visits = 0;
    double value = 0.0;  ///< running mean of returns backed up through this edge
    std::vector<std::pair<ObservationId, std::unique_ptr<SearchNode>>> children;

    SearchNode* child(ObservationId o) const {
      for (const auto& [obs, node] : children)
        if (obs == o) return node.get();
      return nullptr;
    }

    SearchNode& child_or_create(ObservationId o) {
      if (SearchNode* n = child(o)) return *n;
      children.emplace_back(o, std::make_unique<SearchNode>());
      return *children.back().second;
    }

    std::unique_ptr<SearchNode> release(ObservationId o) {
      for (auto& [obs, node] : children)
        if (obs == o) return std::move(node);
      return nullptr;
    }
  };

  long visits = 0;
  std::vector<ActionEdge> edges;  ///< empty until expanded
  std::vector<State> particles;

  bool expanded() const { return !edges.empty(); }
};

/// argmax_a Q(h,a) + c·√(ln N(h) / N(h,a)); untried edges come first, lowest
/// index first, and ties go to the lowest index.
template <class State>
ActionId ucb1_select(const SearchNode<State>& node, double c) {
  const double log_n = std::log(static_cast<double>(std::max<long>(node.visits, 1)));
  ActionId best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < node.edges.size(); ++a) {
    const auto& e = node.edges[a];
    if (e.visits == 0) return static_cast<ActionId>(a);
    const double score = e.value + c * std::sqrt(log_n / static_cast<double>(e.visits));
    if (score > best_score) {
      best_score = score;
      best = static_cast<ActionId>(a);
    }
  }
  return best;
}

/// Greedy root choice: highest mean return, then most visits, then lowest index.
template <class State>
ActionId best_action(const SearchNode<State>& node) {
  ActionId best = 0;
  for (std::size_t a = 1; a < node.edges.size(); ++a) {
    const auto& e = node.edges[a];
    const auto& b = node.edges[static_cast<std::size_t>(best)];
    if (e.value > b.value || (e.value == b.value && e.visits > b.visits))
      best = static_cast<ActionId>(a);
  }
  return best;
}

enum class ObserveStatus { ok, depleted };

struct PlanStats {
  long simulations = 0;
  double seconds = 0.0;
};

/// POMCP over any generative simulator: UCB1 in the tree, uniform random
/// rollouts, particle beliefs collected during search, root pruning with
/// reinvigoration from the initial belief.
template <GenerativeSimulator Sim>
class Pomcp {
 public:
  using State = typename Sim::State;
  using Node = SearchNode<State>;

  Pomcp(const Sim& sim, PlannerConfig cfg, RngStream rng)
      : sim_(&sim), cfg_(cfg), rng_(rng), root_(std::make_unique<Node>()) {
    cfg_.validate();
    root_->particles.reserve(static_cast<std::size_t>(cfg_.n_initial_particles));
    for (int i = 0; i < cfg_.n_initial_particles; ++i)
      root_->particles.push_back(sim_->sample_initial(rng_));
  }

  const PlannerConfig& config() const { return cfg_; }
  const Node& root() const { return *root_; }
  Node& root() { return *root_; }
  int steps_taken() const { return steps_taken_; }
  const PlanStats& last_stats() const { return stats_; }

  /// Search depth limit from the current root.
  int depth_limit() const {
    return std::max(0, std::min(cfg_.effective_horizon, cfg_.horizon - steps_taken_));
  }

  ActionId plan() {
    if (root_->particles.empty()) throw EmptyBelief();
    const auto start = Clock::now();
    expand(*root_);
    stats_ = {};
    const auto n_particles = static_cast<std::uint32_t>(root_->particles.size());
    const auto run_one = [&] {
      State s = root_->particles[rng_.below(n_particles)];
      simulate(std::move(s), *root_, 0);
      ++stats_.simulations;
    };
    if (cfg_.budget.kind == SimulatorBudget::Kind::simulation_count) {
      const auto n = static_cast<long>(cfg_.budget.amount);
      for (long i = 0; i < n; ++i) run_one();
    } else {
      const auto deadline = start + std::chrono::duration_cast<Clock::duration>(
                                        std::chrono::duration<double>(cfg_.budget.amount));
      do {
        run_one();
      } while (Clock::now() < deadline);
    }
    stats_.seconds = seconds_since(start);
    return best_action(*root_);
  }

  /// Prunes the tree to the child reached by (a, o) and tops its pool up with
  /// ⌊N/divisor⌋ fresh initial-belief particles.
  ObserveStatus observe(ActionId a, ObservationId o) {
    ++steps_taken_;
    std::unique_ptr<Node> next;
    if (a >= 0 && static_cast<std::size_t>(a) < root_->edges.size())
      next = root_->edges[static_cast<std::size_t>(a)].release(o);
    if (!next) next = std::make_unique<Node>();
    root_ = std::move(next);
    const std::size_t remaining = root_->particles.size();
    const std::size_t extra = remaining / static_cast<std::size_t>(cfg_.reinvigoration_divisor);
    for (std::size_t i = 0; i < extra; ++i) root_->particles.push_back(sim_->sample_initial(rng_));
    return root_->particles.empty() ? ObserveStatus::depleted : ObserveStatus::ok;
  }

  /// One simulation from `s` at `node` (depth below the root); returns the
  /// discounted return from this node.
  double simulate(State s, Node& node, int depth) {
    if (depth >= depth_limit()) return 0.0;
    if (!node.expanded()) {
      expand(node);
      return rollout(std::move(s), depth);
    }
    const ActionId a = ucb1_select(node, cfg_.ucb_c);
    auto res = sim_->step(std::move(s), a, rng_);
    auto& edge = node.edges[static_cast<std::size_t>(a)];
    Node& child = edge.child_or_create(res.observation);
    child.particles.push_back(res.next_state);
    const double ret =
        res.reward + cfg_.gamma * simulate(std::move(res.next_state), child, depth + 1);
    ++node.visits;
    ++edge.visits;
    edge.value += (ret - edge.value) / static_cast<double>(edge.visits);
    return ret;
  }

 private:
  void expand(Node& node) {
    if (!node.expanded()) node.edges.resize(static_cast<std::size_t>(sim_->action_count()));
  }

  double rollout(State s, int depth) {
    const int limit = depth_limit();
    const auto n_actions = static_cast<std::uint32_t>(sim_->action_count());
    double total = 0.0;
    double weight = 1.0;
    for (int d = depth; d < limit; ++d) {
      const auto a = static_cast<ActionId>(rng_.below(n_actions));
      auto res = sim_->step(std::move(s), a, rng_);
      total += weight * res.reward;
      weight *= cfg_.gamma;
      s = std::move(res.next_state);
    }
    return total;
  }

  const Sim* sim_;
  PlannerConfig cfg_;
  RngStream rng_;
  std::unique_ptr<Node> root_;
  int steps_taken_ = 0;
  PlanStats stats_;
};

}  // namespace iaop
