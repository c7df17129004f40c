#pragma once

// Exact influence for small Grab A Chair instances: a forward filter over the
// other agents' counts, conditioned on the planner's local history, enumerating
// every joint action profile and every joint observation outcome.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "iaop/core.hpp"
#include "iaop/gac.hpp"

namespace iaop::gac {

inline constexpr int kExactMaxAgents = 5;
inline constexpr int kExactMaxHistory = 6;

/// One entry (a_{t-1}, x_t) of the planner's local history.
struct LocalHistoryStep {
  ActionId action = 0;
  GacLocalState x = 0;
};

/// Joint distribution over (contest_left, contest_right), indexed by the packed
/// GacInfluenceSource value.
using SourceDistribution = std::array<double, 4>;

class GacExactFilter {
 public:
  explicit GacExactFilter(const GacConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.n_agents > kExactMaxAgents)
      throw ConfigError("exact influence is limited to at most " +
                        std::to_string(kExactMaxAgents) + " agents");
    belief_[0] = 1.0;  // every count starts at zero
  }

  int steps() const { return steps_; }
  std::size_t support() const { return belief_.size(); }

  /// Distribution over the sources of the next transition.
  SourceDistribution predict() const {
    SourceDistribution out{0, 0, 0, 0};
    const int n = cfg_.n_agents;
    for (const auto& [key, prob] : belief_) {
      const auto counts = decode(key);
      const double left_neighbour_right = 1.0 - other_agent_left_prob(counts[n - 1]);
      const double right_neighbour_left = other_agent_left_prob(counts[1]);
      for (int cl = 0; cl < 2; ++cl)
        for (int cr = 0; cr < 2; ++cr)
          out[static_cast<std::size_t>(cl | (cr << 1))] +=
              prob * (cl ? left_neighbour_right : 1.0 - left_neighbour_right) *
              (cr ? right_neighbour_left : 1.0 - right_neighbour_left);
    }
    return out;
  }

  /// Conditions on the planner taking `a` and ending in local state `x`.
  void update(ActionId a, GacLocalState x) {
    if (steps_ >= kExactMaxHistory)
      throw ConfigError("exact influence is limited to histories of " +
                        std::to_string(kExactMaxHistory) + " steps");
    const int n = cfg_.n_agents;
    const int others = n - 1;
    const double p = cfg_.p;
    const double f = cfg_.obs_flip_prob;
    std::map<std::uint64_t, double> next;
    std::vector<Side> actions(static_cast<std::size_t>(n));
    actions[0] = side_of(a);
    std::vector<double> obs_one(static_cast<std::size_t>(n), 0.0);

    for (const auto& [key, prob] : belief_) {
      const auto counts = decode(key);
      for (std::uint32_t profile = 0; profile < (1u << others); ++profile) {
        double p_profile = prob;
        for (int i = 1; i < n; ++i) {
          const bool right = ((profile >> (i - 1)) & 1u) != 0;
          actions[static_cast<std::size_t>(i)] = right ? Side::right : Side::left;
          const double left_prob = other_agent_left_prob(counts[static_cast<std::size_t>(i)]);
          p_profile *= right ? 1.0 - left_prob : left_prob;
        }
        if (p_profile == 0.0) continue;
        const double got_planner = contested(actions, 0) ? p : 1.0;
        const double lik = x ? got_planner : 1.0 - got_planner;
        if (lik == 0.0) continue;
        for (int i = 1; i < n; ++i) {
          const double got = contested(actions, static_cast<std::size_t>(i)) ? p : 1.0;
          obs_one[static_cast<std::size_t>(i)] = got * (1.0 - f) + (1.0 - got) * f;
        }
        for (std::uint32_t seen = 0; seen < (1u << others); ++seen) {
          double w = p_profile * lik;
          auto updated = counts;
          for (int i = 1; i < n; ++i) {
            const bool one = ((seen >> (i - 1)) & 1u) != 0;
            w *= one ? obs_one[static_cast<std::size_t>(i)] : 1.0 - obs_one[static_cast<std::size_t>(i)];
            auto& c = updated[static_cast<std::size_t>(i)];
            const auto side = static_cast<std::size_t>(actions[static_cast<std::size_t>(i)]);
            c.visits[side] += 1;
            c.wins[side] += one ? 1 : 0;
          }
          if (w == 0.0) continue;
          next[encode(updated)] += w;
        }
      }
    }
    double total = 0.0;
    for (const auto& [key, w] : next) total += w;
    if (!(total > 0.0)) throw std::domain_error("local history has probability zero");
    for (auto& [key, w] : next) w /= total;
    belief_ = std::move(next);
    ++steps_;
  }

 private:
  // Four 4-bit fields per non-planning agent; counts never exceed the history cap.
  std::uint64_t encode(const std::vector<SideCounts>& counts) const {
    std::uint64_t key = 0;
    for (int i = 1; i < cfg_.n_agents; ++i) {
      const auto& c = counts[static_cast<std::size_t>(i)];
      const int shift = 16 * (i - 1);
      key |= static_cast<std::uint64_t>(c.visits[0]) << shift;
      key |= static_cast<std::uint64_t>(c.wins[0]) << (shift + 4);
      key |= static_cast<std::uint64_t>(c.visits[1]) << (shift + 8);
      key |= static_cast<std::uint64_t>(c.wins[1]) << (shift + 12);
    }
    return key;
  }

  std::vector<SideCounts> decode(std::uint64_t key) const {
    std::vector<SideCounts> counts(static_cast<std::size_t>(cfg_.n_agents));
    for (int i = 1; i < cfg_.n_agents; ++i) {
      auto& c = counts[static_cast<std::size_t>(i)];
      const int shift = 16 * (i - 1);
      c.visits[0] = static_cast<int>((key >> shift) & 0xF);
      c.wins[0] = static_cast<int>((key >> (shift + 4)) & 0xF);
      c.visits[1] = static_cast<int>((key >> (shift + 8)) & 0xF);
      c.wins[1] = static_cast<int>((key >> (shift + 12)) & 0xF);
    }
    return counts;
  }

  GacConfig cfg_;
  std::map<std::uint64_t, double> belief_;
  int steps_ = 0;
};

/// Pr(y_t | d) for the local history d = ((a_0, x_1), ..., (a_{t-1}, x_t)).
inline SourceDistribution exact_influence_gac(const GacConfig& cfg,
                                              std::span<const LocalHistoryStep> d) {
  if (static_cast<int>(d.size()) > kExactMaxHistory)
    throw ConfigError("exact influence is limited to histories of " +
                      std::to_string(kExactMaxHistory) + " steps");
  GacExactFilter filter(cfg);
  for (const auto& s : d) filter.update(s.action, s.x);
  return filter.predict();
}

/// The exact influence as a predictor for the local simulator. Its hidden state
/// is a node in a lazily built trie of local histories; nodes cache the filter
/// and its prediction. Not thread-safe: one instance per planner.
class ExactGacPredictor {
 public:
  using Hidden = std::uint32_t;

  explicit ExactGacPredictor(const GacConfig& cfg) : trie_(std::make_shared<Trie>()) {
    trie_->nodes.push_back(Node{GacExactFilter(cfg), {}, {}});
    trie_->nodes[0].prediction = trie_->nodes[0].filter.predict();
  }

  Hidden initial_hidden() const { return 0; }

  const SourceDistribution& distribution(Hidden z) const { return trie_->nodes[z].prediction; }

  /// Input is the local simulator's encoding: one-hot action, then the bit x.
  Hidden child(Hidden z, ActionId a, GacLocalState x) const {
    const std::size_t slot = static_cast<std::size_t>(a * 2 + x);
    if (trie_->nodes[z].children[slot] == 0) {
      Node next{trie_->nodes[z].filter, {}, {}};
      next.filter.update(a, x);
      next.prediction = next.filter.predict();
      trie_->nodes.push_back(std::move(next));
      trie_->nodes[z].children[slot] = static_cast<Hidden>(trie_->nodes.size() - 1);
    }
    return trie_->nodes[z].children[slot];
  }

  SourceValue advance(Hidden& z, std::span<const double> input, RngStream& rng) const {
    const ActionId a = input[1] > 0.5 ? 1 : 0;
    const GacLocalState x = input[2] > 0.5 ? 1 : 0;
    z = child(z, a, x);
    const auto& dist = trie_->nodes[z].prediction;
    double draw = rng.uniform();
    for (SourceValue v = 0; v < 3; ++v) {
      draw -= dist[v];
      if (draw < 0) return v;
    }
    return 3;
  }

 private:
  struct Node {
    GacExactFilter filter;
    SourceDistribution prediction;
    std::array<Hidden, 4> children{};  // 0 means absent; the root is never a child
  };
  struct Trie {
    std::vector<Node> nodes;
  };
  std::shared_ptr<Trie> trie_;
};

}  // namespace iaop::gac
