#pragma once

// Grab A Chair: N agents on a ring, one chair between each pair of neighbours.
// Agent i's left chair is chair i and its right chair is chair (i+1) mod N.
// Agent 0 is the planning agent; the others follow a count-based greedy policy.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iaop/core.hpp"
#include "iaop/source.hpp"

namespace iaop::gac {

enum class Side : std::uint8_t { left = 0, right = 1 };

inline Side side_of(ActionId a) { return a == 0 ? Side::left : Side::right; }

struct GacConfig {
  int n_agents = 5;
  double p = 0.0;  ///< chance that each contestant of a contested chair obtains it
  double obs_flip_prob = 0.2;
  int horizon = 10;

  void validate() const {
    if (n_agents < 3) throw ConfigError("n_agents must be at least 3");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
    if (!(obs_flip_prob >= 0.0 && obs_flip_prob <= 1.0))
      throw ConfigError("obs_flip_prob must lie in [0, 1]");
    if (horizon < 1) throw ConfigError("horizon must be positive");
  }
};

/// Visit and success counts of one agent, indexed by Side.
struct SideCounts {
  std::array<int, 2> visits{0, 0};
  std::array<int, 2> wins{0, 0};

  friend bool operator==(const SideCounts&, const SideCounts&) = default;
};

struct GacGlobalState {
  std::vector<std::uint8_t> obtained;
  std::vector<SideCounts> counts;  ///< entry 0 (the planner) stays zero
  int t = 0;

  friend bool operator==(const GacGlobalState&, const GacGlobalState&) = default;
};

using GacLocalState = std::uint8_t;

struct GacInfluenceSource {
  bool contest_left = false;   ///< left neighbour targets our left chair
  bool contest_right = false;  ///< right neighbour targets our right chair

  SourceValue pack() const {
    return static_cast<SourceValue>(contest_left) | (static_cast<SourceValue>(contest_right) << 1);
  }
  static GacInfluenceSource unpack(SourceValue v) { return {(v & 1u) != 0, (v & 2u) != 0}; }

  friend bool operator==(const GacInfluenceSource&, const GacInfluenceSource&) = default;
};

inline SourceSpec gac_source_spec() { return SourceSpec::binary(2); }

/// Whether agent i's targeted chair is also targeted by the neighbour sharing it.
inline bool contested(std::span<const Side> actions, std::size_t i) {
  const std::size_t n = actions.size();
  if (actions[i] == Side::left) return actions[(i + n - 1) % n] == Side::right;
  return actions[(i + 1) % n] == Side::left;
}

inline std::uint8_t chair_outcome(bool is_contested, double p, RngStream& rng) {
  if (!is_contested) return 1;
  return rng.bernoulli(p) ? 1 : 0;
}

inline std::vector<std::uint8_t> gac_resolve(std::span<const Side> actions, double p,
                                             RngStream& rng) {
  std::vector<std::uint8_t> obtained(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i)
    obtained[i] = chair_outcome(contested(actions, i), p, rng);
  return obtained;
}

inline ObservationId gac_observe(std::uint8_t obtained, double flip_prob, RngStream& rng) {
  const bool flip = rng.bernoulli(flip_prob);
  return flip ? 1 - obtained : obtained;
}

/// Random until both sides have been visited, then greedy on the empirical
/// success ratio; exact ties are broken uniformly.
inline Side other_agent_act(const SideCounts& c, RngStream& rng) {
  const auto coin = [&rng] { return rng.below(2) == 0 ? Side::left : Side::right; };
  if (c.visits[0] == 0 || c.visits[1] == 0) return coin();
  const long lhs = static_cast<long>(c.wins[0]) * c.visits[1];
  const long rhs = static_cast<long>(c.wins[1]) * c.visits[0];
  if (lhs > rhs) return Side::left;
  if (rhs > lhs) return Side::right;
  return coin();
}

/// Probability that other_agent_act returns Side::left.
inline double other_agent_left_prob(const SideCounts& c) {
  if (c.visits[0] == 0 || c.visits[1] == 0) return 0.5;
  const long lhs = static_cast<long>(c.wins[0]) * c.visits[1];
  const long rhs = static_cast<long>(c.wins[1]) * c.visits[0];
  if (lhs > rhs) return 1.0;
  if (rhs > lhs) return 0.0;
  return 0.5;
}

inline GacInfluenceSource gac_extract_sources(const GacGlobalState& state,
                                              std::span<const Side> neighbour_actions) {
  const std::size_t n = state.obtained.size();
  return {neighbour_actions[n - 1] == Side::right, neighbour_actions[1] == Side::left};
}

inline LocalStep<GacLocalState> gac_local_step(GacLocalState /*x*/, GacInfluenceSource y,
                                               ActionId a, const GacConfig& cfg,
                                               RngStream& rng) {
  const bool is_contested = side_of(a) == Side::left ? y.contest_left : y.contest_right;
  const std::uint8_t next = chair_outcome(is_contested, cfg.p, rng);
  return {next, gac_observe(next, cfg.obs_flip_prob, rng), static_cast<double>(next)};
}

/// Simulates every agent. The planner's own draws come from a stream split off
/// first, so the same draws drive gac_local_step when a trace is replayed.
class GacGlobalSimulator {
 public:
  using State = GacGlobalState;
  using LocalState = GacLocalState;

  explicit GacGlobalSimulator(GacConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const GacConfig& config() const { return cfg_; }
  int action_count() const { return 2; }
  int observation_count() const { return 2; }

  State sample_initial(RngStream& /*rng*/) const {
    const auto n = static_cast<std::size_t>(cfg_.n_agents);
    return State{std::vector<std::uint8_t>(n, 0), std::vector<SideCounts>(n), 0};
  }

  StepResult<State> step(State s, ActionId a, RngStream& rng) const {
    return step_with_sources(std::move(s), a, rng).first;
  }

  std::pair<StepResult<State>, SourceValue> step_with_sources(State s, ActionId a,
                                                              RngStream& rng) const {
    RngStream local_rng = rng.split();
    RngStream world_rng = rng.split();
    const std::size_t n = s.obtained.size();

    actions_.resize(n);
    actions_[0] = side_of(a);
    for (std::size_t i = 1; i < n; ++i) actions_[i] = other_agent_act(s.counts[i], world_rng);

    const GacInfluenceSource y = gac_extract_sources(s, actions_);
    const auto local = gac_local_step(s.obtained[0], y, a, cfg_, local_rng);
    s.obtained[0] = local.next;

    for (std::size_t i = 1; i < n; ++i) {
      const std::uint8_t got = chair_outcome(contested(actions_, i), cfg_.p, world_rng);
      s.obtained[i] = got;
      const ObservationId seen = gac_observe(got, cfg_.obs_flip_prob, world_rng);
      auto& c = s.counts[i];
      const auto side = static_cast<std::size_t>(actions_[i]);
      c.visits[side] += 1;
      c.wins[side] += seen;
    }
    ++s.t;
    return {StepResult<State>{std::move(s), local.observation, local.reward}, y.pack()};
  }

  LocalState local_of(const State& s) const { return s.obtained[0]; }

 private:
  GacConfig cfg_;
  mutable std::vector<Side> actions_;
};

/// Exact simulator of the planning agent alone, driven by supplied contest bits.
class GacLocalSimulator {
 public:
  using LocalState = GacLocalState;

  explicit GacLocalSimulator(GacConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const GacConfig& config() const { return cfg_; }
  int action_count() const { return 2; }
  int observation_count() const { return 2; }
  SourceSpec source_spec() const { return gac_source_spec(); }
  int input_width() const { return 3; }

  /// One-hot action followed by the obtained bit.
  void encode(ActionId a, LocalState x, std::span<double> out) const {
    out[0] = a == 0 ? 1.0 : 0.0;
    out[1] = a == 0 ? 0.0 : 1.0;
    out[2] = static_cast<double>(x);
  }

  /// x_0 from the (deterministic) global initial state; y_0 from the t=0
  /// neighbour policy, which is uniform because every count is zero.
  std::pair<LocalState, SourceValue> sample_initial(RngStream& rng) const {
    const SideCounts fresh{};
    const bool left_neighbour_right = other_agent_act(fresh, rng) == Side::right;
    const bool right_neighbour_left = other_agent_act(fresh, rng) == Side::left;
    return {0, GacInfluenceSource{left_neighbour_right, right_neighbour_left}.pack()};
  }

  LocalStep<LocalState> step(LocalState x, SourceValue y, ActionId a, RngStream& rng) const {
    return gac_local_step(x, GacInfluenceSource::unpack(y), a, cfg_, rng);
  }

 private:
  GacConfig cfg_;
};

}  // namespace iaop::gac
