#pragma once

// Grid Traffic Control: a rows×cols grid of intersections joined by one-way
// roads (eastbound and northbound). Each intersection holds four lanes:
// west_in and south_in before its light, east_out and north_out after it.
// Lane bit 0 is the rear grid (where vehicles enter) and bit len-1 the head.
// Row 0 is the southern border, column 0 the western border.

#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "iaop/core.hpp"
#include "iaop/source.hpp"

namespace iaop::gtc {

using Lane = std::uint32_t;

enum LaneIndex : std::size_t { west_in = 0, east_out = 1, south_in = 2, north_out = 3 };

enum class Light : std::uint8_t { ew_green = 0, ns_green = 1 };

struct GtcConfig {
  int rows = 3;
  int cols = 3;
  int lane_len = 6;
  double init_occupancy_prob = 0.7;
  double exit_prob = 0.3;
  int horizon = 30;

  void validate() const {
    if (rows < 1 || cols < 1 || rows > 3 || cols > 3)
      throw ConfigError("grid must be between 1x1 and 3x3");
    if (lane_len < 1 || lane_len > 31) throw ConfigError("lane_len must lie in [1, 31]");
    if (!(init_occupancy_prob >= 0.0 && init_occupancy_prob <= 1.0))
      throw ConfigError("init_occupancy_prob must lie in [0, 1]");
    if (!(exit_prob >= 0.0 && exit_prob <= 1.0)) throw ConfigError("exit_prob must lie in [0, 1]");
    if (horizon < 1) throw ConfigError("horizon must be positive");
  }

  int center_row() const { return rows / 2; }
  int center_col() const { return cols / 2; }
  int intersections() const { return rows * cols; }
};

struct Intersection {
  std::array<Lane, 4> lanes{0, 0, 0, 0};
  Light light = Light::ew_green;

  int occupancy() const {
    int n = 0;
    for (Lane l : lanes) n += std::popcount(l);
    return n;
  }

  friend bool operator==(const Intersection&, const Intersection&) = default;
};

struct GtcGlobalState {
  std::vector<Intersection> grid;  ///< row-major, row 0 = south
  int t = 0;

  friend bool operator==(const GtcGlobalState&, const GtcGlobalState&) = default;
};

using GtcLocalState = Intersection;

struct GtcInfluenceSource {
  bool arrive_west = false;
  bool arrive_south = false;
  bool blocked_east = false;
  bool blocked_north = false;

  SourceValue pack() const {
    return static_cast<SourceValue>(arrive_west) | (static_cast<SourceValue>(arrive_south) << 1) |
           (static_cast<SourceValue>(blocked_east) << 2) |
           (static_cast<SourceValue>(blocked_north) << 3);
  }
  static GtcInfluenceSource unpack(SourceValue v) {
    return {(v & 1u) != 0, (v & 2u) != 0, (v & 4u) != 0, (v & 8u) != 0};
  }

  friend bool operator==(const GtcInfluenceSource&, const GtcInfluenceSource&) = default;
};

inline SourceSpec gtc_source_spec() { return SourceSpec::binary(4); }

constexpr bool occupied(Lane lane, int grid) { return ((lane >> grid) & 1u) != 0; }
constexpr Lane head_bit(int len) { return Lane{1} << (len - 1); }

/// Moves a lane forward one step, front to back. The head vehicle leaves iff
/// head_can_leave; every other vehicle advances iff the grid ahead is free once
/// the vehicle ahead has moved.
inline std::pair<Lane, bool> advance_lane(Lane lane, int len, bool head_can_leave) {
  bool departed = false;
  if (head_can_leave && occupied(lane, len - 1)) {
    lane &= ~head_bit(len);
    departed = true;
  }
  for (int i = len - 2; i >= 0; --i) {
    if (occupied(lane, i) && !occupied(lane, i + 1)) {
      lane &= ~(Lane{1} << i);
      lane |= Lane{1} << (i + 1);
    }
  }
  return {lane, departed};
}

/// Scores each direction 2 (vehicle waiting, exit free), 1 (vehicle waiting)
/// or 0 and turns the higher one green; ties keep the current light.
inline Light handcoded_light(const Intersection& x, int len) {
  const auto score = [len](Lane in, Lane out) {
    if (!occupied(in, len - 1)) return 0;
    return occupied(out, 0) ? 1 : 2;
  };
  const int ew = score(x.lanes[west_in], x.lanes[east_out]);
  const int ns = score(x.lanes[south_in], x.lanes[north_out]);
  if (ew > ns) return Light::ew_green;
  if (ns > ew) return Light::ns_green;
  return x.light;
}

/// (west_in head, south_in head, east_out rear, north_out rear), little-endian.
inline ObservationId observe_intersection(const Intersection& x, int len) {
  return static_cast<ObservationId>(occupied(x.lanes[west_in], len - 1)) |
         (static_cast<ObservationId>(occupied(x.lanes[south_in], len - 1)) << 1) |
         (static_cast<ObservationId>(occupied(x.lanes[east_out], 0)) << 2) |
         (static_cast<ObservationId>(occupied(x.lanes[north_out], 0)) << 3);
}

inline double intersection_reward(const Intersection& x) { return -x.occupancy(); }

/// Light crossing and lane advance for one intersection. Crossing into an
/// out-lane requires its rear grid to be free before the out-lane moves.
inline void advance_intersection(Intersection& x, int len) {
  const bool ew_green = x.light == Light::ew_green;
  const bool cross_ew = ew_green && !occupied(x.lanes[east_out], 0);
  const bool cross_ns = !ew_green && !occupied(x.lanes[north_out], 0);
  x.lanes[east_out] = advance_lane(x.lanes[east_out], len, false).first;
  x.lanes[north_out] = advance_lane(x.lanes[north_out], len, false).first;
  auto [w, crossed_ew] = advance_lane(x.lanes[west_in], len, cross_ew);
  auto [s, crossed_ns] = advance_lane(x.lanes[south_in], len, cross_ns);
  x.lanes[west_in] = w;
  x.lanes[south_in] = s;
  if (crossed_ew) x.lanes[east_out] |= Lane{1};
  if (crossed_ns) x.lanes[north_out] |= Lane{1};
}

inline GtcGlobalState gtc_sample_initial(const GtcConfig& cfg, RngStream& rng) {
  GtcGlobalState s;
  s.grid.resize(static_cast<std::size_t>(cfg.intersections()));
  for (auto& x : s.grid) {
    for (auto& lane : x.lanes) {
      for (int g = 0; g < cfg.lane_len; ++g)
        if (rng.bernoulli(cfg.init_occupancy_prob)) lane |= Lane{1} << g;
    }
    x.light = Light::ew_green;
  }
  return s;
}

/// What happened at the centre intersection's four boundaries during one step.
struct GtcTransferLog {
  bool delivered_west = false;
  bool delivered_south = false;
  bool head_east = false;  ///< centre east_out had a head vehicle ready to leave
  bool head_north = false;
  bool refused_east = false;  ///< that head vehicle was refused
  bool refused_north = false;
  bool downstream_east_occupied = false;  ///< refusal had a vehicle been ready
  bool downstream_north_occupied = false;
};

inline GtcInfluenceSource gtc_extract_sources(const GtcTransferLog& log) {
  return {log.delivered_west, log.delivered_south,
          log.head_east ? log.refused_east : log.downstream_east_occupied,
          log.head_north ? log.refused_north : log.downstream_north_occupied};
}

struct GtcStepDetail {
  StepResult<GtcGlobalState> result;
  GtcTransferLog log;
  int entries = 0;
  int exits = 0;
};

/// Simulates all intersections. Phase order, shared with the local simulator:
/// lights, border exits, inter-intersection transfers, lane advance with light
/// crossing, border entries.
class GtcGlobalSimulator {
 public:
  using State = GtcGlobalState;
  using LocalState = GtcLocalState;

  explicit GtcGlobalSimulator(GtcConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const GtcConfig& config() const { return cfg_; }
  int action_count() const { return 2; }
  int observation_count() const { return 16; }

  State sample_initial(RngStream& rng) const { return gtc_sample_initial(cfg_, rng); }

  StepResult<State> step(State s, ActionId a, RngStream& rng) const {
    return step_detailed(std::move(s), a, rng).result;
  }

  std::pair<StepResult<State>, SourceValue> step_with_sources(State s, ActionId a,
                                                              RngStream& rng) const {
    auto d = step_detailed(std::move(s), a, rng);
    return {std::move(d.result), gtc_extract_sources(d.log).pack()};
  }

  LocalState local_of(const State& s) const { return s.grid[center_index()]; }

  GtcStepDetail step_detailed(State s, ActionId a, RngStream& rng) const {
    const int len = cfg_.lane_len;
    const int rows = cfg_.rows;
    const int cols = cfg_.cols;
    const int cr = cfg_.center_row();
    const int cc = cfg_.center_col();
    const auto at = [&](int r, int c) -> Intersection& {
      return s.grid[static_cast<std::size_t>(r * cols + c)];
    };
    GtcStepDetail d;
    GtcTransferLog& log = d.log;

    {
      const Intersection& center = at(cr, cc);
      log.head_east = occupied(center.lanes[east_out], len - 1);
      log.head_north = occupied(center.lanes[north_out], len - 1);
    }

    // Entrance occupancy at the end of the previous step, for border entries.
    std::array<bool, 3> west_entrance_free{};
    std::array<bool, 3> south_entrance_free{};
    for (int r = 0; r < rows; ++r) west_entrance_free[r] = !occupied(at(r, 0).lanes[west_in], 0);
    for (int c = 0; c < cols; ++c) south_entrance_free[c] = !occupied(at(0, c).lanes[south_in], 0);

    // 1. lights
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        Intersection& x = at(r, c);
        x.light = (r == cr && c == cc) ? (a == 0 ? Light::ew_green : Light::ns_green)
                                       : handcoded_light(x, len);
      }

    // 2. border exits; a draw is taken for every border lane so refusals are defined
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        Intersection& x = at(r, c);
        const bool is_center = r == cr && c == cc;
        if (c == cols - 1) {
          const bool leaves = rng.bernoulli(cfg_.exit_prob);
          if (is_center) {
            log.downstream_east_occupied = !leaves;
            log.refused_east = log.head_east && !leaves;
          }
          if (leaves && occupied(x.lanes[east_out], len - 1)) {
            x.lanes[east_out] &= ~head_bit(len);
            ++d.exits;
          }
        }
        if (r == rows - 1) {
          const bool leaves = rng.bernoulli(cfg_.exit_prob);
          if (is_center) {
            log.downstream_north_occupied = !leaves;
            log.refused_north = log.head_north && !leaves;
          }
          if (leaves && occupied(x.lanes[north_out], len - 1)) {
            x.lanes[north_out] &= ~head_bit(len);
            ++d.exits;
          }
        }
      }

    // 3. transfers between intersections
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        Intersection& x = at(r, c);
        if (c + 1 < cols) {
          Intersection& dest = at(r, c + 1);
          const bool dest_full = occupied(dest.lanes[west_in], 0);
          const bool ready = occupied(x.lanes[east_out], len - 1);
          if (r == cr && c == cc) {
            log.downstream_east_occupied = dest_full;
            log.refused_east = ready && dest_full;
          }
          if (ready && !dest_full) {
            x.lanes[east_out] &= ~head_bit(len);
            dest.lanes[west_in] |= Lane{1};
            if (r == cr && c + 1 == cc) log.delivered_west = true;
          }
        }
        if (r + 1 < rows) {
          Intersection& dest = at(r + 1, c);
          const bool dest_full = occupied(dest.lanes[south_in], 0);
          const bool ready = occupied(x.lanes[north_out], len - 1);
          if (r == cr && c == cc) {
            log.downstream_north_occupied = dest_full;
            log.refused_north = ready && dest_full;
          }
          if (ready && !dest_full) {
            x.lanes[north_out] &= ~head_bit(len);
            dest.lanes[south_in] |= Lane{1};
            if (r + 1 == cr && c == cc) log.delivered_south = true;
          }
        }
      }

    // 4. lane advance with light crossing
    for (auto& x : s.grid) advance_intersection(x, len);

    // 5. border entries
    for (int r = 0; r < rows; ++r) {
      if (west_entrance_free[r]) {
        at(r, 0).lanes[west_in] |= Lane{1};
        ++d.entries;
        if (r == cr && cc == 0) log.delivered_west = true;
      }
    }
    for (int c = 0; c < cols; ++c) {
      if (south_entrance_free[c]) {
        at(0, c).lanes[south_in] |= Lane{1};
        ++d.entries;
        if (c == cc && cr == 0) log.delivered_south = true;
      }
    }

    ++s.t;
    const Intersection& center = at(cr, cc);
    d.result.observation = observe_intersection(center, len);
    d.result.reward = intersection_reward(center);
    d.result.next_state = std::move(s);
    return d;
  }

  std::size_t center_index() const {
    return static_cast<std::size_t>(cfg_.center_row() * cfg_.cols + cfg_.center_col());
  }

 private:
  GtcConfig cfg_;
};

/// Influence sources a step starting from `s` would use, derived without
/// stepping: deterministic neighbour behaviour at interior boundaries, a fresh
/// exit draw at system borders.
inline GtcInfluenceSource gtc_initial_sources(const GtcConfig& cfg, const GtcGlobalState& s,
                                              RngStream& rng) {
  const int len = cfg.lane_len;
  const int cr = cfg.center_row();
  const int cc = cfg.center_col();
  const auto at = [&](int r, int c) -> const Intersection& {
    return s.grid[static_cast<std::size_t>(r * cfg.cols + c)];
  };
  const Intersection& center = at(cr, cc);
  GtcInfluenceSource y;
  if (cc == 0) {
    y.arrive_west = !occupied(center.lanes[west_in], 0);
  } else {
    y.arrive_west = occupied(at(cr, cc - 1).lanes[east_out], len - 1) &&
                    !occupied(center.lanes[west_in], 0);
  }
  if (cr == 0) {
    y.arrive_south = !occupied(center.lanes[south_in], 0);
  } else {
    y.arrive_south = occupied(at(cr - 1, cc).lanes[north_out], len - 1) &&
                     !occupied(center.lanes[south_in], 0);
  }
  y.blocked_east = cc == cfg.cols - 1 ? !rng.bernoulli(cfg.exit_prob)
                                      : occupied(at(cr, cc + 1).lanes[west_in], 0);
  y.blocked_north = cr == cfg.rows - 1 ? !rng.bernoulli(cfg.exit_prob)
                                       : occupied(at(cr + 1, cc).lanes[south_in], 0);
  return y;
}

/// Exact simulator of the centre intersection; its boundary is driven by the
/// supplied influence sources instead of neighbouring intersections.
class GtcLocalSimulator {
 public:
  using LocalState = GtcLocalState;

  explicit GtcLocalSimulator(GtcConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const GtcConfig& config() const { return cfg_; }
  int action_count() const { return 2; }
  int observation_count() const { return 16; }
  SourceSpec source_spec() const { return gtc_source_spec(); }
  int input_width() const { return 2 + 4 * cfg_.lane_len + 1; }

  /// One-hot action, then the four lanes' grid bits, then the light.
  void encode(ActionId a, const LocalState& x, std::span<double> out) const {
    out[0] = a == 0 ? 1.0 : 0.0;
    out[1] = a == 0 ? 0.0 : 1.0;
    std::size_t k = 2;
    for (Lane lane : x.lanes)
      for (int g = 0; g < cfg_.lane_len; ++g) out[k++] = occupied(lane, g) ? 1.0 : 0.0;
    out[k] = x.light == Light::ns_green ? 1.0 : 0.0;
  }

  std::pair<LocalState, SourceValue> sample_initial(RngStream& rng) const {
    const GtcGlobalState s = gtc_sample_initial(cfg_, rng);
    const auto& center = s.grid[static_cast<std::size_t>(cfg_.center_row() * cfg_.cols +
                                                         cfg_.center_col())];
    return {center, gtc_initial_sources(cfg_, s, rng).pack()};
  }

  LocalStep<LocalState> step(LocalState x, SourceValue packed, ActionId a,
                             RngStream& /*rng*/) const {
    const int len = cfg_.lane_len;
    const GtcInfluenceSource y = GtcInfluenceSource::unpack(packed);
    const bool west_border = cfg_.center_col() == 0;
    const bool south_border = cfg_.center_row() == 0;

    x.light = a == 0 ? Light::ew_green : Light::ns_green;
    if (!y.blocked_east) x.lanes[east_out] &= ~head_bit(len);
    if (!y.blocked_north) x.lanes[north_out] &= ~head_bit(len);
    if (!west_border && y.arrive_west) x.lanes[west_in] |= Lane{1};
    if (!south_border && y.arrive_south) x.lanes[south_in] |= Lane{1};

    advance_intersection(x, len);

    if (west_border && y.arrive_west) x.lanes[west_in] |= Lane{1};
    if (south_border && y.arrive_south) x.lanes[south_in] |= Lane{1};

    return {x, observe_intersection(x, len), intersection_reward(x)};
  }

 private:
  GtcConfig cfg_;
};

}  // namespace iaop::gtc
