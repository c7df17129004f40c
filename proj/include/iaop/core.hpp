#pragma once

#include <chrono>
#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

namespace iaop {

/// Index into a domain's action set.
using ActionId = int;
/// Index into a domain's observation set (domains pack structured bits little-endian).
using ObservationId = int;
/// Joint value of all influence-source variables, mixed radix over the heads.
using SourceValue = std::uint32_t;

template <class State>
struct StepResult {
  State next_state;
  ObservationId observation = 0;
  double reward = 0.0;
};

/// Outcome of a local-simulator transition (the state is carried separately).
template <class LocalState>
struct LocalStep {
  LocalState next;
  ObservationId observation = 0;
  double reward = 0.0;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based stream: draw k is mix64(seed + (k+1)·golden), i.e. SplitMix64
/// addressed by position. Copying a stream copies its position.
class RngStream {
 public:
  constexpr RngStream() = default;
  constexpr explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  constexpr std::uint64_t seed() const { return seed_; }
  constexpr std::uint64_t counter() const { return counter_; }

  constexpr std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(seed_ + counter_ * detail::kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n); n > 0. Lemire's multiply-shift with rejection.
  std::uint32_t below(std::uint32_t n) {
    std::uint64_t m = static_cast<std::uint64_t>(static_cast<std::uint32_t>(next_u64() >> 32)) * n;
    auto low = static_cast<std::uint32_t>(m);
    if (low < n) {
      const std::uint32_t threshold = static_cast<std::uint32_t>(-n) % n;
      while (low < threshold) {
        m = static_cast<std::uint64_t>(static_cast<std::uint32_t>(next_u64() >> 32)) * n;
        low = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  /// Child stream that depends only on (seed, child_index), never on the position.
  constexpr RngStream fork(std::uint64_t child_index) const {
    return RngStream(detail::mix64(detail::mix64(seed_ ^ 0x5851F42D4C957F2Dull) +
                                   (child_index + 1) * detail::kGolden));
  }

  /// Child stream seeded from the next draw; advances this stream by one.
  RngStream split() { return RngStream(detail::mix64(next_u64() ^ 0xD1B54A32D192ED03ull)); }

  friend constexpr bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

inline RngStream rng_fork(const RngStream& parent, std::uint64_t child_index) {
  return parent.fork(child_index);
}

/// Σ_k γ^k · rewards[k].
inline double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

struct SimulatorBudget {
  enum class Kind { simulation_count, wall_clock_seconds };
  Kind kind = Kind::simulation_count;
  double amount = 1000.0;

  static SimulatorBudget simulations(long n) {
    return make(Kind::simulation_count, static_cast<double>(n));
  }
  static SimulatorBudget seconds(double s) { return make(Kind::wall_clock_seconds, s); }

  static SimulatorBudget make(Kind kind, double amount) {
    if (!(amount > 0.0)) throw ConfigError("simulator budget must be positive");
    return SimulatorBudget{kind, amount};
  }
};

inline std::string to_string(SimulatorBudget::Kind kind) {
  return kind == SimulatorBudget::Kind::simulation_count ? "simulation_count"
                                                         : "wall_clock_seconds";
}

inline SimulatorBudget::Kind budget_kind_from_string(const std::string& s) {
  if (s == "simulation_count" || s == "simulations") return SimulatorBudget::Kind::simulation_count;
  if (s == "wall_clock_seconds" || s == "seconds") return SimulatorBudget::Kind::wall_clock_seconds;
  throw ConfigError("unknown budget kind '" + s + "'");
}

/// Generative model usable by the planner: initial-state sampling and
/// transition sampling. States are values; copying a state clones it.
template <class S>
concept GenerativeSimulator =
    std::copyable<typename S::State> &&
    requires(const S& sim, typename S::State state, ActionId a, RngStream& rng) {
      { sim.sample_initial(rng) } -> std::same_as<typename S::State>;
      { sim.step(std::move(state), a, rng) } -> std::same_as<StepResult<typename S::State>>;
      { sim.action_count() } -> std::convertible_to<int>;
    };

/// A global simulator that can also report the influence-source value realised
/// during a transition and project its state onto the local variables.
template <class S>
concept SourceExtractingSimulator =
    GenerativeSimulator<S> &&
    requires(const S& sim, typename S::State state, ActionId a, RngStream& rng) {
      typename S::LocalState;
      { sim.step_with_sources(std::move(state), a, rng) }
          -> std::same_as<std::pair<StepResult<typename S::State>, SourceValue>>;
      { sim.local_of(state) } -> std::same_as<typename S::LocalState>;
    };

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace iaop
