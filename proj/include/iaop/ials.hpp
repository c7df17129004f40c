#pragma once

#include <array>
#include <span>
#include <utility>

#include "iaop/core.hpp"
#include "iaop/rnn.hpp"

namespace iaop {

/// Influence-augmented local simulator: an exact local simulator whose boundary
/// is driven by source values sampled from an influence predictor. The state is
/// (x, y_src, z); a transition first steps the local simulator under y_src, then
/// feeds (a, x') to the predictor to obtain z' and sample the next y_src.
template <class Local, InfluencePredictor Predictor>
class IalsSimulator {
 public:
  static constexpr std::size_t kMaxInput = 128;

  struct State {
    typename Local::LocalState x{};
    SourceValue y_src = 0;
    typename Predictor::Hidden z{};

    friend bool operator==(const State&, const State&) = default;
  };

  IalsSimulator(Local local, Predictor predictor)
      : local_(std::move(local)), predictor_(std::move(predictor)) {
    if (static_cast<std::size_t>(local_.input_width()) > kMaxInput)
      throw ConfigError("local input encoding is too wide for the IALS buffer");
  }

  int action_count() const { return local_.action_count(); }
  const Local& local() const { return local_; }
  const Predictor& predictor() const { return predictor_; }

  State sample_initial(RngStream& rng) const {
    auto [x, y] = local_.sample_initial(rng);
    return State{std::move(x), y, predictor_.initial_hidden()};
  }

  StepResult<State> step(State s, ActionId a, RngStream& rng) const {
    auto next = local_.step(std::move(s.x), s.y_src, a, rng);
    std::array<double, kMaxInput> input;
    const auto width = static_cast<std::size_t>(local_.input_width());
    local_.encode(a, next.next, std::span<double>(input.data(), width));
    s.y_src = predictor_.advance(s.z, std::span<const double>(input.data(), width), rng);
    s.x = std::move(next.next);
    return StepResult<State>{std::move(s), next.observation, next.reward};
  }

 private:
  Local local_;
  Predictor predictor_;
};

}  // namespace iaop
