#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "iaop/core.hpp"

namespace iaop {

/// One influence-source variable as seen by a predictor output head.
struct HeadSpec {
  enum class Kind { bernoulli, softmax };
  Kind kind = Kind::bernoulli;
  int arity = 2;

  /// Number of logits this head produces.
  int logits() const { return kind == Kind::bernoulli ? 1 : arity; }

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

inline std::string to_string(HeadSpec::Kind kind) {
  return kind == HeadSpec::Kind::bernoulli ? "bernoulli" : "softmax";
}

inline HeadSpec::Kind head_kind_from_string(const std::string& s) {
  if (s == "bernoulli") return HeadSpec::Kind::bernoulli;
  if (s == "softmax") return HeadSpec::Kind::softmax;
  throw ConfigError("unknown head kind '" + s + "'");
}

/// The source alphabet: a product of per-variable alphabets. A SourceValue is
/// the mixed-radix index with head 0 as the least significant digit, so all-binary
/// sources pack as little-endian bits.
struct SourceSpec {
  std::vector<HeadSpec> heads;

  static SourceSpec binary(std::size_t n) {
    return SourceSpec{std::vector<HeadSpec>(n, HeadSpec{HeadSpec::Kind::bernoulli, 2})};
  }

  std::size_t size() const { return heads.size(); }

  std::size_t joint_size() const {
    std::size_t n = 1;
    for (const auto& h : heads) n *= static_cast<std::size_t>(h.arity);
    return n;
  }

  int total_logits() const {
    int n = 0;
    for (const auto& h : heads) n += h.logits();
    return n;
  }

  int value(SourceValue joint, std::size_t head) const {
    for (std::size_t i = 0; i < head; ++i) joint /= static_cast<SourceValue>(heads[i].arity);
    return static_cast<int>(joint % static_cast<SourceValue>(heads[head].arity));
  }

  SourceValue join(const std::vector<int>& values) const {
    if (values.size() != heads.size()) throw std::invalid_argument("source arity mismatch");
    SourceValue joint = 0;
    SourceValue radix = 1;
    for (std::size_t i = 0; i < heads.size(); ++i) {
      if (values[i] < 0 || values[i] >= heads[i].arity)
        throw std::invalid_argument("source value outside its alphabet");
      joint += static_cast<SourceValue>(values[i]) * radix;
      radix *= static_cast<SourceValue>(heads[i].arity);
    }
    return joint;
  }

  std::vector<int> split(SourceValue joint) const {
    std::vector<int> values(heads.size());
    for (std::size_t i = 0; i < heads.size(); ++i) {
      values[i] = static_cast<int>(joint % static_cast<SourceValue>(heads[i].arity));
      joint /= static_cast<SourceValue>(heads[i].arity);
    }
    return values;
  }

  void validate() const {
    for (const auto& h : heads) {
      if (h.arity < 2) throw ConfigError("source head arity must be at least 2");
      if (h.kind == HeadSpec::Kind::bernoulli && h.arity != 2)
        throw ConfigError("bernoulli heads are binary");
    }
  }

  friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

}  // namespace iaop
