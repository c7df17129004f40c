#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "iaop/core.hpp"
#include "iaop/source.hpp"

namespace iaop {

enum class CellKind { gru, elman };

inline std::string to_string(CellKind kind) { return kind == CellKind::gru ? "gru" : "elman"; }

inline CellKind cell_kind_from_string(const std::string& s) {
  if (s == "gru") return CellKind::gru;
  if (s == "elman" || s == "rnn") return CellKind::elman;
  throw ConfigError("unknown cell kind '" + s + "'");
}

/// A named row-major matrix (or vector, cols == 1) inside the flat parameter array.
struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

namespace detail {

inline double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

/// log(1 + e^v) without overflow.
inline double softplus(double v) {
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

/// out += M·v for a rows×cols row-major M.
inline void gemv_add(const double* m, int rows, int cols, const double* v, double* out) {
  for (int i = 0; i < rows; ++i) {
    const double* row = m + static_cast<std::ptrdiff_t>(i) * cols;
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * v[j];
    out[i] += acc;
  }
}

/// out += Mᵀ·v.
inline void gemv_t_add(const double* m, int rows, int cols, const double* v, double* out) {
  for (int i = 0; i < rows; ++i) {
    const double* row = m + static_cast<std::ptrdiff_t>(i) * cols;
    const double vi = v[i];
    for (int j = 0; j < cols; ++j) out[j] += row[j] * vi;
  }
}

/// G += a·bᵀ.
inline void outer_add(double* g, int rows, int cols, const double* a, const double* b) {
  for (int i = 0; i < rows; ++i) {
    double* row = g + static_cast<std::ptrdiff_t>(i) * cols;
    const double ai = a[i];
    for (int j = 0; j < cols; ++j) row[j] += ai * b[j];
  }
}

}  // namespace detail

/// Recurrent classifier over influence sources: a GRU or Elman cell followed
/// by one independent output head per source variable.
class RnnPredictor {
 public:
  static constexpr int kMaxHidden = 32;
  static constexpr int kMaxLogits = 64;
  using Hidden = std::array<double, kMaxHidden>;

  struct Output {
    std::vector<double> hidden;
    std::vector<std::vector<double>> probs;  ///< per head, a distribution over its alphabet
  };

  RnnPredictor() = default;

  RnnPredictor(CellKind kind, int input_width, int hidden_width, SourceSpec heads)
      : kind_(kind), input_(input_width), hidden_(hidden_width), heads_(std::move(heads)) {
    if (input_width < 1) throw ConfigError("input width must be positive");
    if (hidden_width < 1 || hidden_width > kMaxHidden)
      throw ConfigError("hidden width must lie in [1, " + std::to_string(kMaxHidden) + "]");
    if (heads_.size() == 0) throw ConfigError("predictor needs at least one head");
    heads_.validate();
    if (heads_.total_logits() > kMaxLogits) throw ConfigError("too many output logits");
    const int h = hidden_, in = input_, k = heads_.total_logits();
    if (kind_ == CellKind::gru) {
      for (const char* gate : {"r", "u", "h"}) {
        add_block(std::string("W_") + gate, h, in);
        add_block(std::string("U_") + gate, h, h);
        add_block(std::string("b_") + gate, h, 1);
      }
    } else {
      add_block("W", h, in);
      add_block("U", h, h);
      add_block("b", h, 1);
    }
    add_block("W_o", k, h);
    add_block("b_o", k, 1);
    params_.assign(total_, 0.0);
  }

  CellKind cell_kind() const { return kind_; }
  int input_width() const { return input_; }
  int hidden_width() const { return hidden_; }
  const SourceSpec& source_spec() const { return heads_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  const ParamBlock& block(const std::string& name) const {
    for (const auto& b : blocks_)
      if (b.name == name) return b;
    throw std::out_of_range("no parameter block '" + name + "'");
  }

  /// Uniform in ±1/√fan_in, where fan_in is the column count of the block's matrix
  /// (biases use the fan-in of their layer).
  void init_uniform(RngStream& rng) {
    for (const auto& b : blocks_) {
      int fan_in = b.cols;
      if (b.cols == 1) fan_in = b.name == "b_o" ? hidden_ : input_ + hidden_;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < b.size(); ++i)
        params_[b.offset + i] = (2.0 * rng.uniform() - 1.0) * bound;
    }
  }

  Hidden initial_hidden() const { return Hidden{}; }

  /// One cell update: z_next ← cell(z, in). z and z_next may not alias.
  void cell(const double* z, const double* in, double* z_next) const {
    const int h = hidden_;
    if (kind_ == CellKind::elman) {
      const double* w = params_.data() + blocks_[0].offset;
      const double* u = params_.data() + blocks_[1].offset;
      const double* b = params_.data() + blocks_[2].offset;
      std::copy(b, b + h, z_next);
      detail::gemv_add(w, h, input_, in, z_next);
      detail::gemv_add(u, h, h, z, z_next);
      for (int i = 0; i < h; ++i) z_next[i] = std::tanh(z_next[i]);
      return;
    }
    std::array<double, kMaxHidden> r{}, upd{}, rz{};
    gate(0, z, in, r.data());
    gate(1, z, in, upd.data());
    for (int i = 0; i < h; ++i) {
      r[i] = detail::sigmoid(r[i]);
      upd[i] = detail::sigmoid(upd[i]);
      rz[i] = r[i] * z[i];
    }
    const double* w = params_.data() + blocks_[6].offset;
    const double* u = params_.data() + blocks_[7].offset;
    const double* b = params_.data() + blocks_[8].offset;
    std::copy(b, b + h, z_next);
    detail::gemv_add(w, h, input_, in, z_next);
    detail::gemv_add(u, h, h, rz.data(), z_next);
    for (int i = 0; i < h; ++i) {
      const double cand = std::tanh(z_next[i]);
      z_next[i] = upd[i] * z[i] + (1.0 - upd[i]) * cand;
    }
  }

  void logits(const double* z, double* out) const {
    const auto& wo = blocks_[blocks_.size() - 2];
    const auto& bo = blocks_.back();
    const int k = heads_.total_logits();
    std::copy(params_.data() + bo.offset, params_.data() + bo.offset + k, out);
    detail::gemv_add(params_.data() + wo.offset, k, hidden_, z, out);
  }

  /// Per-head distributions given the post-update hidden state.
  std::vector<std::vector<double>> distributions(std::span<const double> z) const {
    std::vector<double> l(static_cast<std::size_t>(heads_.total_logits()));
    logits(z.data(), l.data());
    std::vector<std::vector<double>> probs;
    std::size_t k = 0;
    for (const auto& head : heads_.heads) {
      if (head.kind == HeadSpec::Kind::bernoulli) {
        const double p1 = detail::sigmoid(l[k++]);
        probs.push_back({1.0 - p1, p1});
      } else {
        std::vector<double> p(l.begin() + static_cast<std::ptrdiff_t>(k),
                              l.begin() + static_cast<std::ptrdiff_t>(k) + head.arity);
        k += static_cast<std::size_t>(head.arity);
        const double mx = *std::max_element(p.begin(), p.end());
        double total = 0.0;
        for (auto& v : p) total += (v = std::exp(v - mx));
        for (auto& v : p) v /= total;
        probs.push_back(std::move(p));
      }
    }
    return probs;
  }

  Output forward(std::span<const double> z, std::span<const double> input) const {
    if (static_cast<int>(z.size()) != hidden_)
      throw std::invalid_argument("hidden vector has width " + std::to_string(z.size()) +
                                  ", expected " + std::to_string(hidden_));
    if (static_cast<int>(input.size()) != input_)
      throw std::invalid_argument("input vector has width " + std::to_string(input.size()) +
                                  ", expected " + std::to_string(input_));
    Output out;
    out.hidden.resize(static_cast<std::size_t>(hidden_));
    cell(z.data(), input.data(), out.hidden.data());
    out.probs = distributions(out.hidden);
    return out;
  }

  /// Advances the hidden state on `input` and samples one source value.
  SourceValue advance(Hidden& z, std::span<const double> input, RngStream& rng) const {
    Hidden next;
    cell(z.data(), input.data(), next.data());
    z = next;
    std::array<double, kMaxLogits> l{};
    logits(z.data(), l.data());
    SourceValue joint = 0;
    SourceValue radix = 1;
    std::size_t k = 0;
    for (const auto& head : heads_.heads) {
      int v = 0;
      if (head.kind == HeadSpec::Kind::bernoulli) {
        v = rng.uniform() < detail::sigmoid(l[k++]) ? 1 : 0;
      } else {
        double mx = l[k];
        for (int j = 1; j < head.arity; ++j) mx = std::max(mx, l[k + j]);
        double total = 0.0;
        for (int j = 0; j < head.arity; ++j) total += std::exp(l[k + j] - mx);
        double draw = rng.uniform() * total;
        v = head.arity - 1;
        for (int j = 0; j < head.arity; ++j) {
          draw -= std::exp(l[k + j] - mx);
          if (draw < 0) {
            v = j;
            break;
          }
        }
        k += static_cast<std::size_t>(head.arity);
      }
      joint += static_cast<SourceValue>(v) * radix;
      radix *= static_cast<SourceValue>(head.arity);
    }
    return joint;
  }

  /// Summed cross-entropy (nats) of a sequence; adds d(loss)/d(params) into grad
  /// when grad is non-empty. inputs is steps×input_width, targets steps×heads.
  double sequence_loss(std::span<const double> inputs, std::span<const int> targets,
                       std::span<double> grad) const {
    const int h = hidden_;
    const int k = heads_.total_logits();
    const std::size_t n_heads = heads_.size();
    const auto steps = static_cast<int>(targets.size() / n_heads);
    if (targets.size() != static_cast<std::size_t>(steps) * n_heads ||
        inputs.size() != static_cast<std::size_t>(steps) * static_cast<std::size_t>(input_))
      throw std::invalid_argument("sequence shape does not match the predictor");
    const bool want_grad = !grad.empty();
    if (want_grad && grad.size() != params_.size())
      throw std::invalid_argument("gradient buffer has the wrong size");

    const auto H = static_cast<std::size_t>(h);
    const auto T = static_cast<std::size_t>(steps);
    // zs[t] is the hidden state after step t; zs[-1] is zero (stored at index 0).
    std::vector<double> zs((T + 1) * H, 0.0);
    std::vector<double> rs, us, cands;
    if (kind_ == CellKind::gru) {
      rs.assign(T * H, 0.0);
      us.assign(T * H, 0.0);
      cands.assign(T * H, 0.0);
    }
    std::vector<double> dlogits(T * static_cast<std::size_t>(k), 0.0);
    std::vector<double> l(static_cast<std::size_t>(k));
    double loss = 0.0;

    for (std::size_t t = 0; t < T; ++t) {
      const double* in = inputs.data() + t * static_cast<std::size_t>(input_);
      const double* z = zs.data() + t * H;
      double* zn = zs.data() + (t + 1) * H;
      if (kind_ == CellKind::gru) {
        gru_forward_cached(z, in, zn, rs.data() + t * H, us.data() + t * H, cands.data() + t * H);
      } else {
        cell(z, in, zn);
      }
      logits(zn, l.data());
      double* dl = dlogits.data() + t * static_cast<std::size_t>(k);
      std::size_t off = 0;
      for (std::size_t j = 0; j < n_heads; ++j) {
        const auto& head = heads_.heads[j];
        const int y = targets[t * n_heads + j];
        if (head.kind == HeadSpec::Kind::bernoulli) {
          loss += detail::softplus(l[off]) - y * l[off];
          dl[off] = detail::sigmoid(l[off]) - y;
          off += 1;
        } else {
          double mx = l[off];
          for (int c = 1; c < head.arity; ++c) mx = std::max(mx, l[off + c]);
          double total = 0.0;
          for (int c = 0; c < head.arity; ++c) total += std::exp(l[off + c] - mx);
          loss += mx + std::log(total) - l[off + y];
          for (int c = 0; c < head.arity; ++c)
            dl[off + c] = std::exp(l[off + c] - mx) / total - (c == y ? 1.0 : 0.0);
          off += static_cast<std::size_t>(head.arity);
        }
      }
    }
    if (!want_grad) return loss;

    const auto& wo = blocks_[blocks_.size() - 2];
    const auto& bo = blocks_.back();
    std::vector<double> dz(H, 0.0), dz_prev(H, 0.0);
    std::array<double, kMaxHidden> da_r{}, da_u{}, da_h{}, drz{}, rz{};
    for (std::size_t t = T; t-- > 0;) {
      const double* in = inputs.data() + t * static_cast<std::size_t>(input_);
      const double* z = zs.data() + t * H;
      const double* zn = zs.data() + (t + 1) * H;
      const double* dl = dlogits.data() + t * static_cast<std::size_t>(k);
      detail::outer_add(grad.data() + wo.offset, k, h, dl, zn);
      for (int c = 0; c < k; ++c) grad[bo.offset + static_cast<std::size_t>(c)] += dl[c];
      detail::gemv_t_add(params_.data() + wo.offset, k, h, dl, dz.data());

      std::fill(dz_prev.begin(), dz_prev.end(), 0.0);
      if (kind_ == CellKind::elman) {
        for (int i = 0; i < h; ++i) da_h[i] = dz[i] * (1.0 - zn[i] * zn[i]);
        detail::outer_add(grad.data() + blocks_[0].offset, h, input_, da_h.data(), in);
        detail::outer_add(grad.data() + blocks_[1].offset, h, h, da_h.data(), z);
        for (int i = 0; i < h; ++i) grad[blocks_[2].offset + i] += da_h[i];
        detail::gemv_t_add(params_.data() + blocks_[1].offset, h, h, da_h.data(), dz_prev.data());
      } else {
        const double* r = rs.data() + t * H;
        const double* u = us.data() + t * H;
        const double* cand = cands.data() + t * H;
        for (int i = 0; i < h; ++i) {
          da_u[i] = dz[i] * (z[i] - cand[i]) * u[i] * (1.0 - u[i]);
          da_h[i] = dz[i] * (1.0 - u[i]) * (1.0 - cand[i] * cand[i]);
          dz_prev[i] += dz[i] * u[i];
          rz[i] = r[i] * z[i];
          drz[i] = 0.0;
        }
        detail::outer_add(grad.data() + blocks_[6].offset, h, input_, da_h.data(), in);
        detail::outer_add(grad.data() + blocks_[7].offset, h, h, da_h.data(), rz.data());
        for (int i = 0; i < h; ++i) grad[blocks_[8].offset + i] += da_h[i];
        detail::gemv_t_add(params_.data() + blocks_[7].offset, h, h, da_h.data(), drz.data());
        for (int i = 0; i < h; ++i) {
          da_r[i] = drz[i] * z[i] * r[i] * (1.0 - r[i]);
          dz_prev[i] += drz[i] * r[i];
        }
        detail::outer_add(grad.data() + blocks_[0].offset, h, input_, da_r.data(), in);
        detail::outer_add(grad.data() + blocks_[1].offset, h, h, da_r.data(), z);
        for (int i = 0; i < h; ++i) grad[blocks_[2].offset + i] += da_r[i];
        detail::outer_add(grad.data() + blocks_[3].offset, h, input_, da_u.data(), in);
        detail::outer_add(grad.data() + blocks_[4].offset, h, h, da_u.data(), z);
        for (int i = 0; i < h; ++i) grad[blocks_[5].offset + i] += da_u[i];
        detail::gemv_t_add(params_.data() + blocks_[1].offset, h, h, da_r.data(), dz_prev.data());
        detail::gemv_t_add(params_.data() + blocks_[4].offset, h, h, da_u.data(), dz_prev.data());
      }
      std::swap(dz, dz_prev);
    }
    return loss;
  }

 private:
  void add_block(std::string name, int rows, int cols) {
    blocks_.push_back(ParamBlock{std::move(name), rows, cols, total_});
    total_ += static_cast<std::size_t>(rows) * cols;
  }

  /// Pre-activation of GRU gate g (0 = reset, 1 = update) into out.
  void gate(int g, const double* z, const double* in, double* out) const {
    const auto base = static_cast<std::size_t>(3 * g);
    const double* w = params_.data() + blocks_[base].offset;
    const double* u = params_.data() + blocks_[base + 1].offset;
    const double* b = params_.data() + blocks_[base + 2].offset;
    std::copy(b, b + hidden_, out);
    detail::gemv_add(w, hidden_, input_, in, out);
    detail::gemv_add(u, hidden_, hidden_, z, out);
  }

  void gru_forward_cached(const double* z, const double* in, double* zn, double* r, double* u,
                          double* cand) const {
    const int h = hidden_;
    gate(0, z, in, r);
    gate(1, z, in, u);
    std::array<double, kMaxHidden> rz{};
    for (int i = 0; i < h; ++i) {
      r[i] = detail::sigmoid(r[i]);
      u[i] = detail::sigmoid(u[i]);
      rz[i] = r[i] * z[i];
    }
    const double* w = params_.data() + blocks_[6].offset;
    const double* uh = params_.data() + blocks_[7].offset;
    const double* b = params_.data() + blocks_[8].offset;
    std::copy(b, b + h, cand);
    detail::gemv_add(w, h, input_, in, cand);
    detail::gemv_add(uh, h, h, rz.data(), cand);
    for (int i = 0; i < h; ++i) {
      cand[i] = std::tanh(cand[i]);
      zn[i] = u[i] * z[i] + (1.0 - u[i]) * cand[i];
    }
  }

  CellKind kind_ = CellKind::gru;
  int input_ = 0;
  int hidden_ = 0;
  SourceSpec heads_;
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
  std::vector<double> params_;
};

/// Ignores its inputs; every head is uniform over its alphabet.
class UniformPredictor {
 public:
  struct Hidden {
    friend bool operator==(const Hidden&, const Hidden&) = default;
  };

  UniformPredictor() = default;
  explicit UniformPredictor(SourceSpec spec) : spec_(std::move(spec)) {}

  const SourceSpec& source_spec() const { return spec_; }
  Hidden initial_hidden() const { return {}; }

  std::vector<std::vector<double>> distributions() const {
    std::vector<std::vector<double>> out;
    for (const auto& h : spec_.heads)
      out.emplace_back(static_cast<std::size_t>(h.arity), 1.0 / h.arity);
    return out;
  }

  SourceValue advance(Hidden&, std::span<const double>, RngStream& rng) const {
    SourceValue joint = 0;
    SourceValue radix = 1;
    for (const auto& h : spec_.heads) {
      joint += rng.below(static_cast<std::uint32_t>(h.arity)) * radix;
      radix *= static_cast<SourceValue>(h.arity);
    }
    return joint;
  }

 private:
  SourceSpec spec_;
};

template <class P>
concept InfluencePredictor = requires(const P& p, typename P::Hidden& z,
                                      std::span<const double> in, RngStream& rng) {
  { p.initial_hidden() } -> std::same_as<typename P::Hidden>;
  { p.advance(z, in, rng) } -> std::same_as<SourceValue>;
};

}  // namespace iaop
