#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iaop/core.hpp"
#include "iaop/rnn.hpp"
#include "iaop/source.hpp"

namespace iaop {

/// One episode: inputs are (a_{t-1}, x_t) encodings and targets the realised
/// source values, for t = 1..H-1. Both are stored flat, row-major per step.
struct EpisodeRecord {
  std::vector<double> inputs;  ///< seq_len × input_width
  std::vector<int> targets;    ///< seq_len × heads
};

struct InfluenceDataset {
  int input_width = 0;
  int seq_len = 0;
  SourceSpec source_spec;
  std::vector<EpisodeRecord> episodes;

  /// The first 80% of episodes train; the rest validate.
  std::size_t train_size() const { return episodes.size() * 4 / 5; }

  void validate() const {
    const std::size_t in = static_cast<std::size_t>(seq_len) * input_width;
    const std::size_t out = static_cast<std::size_t>(seq_len) * source_spec.size();
    for (const auto& e : episodes) {
      if (e.inputs.size() != in || e.targets.size() != out)
        throw ConfigError("dataset episode does not match the header shape");
      for (std::size_t k = 0; k < e.targets.size(); ++k) {
        const int v = e.targets[k];
        if (v < 0 || v >= source_spec.heads[k % source_spec.size()].arity)
          throw ConfigError("dataset target outside the source alphabet");
      }
    }
  }
};

/// Uniform random exploration, the data-collection policy used throughout.
struct UniformPolicy {
  int action_count = 2;
  ActionId operator()(int /*t*/, RngStream& rng) const {
    return static_cast<ActionId>(rng.below(static_cast<std::uint32_t>(action_count)));
  }
};

/// Rolls out `n_episodes` episodes of `horizon` steps in the global simulator
/// and records local inputs with the source values realised at each step.
template <SourceExtractingSimulator Global, class Local, class Policy>
InfluenceDataset collect_dataset(const Global& global, const Local& local, const Policy& policy,
                                 int n_episodes, int horizon, const RngStream& rng) {
  if (horizon < 2) throw ConfigError("horizon must be at least 2 to form sequences");
  if (n_episodes < 0) throw ConfigError("episode count must be non-negative");
  InfluenceDataset ds;
  ds.input_width = local.input_width();
  ds.seq_len = horizon - 1;
  ds.source_spec = local.source_spec();
  ds.episodes.reserve(static_cast<std::size_t>(n_episodes));
  const std::size_t width = static_cast<std::size_t>(ds.input_width);
  for (int e = 0; e < n_episodes; ++e) {
    RngStream er = rng.fork(static_cast<std::uint64_t>(e));
    RngStream policy_rng = er.fork(1);
    RngStream sim_rng = er.fork(2);
    EpisodeRecord rec;
    rec.inputs.reserve(static_cast<std::size_t>(ds.seq_len) * width);
    auto state = global.sample_initial(sim_rng);
    for (int t = 0; t < horizon; ++t) {
      const ActionId a = policy(t, policy_rng);
      auto [res, y] = global.step_with_sources(std::move(state), a, sim_rng);
      if (t >= 1) {
        for (int v : ds.source_spec.split(y)) rec.targets.push_back(v);
      }
      state = std::move(res.next_state);
      if (t + 1 < horizon) {
        const auto x = global.local_of(state);
        const std::size_t at = rec.inputs.size();
        rec.inputs.resize(at + width);
        local.encode(a, x, std::span<double>(rec.inputs.data() + at, width));
      }
    }
    ds.episodes.push_back(std::move(rec));
  }
  return ds;
}

struct TrainConfig {
  enum class Optimizer { sgd, adam };

  CellKind cell_kind = CellKind::gru;
  int hidden_width = 8;
  double learning_rate = 0.0005;
  int batch_size = 128;
  int epochs = 8000;
  double weight_decay = 0.0;
  Optimizer optimizer = Optimizer::sgd;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
    if (grad_clip_norm < 0) throw ConfigError("grad_clip_norm must be non-negative");
  }
};

inline std::string to_string(TrainConfig::Optimizer o) {
  return o == TrainConfig::Optimizer::sgd ? "sgd" : "adam";
}

inline TrainConfig::Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return TrainConfig::Optimizer::sgd;
  if (s == "adam") return TrainConfig::Optimizer::adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

/// Per-epoch mean cross-entropy, in nats per target variable.
struct LearningCurve {
  std::vector<double> train_ce;
  std::vector<double> val_ce;
  int best_epoch = 0;
};

struct TrainResult {
  RnnPredictor predictor;
  LearningCurve curve;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean cross-entropy per target variable over episodes [first, last).
inline double mean_cross_entropy(const RnnPredictor& model, const InfluenceDataset& ds,
                                 std::size_t first, std::size_t last) {
  if (last <= first) return 0.0;
  double total = 0.0;
  for (std::size_t i = first; i < last; ++i)
    total += model.sequence_loss(ds.episodes[i].inputs, ds.episodes[i].targets, {});
  const double count = static_cast<double>(last - first) * ds.seq_len * ds.source_spec.size();
  return total / count;
}

/// Mini-batch training by full backpropagation through time. Returns the
/// parameters from the epoch with the lowest validation cross-entropy.
inline TrainResult train(const InfluenceDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  const std::size_t n_train = ds.train_size();
  const std::size_t n_total = ds.episodes.size();
  if (n_train == 0 || n_train == n_total)
    throw TrainingError("dataset too small: need non-empty train and validation splits (have " +
                        std::to_string(n_total) + " episodes)");

  RngStream rng(cfg.seed);
  RngStream init_rng = rng.fork(0);
  RngStream shuffle_rng = rng.fork(1);
  RnnPredictor model(cfg.cell_kind, ds.input_width, cfg.hidden_width, ds.source_spec);
  model.init_uniform(init_rng);

  auto params = model.params();
  const std::size_t n_params = params.size();
  std::vector<double> grad(n_params), m(n_params, 0.0), v(n_params, 0.0);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double per_sequence = static_cast<double>(ds.seq_len) * ds.source_spec.size();

  TrainResult result{model, {}};
  double best_val = std::numeric_limits<double>::infinity();
  long step = 0;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n_train; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(static_cast<std::uint32_t>(i))]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_train;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n_train, start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& ep = ds.episodes[order[k]];
        batch_loss += model.sequence_loss(ep.inputs, ep.targets, grad);
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch starting at " << start;
        throw TrainingError(msg.str());
      }
      epoch_loss += batch_loss;
      const double scale = 1.0 / (static_cast<double>(stop - start) * per_sequence);
      double norm2 = 0.0;
      for (std::size_t i = 0; i < n_params; ++i) {
        grad[i] = grad[i] * scale + cfg.weight_decay * params[i];
        norm2 += grad[i] * grad[i];
      }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) throw TrainingError("non-finite gradient at epoch " +
                                                    std::to_string(epoch));
      if (cfg.grad_clip_norm > 0 && norm > cfg.grad_clip_norm) {
        const double shrink = cfg.grad_clip_norm / norm;
        for (auto& g : grad) g *= shrink;
      }
      ++step;
      if (cfg.optimizer == TrainConfig::Optimizer::sgd) {
        for (std::size_t i = 0; i < n_params; ++i) params[i] -= cfg.learning_rate * grad[i];
      } else {
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
        for (std::size_t i = 0; i < n_params; ++i) {
          m[i] = kBeta1 * m[i] + (1 - kBeta1) * grad[i];
          v[i] = kBeta2 * v[i] + (1 - kBeta2) * grad[i] * grad[i];
          params[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
        }
      }
    }
    const double train_ce = epoch_loss / (static_cast<double>(n_train) * per_sequence);
    const double val_ce = mean_cross_entropy(model, ds, n_train, n_total);
    if (!std::isfinite(val_ce))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.curve.train_ce.push_back(train_ce);
    result.curve.val_ce.push_back(val_ce);
    if (val_ce < best_val) {
      best_val = val_ce;
      result.curve.best_epoch = epoch;
      result.predictor = model;
    }
  }
  return result;
}

/// Joint distribution over source values implied by independent per-head
/// distributions (mixed radix, head 0 least significant).
inline std::vector<double> joint_from_heads(const SourceSpec& spec,
                                            const std::vector<std::vector<double>>& heads) {
  std::vector<double> joint(spec.joint_size(), 0.0);
  for (std::size_t j = 0; j < joint.size(); ++j) {
    double p = 1.0;
    const auto values = spec.split(static_cast<SourceValue>(j));
    for (std::size_t h = 0; h < values.size(); ++h) p *= heads[h][static_cast<std::size_t>(values[h])];
    joint[j] = p;
  }
  return joint;
}

/// Runs the predictor from a zero hidden state over an encoded history and
/// returns the per-head distributions after the last input.
inline std::vector<std::vector<double>> predict_after(const RnnPredictor& model,
                                                     std::span<const double> inputs) {
  const auto width = static_cast<std::size_t>(model.input_width());
  std::vector<double> z(static_cast<std::size_t>(model.hidden_width()), 0.0);
  std::vector<std::vector<double>> probs;
  for (std::size_t at = 0; at + width <= inputs.size(); at += width) {
    auto out = model.forward(z, inputs.subspan(at, width));
    z = std::move(out.hidden);
    probs = std::move(out.probs);
  }
  return probs;
}

}  // namespace iaop
