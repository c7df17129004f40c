#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "iaop/rnn.hpp"

using namespace iaop;

namespace {

SourceSpec mixed_spec() {
  return SourceSpec{{HeadSpec{HeadSpec::Kind::bernoulli, 2}, HeadSpec{HeadSpec::Kind::softmax, 3},
                     HeadSpec{HeadSpec::Kind::bernoulli, 2}}};
}

struct Sequence {
  std::vector<double> inputs;
  std::vector<int> targets;
};

Sequence random_sequence(const RnnPredictor& m, int steps, RngStream& rng) {
  Sequence s;
  for (int t = 0; t < steps; ++t) {
    for (int i = 0; i < m.input_width(); ++i) s.inputs.push_back(2.0 * rng.uniform() - 1.0);
    for (const auto& h : m.source_spec().heads)
      s.targets.push_back(static_cast<int>(rng.below(static_cast<std::uint32_t>(h.arity))));
  }
  return s;
}

// Loss recomputed through the public forward(): Σ_t Σ_heads −log p(target).
double forward_loss(const RnnPredictor& m, const Sequence& s) {
  std::vector<double> z(static_cast<std::size_t>(m.hidden_width()), 0.0);
  const auto w = static_cast<std::size_t>(m.input_width());
  const auto k = m.source_spec().size();
  double loss = 0;
  for (std::size_t t = 0; t * w < s.inputs.size(); ++t) {
    auto out = m.forward(z, std::span<const double>(s.inputs).subspan(t * w, w));
    for (std::size_t h = 0; h < k; ++h)
      loss -= std::log(out.probs[h][static_cast<std::size_t>(s.targets[t * k + h])]);
    z = out.hidden;
  }
  return loss;
}

// Worst relative error between BPTT and central differences over all parameters.
double gradient_error(RnnPredictor m, const Sequence& s) {
  std::vector<double> grad(m.params().size(), 0.0);
  m.sequence_loss(s.inputs, s.targets, grad);
  constexpr double eps = 1e-5;
  double worst = 0;
  auto params = m.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + eps;
    const double up = m.sequence_loss(s.inputs, s.targets, {});
    params[i] = keep - eps;
    const double down = m.sequence_loss(s.inputs, s.targets, {});
    params[i] = keep;
    const double numeric = (up - down) / (2 * eps);
    const double scale = std::max({std::abs(numeric), std::abs(grad[i]), 1e-4});
    worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST(Rnn, ZeroParametersGru) {
  RnnPredictor m(CellKind::gru, 3, 2, SourceSpec::binary(2));
  const std::vector<double> z{1.0, 1.0}, in{0.3, -2.0, 5.0};
  const auto out = m.forward(z, in);
  EXPECT_DOUBLE_EQ(out.hidden[0], 0.5);
  EXPECT_DOUBLE_EQ(out.hidden[1], 0.5);
  for (const auto& p : out.probs) {
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
  }
  RnnPredictor soft(CellKind::elman, 3, 2, mixed_spec());
  const auto o2 = soft.forward(z, in);
  EXPECT_EQ(o2.hidden, std::vector<double>({0.0, 0.0}));
  for (double v : o2.probs[1]) EXPECT_DOUBLE_EQ(v, 1.0 / 3);
}

TEST(Rnn, BlockLayout) {
  RnnPredictor gru(CellKind::gru, 5, 4, mixed_spec());
  ASSERT_EQ(gru.blocks().size(), 11u);
  EXPECT_EQ(gru.block("W_h").rows, 4);
  EXPECT_EQ(gru.block("W_h").cols, 5);
  EXPECT_EQ(gru.block("W_o").rows, 5);
  std::size_t total = 0;
  for (const auto& b : gru.blocks()) {
    EXPECT_EQ(b.offset, total);
    total += b.size();
  }
  EXPECT_EQ(total, gru.params().size());
  EXPECT_EQ(total, 3u * (4 * 5 + 4 * 4 + 4) + 5 * 4 + 5);
  RnnPredictor elman(CellKind::elman, 5, 4, mixed_spec());
  EXPECT_EQ(elman.params().size(), 4u * 5 + 4 * 4 + 4 + 5 * 4 + 5);
  EXPECT_THROW(elman.block("W_r"), std::out_of_range);
}

TEST(Rnn, InitWithinFanInBound) {
  RnnPredictor m(CellKind::gru, 6, 8, SourceSpec::binary(2));
  RngStream rng(1);
  m.init_uniform(rng);
  const auto& w = m.block("W_r");
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_LE(std::abs(m.params()[w.offset + i]), 1 / std::sqrt(6.0));
  const auto& u = m.block("U_h");
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_LE(std::abs(m.params()[u.offset + i]), 1 / std::sqrt(8.0));
}

TEST(Rnn, ShapeErrors) {
  RnnPredictor m(CellKind::gru, 3, 2, SourceSpec::binary(2));
  const std::vector<double> z{0, 0}, bad_in{0, 0};
  EXPECT_THROW(m.forward(z, bad_in), std::invalid_argument);
  EXPECT_THROW(m.forward(std::vector<double>{0}, std::vector<double>{0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(RnnPredictor(CellKind::gru, 3, 0, SourceSpec::binary(1)), ConfigError);
  EXPECT_THROW(RnnPredictor(CellKind::gru, 3, 33, SourceSpec::binary(1)), ConfigError);
}

TEST(Rnn, LossMatchesForward) {
  RngStream rng(2);
  for (CellKind kind : {CellKind::gru, CellKind::elman}) {
    RnnPredictor m(kind, 4, 3, mixed_spec());
    m.init_uniform(rng);
    const auto s = random_sequence(m, 5, rng);
    EXPECT_NEAR(m.sequence_loss(s.inputs, s.targets, {}), forward_loss(m, s), 1e-12);
  }
}

TEST(Rnn, GradientMatchesFiniteDifferences) {
  RngStream rng(3);
  for (CellKind kind : {CellKind::gru, CellKind::elman}) {
    for (int trial = 0; trial < 5; ++trial) {
      RnnPredictor m(kind, 3, 4, mixed_spec());
      m.init_uniform(rng);
      for (auto& p : m.params()) p *= 3.0;  // larger weights exercise saturation
      const auto s = random_sequence(m, 3, rng);
      EXPECT_LT(gradient_error(m, s), 1e-4) << to_string(kind) << " trial " << trial;
    }
  }
}

TEST(Rnn, GradientAccumulates) {
  RngStream rng(4);
  RnnPredictor m(CellKind::gru, 3, 2, SourceSpec::binary(2));
  m.init_uniform(rng);
  const auto s = random_sequence(m, 4, rng);
  std::vector<double> once(m.params().size(), 0.0), twice(m.params().size(), 0.0);
  m.sequence_loss(s.inputs, s.targets, once);
  m.sequence_loss(s.inputs, s.targets, twice);
  m.sequence_loss(s.inputs, s.targets, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

TEST(Rnn, AdvanceSamplesDistribution) {
  RngStream rng(5);
  RnnPredictor m(CellKind::gru, 2, 3, mixed_spec());
  m.init_uniform(rng);
  for (auto& p : m.params()) p *= 2.0;
  const std::vector<double> in{1.0, -1.0};
  RnnPredictor::Hidden z0{};
  const auto expected = m.forward(std::span<const double>(z0.data(), 3), in).probs;
  std::vector<std::vector<double>> freq = {{0, 0}, {0, 0, 0}, {0, 0}};
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    RnnPredictor::Hidden z{};
    const SourceValue v = m.advance(z, in, rng);
    for (std::size_t h = 0; h < 3; ++h) freq[h][static_cast<std::size_t>(m.source_spec().value(v, h))] += 1.0 / n;
  }
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t j = 0; j < freq[h].size(); ++j) EXPECT_NEAR(freq[h][j], expected[h][j], 0.01);
}

TEST(Rnn, SaturatedHeadIsDeterministic) {
  RnnPredictor m(CellKind::elman, 2, 2, SourceSpec::binary(2));
  auto params = m.params();
  const auto& bo = m.block("b_o");
  params[bo.offset] = 60.0;
  params[bo.offset + 1] = -60.0;
  RngStream rng(6);
  const std::vector<double> in{0.5, 0.5};
  for (int i = 0; i < 1000; ++i) {
    RnnPredictor::Hidden z{};
    ASSERT_EQ(m.advance(z, in, rng), 1u);
  }
}

TEST(UniformPredictor, InputIndependent) {
  UniformPredictor u(SourceSpec::binary(4));
  const auto d = u.distributions();
  ASSERT_EQ(d.size(), 4u);
  for (const auto& p : d) EXPECT_EQ(p, std::vector<double>({0.5, 0.5}));
  RngStream rng(7);
  std::vector<int> ones(4, 0);
  UniformPredictor::Hidden z{};
  for (int i = 0; i < 40000; ++i) {
    const SourceValue v = u.advance(z, {}, rng);
    for (int b = 0; b < 4; ++b) ones[static_cast<std::size_t>(b)] += (v >> b) & 1u;
  }
  for (int c : ones) EXPECT_NEAR(c / 40000.0, 0.5, 0.01);
}
