#include <gtest/gtest.h>

#include <bit>
#include <vector>

#include "iaop/gtc.hpp"

using namespace iaop;
using namespace iaop::gtc;

namespace {

// Lane from a rear-to-head list of bits.
Lane lane_of(std::initializer_list<int> bits) {
  Lane l = 0;
  int i = 0;
  for (int b : bits) l |= static_cast<Lane>(b != 0) << i++;
  return l;
}

int vehicles(const GtcGlobalState& s) {
  int n = 0;
  for (const auto& x : s.grid) n += x.occupancy();
  return n;
}

GtcConfig empty_config() {
  GtcConfig c;
  c.init_occupancy_prob = 0.0;
  return c;
}

}  // namespace

TEST(GtcLane, AdvanceExamples) {
  auto [full, left_full] = advance_lane(lane_of({1, 1, 1, 1, 1, 1}), 6, true);
  EXPECT_EQ(full, lane_of({0, 1, 1, 1, 1, 1}));
  EXPECT_TRUE(left_full);
  auto [mid, left_mid] = advance_lane(lane_of({0, 0, 1, 0, 0, 0}), 6, false);
  EXPECT_EQ(mid, lane_of({0, 0, 0, 1, 0, 0}));
  EXPECT_FALSE(left_mid);
  auto [blocked, left_blocked] = advance_lane(lane_of({0, 0, 0, 0, 0, 1}), 6, false);
  EXPECT_EQ(blocked, lane_of({0, 0, 0, 0, 0, 1}));
  EXPECT_FALSE(left_blocked);
  // a queue behind a blocked head stays put; gaps close one grid per step
  auto [queue, q_left] = advance_lane(lane_of({1, 0, 1, 0, 1, 1}), 6, false);
  EXPECT_EQ(queue, lane_of({0, 1, 0, 1, 1, 1}));
  EXPECT_FALSE(q_left);
}

TEST(GtcLane, ConservesVehicles) {
  for (Lane l = 0; l < (1u << 6); ++l)
    for (bool leave : {false, true}) {
      auto [next, departed] = advance_lane(l, 6, leave);
      ASSERT_EQ(std::popcount(next) + static_cast<int>(departed), std::popcount(l));
      ASSERT_LT(next, 1u << 6);
    }
}

TEST(GtcLight, PriorityRule) {
  Intersection x;
  x.lanes[west_in] = lane_of({0, 0, 0, 0, 0, 1});
  x.light = Light::ns_green;
  EXPECT_EQ(handcoded_light(x, 6), Light::ew_green);

  Intersection idle;
  idle.light = Light::ns_green;
  EXPECT_EQ(handcoded_light(idle, 6), Light::ns_green);

  Intersection both;
  both.lanes[west_in] = lane_of({0, 0, 0, 0, 0, 1});
  both.lanes[east_out] = lane_of({1, 0, 0, 0, 0, 0});
  both.lanes[south_in] = lane_of({0, 0, 0, 0, 0, 1});
  both.light = Light::ew_green;
  EXPECT_EQ(handcoded_light(both, 6), Light::ns_green);
}

TEST(GtcInitial, OccupancyProbability) {
  RngStream rng(1);
  const auto none = gtc_sample_initial(empty_config(), rng);
  EXPECT_EQ(vehicles(none), 0);
  GtcConfig all;
  all.init_occupancy_prob = 1.0;
  const auto full = gtc_sample_initial(all, rng);
  EXPECT_EQ(vehicles(full), 216);
  for (const auto& x : full.grid) EXPECT_EQ(x.light, Light::ew_green);
  GtcConfig c;
  long total = 0;
  for (int i = 0; i < 10000; ++i) total += vehicles(gtc_sample_initial(c, rng));
  EXPECT_NEAR(total / (10000.0 * 216), 0.7, 0.01);
}

TEST(GtcGlobal, EmptyAndFullRewards) {
  GtcConfig c;
  c.init_occupancy_prob = 0.0;
  c.rows = c.cols = 3;
  GtcGlobalSimulator sim(c);
  RngStream rng(2);
  auto s = sim.sample_initial(rng);
  EXPECT_EQ(observe_intersection(s.grid[sim.center_index()], 6), 0);
  EXPECT_EQ(intersection_reward(s.grid[sim.center_index()]), 0.0);
  Intersection full;
  for (auto& l : full.lanes) l = lane_of({1, 1, 1, 1, 1, 1});
  EXPECT_EQ(intersection_reward(full), -24.0);
}

TEST(GtcGlobal, SingleVehicleCrosses) {
  GtcGlobalSimulator sim(empty_config());
  RngStream rng(3);
  auto s = sim.sample_initial(rng);
  s.grid[sim.center_index()].lanes[west_in] = lane_of({0, 0, 0, 0, 0, 1});
  const auto res = sim.step(s, 0, rng);
  const auto& c = res.next_state.grid[sim.center_index()];
  EXPECT_EQ(res.observation & 1, 0);
  EXPECT_FALSE(occupied(c.lanes[west_in], 5));
  EXPECT_TRUE(occupied(c.lanes[east_out], 0));
  EXPECT_EQ(res.observation & 4, 4);
}

TEST(GtcGlobal, InvariantsOverEpisodes) {
  for (int g : {1, 2, 3}) {
    GtcConfig c;
    c.rows = c.cols = g;
    GtcGlobalSimulator sim(c);
    RngStream rng(4 + static_cast<std::uint64_t>(g));
    for (int e = 0; e < 100; ++e) {
      auto s = sim.sample_initial(rng);
      for (int t = 0; t < c.horizon; ++t) {
        const int before = vehicles(s);
        auto d = sim.step_detailed(s, static_cast<ActionId>(rng.below(2)), rng);
        const auto& next = d.result.next_state;
        ASSERT_EQ(vehicles(next), before + d.entries - d.exits);
        ASSERT_LE(d.result.reward, 0.0);
        ASSERT_GE(d.result.reward, -24.0);
        const auto& center = next.grid[sim.center_index()];
        ASSERT_EQ(d.result.observation, observe_intersection(center, c.lane_len));
        ASSERT_EQ(d.result.reward, -center.occupancy());
        for (const auto& x : next.grid)
          for (Lane l : x.lanes) ASSERT_LT(l, 1u << c.lane_len);
        s = next;
      }
    }
  }
}

TEST(GtcLocal, BoundaryExamples) {
  GtcConfig c;
  GtcLocalSimulator local(c);
  RngStream rng(5);
  Intersection empty;
  const auto arrive = local.step(empty, GtcInfluenceSource{true, true, false, false}.pack(), 0, rng);
  EXPECT_EQ(arrive.reward, -2.0);
  // interior centre: transfers land before the lane advance
  EXPECT_TRUE(occupied(arrive.next.lanes[west_in], 1));
  EXPECT_TRUE(occupied(arrive.next.lanes[south_in], 1));
  GtcConfig single = c;
  single.rows = single.cols = 1;
  const auto border = GtcLocalSimulator(single).step(empty, GtcInfluenceSource{true, true, false, false}.pack(), 0, rng);
  EXPECT_EQ(border.reward, -2.0);
  EXPECT_TRUE(occupied(border.next.lanes[west_in], 0));
  EXPECT_TRUE(occupied(border.next.lanes[south_in], 0));

  Intersection jam;
  jam.lanes[east_out] = lane_of({1, 1, 1, 1, 1, 1});
  const auto blocked = local.step(jam, GtcInfluenceSource{false, false, true, false}.pack(), 0, rng);
  EXPECT_EQ(blocked.next.lanes[east_out], jam.lanes[east_out]);

  Intersection inner;
  inner.lanes[west_in] = lane_of({0, 1, 0, 0, 0, 1});
  inner.lanes[south_in] = lane_of({1, 0, 0, 0, 0, 0});
  const auto silent = local.step(inner, 0, 1, rng);
  Intersection expect = inner;
  expect.light = Light::ns_green;
  advance_intersection(expect, 6);
  EXPECT_EQ(silent.next, expect);
}

TEST(GtcSources, Definitions) {
  GtcTransferLog log;
  log.delivered_west = true;
  EXPECT_TRUE(gtc_extract_sources(log).arrive_west);
  GtcTransferLog idle;
  idle.downstream_east_occupied = true;
  EXPECT_TRUE(gtc_extract_sources(idle).blocked_east);
  GtcTransferLog moved;
  moved.head_east = true;
  moved.refused_east = false;
  moved.downstream_east_occupied = true;
  EXPECT_FALSE(gtc_extract_sources(moved).blocked_east);
  EXPECT_EQ((GtcInfluenceSource{true, false, true, true}).pack(), 0b1101u);
}

TEST(GtcSources, WestNeighbourDelivery) {
  GtcGlobalSimulator sim(empty_config());
  RngStream rng(6);
  auto s = sim.sample_initial(rng);
  const std::size_t west = sim.center_index() - 1;
  s.grid[west].lanes[east_out] = lane_of({0, 0, 0, 0, 0, 1});
  const auto [res, y] = sim.step_with_sources(s, 0, rng);
  EXPECT_TRUE(GtcInfluenceSource::unpack(y).arrive_west);
  const std::size_t east = sim.center_index() + 1;
  auto s2 = sim.sample_initial(rng);
  s2.grid[east].lanes[west_in] = lane_of({1, 0, 0, 0, 0, 0});
  const auto [res2, y2] = sim.step_with_sources(s2, 0, rng);
  EXPECT_TRUE(GtcInfluenceSource::unpack(y2).blocked_east);
}

TEST(GtcLocal, ReplayIsExact) {
  for (int g : {1, 2, 3}) {
    GtcConfig c;
    c.rows = c.cols = g;
    GtcGlobalSimulator global(c);
    GtcLocalSimulator local(c);
    for (std::uint64_t e = 0; e < 200; ++e) {
      RngStream rng = RngStream(21).fork(e);
      RngStream policy = RngStream(22).fork(e);
      auto s = global.sample_initial(rng);
      Intersection x = global.local_of(s);
      for (int t = 0; t < c.horizon; ++t) {
        const auto a = static_cast<ActionId>(policy.below(2));
        auto [res, y] = global.step_with_sources(std::move(s), a, rng);
        RngStream unused(0);
        const auto l = local.step(x, y, a, unused);
        ASSERT_EQ(l.next, global.local_of(res.next_state)) << "grid " << g << " ep " << e << " t " << t;
        ASSERT_EQ(l.observation, res.observation);
        ASSERT_EQ(l.reward, res.reward);
        x = l.next;
        s = std::move(res.next_state);
      }
    }
  }
}

TEST(GtcLocal, InitialSources) {
  RngStream rng(7);
  GtcLocalSimulator none(empty_config());
  for (int i = 0; i < 100; ++i) {
    const auto [x, y] = none.sample_initial(rng);
    const auto src = GtcInfluenceSource::unpack(y);
    EXPECT_FALSE(src.arrive_west);
    EXPECT_FALSE(src.arrive_south);
    EXPECT_FALSE(src.blocked_east);
    EXPECT_FALSE(src.blocked_north);
  }
  GtcConfig all;
  all.init_occupancy_prob = 1.0;
  GtcLocalSimulator full(all);
  for (int i = 0; i < 100; ++i) {
    const auto src = GtcInfluenceSource::unpack(full.sample_initial(rng).second);
    EXPECT_TRUE(src.blocked_east);
    EXPECT_TRUE(src.blocked_north);
  }
}

TEST(GtcLocal, EncodeLayout) {
  GtcConfig c;
  GtcLocalSimulator local(c);
  Intersection x;
  x.lanes[west_in] = lane_of({1, 0, 0, 0, 0, 1});
  x.light = Light::ns_green;
  std::vector<double> buf(static_cast<std::size_t>(local.input_width()));
  local.encode(1, x, buf);
  EXPECT_EQ(buf.size(), 27u);
  EXPECT_EQ(buf[0], 0.0);
  EXPECT_EQ(buf[1], 1.0);
  EXPECT_EQ(buf[2], 1.0);
  EXPECT_EQ(buf[7], 1.0);
  EXPECT_EQ(buf[26], 1.0);
  double sum = 0;
  for (double v : buf) sum += v;
  EXPECT_EQ(sum, 4.0);
}
