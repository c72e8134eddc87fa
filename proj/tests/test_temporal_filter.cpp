#include <gtest/gtest.h>

#include <random>

#include "cdft/error.hpp"
#include "cdft/temporal_filter.hpp"
#include "test_support.hpp"

using namespace cdft;
using namespace cdft::testing;

namespace {

const ObjectId kObj{"obj1"};

FrameObservation frame(std::uint64_t t, std::map<ObjectId, std::string> tracks) {
  return {t, std::move(tracks)};
}

std::string last_category(TemporalBuffer& buf, const std::vector<std::string>& cats) {
  FrameObservation out;
  std::uint64_t t = 0;
  for (const auto& c : cats) out = buf.push(frame(++t, {{kObj, c}}));
  return out.tracks.at(kObj);
}

const std::vector<std::string> kCats{"car", "truck", "bus", "motorcycle"};

}  // namespace

TEST(TemporalBuffer, TransientTruckIsCorrected) {
  TemporalBuffer buf(5);
  EXPECT_EQ(last_category(buf, {"car", "car", "truck", "car", "car"}), "car");
}

TEST(TemporalBuffer, StableWindowUnchanged) {
  TemporalBuffer buf(5);
  EXPECT_EQ(last_category(buf, {"car", "car", "car", "car", "car"}), "car");
}

TEST(TemporalBuffer, TieKeepsNewestRawValue) {
  TemporalBuffer buf(4);
  EXPECT_EQ(last_category(buf, {"car", "truck", "car", "truck"}), "truck");
  TemporalBuffer buf2(4);
  EXPECT_EQ(last_category(buf2, {"truck", "car", "truck", "car"}), "car");
}

TEST(TemporalBuffer, MissingDetectionFilledAtQuorum) {
  TemporalBuffer buf(5);
  buf.push(frame(1, {{kObj, "car"}}));
  buf.push(frame(2, {{kObj, "car"}}));
  auto two = buf.push(frame(3, {}));
  EXPECT_EQ(two.tracks.count(kObj), 0u);  // seen in 2 of the window frames, quorum is 3
  buf.push(frame(4, {{kObj, "car"}}));
  auto filled = buf.push(frame(5, {}));
  EXPECT_EQ(filled.tracks.at(kObj), "car");
}

TEST(TemporalBuffer, FilledTieTakesMostRecentCategory) {
  TemporalBuffer buf(4);
  buf.push(frame(1, {{kObj, "truck"}}));
  buf.push(frame(2, {{kObj, "car"}}));
  auto out = buf.push(frame(3, {}));
  EXPECT_EQ(out.tracks.at(kObj), "car");
}

TEST(TemporalBuffer, Errors) {
  EXPECT_THROW(TemporalBuffer(0), ConfigError);
  TemporalBuffer buf(3);
  buf.push(frame(5, {}));
  EXPECT_THROW(buf.push(frame(5, {})), OrderingError);
  EXPECT_THROW(buf.push(frame(4, {})), OrderingError);
  EXPECT_NO_THROW(buf.push(frame(6, {})));
}

TEST(TemporalBufferProperty, SingleFlipIsCorrected) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 3 + rng() % 7;
    const std::size_t quorum = (k + 1) / 2;
    const auto& c = kCats[rng() % kCats.size()];
    std::string d;
    do d = kCats[rng() % kCats.size()];
    while (d == c);
    const std::size_t before = quorum + rng() % k;
    const std::size_t after = rng() % k;
    TemporalBuffer buf(k);
    std::uint64_t t = 0;
    std::map<ObjectId, std::string> other;
    auto push = [&](const std::string& cat) {
      std::map<ObjectId, std::string> tracks{{kObj, cat}};
      if (rng() % 2) tracks[ObjectId{"noise"}] = kCats[rng() % kCats.size()];
      return buf.push(frame(++t, tracks));
    };
    for (std::size_t j = 0; j < before; ++j) ASSERT_EQ(push(c).tracks.at(kObj), c);
    ASSERT_EQ(push(d).tracks.at(kObj), c) << "K=" << k;
    for (std::size_t j = 0; j < after; ++j) ASSERT_EQ(push(c).tracks.at(kObj), c);
    ASSERT_LE(buf.size(), k);
  }
}

TEST(TemporalBufferProperty, IdempotentOnStableStreams) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 1 + rng() % 8;
    const std::size_t n_obj = 1 + rng() % 4;
    std::map<ObjectId, std::string> tracks;
    for (std::size_t o = 0; o < n_obj; ++o) {
      tracks[ObjectId{"o" + std::to_string(o)}] = kCats[rng() % kCats.size()];
    }
    TemporalBuffer buf(k);
    TemporalBuffer again(k);
    const std::size_t len = 1 + rng() % 20;
    for (std::size_t t = 1; t <= len; ++t) {
      auto out = buf.push(frame(t, tracks));
      ASSERT_EQ(out.tracks, tracks);
      ASSERT_EQ(again.push(out), out);
      ASSERT_LE(buf.size(), k);
    }
  }
}

TEST(TemporalBufferProperty, BoundedMemoryAndLatency) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 1 + rng() % 7;
    TemporalBuffer buf(k);
    std::vector<FrameObservation> raw;
    std::uint64_t t = 0;
    const std::size_t len = 1 + rng() % 25;
    for (std::size_t j = 0; j < len; ++j) {
      t += 1 + rng() % 3;
      std::map<ObjectId, std::string> tracks;
      for (int o = 0; o < 3; ++o) {
        if (rng() % 4 != 0) tracks[ObjectId{"o" + std::to_string(o)}] = kCats[rng() % 3];
      }
      raw.push_back(frame(t, tracks));
      auto out = buf.push(raw.back());
      ASSERT_LE(buf.size(), k);
      // Same answer from a fresh buffer that only ever saw the last K frames.
      TemporalBuffer fresh(k);
      FrameObservation expect;
      const std::size_t from = raw.size() > k ? raw.size() - k : 0;
      for (std::size_t r = from; r < raw.size(); ++r) expect = fresh.push(raw[r]);
      ASSERT_EQ(out, expect);
    }
  }
}

TEST(ReduceSegment, SmoothsCategoriesAndUnionsRelations) {
  auto rules = tudat_rules();
  const ObjectId c1{"car1"}, c2{"car2"};
  std::vector<FrameFacts> frames;
  const char* cat2[] = {"car", "car", "truck", "car", "car"};
  for (std::uint64_t t = 0; t < 5; ++t) {
    FrameFacts f;
    f.observation = frame(t + 1, {{c1, "car"}, {c2, cat2[t]}});
    if (t == 1) f.relations.push_back({"move_behind", {c1, c2}, true});
    if (t == 3) f.relations.push_back({"move_very_close", {c1, c2}, true});
    if (t == 4) f.relations.push_back({"move_very_close", {c1, c2}, false});
    if (t == 0) f.relations.push_back({"car_moving", {c1}, false});
    frames.push_back(std::move(f));
  }
  auto g = reduce_segment(frames, 5, rules.signature);
  auto text = print_groundings(g);
  EXPECT_EQ(text,
            "car(car1)\ncar(car2)\nmove_behind(car1,car2)\nmove_very_close(car1,car2)\n"
            "!car_moving(car1)\n");
  EXPECT_TRUE(check_implication(*rules.implication(TaskKind::main, 1), g, rules).holds);
}
