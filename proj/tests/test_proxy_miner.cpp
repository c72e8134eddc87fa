#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cdft/error.hpp"
#include "cdft/proxy_miner.hpp"
#include "cdft/recognizer_sim.hpp"
#include "test_support.hpp"

using namespace cdft;
using namespace cdft::testing;

namespace {

// Three unary assertions a1..a3 over predicates p1..p3; two classes.
RulesDb three_assertion_rules() {
  return parse_rules(R"(pred p1/1
pred p2/1
pred p3/1
assert a1(X): p1(X)
assert a2(X): p2(X)
assert a3(X): p3(X)
class main 1 "one"
class main 2 "two"
class aux 1 "uno"
class aux 2 "dos"
class aux 3 extra "tres"
)");
}

LabeledSegmentRecord record(const RulesDb& rules, std::string id, ClassId main, ClassId aux,
                            const std::vector<std::string>& preds) {
  std::vector<GroundAtom> atoms;
  for (const auto& p : preds) atoms.push_back({p, {ObjectId{"o1"}}, true});
  return {std::move(id), main, aux, GroundingSet(rules.signature, atoms)};
}

// Class 1: a1 in 10/10, a2 in 9/10, a3 in 5/10. Class 2: a3 everywhere.
std::vector<LabeledSegmentRecord> frequency_dataset(const RulesDb& rules) {
  std::vector<LabeledSegmentRecord> d;
  for (int i = 0; i < 10; ++i) {
    std::vector<std::string> preds{"p1"};
    if (i < 9) preds.push_back("p2");
    if (i < 5) preds.push_back("p3");
    d.push_back(record(rules, "s" + std::to_string(i), 1, 1, preds));
  }
  for (int i = 0; i < 4; ++i) d.push_back(record(rules, "t" + std::to_string(i), 2, 2, {"p3"}));
  return d;
}

std::vector<AssertionTemplate> pool(const RulesDb& rules) { return candidate_pool(rules); }

// Independent reference: count by hand with satisfy() and compare as
// cross-multiplied integers.
std::map<ClassId, std::vector<std::string>> reference_mine(
    const std::vector<LabeledSegmentRecord>& data, const std::vector<AssertionTemplate>& cands,
    std::uint64_t num, std::uint64_t den, const RulesDb& rules, TaskKind kind) {
  std::map<ClassId, std::vector<std::string>> out;
  for (const auto& c : rules.task.classes(kind)) {
    std::uint64_t total = 0;
    std::map<std::string, std::uint64_t> hits;
    for (const auto& r : data) {
      if (r.label(kind) != c.id) continue;
      ++total;
      for (const auto& t : cands) hits[t.id] += satisfy(t, r.grounding).satisfied ? 1 : 0;
    }
    auto& ids = out[c.id];
    if (total == 0) continue;
    for (const auto& t : cands) {
      if (hits[t.id] * den >= num * total) ids.push_back(t.id);
    }
    std::sort(ids.begin(), ids.end());
  }
  return out;
}

}  // namespace

TEST(Threshold, ParsesDecimalsAndRatios) {
  EXPECT_EQ(Threshold::parse("0.9"), Threshold::ratio(9, 10));
  EXPECT_EQ(Threshold::parse(".875"), Threshold::ratio(7, 8));
  EXPECT_EQ(Threshold::parse("9/10"), Threshold::ratio(9, 10));
  EXPECT_EQ(Threshold::parse("1"), Threshold::ratio(1, 1));
  EXPECT_EQ(Threshold::parse("1.0").to_string(), "1");
  EXPECT_EQ(Threshold::parse("0.9").to_string(), "0.9");
  EXPECT_EQ(Threshold::ratio(2, 3).to_string(), "2/3");
  for (const char* bad : {"1.1", "0", "0.0", "-0.5", "abc", "", "1/0", "3/2", "0.9x", "."}) {
    EXPECT_THROW(Threshold::parse(bad), ConfigError) << bad;
  }
}

TEST(Threshold, BoundaryIsExact) {
  auto t = Threshold::parse("0.9");
  EXPECT_TRUE(t.admits(9, 10));
  EXPECT_TRUE(t.admits(90, 100));
  EXPECT_FALSE(t.admits(89, 100));
  EXPECT_TRUE(t.admits(900000000000ULL, 1000000000000ULL));
  EXPECT_FALSE(t.admits(899999999999ULL, 1000000000000ULL));
  EXPECT_TRUE(Threshold::parse("1").admits(3, 3));
  EXPECT_FALSE(Threshold::parse("1").admits(2, 3));
}

TEST(MineProxies, ThresholdPointNine) {
  auto rules = three_assertion_rules();
  auto pm = mine_proxies(frequency_dataset(rules), pool(rules), Threshold::parse("0.9"), rules,
                         TaskKind::main);
  EXPECT_EQ(pm.required(1), (std::vector<std::string>{"a1", "a2"}));
  EXPECT_EQ(pm.required(2), std::vector<std::string>{"a3"});
  EXPECT_EQ(pm.frequencies.at(1).total, 10u);
  EXPECT_EQ(pm.frequencies.at(1).hits.at("a2"), 9u);
}

TEST(MineProxies, UnanimityThreshold) {
  auto rules = three_assertion_rules();
  auto pm = mine_proxies(frequency_dataset(rules), pool(rules), Threshold::parse("1"), rules,
                         TaskKind::main);
  EXPECT_EQ(pm.required(1), std::vector<std::string>{"a1"});
}

TEST(MineProxies, Errors) {
  auto rules = three_assertion_rules();
  auto data = frequency_dataset(rules);
  EXPECT_THROW(mine_proxies(data, {}, Threshold::parse("0.9"), rules, TaskKind::main),
               ConfigError);
  EXPECT_THROW(mine_proxies({}, pool(rules), Threshold::parse("0.9"), rules, TaskKind::main),
               ConfigError);
  std::vector<LabeledSegmentRecord> only1(data.begin(), data.begin() + 10);
  try {
    mine_proxies(only1, pool(rules), Threshold::parse("0.9"), rules, TaskKind::main);
    FAIL() << "expected missing-class error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
  data.push_back(record(rules, "bad", 9, 1, {"p1"}));
  EXPECT_THROW(mine_proxies(data, pool(rules), Threshold::parse("0.9"), rules, TaskKind::main),
               ConfigError);
}

TEST(MineProxies, ExtraAuxClassWithoutRecordsIsEmpty) {
  auto rules = three_assertion_rules();
  auto pm = mine_proxies(frequency_dataset(rules), pool(rules), Threshold::parse("0.9"), rules,
                         TaskKind::aux);
  ASSERT_TRUE(pm.has(3));
  EXPECT_TRUE(pm.required(3).empty());
  auto pkg = proxy_map_to_implications(pm);
  EXPECT_EQ(pkg.omitted, std::vector<ClassId>{3});
  EXPECT_EQ(pkg.implications.size(), 2u);
}

TEST(MineProxies, DistinctLabelColumnsGiveDistinctSets) {
  auto rules = three_assertion_rules();
  // Main labels follow p1, aux labels follow p2.
  std::vector<LabeledSegmentRecord> d;
  d.push_back(record(rules, "r0", 1, 1, {"p1", "p2"}));
  d.push_back(record(rules, "r1", 1, 2, {"p1", "p3"}));
  d.push_back(record(rules, "r2", 2, 1, {"p2", "p3"}));
  d.push_back(record(rules, "r3", 2, 2, {"p3"}));
  auto cands = pool(rules);
  auto t = Threshold::parse("0.9");
  auto m = mine_proxies(d, cands, t, rules, TaskKind::main);
  auto a = mine_proxies(d, cands, t, rules, TaskKind::aux);
  EXPECT_EQ(m.per_class, (reference_mine(d, cands, 9, 10, rules, TaskKind::main)));
  EXPECT_EQ(a.per_class.at(1), (reference_mine(d, cands, 9, 10, rules, TaskKind::aux)).at(1));
  // Frozen from the counting reference.
  EXPECT_EQ(m.required(1), std::vector<std::string>{"a1"});
  EXPECT_EQ(a.required(1), std::vector<std::string>{"a2"});
  EXPECT_NE(m.required(1), a.required(1));
}

TEST(MineProxies, TudatRearEndSegmentsMineBehindAndVeryClose) {
  auto rules = tudat_rules();
  DatasetSpec spec;
  for (ClassId c = 1; c <= 6; ++c) spec.ftd_counts[c] = 20;
  spec.ed_counts = spec.ftd_counts;
  spec.test_counts = spec.ftd_counts;
  spec.noise = 0;
  spec.seed = 5;
  auto ds = generate_dataset(rules, spec);
  std::vector<LabeledSegmentRecord> recs;
  for (const auto& s : ds.ftd) recs.push_back({s.segment_id, s.main_label, s.aux_label, *s.grounding});
  auto pm = mine_proxies(recs, candidate_pool(rules), Threshold::parse("0.9"), rules,
                         TaskKind::main);
  const auto& s1 = pm.required(1);
  EXPECT_TRUE(std::find(s1.begin(), s1.end(), "behind") != s1.end());
  EXPECT_TRUE(std::find(s1.begin(), s1.end(), "very_close") != s1.end());
}

TEST(MineProxiesProperty, MatchesReferenceMonotoneAndOrderFree) {
  auto rules = tudat_rules();
  std::mt19937_64 rng(11);
  auto cands = candidate_pool(rules);
  const auto& decls = rules.signature->decls();
  const std::pair<std::uint64_t, std::uint64_t> thresholds[] = {{1, 2}, {7, 10}, {9, 10}, {1, 1}};
  for (int round = 0; round < 40; ++round) {
    std::vector<LabeledSegmentRecord> d;
    for (int i = 0; i < 60; ++i) {
      std::vector<GroundAtom> atoms;
      for (int k = 0; k < 10; ++k) {
        const auto& p = decls[rng() % decls.size()];
        GroundAtom a{p.name, {}, true};
        for (std::size_t j = 0; j < p.arity; ++j) a.args.push_back(ObjectId{"o" + std::to_string(rng() % 3)});
        atoms.push_back(a);
      }
      ClassId c = 1 + static_cast<ClassId>(i % 6);
      d.push_back({"r" + std::to_string(i), c, c, GroundingSet(rules.signature, atoms)});
    }
    std::map<ClassId, std::vector<std::string>> previous;
    bool first = true;
    for (auto [num, den] : thresholds) {
      auto pm = mine_proxies(d, cands, Threshold::ratio(num, den), rules, TaskKind::main);
      ASSERT_EQ(pm.per_class, reference_mine(d, cands, num, den, rules, TaskKind::main));
      if (!first) {
        for (const auto& [c, ids] : pm.per_class) {
          for (const auto& id : ids) {
            ASSERT_TRUE(std::binary_search(previous[c].begin(), previous[c].end(), id));
          }
        }
      }
      previous = pm.per_class;
      first = false;
    }
    auto shuffled = d;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto t = Threshold::parse("0.9");
    ASSERT_EQ(mine_proxies(d, cands, t, rules, TaskKind::main),
              mine_proxies(shuffled, cands, t, rules, TaskKind::main, Execution::serial));
  }
}

TEST(SatisfactionMatrix, ParallelMatchesSerial) {
  auto rules = tudat_rules();
  DatasetSpec spec;
  for (ClassId c = 1; c <= 6; ++c) spec.ftd_counts[c] = 40;
  spec.ed_counts = spec.ftd_counts;
  spec.test_counts = spec.ftd_counts;
  spec.noise = 0.1;
  spec.background_class = 6;
  spec.background_rate = 0.5;
  auto ds = generate_dataset(rules, spec);
  std::vector<LabeledSegmentRecord> recs;
  for (const auto& s : ds.ftd) recs.push_back({s.segment_id, s.main_label, s.aux_label, *s.grounding});
  auto cands = candidate_pool(rules);
  EXPECT_EQ(satisfaction_matrix(recs, cands, Execution::serial),
            satisfaction_matrix(recs, cands, Execution::parallel));
}

TEST(ProxyMap, ImplicationPackaging) {
  ProxyMap pm;
  pm.per_class[1] = {"a1", "a2"};
  auto pkg = proxy_map_to_implications(pm);
  ASSERT_EQ(pkg.implications.size(), 1u);
  EXPECT_EQ(pkg.implications[0], (Implication{1, TaskKind::main, {"a1", "a2"}}));
  EXPECT_TRUE(pkg.omitted.empty());

  ProxyMap empty;
  empty.per_class[1] = {};
  auto none = proxy_map_to_implications(empty);
  EXPECT_TRUE(none.implications.empty());
  EXPECT_EQ(none.omitted, std::vector<ClassId>{1});
}

TEST(ProxyMap, JsonRoundTrip) {
  auto rules = three_assertion_rules();
  auto pm = mine_proxies(frequency_dataset(rules), pool(rules), Threshold::ratio(2, 3), rules,
                         TaskKind::aux);
  auto back = proxy_map_from_json(nlohmann::json::parse(to_json(pm).dump()));
  EXPECT_EQ(back, pm);
  EXPECT_THROW(proxy_map_from_json(nlohmann::json::parse(R"({"task":"main"})")), ConfigError);
}

TEST(ProxyMap, FromRules) {
  auto rules = tudat_rules();
  auto pm = proxy_map_from_rules(rules, TaskKind::aux);
  EXPECT_EQ(pm.required(5), (std::vector<std::string>{"moto_near_ped", "ped_walking"}));
  EXPECT_EQ(pm.required(8), std::vector<std::string>{"ped_walking"});
}

TEST(LoadManifest, ReadsRelativeGroundings) {
  namespace fs = std::filesystem;
  auto rules = tudat_rules();
  auto dir = fs::temp_directory_path() / "cdft_manifest_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "g");
  fs::copy_file(data_path("rear_end.ground"), dir / "g" / "a.ground");
  std::ofstream(dir / "m.json")
      << R"({"records":[{"segmentId":"a","mainLabel":1,"auxLabel":1,"groundingsFile":"g/a.ground"}]})";
  auto recs = load_manifest((dir / "m.json").string(), rules);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].grounding, rear_end(rules));
  std::ofstream(dir / "bad.json") << R"({"records":[{"segmentId":"a"}]})";
  EXPECT_THROW(load_manifest((dir / "bad.json").string(), rules), ConfigError);
  fs::remove_all(dir);
}
