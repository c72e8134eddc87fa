#include <gtest/gtest.h>

#include <filesystem>

#include "cdft/consistency.hpp"
#include "cdft/error.hpp"
#include "cdft/recognizer_sim.hpp"
#include "test_support.hpp"

using namespace cdft;
using namespace cdft::testing;

namespace {

RecognizerProfile eight_classes(double acc) {
  RecognizerProfile p;
  p.task = TaskKind::aux;
  for (ClassId c = 1; c <= 8; ++c) p.accuracy[c] = acc;
  return p;
}

SimulatedSegment seg(ClassId main, ClassId aux, std::string id = "s") {
  SimulatedSegment s;
  s.segment_id = std::move(id);
  s.main_label = main;
  s.aux_label = aux;
  return s;
}

DatasetSpec small_spec(double noise) {
  DatasetSpec spec;
  for (ClassId c = 1; c <= 6; ++c) {
    spec.ftd_counts[c] = 8;
    spec.ed_counts[c] = 5;
    spec.test_counts[c] = 6;
  }
  spec.eval_batch_size = 7;
  spec.noise = noise;
  spec.seed = 17;
  return spec;
}

}  // namespace

TEST(RandomStream, DeterministicAndKeyed) {
  auto a = RandomStream::derive(1, {2, 3});
  auto b = RandomStream::derive(1, {2, 3});
  auto c = RandomStream::derive(1, {3, 2});
  std::vector<std::uint64_t> xa, xb, xc;
  for (int i = 0; i < 16; ++i) {
    xa.push_back(a.next());
    xb.push_back(b.next());
    xc.push_back(c.next());
  }
  EXPECT_EQ(xa, xb);
  EXPECT_NE(xa, xc);
  EXPECT_EQ(a.position(), 16u);
}

TEST(RandomStream, BelowAndUniformRanges) {
  RandomStream s(3);
  std::vector<int> hist(6, 0);
  for (int i = 0; i < 60000; ++i) {
    auto x = s.below(6);
    ASSERT_LT(x, 6u);
    ++hist[x];
    auto u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (int h : hist) EXPECT_NEAR(h / 60000.0, 1.0 / 6.0, 0.01);
}

TEST(StableHash, FnvReferenceValues) {
  EXPECT_EQ(stable_hash(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(stable_hash("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(stable_hash("foobar"), 0x85944171f73967e8ULL);
}

TEST(Infer, PerfectAccuracyAlwaysRight) {
  auto p = eight_classes(1.0);
  RandomStream s(1);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(infer(p, seg(0, 1 + i % 8), s), 1 + i % 8);
}

TEST(Infer, ZeroAccuracyIsUniformOverWrongClasses) {
  auto p = eight_classes(0.0);
  RandomStream s(2024);
  std::map<ClassId, int> hist;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++hist[infer(p, seg(0, 3), s)];
  EXPECT_EQ(hist.count(3), 0u);
  EXPECT_EQ(hist.size(), 7u);
  for (const auto& [c, k] : hist) EXPECT_NEAR(static_cast<double>(k) / n, 1.0 / 7.0, 0.02) << c;
}

TEST(Infer, ConfusionWeightsAreFollowed) {
  auto p = eight_classes(0.0);
  p.confusion[1] = {{2, 3.0}, {5, 1.0}};
  RandomStream s(9);
  std::map<ClassId, int> hist;
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++hist[infer(p, seg(0, 1), s)];
  EXPECT_EQ(hist.size(), 2u);
  EXPECT_NEAR(hist[2] / double(n), 0.75, 0.02);
  EXPECT_NEAR(hist[5] / double(n), 0.25, 0.02);
}

TEST(Infer, EmpiricalAccuracyMatchesProfile) {
  RecognizerProfile p;
  p.task = TaskKind::main;
  const double accs[] = {0.05, 0.3, 0.5, 0.6, 0.85, 0.97};
  for (ClassId c = 1; c <= 6; ++c) p.accuracy[c] = accs[c - 1];
  RandomStream s(31);
  for (ClassId c = 1; c <= 6; ++c) {
    int ok = 0;
    for (int i = 0; i < 10000; ++i) ok += infer(p, seg(c, 0), s) == c;
    EXPECT_NEAR(ok / 10000.0, p.accuracy[c], 0.02) << c;
  }
}

TEST(Infer, DeterministicAndTwoDrawsPerCall) {
  auto p = eight_classes(0.4);
  RandomStream a(5), b(5);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(infer(p, seg(0, 2), a), infer(p, seg(0, 2), b));
  EXPECT_EQ(a.position(), 200u);
}

TEST(Infer, UnknownClassIsConfigError) {
  auto p = eight_classes(0.5);
  RandomStream s(1);
  EXPECT_THROW(infer(p, seg(0, 9), s), ConfigError);
}

TEST(FineTune, FormulaArithmetic) {
  RecognizerProfile p;
  p.task = TaskKind::main;
  p.accuracy = {{1, 0.6}, {2, 1.0}, {3, 0.8}, {4, 0.5}};
  p.learning_rate = 0.25;
  p.forgetting = 0.01;
  std::vector<SimulatedSegment> batch{seg(1, 1), seg(1, 1), seg(2, 2)};
  auto q = fine_tune(p, batch, {1, 2, 4});
  EXPECT_DOUBLE_EQ(q.accuracy[1], 0.7);
  EXPECT_DOUBLE_EQ(q.accuracy[2], 1.0);
  EXPECT_DOUBLE_EQ(q.accuracy[3], 0.792);
  EXPECT_DOUBLE_EQ(q.accuracy[4], 0.5);  // targeted but absent from the batch
  EXPECT_EQ(p.accuracy[1], 0.6);          // input untouched
}

TEST(FineTuneProperty, TargetedAccuracyStrictlyIncreases) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 0.999);
  for (int i = 0; i < 1000; ++i) {
    RecognizerProfile p;
    p.task = TaskKind::main;
    for (ClassId c = 1; c <= 5; ++c) p.accuracy[c] = unit(rng);
    p.learning_rate = 0.01 + unit(rng) * 0.98;
    p.forgetting = unit(rng) * 0.5;
    ClassId target = 1 + static_cast<ClassId>(rng() % 5);
    std::vector<SimulatedSegment> batch{seg(target, target)};
    auto q = fine_tune(p, batch, {target});
    ASSERT_GT(q.accuracy[target], p.accuracy[target]);
    ASSERT_LE(q.accuracy[target], 1.0);
    for (const auto& [c, a] : q.accuracy) {
      if (c != target) ASSERT_LE(a, p.accuracy[c]);
    }
  }
}

TEST(RecognizerProfile, ValidationAndJson) {
  auto p = eight_classes(0.6);
  p.confusion[2] = {{1, 0.5}, {3, 1.5}};
  p.seed = 99;
  auto back = profile_from_json(nlohmann::json::parse(to_json(p).dump()));
  EXPECT_EQ(back, p);

  auto bad = p;
  bad.accuracy[1] = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = p;
  bad.confusion[2][2] = 1.0;  // self-confusion
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = p;
  bad.confusion[2] = {{1, -1.0}, {3, 2.0}};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = p;
  bad.learning_rate = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(profile_from_json(nlohmann::json::parse(R"({"task":"main"})")), ConfigError);
}

TEST(SimulatedRecognizer, FineTunedReturnsNewRecognizer) {
  auto rules = tudat_rules();
  SimulatedRecognizer r(RecognizerProfile::uniform(rules, TaskKind::main, 0.6, 0.25, 0.01, 1));
  std::vector<SimulatedSegment> batch{seg(1, 1)};
  auto next = r.fine_tuned(batch, {1});
  EXPECT_DOUBLE_EQ(next->class_accuracy().at(1), 0.7);
  EXPECT_DOUBLE_EQ(r.class_accuracy().at(1), 0.6);
  EXPECT_EQ(r.clone()->class_accuracy(), r.class_accuracy());
  EXPECT_EQ(r.task(), TaskKind::main);
}

TEST(GenerateDataset, ZeroNoiseSatisfiesImplications) {
  auto rules = tudat_rules();
  auto ds = generate_dataset(rules, small_spec(0.0));
  std::vector<const SimulatedSegment*> all;
  for (const auto& s : ds.ftd) all.push_back(&s);
  for (const auto& b : ds.ed) {
    for (const auto& s : b.segments) all.push_back(&s);
  }
  for (const auto& s : ds.test) all.push_back(&s);
  ProxyPair proxies{proxy_map_from_rules(rules, TaskKind::main),
                    proxy_map_from_rules(rules, TaskKind::aux)};
  for (const auto* s : all) {
    EXPECT_TRUE(s->noise.dropped.empty() && s->noise.inserted.empty());
    EXPECT_TRUE(check_implication(*rules.implication(TaskKind::main, s->main_label), *s->grounding, rules).holds);
    EXPECT_TRUE(check_implication(*rules.implication(TaskKind::aux, s->aux_label), *s->grounding, rules).holds);
    // perfect recognizers name the true classes, which must pass every condition
    SegmentEvaluation ev{s->segment_id, s->main_label, s->aux_label, s->grounding};
    EXPECT_TRUE(check_segment(ev, rules, proxies).consistent()) << s->segment_id;
  }
}

TEST(GenerateDataset, EveryClassReachesAnEvalBatch) {
  auto rules = parse_rules(R"(pred p/1
pred q/2
assert a(X): p(X)
assert b(X,Y): q(X,Y)
class main 1 "one"
class main 2 "two"
class aux 1 "uno"
class aux 2 "dos"
implies main 1 => a
implies main 2 => b
implies aux 1 => a
implies aux 2 => b
)");
  DatasetSpec spec;
  spec.ftd_counts = spec.ed_counts = spec.test_counts = {{1, 10}, {2, 10}};
  spec.eval_batch_size = 5;
  auto ds = generate_dataset(rules, spec);
  std::set<ClassId> seen;
  for (const auto& b : ds.ed) {
    EXPECT_LE(b.segments.size(), 5u);
    for (const auto& s : b.segments) seen.insert(s.main_label);
  }
  EXPECT_EQ(seen, (std::set<ClassId>{1, 2}));
  EXPECT_EQ(ds.ed.size(), 4u);
}

TEST(GenerateDataset, SplitsAreDisjointAndDeterministic) {
  auto rules = tudat_rules();
  auto spec = small_spec(0.1);
  spec.background_class = 6;
  spec.background_rate = 0.5;
  auto ds = generate_dataset(rules, spec);
  std::set<std::string> ids;
  std::size_t n = 0;
  for (const auto& s : ds.ftd) ids.insert(s.segment_id), ++n;
  for (const auto& b : ds.ed) {
    for (const auto& s : b.segments) ids.insert(s.segment_id), ++n;
  }
  for (const auto& s : ds.test) ids.insert(s.segment_id), ++n;
  EXPECT_EQ(ids.size(), n);

  auto again = generate_dataset(rules, spec);
  ASSERT_EQ(again.ftd.size(), ds.ftd.size());
  for (std::size_t i = 0; i < ds.ftd.size(); ++i) {
    EXPECT_EQ(print_groundings(*again.ftd[i].grounding), print_groundings(*ds.ftd[i].grounding));
  }
  spec.seed += 1;
  auto other = generate_dataset(rules, spec);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < ds.ftd.size(); ++i) {
    differ += print_groundings(*other.ftd[i].grounding) != print_groundings(*ds.ftd[i].grounding);
  }
  EXPECT_GT(differ, 0u);
}

TEST(GenerateDataset, Errors) {
  auto rules = parse_rules(R"(pred p/1
assert a(X): p(X)
class main 1 "one"
class main 2 "two"
class aux 1 "uno"
class aux 2 "dos"
implies main 1 => a
implies aux 1 => a
implies aux 2 => a
)");
  DatasetSpec spec;
  spec.ftd_counts = spec.ed_counts = spec.test_counts = {{1, 2}, {2, 2}};
  EXPECT_THROW(generate_dataset(rules, spec), ConfigError);  // main 2 has no proxies
  spec.ftd_counts = spec.ed_counts = spec.test_counts = {{1, 2}};
  EXPECT_THROW(generate_dataset(rules, spec), ConfigError);  // ED misses class 2
  auto tudat = tudat_rules();
  auto bad = small_spec(1.0);
  EXPECT_THROW(generate_dataset(tudat, bad), ConfigError);
  bad = small_spec(0.0);
  bad.ftd_counts[12] = 1;
  EXPECT_THROW(generate_dataset(tudat, bad), ConfigError);
}

TEST(GenerateDataset, WriteReadRoundTrip) {
  namespace fs = std::filesystem;
  auto rules = tudat_rules();
  auto spec = small_spec(0.05);
  spec.background_class = 6;
  spec.background_rate = 0.7;
  auto ds = generate_dataset(rules, spec);
  auto dir = fs::temp_directory_path() / "cdft_dataset_test";
  fs::remove_all(dir);
  write_dataset(ds, dir.string());
  auto back = read_dataset(dir.string(), rules);
  ASSERT_EQ(back.ftd.size(), ds.ftd.size());
  ASSERT_EQ(back.ed.size(), ds.ed.size());
  for (std::size_t b = 0; b < ds.ed.size(); ++b) {
    EXPECT_EQ(back.ed[b].id, ds.ed[b].id);
    ASSERT_EQ(back.ed[b].segments.size(), ds.ed[b].segments.size());
    for (std::size_t i = 0; i < ds.ed[b].segments.size(); ++i) {
      EXPECT_EQ(*back.ed[b].segments[i].grounding, *ds.ed[b].segments[i].grounding);
    }
  }
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    EXPECT_EQ(back.test[i].segment_id, ds.test[i].segment_id);
    EXPECT_EQ(*back.test[i].grounding, *ds.test[i].grounding);
  }
  fs::remove_all(dir);
}

TEST(DatasetSpec, JsonRoundTrip) {
  auto spec = small_spec(0.05);
  spec.background_class = 6;
  spec.background_rate = 0.25;
  EXPECT_EQ(dataset_spec_from_json(nlohmann::json::parse(to_json(spec).dump())), spec);
}
