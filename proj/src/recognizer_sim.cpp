#include "cdft/recognizer_sim.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>

#include "cdft/error.hpp"
#include "cdft/rules_dsl.hpp"

namespace cdft {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::map<ClassId, std::size_t> counts_from_json(const nlohmann::json& j) {
  std::map<ClassId, std::size_t> out;
  for (const auto& [k, v] : j.items()) out[std::stoi(k)] = v.get<std::size_t>();
  return out;
}

nlohmann::json counts_to_json(const std::map<ClassId, std::size_t>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

}  // namespace

RandomStream RandomStream::derive(std::uint64_t seed,
                                  std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k));
  return RandomStream(h);
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void RecognizerProfile::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (accuracy.empty()) throw ConfigError("recognizer profile has no classes");
  for (const auto& [c, a] : accuracy) {
    if (!in_unit(a)) {
      throw ConfigError("accuracy of class " + std::to_string(c) + " outside [0, 1]");
    }
  }
  for (const auto& [c, row] : confusion) {
    if (!accuracy.contains(c)) {
      throw ConfigError("confusion row for unknown class " + std::to_string(c));
    }
    double total = 0;
    for (const auto& [w, weight] : row) {
      if (w == c || !accuracy.contains(w)) {
        throw ConfigError("confusion row " + std::to_string(c) +
                          " names invalid wrong class " + std::to_string(w));
      }
      if (!(weight >= 0.0)) throw ConfigError("negative confusion weight");
      total += weight;
    }
    if (!(total > 0.0)) {
      throw ConfigError("confusion row " + std::to_string(c) + " has zero total weight");
    }
  }
  if (!(learning_rate > 0.0 && learning_rate < 1.0)) {
    throw ConfigError("learning rate must lie in (0, 1)");
  }
  if (!(forgetting >= 0.0 && forgetting < 1.0)) {
    throw ConfigError("forgetting factor must lie in [0, 1)");
  }
}

RecognizerProfile RecognizerProfile::uniform(const RulesDb& rules, TaskKind task,
                                             double accuracy, double learning_rate,
                                             double forgetting, std::uint64_t seed) {
  RecognizerProfile p;
  p.task = task;
  for (auto id : rules.task.class_ids(task)) p.accuracy[id] = accuracy;
  p.learning_rate = learning_rate;
  p.forgetting = forgetting;
  p.seed = seed;
  p.validate();
  return p;
}

ClassId infer(const RecognizerProfile& profile, const SimulatedSegment& seg,
              RandomStream& stream) {
  const ClassId truth = seg.label(profile.task);
  auto it = profile.accuracy.find(truth);
  if (it == profile.accuracy.end()) {
    throw ConfigError("recognizer has no class " + std::to_string(truth) +
                      " (segment '" + seg.segment_id + "')");
  }
  const double correct_draw = stream.uniform();
  const double wrong_draw = stream.uniform();
  if (correct_draw < it->second) return truth;

  std::vector<std::pair<ClassId, double>> weights;
  if (auto row = profile.confusion.find(truth); row != profile.confusion.end()) {
    for (const auto& [c, w] : row->second) {
      if (w > 0) weights.emplace_back(c, w);
    }
  } else {
    for (const auto& [c, a] : profile.accuracy) {
      if (c != truth) weights.emplace_back(c, 1.0);
    }
  }
  if (weights.empty()) return truth;
  double total = 0;
  for (const auto& [c, w] : weights) total += w;
  double x = wrong_draw * total;
  for (const auto& [c, w] : weights) {
    if (x < w) return c;
    x -= w;
  }
  return weights.back().first;
}

RecognizerProfile fine_tune(const RecognizerProfile& profile,
                            std::span<const SimulatedSegment> batch,
                            const std::set<ClassId>& target_classes) {
  std::set<ClassId> present;
  for (const auto& s : batch) present.insert(s.label(profile.task));
  RecognizerProfile out = profile;
  for (auto& [c, a] : out.accuracy) {
    if (target_classes.contains(c)) {
      if (present.contains(c)) a = std::min(1.0, a + profile.learning_rate * (1.0 - a));
    } else {
      a *= 1.0 - profile.forgetting;
    }
  }
  return out;
}

nlohmann::json to_json(const RecognizerProfile& p) {
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [c, a] : p.accuracy) acc[std::to_string(c)] = a;
  nlohmann::json conf = nlohmann::json::object();
  for (const auto& [c, row] : p.confusion) {
    auto& r = conf[std::to_string(c)] = nlohmann::json::object();
    for (const auto& [w, weight] : row) r[std::to_string(w)] = weight;
  }
  return {{"task", std::string(to_string(p.task))},
          {"accuracy", acc},
          {"confusion", conf},
          {"learningRate", p.learning_rate},
          {"forgetting", p.forgetting},
          {"seed", p.seed}};
}

RecognizerProfile profile_from_json(const nlohmann::json& j) {
  try {
    RecognizerProfile p;
    p.task = parse_task_kind(j.at("task").get<std::string>());
    for (const auto& [k, v] : j.at("accuracy").items()) p.accuracy[std::stoi(k)] = v.get<double>();
    if (j.contains("confusion")) {
      for (const auto& [k, row] : j.at("confusion").items()) {
        auto& r = p.confusion[std::stoi(k)];
        for (const auto& [w, v] : row.items()) r[std::stoi(w)] = v.get<double>();
      }
    }
    p.learning_rate = j.value("learningRate", 0.25);
    p.forgetting = j.value("forgetting", 0.01);
    p.seed = j.value("seed", std::uint64_t{0});
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed recognizer profile: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("malformed recognizer profile: class keys must be integers");
  }
}

SimulatedRecognizer::SimulatedRecognizer(RecognizerProfile profile)
    : profile_(std::move(profile)) {
  profile_.validate();
}

ClassId SimulatedRecognizer::classify(const SimulatedSegment& seg,
                                      RandomStream& stream) const {
  return infer(profile_, seg, stream);
}

std::unique_ptr<Recognizer> SimulatedRecognizer::fine_tuned(
    std::span<const SimulatedSegment> batch, const std::set<ClassId>& target_classes) const {
  return std::make_unique<SimulatedRecognizer>(fine_tune(profile_, batch, target_classes));
}

std::unique_ptr<Recognizer> SimulatedRecognizer::clone() const {
  return std::make_unique<SimulatedRecognizer>(profile_);
}

nlohmann::json to_json(const DatasetSpec& s) {
  return {{"ftdCounts", counts_to_json(s.ftd_counts)},
          {"edCounts", counts_to_json(s.ed_counts)},
          {"testCounts", counts_to_json(s.test_counts)},
          {"evalBatchSize", s.eval_batch_size},
          {"noise", s.noise},
          {"backgroundClass", s.background_class},
          {"backgroundRate", s.background_rate},
          {"seed", s.seed}};
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  try {
    DatasetSpec s;
    s.ftd_counts = counts_from_json(j.at("ftdCounts"));
    s.ed_counts = counts_from_json(j.at("edCounts"));
    s.test_counts = counts_from_json(j.at("testCounts"));
    s.eval_batch_size = j.value("evalBatchSize", std::size_t{20});
    s.noise = j.value("noise", DatasetSpec{}.noise);
    s.background_class = j.value("backgroundClass", 0);
    s.background_rate = j.value("backgroundRate", 0.0);
    s.seed = j.value("seed", std::uint64_t{0});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset spec: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("malformed dataset spec: class keys must be integers");
  }
}

namespace {

class SceneBuilder {
 public:
  SceneBuilder(const RulesDb& rules, const DatasetSpec& spec) : rules_(rules), spec_(spec) {}

  SimulatedSegment build(std::string id, ClassId cls, RandomStream& rng) const {
    std::set<GroundAtom> atoms;
    std::map<std::string, int> counters;
    std::set<std::string> required;
    for (TaskKind kind : {TaskKind::main, TaskKind::aux}) {
      const auto* imp = rules_.implication(kind, cls);
      required.insert(imp->required.begin(), imp->required.end());
    }
    for (const auto& aid : required) instantiate_fresh(rules_.assertion(aid), atoms, counters);
    if (spec_.background_class != 0 && rng.bernoulli(spec_.background_rate)) {
      for (const auto& aid : rules_.implication(TaskKind::main, spec_.background_class)->required) {
        instantiate_fresh(rules_.assertion(aid), atoms, counters);
      }
    }

    SimulatedSegment seg;
    seg.segment_id = std::move(id);
    seg.main_label = cls;
    seg.aux_label = cls;

    std::set<ObjectId> objects;
    for (const auto& a : atoms) objects.insert(a.args.begin(), a.args.end());
    std::vector<ObjectId> universe(objects.begin(), objects.end());
    const auto& decls = rules_.signature->decls();

    std::vector<GroundAtom> kept;
    std::vector<GroundAtom> spurious;
    for (const auto& a : atoms) {
      if (rng.bernoulli(spec_.noise)) {
        seg.noise.dropped.push_back(a);
      } else {
        kept.push_back(a);
      }
      if (rng.bernoulli(spec_.noise) && !decls.empty() && !universe.empty()) {
        const auto& d = decls[rng.below(decls.size())];
        GroundAtom extra{d.name, {}, true};
        for (std::size_t i = 0; i < d.arity; ++i) {
          extra.args.push_back(universe[rng.below(universe.size())]);
        }
        spurious.push_back(std::move(extra));
      }
    }
    std::set<GroundAtom> kept_set(kept.begin(), kept.end());
    for (auto& s : spurious) {
      if (!atoms.contains(s) && kept_set.insert(s).second) seg.noise.inserted.push_back(s);
    }
    seg.grounding = std::make_shared<const GroundingSet>(
        rules_.signature, std::vector<GroundAtom>(kept_set.begin(), kept_set.end()));
    return seg;
  }

 private:
  void instantiate_fresh(const AssertionTemplate& tmpl, std::set<GroundAtom>& atoms,
                         std::map<std::string, int>& counters) const {
    Witness w;
    for (const auto& var : tmpl.vars) {
      std::string prefix = "obj";
      for (const auto& atom : tmpl.body) {
        if (atom.positive && atom.args.size() == 1 && atom.args[0] == var) {
          prefix = atom.predicate;
          break;
        }
      }
      w.emplace_back(var, ObjectId{prefix + std::to_string(++counters[prefix])});
    }
    for (auto& atom : instantiate(tmpl, w)) {
      if (atom.positive) atoms.insert(std::move(atom));
    }
  }

  const RulesDb& rules_;
  const DatasetSpec& spec_;
};

void check_spec(const RulesDb& rules, const DatasetSpec& spec) {
  if (!(spec.noise >= 0.0 && spec.noise < 1.0)) throw ConfigError("noise must lie in [0, 1)");
  if (spec.eval_batch_size == 0) throw ConfigError("eval batch size must be positive");
  if (!(spec.background_rate >= 0.0 && spec.background_rate <= 1.0)) {
    throw ConfigError("background rate must lie in [0, 1]");
  }
  std::set<ClassId> classes;
  for (const auto* m : {&spec.ftd_counts, &spec.ed_counts, &spec.test_counts}) {
    for (const auto& [c, n] : *m) classes.insert(c);
  }
  if (spec.background_class != 0) classes.insert(spec.background_class);
  for (auto c : classes) {
    if (!rules.task.find(TaskKind::main, c)) {
      throw ConfigError("dataset requests unknown main class " + std::to_string(c));
    }
    for (TaskKind kind : {TaskKind::main, TaskKind::aux}) {
      const auto* imp = rules.implication(kind, c);
      if (!imp || imp->required.empty()) {
        throw ConfigError("cannot generate class " + std::to_string(c) + ": " +
                          std::string(to_string(kind)) + " proxy set is empty");
      }
    }
  }
  for (const auto& m : rules.task.main_classes) {
    auto it = spec.ed_counts.find(m.id);
    if (!spec.ed_counts.empty() && (it == spec.ed_counts.end() || it->second == 0)) {
      throw ConfigError("evaluation data needs at least one segment of main class " +
                        std::to_string(m.id));
    }
  }
}

enum Split : std::uint64_t { kFtd = 1, kEd = 2, kTest = 3 };

std::vector<SimulatedSegment> build_split(const SceneBuilder& builder,
                                          const std::map<ClassId, std::size_t>& counts,
                                          const DatasetSpec& spec, Split split,
                                          const char* prefix) {
  std::vector<SimulatedSegment> out;
  for (const auto& [c, n] : counts) {
    for (std::size_t k = 0; k < n; ++k) {
      auto rng = RandomStream::derive(spec.seed, {split, static_cast<std::uint64_t>(c), k});
      char id[64];
      std::snprintf(id, sizeof id, "%s-c%d-%04zu", prefix, c, k);
      out.push_back(builder.build(id, c, rng));
    }
  }
  return out;
}

}  // namespace

Dataset generate_dataset(const RulesDb& rules, const DatasetSpec& spec) {
  check_spec(rules, spec);
  SceneBuilder builder(rules, spec);
  Dataset ds;
  ds.ftd = build_split(builder, spec.ftd_counts, spec, kFtd, "ftd");
  ds.test = build_split(builder, spec.test_counts, spec, kTest, "test");

  // Round-robin over classes so each eval batch mixes classes and every class
  // lands in at least one batch.
  auto ed = build_split(builder, spec.ed_counts, spec, kEd, "ed");
  std::map<ClassId, std::vector<SimulatedSegment*>> by_class;
  for (auto& s : ed) by_class[s.main_label].push_back(&s);
  std::vector<SimulatedSegment> interleaved;
  for (std::size_t round = 0; interleaved.size() < ed.size(); ++round) {
    for (auto& [c, list] : by_class) {
      if (round < list.size()) interleaved.push_back(std::move(*list[round]));
    }
  }
  for (std::size_t start = 0; start < interleaved.size(); start += spec.eval_batch_size) {
    EvalBatch b;
    b.id = "ed-batch-" + std::to_string(ds.ed.size());
    auto stop = std::min(interleaved.size(), start + spec.eval_batch_size);
    for (std::size_t i = start; i < stop; ++i) b.segments.push_back(std::move(interleaved[i]));
    ds.ed.push_back(std::move(b));
  }
  return ds;
}

namespace {

nlohmann::json atom_list(const std::vector<GroundAtom>& atoms) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : atoms) arr.push_back(to_string(a));
  return arr;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::path root(out_dir);
  fs::create_directories(root / "groundings");
  auto record = [&](const SimulatedSegment& s) {
    auto rel = fs::path("groundings") / (s.segment_id + ".ground");
    write_text(root / rel, print_groundings(*s.grounding));
    return nlohmann::json{{"segmentId", s.segment_id},
                          {"mainLabel", s.main_label},
                          {"auxLabel", s.aux_label},
                          {"groundingsFile", rel.generic_string()},
                          {"noise", {{"dropped", atom_list(s.noise.dropped)},
                                     {"inserted", atom_list(s.noise.inserted)}}}};
  };
  auto manifest = [&](const std::string& name, const std::vector<nlohmann::json>& recs) {
    nlohmann::json j{{"records", recs}};
    write_text(root / name, j.dump(2) + "\n");
  };
  std::vector<nlohmann::json> ftd, ed, test;
  for (const auto& s : ds.ftd) ftd.push_back(record(s));
  for (const auto& b : ds.ed) {
    for (const auto& s : b.segments) {
      auto r = record(s);
      r["evalBatch"] = b.id;
      ed.push_back(std::move(r));
    }
  }
  for (const auto& s : ds.test) test.push_back(record(s));
  manifest("ftd.json", ftd);
  manifest("ed.json", ed);
  manifest("test.json", test);
}

Dataset read_dataset(const std::string& dir, const RulesDb& rules) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  auto load = [&](const std::string& name, auto&& sink) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file((root / name).string()));
      for (const auto& rec : j.at("records")) {
        SimulatedSegment s;
        s.segment_id = rec.at("segmentId").get<std::string>();
        s.main_label = rec.at("mainLabel").get<ClassId>();
        s.aux_label = rec.at("auxLabel").get<ClassId>();
        auto path = root / rec.at("groundingsFile").get<std::string>();
        s.grounding = std::make_shared<const GroundingSet>(
            parse_groundings(read_file(path.string()), rules));
        sink(rec, std::move(s));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError((root / name).string() + ": " + e.what());
    }
  };
  Dataset ds;
  load("ftd.json", [&](const nlohmann::json&, SimulatedSegment s) { ds.ftd.push_back(std::move(s)); });
  load("test.json", [&](const nlohmann::json&, SimulatedSegment s) { ds.test.push_back(std::move(s)); });
  load("ed.json", [&](const nlohmann::json& rec, SimulatedSegment s) {
    auto batch = rec.value("evalBatch", std::string("ed-batch-0"));
    if (ds.ed.empty() || ds.ed.back().id != batch) ds.ed.push_back({batch, {}});
    ds.ed.back().segments.push_back(std::move(s));
  });
  return ds;
}

}  // namespace cdft
