#pragma once

// Simulated recognizers and synthetic labeled segments. Real vision models
// plug in behind the Recognizer interface; the fine-tuning loop only sees it.

#include <cstdint>
#include <initializer_list>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdft/logic.hpp"
#include "cdft/rules.hpp"
#include "json.hpp"

namespace cdft {

/// Seeded stream of uniform draws. Every value is a function of the seed and
/// the number of draws taken so far.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Stream keyed by a seed plus a tuple of keys (run, purpose, segment...).
  static RandomStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next() {
    ++position_;
    return engine_();
  }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t position() const { return position_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t position_ = 0;
};

/// Stable 64-bit FNV-1a hash, used to key per-segment streams.
std::uint64_t stable_hash(std::string_view text);

struct NoiseRecord {
  std::vector<GroundAtom> dropped;
  std::vector<GroundAtom> inserted;
};

struct SimulatedSegment {
  std::string segment_id;
  ClassId main_label = 0;
  ClassId aux_label = 0;
  std::shared_ptr<const GroundingSet> grounding;
  NoiseRecord noise;

  ClassId label(TaskKind kind) const {
    return kind == TaskKind::main ? main_label : aux_label;
  }
};

struct RecognizerProfile {
  TaskKind task = TaskKind::main;
  std::map<ClassId, double> accuracy;
  /// Per true class, weights over the wrong classes. Missing rows are uniform.
  std::map<ClassId, std::map<ClassId, double>> confusion;
  double learning_rate = 0.25;
  double forgetting = 0.01;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range probabilities or weights.
  void validate() const;

  /// Same accuracy for every class of the task in `rules`.
  static RecognizerProfile uniform(const RulesDb& rules, TaskKind task, double accuracy,
                                   double learning_rate, double forgetting,
                                   std::uint64_t seed);

  friend bool operator==(const RecognizerProfile&, const RecognizerProfile&) = default;
};

/// Returns the true class with probability accuracy[true class], otherwise a
/// wrong class drawn from the confusion weights. Consumes two draws.
/// Throws ConfigError for a class the profile does not know.
ClassId infer(const RecognizerProfile& profile, const SimulatedSegment& seg,
              RandomStream& stream);

/// Each target class present in the batch moves a -> a + lr * (1 - a);
/// every other class decays a -> a * (1 - forgetting).
RecognizerProfile fine_tune(const RecognizerProfile& profile,
                            std::span<const SimulatedSegment> batch,
                            const std::set<ClassId>& target_classes);

nlohmann::json to_json(const RecognizerProfile& p);
RecognizerProfile profile_from_json(const nlohmann::json& j);

/// The seam between the fine-tuning loop and a model backend.
class Recognizer {
 public:
  virtual ~Recognizer() = default;

  virtual TaskKind task() const = 0;
  virtual ClassId classify(const SimulatedSegment& seg, RandomStream& stream) const = 0;
  virtual std::unique_ptr<Recognizer> fine_tuned(
      std::span<const SimulatedSegment> batch,
      const std::set<ClassId>& target_classes) const = 0;
  /// Current per-class accuracy when the backend can report it.
  virtual std::map<ClassId, double> class_accuracy() const = 0;
  virtual std::unique_ptr<Recognizer> clone() const = 0;
};

class SimulatedRecognizer final : public Recognizer {
 public:
  explicit SimulatedRecognizer(RecognizerProfile profile);

  TaskKind task() const override { return profile_.task; }
  ClassId classify(const SimulatedSegment& seg, RandomStream& stream) const override;
  std::unique_ptr<Recognizer> fine_tuned(
      std::span<const SimulatedSegment> batch,
      const std::set<ClassId>& target_classes) const override;
  std::map<ClassId, double> class_accuracy() const override { return profile_.accuracy; }
  std::unique_ptr<Recognizer> clone() const override;

  const RecognizerProfile& profile() const { return profile_; }

 private:
  RecognizerProfile profile_;
};

struct EvalBatch {
  std::string id;
  std::vector<SimulatedSegment> segments;
};

struct DatasetSpec {
  /// Segments per main class; the aux label is the corresponding aux class.
  std::map<ClassId, std::size_t> ftd_counts;
  std::map<ClassId, std::size_t> ed_counts;
  std::map<ClassId, std::size_t> test_counts;
  std::size_t eval_batch_size = 20;
  /// Per-atom drop probability and per-atom spurious-insert probability.
  double noise = 0.02;
  /// Class whose proxy activities form the scene background (0 = none) and
  /// the probability that a scene contains that background.
  ClassId background_class = 0;
  double background_rate = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

struct Dataset {
  std::vector<SimulatedSegment> ftd;
  std::vector<EvalBatch> ed;
  std::vector<SimulatedSegment> test;
};

/// Builds FTD, ED (stratified into eval batches so every class appears in at
/// least one batch) and TEST. Each scene instantiates the proxy assertions
/// the rules require for its main and aux class on fresh objects, optionally
/// adds background activity, then applies atom drop/insert noise.
/// Throws ConfigError for a class without implications or bad parameters.
Dataset generate_dataset(const RulesDb& rules, const DatasetSpec& spec);

/// Writes `<prefix>.json` manifests plus one groundings file per segment.
void write_dataset(const Dataset& ds, const std::string& out_dir);
/// Reads back what write_dataset produced.
Dataset read_dataset(const std::string& dir, const RulesDb& rules);

}  // namespace cdft
