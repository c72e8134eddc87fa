#pragma once

#include <compare>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cdft/execution.hpp"
#include "cdft/logic.hpp"
#include "cdft/proxy_miner.hpp"
#include "cdft/rules.hpp"
#include "json.hpp"

namespace cdft {

struct ClassRef {
  TaskKind kind = TaskKind::main;
  ClassId id = 0;

  friend auto operator<=>(const ClassRef&, const ClassRef&) = default;
};

/// Mined (or supplied) proxy sets for both recognizers.
struct ProxyPair {
  ProxyMap main;
  ProxyMap aux;
};

/// Recognizer outputs and the tracker grounding for one segment.
struct SegmentEvaluation {
  std::string segment_id;
  ClassId main_prediction = 0;
  ClassId aux_prediction = 0;
  std::shared_ptr<const GroundingSet> grounding;
};

struct ConsistencyVerdict {
  bool condition_a = true;  // both recognizers name corresponding classes
  bool condition_b = true;  // S^m of the main prediction observed
  bool condition_c = true;  // S^a of the aux prediction observed
  std::vector<std::string> offending_main;
  std::vector<std::string> offending_aux;
  std::set<ClassRef> implicated;
  std::vector<AssertionCheck> main_checks;
  std::vector<AssertionCheck> aux_checks;

  bool consistent() const { return condition_a && condition_b && condition_c; }
};

/// Conditions A, B and C. An A failure implicates both predicted classes, a
/// B failure the main class and a C failure the aux class. An aux prediction
/// of an `extra` class never agrees with the main prediction.
/// Throws ConfigError when a prediction has no proxy entry.
ConsistencyVerdict check_segment(const SegmentEvaluation& ev, const RulesDb& rules,
                                 const ProxyPair& proxies);

/// Main recognizer only: A and C hold vacuously and only B is evaluated.
ConsistencyVerdict check_segment_no_aux(const SegmentEvaluation& ev, const RulesDb& rules,
                                        const ProxyPair& proxies);

/// Verdicts in input order. The serial path is the reference for the OpenMP one.
std::vector<ConsistencyVerdict> evaluate_batch(std::span<const SegmentEvaluation> batch,
                                               const RulesDb& rules,
                                               const ProxyPair& proxies, bool no_aux,
                                               Execution exec = Execution::parallel);

nlohmann::json to_json(const ConsistencyVerdict& v);

struct AssertionReport {
  TaskKind task = TaskKind::main;
  std::string id;
  bool satisfied = false;
  std::optional<Witness> witness;
  std::string text;

  friend bool operator==(const AssertionReport&, const AssertionReport&) = default;
};

/// Inference-time justification: the verdict spelled out per condition and
/// assertion, with witnesses substituted into the assertion glosses.
struct Justification {
  static constexpr const char* kSchema = "cdft.justification/1";

  std::string segment_id;
  bool no_aux = false;
  ClassId main_class = 0;
  std::string main_description;
  std::optional<ClassId> aux_class;
  std::string aux_description;
  bool condition_a = true;
  bool condition_b = true;
  bool condition_c = true;
  std::vector<AssertionReport> assertions;
  std::vector<std::string> offending_main;
  std::vector<std::string> offending_aux;
  std::vector<ClassRef> implicated;
  bool reliable = false;

  std::string text() const;

  friend bool operator==(const Justification&, const Justification&) = default;
};

Justification justify(const SegmentEvaluation& ev, const RulesDb& rules,
                      const ProxyPair& proxies, bool no_aux = false);

nlohmann::json to_json(const Justification& j);
/// Throws ConfigError on a schema mismatch or missing field.
Justification justification_from_json(const nlohmann::json& j);

}  // namespace cdft
