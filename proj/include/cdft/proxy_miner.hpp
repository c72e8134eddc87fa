#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cdft/execution.hpp"
#include "cdft/logic.hpp"
#include "cdft/rules.hpp"
#include "json.hpp"

namespace cdft {

/// Exact rational threshold in (0, 1].
class Threshold {
 public:
  /// Accepts a decimal ("0.9", "1", ".875") or a ratio ("9/10").
  /// Throws ConfigError when malformed or outside (0, 1].
  static Threshold parse(std::string_view text);
  static Threshold ratio(std::uint64_t num, std::uint64_t den);

  /// count / total >= threshold, compared without rounding.
  bool admits(std::uint64_t count, std::uint64_t total) const;

  std::uint64_t numerator() const { return num_; }
  std::uint64_t denominator() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  /// Shortest exact decimal when one exists, otherwise "num/den".
  std::string to_string() const;

  friend bool operator==(const Threshold&, const Threshold&) = default;

 private:
  Threshold(std::uint64_t num, std::uint64_t den);
  std::uint64_t num_ = 9;
  std::uint64_t den_ = 10;
};

struct LabeledSegmentRecord {
  std::string segment_id;
  ClassId main_label = 0;
  ClassId aux_label = 0;
  GroundingSet grounding;

  ClassId label(TaskKind kind) const {
    return kind == TaskKind::main ? main_label : aux_label;
  }
};

struct ClassFrequencies {
  std::uint64_t total = 0;
  std::map<std::string, std::uint64_t> hits;  // assertion id -> segments where it holds

  friend bool operator==(const ClassFrequencies&, const ClassFrequencies&) = default;
};

/// The mined sets S_i per class of one task.
struct ProxyMap {
  TaskKind kind = TaskKind::main;
  Threshold threshold = Threshold::parse("0.9");
  std::map<ClassId, std::vector<std::string>> per_class;  // ids sorted
  std::map<ClassId, ClassFrequencies> frequencies;

  /// Throws ConfigError when the class has no entry.
  const std::vector<std::string>& required(ClassId id) const;
  bool has(ClassId id) const { return per_class.contains(id); }

  friend bool operator==(const ProxyMap&, const ProxyMap&) = default;
};

/// Per class, keeps the candidates that hold in at least `threshold` of the
/// class's records. Every non-extra class of the task needs at least one
/// record (ConfigError listing the missing classes otherwise); extra aux
/// classes without records get an empty entry.
ProxyMap mine_proxies(const std::vector<LabeledSegmentRecord>& dataset,
                      const std::vector<AssertionTemplate>& candidates,
                      const Threshold& threshold, const RulesDb& rules,
                      TaskKind kind, Execution exec = Execution::parallel);

/// Row-major records x candidates satisfaction flags. The serial path is the
/// reference for the OpenMP one.
std::vector<std::uint8_t> satisfaction_matrix(
    const std::vector<LabeledSegmentRecord>& dataset,
    const std::vector<AssertionTemplate>& candidates, Execution exec);

struct ImplicationPackage {
  std::vector<Implication> implications;
  std::vector<ClassId> omitted;  // classes whose mined set is empty
};

ImplicationPackage proxy_map_to_implications(const ProxyMap& pm);

/// Proxy sets taken directly from the implications in the rules database.
ProxyMap proxy_map_from_rules(const RulesDb& rules, TaskKind kind);

/// Candidate pool: the task's proxy ids, or every assertion when none listed.
std::vector<AssertionTemplate> candidate_pool(const RulesDb& rules);

nlohmann::json to_json(const ProxyMap& pm);
ProxyMap proxy_map_from_json(const nlohmann::json& j);

/// Reads a dataset manifest:
///   {"records": [{"segmentId", "mainLabel", "auxLabel", "groundingsFile"}]}
/// Grounding paths are relative to the manifest's directory.
std::vector<LabeledSegmentRecord> load_manifest(const std::string& path,
                                                const RulesDb& rules);

}  // namespace cdft
