#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cdft/logic.hpp"

namespace cdft {

struct ClassDesc {
  ClassId id = 0;
  std::string description;
  /// Auxiliary class without a main partner. Only legal for aux classes.
  bool extra = false;

  friend bool operator==(const ClassDesc&, const ClassDesc&) = default;
};

/// Main and auxiliary activity sets plus the proxy assertion pool. Main and
/// (non-extra) aux classes correspond one-to-one through their ids.
struct TaskSpec {
  std::vector<ClassDesc> main_classes;
  std::vector<ClassDesc> aux_classes;
  std::vector<std::string> proxy_ids;

  const std::vector<ClassDesc>& classes(TaskKind kind) const {
    return kind == TaskKind::main ? main_classes : aux_classes;
  }
  const ClassDesc* find(TaskKind kind, ClassId id) const;
  std::vector<ClassId> class_ids(TaskKind kind) const;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// The prebuilt logic rules database.
struct RulesDb {
  std::shared_ptr<const Signature> signature = std::make_shared<Signature>();
  std::map<std::string, AssertionTemplate> assertions;
  std::vector<Implication> implications;
  TaskSpec task;

  /// Throws ConfigError naming the first broken cross-reference.
  void validate() const;

  /// Throws ConfigError naming the id when it does not resolve.
  const AssertionTemplate& assertion(const std::string& id) const;
  const Implication* implication(TaskKind kind, ClassId id) const;

  friend bool operator==(const RulesDb& a, const RulesDb& b);
};

struct AssertionCheck {
  std::string id;
  SatisfactionResult result;

  friend bool operator==(const AssertionCheck&, const AssertionCheck&) = default;
};

struct ImplicationResult {
  bool holds = false;
  std::vector<std::string> offending;  // sorted
  std::vector<AssertionCheck> checks;  // one per required assertion, sorted by id
};

/// Evaluates every required assertion independently against the grounding.
/// Throws ConfigError for an assertion id missing from `rules`.
ImplicationResult check_implication(const Implication& imp,
                                    const GroundingSet& grounding,
                                    const RulesDb& rules);

}  // namespace cdft
