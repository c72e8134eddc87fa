#include "cdft/rules.hpp"

#include <algorithm>
#include <set>

#include "cdft/error.hpp"

namespace cdft {

const ClassDesc* TaskSpec::find(TaskKind kind, ClassId id) const {
  const auto& list = classes(kind);
  auto it = std::find_if(list.begin(), list.end(),
                         [id](const ClassDesc& c) { return c.id == id; });
  return it == list.end() ? nullptr : &*it;
}

std::vector<ClassId> TaskSpec::class_ids(TaskKind kind) const {
  std::vector<ClassId> ids;
  for (const auto& c : classes(kind)) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void RulesDb::validate() const {
  for (const auto& [id, tmpl] : assertions) {
    if (id != tmpl.id) {
      throw ConfigError("assertion stored under '" + id + "' is named '" + tmpl.id + "'");
    }
    try {
      cdft::validate(tmpl, *signature);
    } catch (const MalformedTemplate& e) {
      throw ConfigError(e.what());
    }
  }
  for (TaskKind kind : {TaskKind::main, TaskKind::aux}) {
    std::set<ClassId> seen;
    for (const auto& c : task.classes(kind)) {
      if (c.id < 1) {
        throw ConfigError(std::string(to_string(kind)) + " class id " +
                          std::to_string(c.id) + " must be positive");
      }
      if (!seen.insert(c.id).second) {
        throw ConfigError("duplicate " + std::string(to_string(kind)) + " class " +
                          std::to_string(c.id));
      }
      if (c.extra && kind == TaskKind::main) {
        throw ConfigError("main class " + std::to_string(c.id) +
                          " cannot be flagged extra");
      }
    }
  }
  for (const auto& m : task.main_classes) {
    const auto* a = task.find(TaskKind::aux, m.id);
    if (!a || a->extra) {
      throw ConfigError("main class " + std::to_string(m.id) +
                        " has no auxiliary partner (class counts differ)");
    }
  }
  for (const auto& a : task.aux_classes) {
    if (!a.extra && !task.find(TaskKind::main, a.id)) {
      throw ConfigError("aux class " + std::to_string(a.id) +
                        " has no main partner and is not flagged extra");
    }
  }
  std::set<std::string> proxies;
  for (const auto& p : task.proxy_ids) {
    if (!assertions.contains(p)) {
      throw ConfigError("proxy id '" + p + "' is not a declared assertion");
    }
    if (!proxies.insert(p).second) {
      throw ConfigError("proxy id '" + p + "' listed twice");
    }
  }
  std::set<std::pair<TaskKind, ClassId>> implied;
  for (const auto& imp : implications) {
    if (!task.find(imp.kind, imp.class_id)) {
      throw ConfigError("implication references undeclared " +
                        std::string(to_string(imp.kind)) + " class " +
                        std::to_string(imp.class_id));
    }
    if (!implied.insert({imp.kind, imp.class_id}).second) {
      throw ConfigError("duplicate implication for " +
                        std::string(to_string(imp.kind)) + " class " +
                        std::to_string(imp.class_id));
    }
    if (imp.required.empty()) {
      throw ConfigError("implication for " + std::string(to_string(imp.kind)) +
                        " class " + std::to_string(imp.class_id) +
                        " requires no assertions");
    }
    for (const auto& id : imp.required) assertion(id);
  }
}

const AssertionTemplate& RulesDb::assertion(const std::string& id) const {
  auto it = assertions.find(id);
  if (it == assertions.end()) {
    throw ConfigError("unknown assertion id '" + id + "'");
  }
  return it->second;
}

const Implication* RulesDb::implication(TaskKind kind, ClassId id) const {
  auto it = std::find_if(implications.begin(), implications.end(),
                         [&](const Implication& i) {
                           return i.kind == kind && i.class_id == id;
                         });
  return it == implications.end() ? nullptr : &*it;
}

bool operator==(const RulesDb& a, const RulesDb& b) {
  return *a.signature == *b.signature && a.assertions == b.assertions &&
         a.implications == b.implications && a.task == b.task;
}

ImplicationResult check_implication(const Implication& imp,
                                    const GroundingSet& grounding,
                                    const RulesDb& rules) {
  std::set<std::string> required(imp.required.begin(), imp.required.end());
  ImplicationResult out;
  for (const auto& id : required) {
    auto result = satisfy(rules.assertion(id), grounding);
    if (!result.satisfied) out.offending.push_back(id);
    out.checks.push_back({id, std::move(result)});
  }
  out.holds = out.offending.empty();
  return out;
}

}  // namespace cdft
