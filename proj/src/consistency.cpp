#include "cdft/consistency.hpp"

#include <sstream>

#include "cdft/error.hpp"

namespace cdft {
namespace {

const ClassDesc& require_class(const RulesDb& rules, TaskKind kind, ClassId id) {
  const auto* c = rules.task.find(kind, id);
  if (!c) {
    std::string valid;
    for (auto v : rules.task.class_ids(kind)) {
      valid += (valid.empty() ? "" : ", ") + std::to_string(v);
    }
    throw ConfigError("unknown " + std::string(to_string(kind)) + " class " +
                      std::to_string(id) + " (valid: " + valid + ")");
  }
  return *c;
}

ImplicationResult check_class(const ProxyMap& pm, TaskKind kind, ClassId id,
                              const GroundingSet& g, const RulesDb& rules) {
  if (!pm.has(id)) {
    throw ConfigError("no proxy entry for " + std::string(to_string(kind)) + " class " +
                      std::to_string(id));
  }
  return check_implication({id, kind, pm.required(id)}, g, rules);
}

const GroundingSet& grounding_of(const SegmentEvaluation& ev) {
  if (!ev.grounding) {
    throw ConfigError("segment '" + ev.segment_id + "' has no grounding");
  }
  return *ev.grounding;
}

}  // namespace

ConsistencyVerdict check_segment(const SegmentEvaluation& ev, const RulesDb& rules,
                                 const ProxyPair& proxies) {
  require_class(rules, TaskKind::main, ev.main_prediction);
  const auto& aux_class = require_class(rules, TaskKind::aux, ev.aux_prediction);
  const auto& g = grounding_of(ev);

  ConsistencyVerdict v;
  v.condition_a = !aux_class.extra && ev.main_prediction == ev.aux_prediction;
  auto main = check_class(proxies.main, TaskKind::main, ev.main_prediction, g, rules);
  auto aux = check_class(proxies.aux, TaskKind::aux, ev.aux_prediction, g, rules);
  v.condition_b = main.holds;
  v.condition_c = aux.holds;
  v.offending_main = std::move(main.offending);
  v.offending_aux = std::move(aux.offending);
  v.main_checks = std::move(main.checks);
  v.aux_checks = std::move(aux.checks);
  if (!v.condition_a || !v.condition_b) {
    v.implicated.insert({TaskKind::main, ev.main_prediction});
  }
  if (!v.condition_a || !v.condition_c) {
    v.implicated.insert({TaskKind::aux, ev.aux_prediction});
  }
  return v;
}

ConsistencyVerdict check_segment_no_aux(const SegmentEvaluation& ev, const RulesDb& rules,
                                        const ProxyPair& proxies) {
  require_class(rules, TaskKind::main, ev.main_prediction);
  const auto& g = grounding_of(ev);
  ConsistencyVerdict v;
  auto main = check_class(proxies.main, TaskKind::main, ev.main_prediction, g, rules);
  v.condition_b = main.holds;
  v.offending_main = std::move(main.offending);
  v.main_checks = std::move(main.checks);
  if (!v.condition_b) v.implicated.insert({TaskKind::main, ev.main_prediction});
  return v;
}

std::vector<ConsistencyVerdict> evaluate_batch(std::span<const SegmentEvaluation> batch,
                                               const RulesDb& rules,
                                               const ProxyPair& proxies, bool no_aux,
                                               Execution exec) {
  std::vector<ConsistencyVerdict> out(batch.size());
  auto one = [&](std::size_t i) {
    out[i] = no_aux ? check_segment_no_aux(batch[i], rules, proxies)
                    : check_segment(batch[i], rules, proxies);
  };
  if (exec == Execution::serial) {
    for (std::size_t i = 0; i < batch.size(); ++i) one(i);
    return out;
  }
  ExceptionSlot slot;
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    slot.run([&] { one(static_cast<std::size_t>(i)); });
  }
  slot.rethrow();
  return out;
}

namespace {

nlohmann::json witness_json(const std::optional<Witness>& w) {
  if (!w) return nullptr;
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [var, obj] : *w) j.push_back({{"var", var}, {"object", obj.value}});
  return j;
}

nlohmann::json implicated_json(const auto& refs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : refs) {
    arr.push_back({{"task", std::string(to_string(r.kind))}, {"class", r.id}});
  }
  return arr;
}

}  // namespace

nlohmann::json to_json(const ConsistencyVerdict& v) {
  return {{"consistent", v.consistent()},
          {"conditions", {{"A", v.condition_a}, {"B", v.condition_b}, {"C", v.condition_c}}},
          {"offendingMain", v.offending_main},
          {"offendingAux", v.offending_aux},
          {"implicated", implicated_json(v.implicated)}};
}

Justification justify(const SegmentEvaluation& ev, const RulesDb& rules,
                      const ProxyPair& proxies, bool no_aux) {
  auto verdict = no_aux ? check_segment_no_aux(ev, rules, proxies)
                        : check_segment(ev, rules, proxies);
  Justification j;
  j.segment_id = ev.segment_id;
  j.no_aux = no_aux;
  j.main_class = ev.main_prediction;
  j.main_description = rules.task.find(TaskKind::main, ev.main_prediction)->description;
  if (!no_aux) {
    j.aux_class = ev.aux_prediction;
    j.aux_description = rules.task.find(TaskKind::aux, ev.aux_prediction)->description;
  }
  j.condition_a = verdict.condition_a;
  j.condition_b = verdict.condition_b;
  j.condition_c = verdict.condition_c;
  auto add = [&](TaskKind kind, const std::vector<AssertionCheck>& checks) {
    for (const auto& c : checks) {
      const auto& tmpl = rules.assertion(c.id);
      AssertionReport r{kind, c.id, c.result.satisfied, c.result.witness, {}};
      r.text = c.result.witness ? describe(tmpl, *c.result.witness)
                                : "no objects satisfy '" + c.id + "'";
      j.assertions.push_back(std::move(r));
    }
  };
  add(TaskKind::main, verdict.main_checks);
  add(TaskKind::aux, verdict.aux_checks);
  j.offending_main = verdict.offending_main;
  j.offending_aux = verdict.offending_aux;
  j.implicated.assign(verdict.implicated.begin(), verdict.implicated.end());
  j.reliable = verdict.consistent();
  return j;
}

std::string Justification::text() const {
  std::ostringstream out;
  auto yes = [](bool b) { return b ? "yes" : "NO"; };
  out << "segment " << segment_id << ": " << (reliable ? "consistent" : "INCONSISTENT")
      << "\n";
  out << "  main prediction: " << main_class << " \"" << main_description << "\"\n";
  if (aux_class) {
    out << "  aux prediction:  " << *aux_class << " \"" << aux_description << "\"\n";
    out << "  (A) class agreement: " << yes(condition_a);
    if (!condition_a) {
      out << " - main \"" << main_description << "\" does not correspond to aux \""
          << aux_description << "\"";
    }
    out << "\n";
  } else {
    out << "  (A) class agreement: not checked (no aux recognizer)\n";
  }
  auto section = [&](const char* label, TaskKind kind, bool ok) {
    out << label << yes(ok) << "\n";
    for (const auto& a : assertions) {
      if (a.task != kind) continue;
      out << "      [" << (a.satisfied ? "ok" : "FAILED") << "] " << a.id << ": " << a.text
          << "\n";
    }
  };
  section("  (B) main proxy activities observed: ", TaskKind::main, condition_b);
  if (aux_class) {
    section("  (C) aux proxy activities observed: ", TaskKind::aux, condition_c);
  } else {
    out << "  (C) aux proxy activities observed: not checked (no aux recognizer)\n";
  }
  if (!implicated.empty()) {
    out << "  implicated classes:";
    for (const auto& r : implicated) out << " " << to_string(r.kind) << ":" << r.id;
    out << "\n";
  }
  out << "  reliable: " << (reliable ? "yes" : "no") << "\n";
  return out.str();
}

nlohmann::json to_json(const Justification& j) {
  nlohmann::json out;
  out["schema"] = Justification::kSchema;
  out["segmentId"] = j.segment_id;
  out["noAux"] = j.no_aux;
  out["main"] = {{"class", j.main_class}, {"description", j.main_description}};
  if (j.aux_class) {
    out["aux"] = {{"class", *j.aux_class}, {"description", j.aux_description}};
  } else {
    out["aux"] = nullptr;
  }
  out["conditions"] = {{"A", j.condition_a}, {"B", j.condition_b}, {"C", j.condition_c}};
  auto& arr = out["assertions"] = nlohmann::json::array();
  for (const auto& a : j.assertions) {
    arr.push_back({{"task", std::string(to_string(a.task))},
                   {"id", a.id},
                   {"satisfied", a.satisfied},
                   {"witness", witness_json(a.witness)},
                   {"text", a.text}});
  }
  out["offendingMain"] = j.offending_main;
  out["offendingAux"] = j.offending_aux;
  out["implicated"] = implicated_json(j.implicated);
  out["reliable"] = j.reliable;
  return out;
}

Justification justification_from_json(const nlohmann::json& in) {
  try {
    if (in.at("schema").get<std::string>() != Justification::kSchema) {
      throw ConfigError("unsupported justification schema '" +
                        in.at("schema").get<std::string>() + "'");
    }
    Justification j;
    j.segment_id = in.at("segmentId").get<std::string>();
    j.no_aux = in.at("noAux").get<bool>();
    j.main_class = in.at("main").at("class").get<ClassId>();
    j.main_description = in.at("main").at("description").get<std::string>();
    if (!in.at("aux").is_null()) {
      j.aux_class = in.at("aux").at("class").get<ClassId>();
      j.aux_description = in.at("aux").at("description").get<std::string>();
    }
    const auto& c = in.at("conditions");
    j.condition_a = c.at("A").get<bool>();
    j.condition_b = c.at("B").get<bool>();
    j.condition_c = c.at("C").get<bool>();
    for (const auto& a : in.at("assertions")) {
      AssertionReport r;
      r.task = parse_task_kind(a.at("task").get<std::string>());
      r.id = a.at("id").get<std::string>();
      r.satisfied = a.at("satisfied").get<bool>();
      if (!a.at("witness").is_null()) {
        Witness w;
        for (const auto& b : a.at("witness")) {
          w.emplace_back(b.at("var").get<std::string>(),
                         ObjectId{b.at("object").get<std::string>()});
        }
        r.witness = std::move(w);
      }
      r.text = a.at("text").get<std::string>();
      j.assertions.push_back(std::move(r));
    }
    j.offending_main = in.at("offendingMain").get<std::vector<std::string>>();
    j.offending_aux = in.at("offendingAux").get<std::vector<std::string>>();
    for (const auto& r : in.at("implicated")) {
      j.implicated.push_back(
          {parse_task_kind(r.at("task").get<std::string>()), r.at("class").get<ClassId>()});
    }
    j.reliable = in.at("reliable").get<bool>();
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed justification: ") + e.what());
  }
}

}  // namespace cdft
