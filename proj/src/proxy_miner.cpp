#include "cdft/proxy_miner.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include "cdft/error.hpp"
#include "cdft/rules_dsl.hpp"

namespace cdft {

Threshold::Threshold(std::uint64_t num, std::uint64_t den) {
  if (den == 0 || num == 0 || num > den) {
    throw ConfigError("threshold must lie in (0, 1], got " + std::to_string(num) + "/" +
                      std::to_string(den));
  }
  auto g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

Threshold Threshold::ratio(std::uint64_t num, std::uint64_t den) {
  return Threshold(num, den);
}

Threshold Threshold::parse(std::string_view text) {
  auto bad = [&]() -> Threshold {
    throw ConfigError("invalid threshold '" + std::string(text) +
                      "' (expected a decimal or ratio in (0, 1])");
  };
  auto digits = [](std::string_view s) {
    return !s.empty() && s.size() <= 18 &&
           std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    auto n = text.substr(0, slash);
    auto d = text.substr(slash + 1);
    if (!digits(n) || !digits(d)) return bad();
    return Threshold(std::stoull(std::string(n)), std::stoull(std::string(d)));
  }
  auto dot = text.find('.');
  std::string_view whole = text.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? "" : text.substr(dot + 1);
  if (whole.empty() && frac.empty()) return bad();
  if (!whole.empty() && !digits(whole)) return bad();
  if (dot != std::string_view::npos && !frac.empty() && !digits(frac)) return bad();
  std::uint64_t den = 1;
  for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
  std::uint64_t w = whole.empty() ? 0 : std::stoull(std::string(whole));
  std::uint64_t f = frac.empty() ? 0 : std::stoull(std::string(frac));
  if (w > 1) return bad();
  if (w == 1 && f != 0) return bad();
  std::uint64_t num = w * den + f;
  if (num == 0) return bad();
  return Threshold(num, den);
}

bool Threshold::admits(std::uint64_t count, std::uint64_t total) const {
  if (total == 0) return false;
  using u128 = unsigned __int128;
  return static_cast<u128>(count) * den_ >= static_cast<u128>(num_) * total;
}

std::string Threshold::to_string() const {
  std::uint64_t d = den_;
  int twos = 0, fives = 0;
  while (d % 2 == 0) d /= 2, ++twos;
  while (d % 5 == 0) d /= 5, ++fives;
  if (d != 1) return std::to_string(num_) + "/" + std::to_string(den_);
  if (num_ == den_) return "1";
  int places = std::max(twos, fives);
  std::uint64_t scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  std::uint64_t scaled = num_ * (scale / den_);
  std::string frac = std::to_string(scaled);
  frac.insert(0, static_cast<std::size_t>(places) - frac.size(), '0');
  return "0." + frac;
}

const std::vector<std::string>& ProxyMap::required(ClassId id) const {
  auto it = per_class.find(id);
  if (it == per_class.end()) {
    throw ConfigError("no proxy entry for " + std::string(cdft::to_string(kind)) +
                      " class " + std::to_string(id));
  }
  return it->second;
}

std::vector<std::uint8_t> satisfaction_matrix(
    const std::vector<LabeledSegmentRecord>& dataset,
    const std::vector<AssertionTemplate>& candidates, Execution exec) {
  const std::size_t cols = candidates.size();
  std::vector<std::uint8_t> out(dataset.size() * cols, 0);
  auto row = [&](std::size_t r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = satisfy(candidates[c], dataset[r].grounding).satisfied ? 1 : 0;
    }
  };
  if (exec == Execution::serial) {
    for (std::size_t r = 0; r < dataset.size(); ++r) row(r);
    return out;
  }
  ExceptionSlot slot;
  const auto n = static_cast<std::ptrdiff_t>(dataset.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    slot.run([&] { row(static_cast<std::size_t>(r)); });
  }
  slot.rethrow();
  return out;
}

ProxyMap mine_proxies(const std::vector<LabeledSegmentRecord>& dataset,
                      const std::vector<AssertionTemplate>& candidates,
                      const Threshold& threshold, const RulesDb& rules, TaskKind kind,
                      Execution exec) {
  if (candidates.empty()) throw ConfigError("empty candidate assertion list");
  if (dataset.empty()) throw ConfigError("empty dataset");
  for (const auto& c : candidates) validate(c, *rules.signature);

  ProxyMap pm;
  pm.kind = kind;
  pm.threshold = threshold;
  for (const auto& c : rules.task.classes(kind)) pm.frequencies[c.id];
  for (const auto& r : dataset) {
    auto label = r.label(kind);
    auto it = pm.frequencies.find(label);
    if (it == pm.frequencies.end()) {
      throw ConfigError("segment '" + r.segment_id + "' has unknown " +
                        std::string(to_string(kind)) + " label " + std::to_string(label));
    }
    ++it->second.total;
  }
  std::vector<ClassId> missing;
  for (const auto& c : rules.task.classes(kind)) {
    if (!c.extra && pm.frequencies[c.id].total == 0) missing.push_back(c.id);
  }
  if (!missing.empty()) {
    std::string list;
    for (auto id : missing) list += (list.empty() ? "" : ", ") + std::to_string(id);
    throw ConfigError("no records for " + std::string(to_string(kind)) + " class(es) " +
                      list);
  }

  auto matrix = satisfaction_matrix(dataset, candidates, exec);
  const std::size_t cols = candidates.size();
  for (auto& [id, freq] : pm.frequencies) {
    for (const auto& c : candidates) freq.hits[c.id] = 0;
  }
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    auto& freq = pm.frequencies[dataset[r].label(kind)];
    for (std::size_t c = 0; c < cols; ++c) freq.hits[candidates[c].id] += matrix[r * cols + c];
  }
  for (const auto& [id, freq] : pm.frequencies) {
    auto& set = pm.per_class[id];
    for (const auto& [aid, hits] : freq.hits) {
      if (threshold.admits(hits, freq.total)) set.push_back(aid);
    }
  }
  return pm;
}

ImplicationPackage proxy_map_to_implications(const ProxyMap& pm) {
  ImplicationPackage out;
  for (const auto& [id, ids] : pm.per_class) {
    if (ids.empty()) {
      out.omitted.push_back(id);
      continue;
    }
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    out.implications.push_back({id, pm.kind, std::move(sorted)});
  }
  return out;
}

ProxyMap proxy_map_from_rules(const RulesDb& rules, TaskKind kind) {
  ProxyMap pm;
  pm.kind = kind;
  pm.threshold = Threshold::ratio(1, 1);
  for (const auto& c : rules.task.classes(kind)) {
    const auto* imp = rules.implication(kind, c.id);
    pm.per_class[c.id] = imp ? imp->required : std::vector<std::string>{};
  }
  return pm;
}

std::vector<AssertionTemplate> candidate_pool(const RulesDb& rules) {
  std::vector<AssertionTemplate> out;
  if (rules.task.proxy_ids.empty()) {
    for (const auto& [id, t] : rules.assertions) out.push_back(t);
  } else {
    for (const auto& id : rules.task.proxy_ids) out.push_back(rules.assertion(id));
  }
  return out;
}

nlohmann::json to_json(const ProxyMap& pm) {
  nlohmann::json j;
  j["task"] = std::string(to_string(pm.kind));
  j["threshold"] = pm.threshold.to_string();
  auto& classes = j["perClass"] = nlohmann::json::object();
  for (const auto& [id, ids] : pm.per_class) classes[std::to_string(id)] = ids;
  auto& freq = j["frequencies"] = nlohmann::json::object();
  for (const auto& [id, f] : pm.frequencies) {
    freq[std::to_string(id)] = {{"total", f.total}, {"hits", f.hits}};
  }
  return j;
}

ProxyMap proxy_map_from_json(const nlohmann::json& j) {
  try {
    ProxyMap pm;
    pm.kind = parse_task_kind(j.at("task").get<std::string>());
    pm.threshold = Threshold::parse(j.at("threshold").get<std::string>());
    for (const auto& [key, ids] : j.at("perClass").items()) {
      pm.per_class[std::stoi(key)] = ids.get<std::vector<std::string>>();
    }
    if (j.contains("frequencies")) {
      for (const auto& [key, f] : j.at("frequencies").items()) {
        ClassFrequencies cf;
        cf.total = f.at("total").get<std::uint64_t>();
        cf.hits = f.at("hits").get<std::map<std::string, std::uint64_t>>();
        pm.frequencies[std::stoi(key)] = std::move(cf);
      }
    }
    return pm;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed proxy map: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("malformed proxy map: class keys must be integers");
  }
}

std::vector<LabeledSegmentRecord> load_manifest(const std::string& path,
                                                const RulesDb& rules) {
  namespace fs = std::filesystem;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest '" + path + "': " + e.what());
  }
  auto base = fs::path(path).parent_path();
  std::vector<LabeledSegmentRecord> out;
  std::set<std::string> ids;
  try {
    for (const auto& rec : j.at("records")) {
      LabeledSegmentRecord r;
      r.segment_id = rec.at("segmentId").get<std::string>();
      r.main_label = rec.at("mainLabel").get<ClassId>();
      r.aux_label = rec.at("auxLabel").get<ClassId>();
      if (!ids.insert(r.segment_id).second) {
        throw ConfigError("manifest '" + path + "': duplicate segment '" +
                          r.segment_id + "'");
      }
      auto file = base / rec.at("groundingsFile").get<std::string>();
      try {
        r.grounding = parse_groundings(read_file(file.string()), rules);
      } catch (const ParseError& e) {
        throw ConfigError(file.string() + ": " + e.what());
      }
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest '" + path + "': " + e.what());
  }
  return out;
}

}  // namespace cdft
