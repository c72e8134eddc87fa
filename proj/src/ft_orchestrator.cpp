#include "cdft/ft_orchestrator.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>

#include "cdft/error.hpp"
#include "cdft/rules_dsl.hpp"

namespace cdft {

std::string_view to_string(FtMode mode) {
  switch (mode) {
    case FtMode::directed:
      return "directed";
    case FtMode::undirected:
      return "undirected";
    case FtMode::accuracy_driven:
      return "accuracyDriven";
  }
  return "?";
}

FtMode parse_ft_mode(std::string_view text) {
  if (text == "directed") return FtMode::directed;
  if (text == "undirected") return FtMode::undirected;
  if (text == "accuracyDriven" || text == "accuracy-driven") return FtMode::accuracy_driven;
  throw ConfigError("unknown fine-tuning mode '" + std::string(text) +
                    "' (expected directed, undirected or accuracy-driven)");
}

void FtConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (max_iterations == 0) throw ConfigError("maxIterations must be at least 1");
  if (time_budget_seconds && !(*time_budget_seconds > 0)) {
    throw ConfigError("time budget must be positive");
  }
  if (!(improvement_epsilon >= 0.0 && improvement_epsilon <= 1.0)) {
    throw ConfigError("improvementEpsilon must lie in [0, 1]");
  }
}

nlohmann::json to_json(const FtConfig& cfg) {
  nlohmann::json j{{"mode", std::string(to_string(cfg.mode))},
                   {"batchSize", cfg.batch_size},
                   {"maxIterations", cfg.max_iterations},
                   {"improvementEpsilon", cfg.improvement_epsilon},
                   {"seed", cfg.seed},
                   {"noAux", cfg.no_aux}};
  j["timeBudgetSeconds"] =
      cfg.time_budget_seconds ? nlohmann::json(*cfg.time_budget_seconds) : nlohmann::json();
  return j;
}

FtConfig ft_config_from_json(const nlohmann::json& j) {
  try {
    FtConfig cfg;
    if (j.contains("mode")) cfg.mode = parse_ft_mode(j.at("mode").get<std::string>());
    cfg.batch_size = j.value("batchSize", cfg.batch_size);
    cfg.max_iterations = j.value("maxIterations", cfg.max_iterations);
    cfg.improvement_epsilon = j.value("improvementEpsilon", cfg.improvement_epsilon);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.no_aux = j.value("noAux", cfg.no_aux);
    if (j.contains("timeBudgetSeconds") && !j.at("timeBudgetSeconds").is_null()) {
      cfg.time_budget_seconds = j.at("timeBudgetSeconds").get<double>();
    }
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed fine-tuning config: ") + e.what());
  }
}

Fraction make_fraction(std::int64_t num, std::int64_t den) {
  if (den == 0) throw ConfigError("fraction with zero denominator");
  if (den < 0) num = -num, den = -den;
  auto g = std::gcd(num, den);
  if (g == 0) g = 1;
  return {num / g, den / g};
}

std::string Fraction::to_string() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

Fraction compute_cif(std::uint64_t n_b, std::uint64_t n_e) {
  if (n_b == 0) throw UndefinedCif("CIF is undefined when no inconsistencies were recorded before fine-tuning");
  return make_fraction(static_cast<std::int64_t>(n_b) - static_cast<std::int64_t>(n_e),
                       static_cast<std::int64_t>(n_b));
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::exhausted_ftd:
      return "exhaustedFTD";
    case StopReason::exhausted_ed:
      return "exhaustedED";
    case StopReason::time_budget:
      return "timeBudget";
    case StopReason::stalled:
      return "stalled";
    case StopReason::max_iterations:
      return "maxIterations";
  }
  return "?";
}

namespace {

nlohmann::json accuracy_json(const std::map<ClassId, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [c, a] : m) j[std::to_string(c)] = a;
  return j;
}

// Removes the segments at `picked` (indices into ftd) preserving the order of
// the rest; returns them in `picked` order.
std::vector<SimulatedSegment> extract(std::vector<SimulatedSegment>& ftd,
                                      const std::vector<std::size_t>& picked) {
  std::vector<SimulatedSegment> out;
  out.reserve(picked.size());
  std::vector<char> taken(ftd.size(), 0);
  for (auto i : picked) {
    out.push_back(ftd[i]);
    taken[i] = 1;
  }
  std::size_t w = 0;
  for (std::size_t r = 0; r < ftd.size(); ++r) {
    if (!taken[r]) {
      if (w != r) ftd[w] = std::move(ftd[r]);
      ++w;
    }
  }
  ftd.resize(w);
  return out;
}

std::vector<std::size_t> random_indices(std::size_t n, std::size_t k, RandomStream& stream) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    auto j = i + static_cast<std::size_t>(stream.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

nlohmann::json to_json(const FtReport& r) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& it : r.iterations) {
    nlohmann::json implicated = nlohmann::json::array();
    for (const auto& ic : it.implicated) {
      implicated.push_back({{"task", std::string(to_string(ic.ref.kind))},
                            {"class", ic.ref.id},
                            {"count", ic.count}});
    }
    nlohmann::json rec{{"iteration", it.iteration},
                       {"evalBatchId", it.eval_batch_id},
                       {"inconsistencyCount", it.inconsistency_count},
                       {"implicatedClasses", implicated},
                       {"selectedFtBatch", it.selected_ft_batch},
                       {"fallbackSegments", it.fallback_segments},
                       {"postAccuracyMain", accuracy_json(it.post_accuracy_main)},
                       {"edConsistencyRate", it.ed_consistency_rate}};
    rec["postAccuracyAux"] =
        r.config.no_aux ? nlohmann::json() : accuracy_json(it.post_accuracy_aux);
    iterations.push_back(std::move(rec));
  }
  nlohmann::json j{{"schema", "cdft.ftreport/1"},
                   {"config", to_json(r.config)},
                   {"seed", r.config.seed},
                   {"fixtureHash", r.fixture_hash},
                   {"perIteration", iterations},
                   {"prunedBatches", r.pruned_batches},
                   {"n_b", r.n_b},
                   {"n_e", r.n_e},
                   {"noOp", r.no_op},
                   {"ftSegmentsUsed", r.ft_segments_used},
                   {"testSize", r.test_size},
                   {"testAccuracyMain", r.test_accuracy_main},
                   {"stopReason", std::string(to_string(r.stop_reason))},
                   {"fallbacks", r.fallbacks}};
  j["cif"] = r.cif ? nlohmann::json(r.cif->to_string()) : nlohmann::json();
  j["cifValue"] = r.cif ? nlohmann::json(r.cif->value()) : nlohmann::json();
  j["testAccuracyAux"] = r.config.no_aux ? nlohmann::json() : nlohmann::json(r.test_accuracy_aux);
  return j;
}

FtSelection select_ft_batch(FtMode mode, const std::vector<ImplicatedCount>& implicated,
                            std::vector<SimulatedSegment>& ftd, std::size_t batch_size,
                            RandomStream& stream) {
  if (ftd.empty()) throw ConfigError("fine-tuning data is exhausted");
  FtSelection sel;
  const std::size_t want = std::min(batch_size, ftd.size());
  std::vector<std::size_t> picked;

  if (mode != FtMode::undirected) {
    std::vector<ImplicatedCount> refs;
    for (const auto& ic : implicated) {
      if (ic.count > 0) refs.push_back(ic);
    }
    std::sort(refs.begin(), refs.end(),
              [](const auto& a, const auto& b) { return a.ref < b.ref; });
    std::size_t total = 0;
    for (const auto& r : refs) total += r.count;
    std::vector<std::size_t> quota(refs.size(), 0);
    if (total > 0) {
      std::size_t assigned = 0;
      std::size_t top = 0;
      for (std::size_t i = 0; i < refs.size(); ++i) {
        quota[i] = want * refs[i].count / total;
        assigned += quota[i];
        if (refs[i].count > refs[top].count) top = i;
      }
      quota[top] += want - assigned;
    }
    std::vector<char> used(ftd.size(), 0);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      std::size_t need = quota[i];
      for (std::size_t s = 0; s < ftd.size() && need > 0; ++s) {
        if (!used[s] && ftd[s].label(refs[i].ref.kind) == refs[i].ref.id) {
          used[s] = 1;
          picked.push_back(s);
          --need;
        }
      }
    }
    if (picked.size() < want) {
      std::vector<std::size_t> rest;
      for (std::size_t s = 0; s < ftd.size(); ++s) {
        if (!used[s]) rest.push_back(s);
      }
      auto extra = random_indices(rest.size(), want - picked.size(), stream);
      sel.fallback = extra.size();
      for (auto e : extra) picked.push_back(rest[e]);
    }
  } else {
    picked = random_indices(ftd.size(), want, stream);
  }
  sel.segments = extract(ftd, picked);
  return sel;
}

namespace {

enum : std::uint64_t { kTagMain = 0x6d61696e, kTagAux = 0x617578, kTagSelect = 0x73656c };

}  // namespace

RandomStream segment_stream(std::uint64_t seed, TaskKind task, const std::string& segment_id) {
  return RandomStream::derive(seed,
                              {task == TaskKind::main ? kTagMain : kTagAux, stable_hash(segment_id)});
}

TestAccuracy evaluate_test_accuracy(const Recognizer& main, const Recognizer& aux,
                                    const std::vector<SimulatedSegment>& test,
                                    std::uint64_t seed) {
  if (test.empty()) throw ConfigError("empty test set");
  std::size_t ok_main = 0, ok_aux = 0;
  for (const auto& seg : test) {
    auto sm = segment_stream(seed, TaskKind::main, seg.segment_id);
    if (main.classify(seg, sm) == seg.main_label) ++ok_main;
    auto sa = segment_stream(seed, TaskKind::aux, seg.segment_id);
    if (aux.classify(seg, sa) == seg.aux_label) ++ok_aux;
  }
  const auto n = static_cast<double>(test.size());
  return {static_cast<double>(ok_main) / n, static_cast<double>(ok_aux) / n};
}

namespace {

class Loop {
 public:
  Loop(const FtConfig& cfg, const RulesDb& rules, const ProxyPair& proxies, Execution exec)
      : cfg_(cfg), rules_(rules), proxies_(proxies), exec_(exec) {}

  std::vector<SegmentEvaluation> predict(const std::vector<SimulatedSegment>& segs,
                                         const Recognizer& main, const Recognizer& aux) const {
    std::vector<SegmentEvaluation> out;
    out.reserve(segs.size());
    for (const auto& s : segs) {
      SegmentEvaluation ev{s.segment_id, 0, 0, s.grounding};
      auto sm = segment_stream(cfg_.seed, TaskKind::main, s.segment_id);
      ev.main_prediction = main.classify(s, sm);
      if (!cfg_.no_aux) {
        auto sa = segment_stream(cfg_.seed, TaskKind::aux, s.segment_id);
        ev.aux_prediction = aux.classify(s, sa);
      }
      out.push_back(std::move(ev));
    }
    return out;
  }

  std::vector<ConsistencyVerdict> verdicts(const std::vector<SegmentEvaluation>& evs) const {
    return evaluate_batch(evs, rules_, proxies_, cfg_.no_aux, exec_);
  }

  std::size_t inconsistencies(const std::vector<SimulatedSegment>& segs, const Recognizer& main,
                              const Recognizer& aux) const {
    auto v = verdicts(predict(segs, main, aux));
    return static_cast<std::size_t>(
        std::count_if(v.begin(), v.end(), [](const auto& x) { return !x.consistent(); }));
  }

 private:
  const FtConfig& cfg_;
  const RulesDb& rules_;
  const ProxyPair& proxies_;
  Execution exec_;
};

std::vector<ImplicatedCount> to_counts(const std::map<ClassRef, std::size_t>& m) {
  std::vector<ImplicatedCount> out;
  for (const auto& [ref, n] : m) out.push_back({ref, n});
  return out;
}

}  // namespace

FtReport run_ft_loop(const FtConfig& cfg, const RulesDb& rules, const ProxyPair& proxies,
                     const Recognizer& main_in, const Recognizer& aux_in,
                     std::vector<SimulatedSegment> ftd, std::vector<EvalBatch> ed,
                     const std::vector<SimulatedSegment>& test, Execution exec) {
  cfg.validate();
  std::vector<SimulatedSegment> all_ed;
  for (const auto& b : ed) all_ed.insert(all_ed.end(), b.segments.begin(), b.segments.end());
  if (all_ed.empty()) throw ConfigError("evaluation data is empty");
  if (cfg.batch_size > ftd.size()) {
    throw ConfigError("batch size " + std::to_string(cfg.batch_size) +
                      " exceeds the fine-tuning pool of " + std::to_string(ftd.size()));
  }
  const auto start = std::chrono::steady_clock::now();

  auto main = main_in.clone();
  auto aux = aux_in.clone();
  Loop loop(cfg, rules, proxies, exec);

  FtReport report;
  report.config = cfg;
  report.test_size = test.size();
  report.n_b = loop.inconsistencies(all_ed, *main, *aux);
  const double ed_size = static_cast<double>(all_ed.size());
  double rate = 1.0 - static_cast<double>(report.n_b) / ed_size;

  std::deque<std::size_t> active;
  if (report.n_b == 0) {
    report.no_op = true;
    report.stop_reason = StopReason::exhausted_ed;
  } else {
    for (std::size_t i = 0; i < ed.size(); ++i) {
      if (!ed[i].segments.empty()) active.push_back(i);
    }
  }
  auto select_stream = RandomStream::derive(cfg.seed, {kTagSelect});

  while (!report.no_op) {
    if (report.iterations.size() >= cfg.max_iterations) {
      report.stop_reason = StopReason::max_iterations;
      break;
    }
    if (cfg.time_budget_seconds) {
      std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      if (elapsed.count() >= *cfg.time_budget_seconds) {
        report.stop_reason = StopReason::time_budget;
        break;
      }
    }
    if (active.empty()) {
      report.stop_reason = StopReason::exhausted_ed;
      break;
    }
    if (ftd.empty()) {
      report.stop_reason = StopReason::exhausted_ftd;
      break;
    }

    const auto b = active.front();
    active.pop_front();
    const auto& batch = ed[b];
    auto evs = loop.predict(batch.segments, *main, *aux);
    auto v = loop.verdicts(evs);

    std::size_t inconsistent = 0;
    std::map<ClassRef, std::size_t> implicated;
    for (const auto& x : v) {
      if (x.consistent()) continue;
      ++inconsistent;
      if (cfg.mode != FtMode::accuracy_driven) {
        for (const auto& ref : x.implicated) ++implicated[ref];
      }
    }
    if (cfg.mode == FtMode::accuracy_driven) {
      for (std::size_t i = 0; i < evs.size(); ++i) {
        const auto& seg = batch.segments[i];
        if (evs[i].main_prediction != seg.main_label) ++implicated[{TaskKind::main, seg.main_label}];
        if (!cfg.no_aux && evs[i].aux_prediction != seg.aux_label) {
          ++implicated[{TaskKind::aux, seg.aux_label}];
        }
      }
    }
    const bool flagged =
        cfg.mode == FtMode::accuracy_driven ? !implicated.empty() : inconsistent > 0;
    if (!flagged) {
      report.pruned_batches.push_back(batch.id);
      continue;
    }

    IterationRecord rec;
    rec.iteration = report.iterations.size() + 1;
    rec.eval_batch_id = batch.id;
    rec.inconsistency_count = inconsistent;
    rec.implicated = to_counts(implicated);
    auto sel = select_ft_batch(cfg.mode, rec.implicated, ftd, cfg.batch_size, select_stream);
    rec.fallback_segments = sel.fallback;
    for (const auto& s : sel.segments) rec.selected_ft_batch.push_back(s.segment_id);
    report.ft_segments_used += sel.segments.size();
    if (sel.fallback > 0) {
      report.fallbacks.push_back("iteration " + std::to_string(rec.iteration) + ": " +
                                 std::to_string(sel.fallback) +
                                 " segment(s) drawn undirected to fill the batch");
    }

    auto targets_of = [&](TaskKind kind) {
      std::set<ClassId> t;
      for (const auto& s : sel.segments) t.insert(s.label(kind));
      return t;
    };
    main = main->fine_tuned(sel.segments, targets_of(TaskKind::main));
    if (!cfg.no_aux) aux = aux->fine_tuned(sel.segments, targets_of(TaskKind::aux));
    rec.post_accuracy_main = main->class_accuracy();
    rec.post_accuracy_aux = aux->class_accuracy();

    const double next_rate =
        1.0 - static_cast<double>(loop.inconsistencies(all_ed, *main, *aux)) / ed_size;
    rec.ed_consistency_rate = next_rate;
    report.iterations.push_back(std::move(rec));
    active.push_back(b);

    if (cfg.improvement_epsilon > 0 && next_rate - rate < cfg.improvement_epsilon) {
      report.stop_reason = StopReason::stalled;
      break;
    }
    rate = next_rate;
  }

  report.n_e = report.no_op ? 0 : loop.inconsistencies(all_ed, *main, *aux);
  if (!report.no_op) report.cif = compute_cif(report.n_b, report.n_e);
  auto acc = evaluate_test_accuracy(*main, *aux, test, cfg.seed);
  report.test_accuracy_main = acc.main;
  report.test_accuracy_aux = cfg.no_aux ? 0.0 : acc.aux;
  return report;
}

Scenario default_scenario() {
  Scenario s;
  for (ClassId c = 1; c <= 5; ++c) s.data.ftd_counts[c] = 30;
  s.data.ftd_counts[6] = 850;
  for (ClassId c = 1; c <= 6; ++c) {
    s.data.ed_counts[c] = 10;
    s.data.test_counts[c] = 100;
  }
  s.data.eval_batch_size = 20;
  s.data.noise = 0.05;
  s.data.background_class = 6;
  s.data.background_rate = 0.8;
  s.ft.improvement_epsilon = 0.0;
  return s;
}

nlohmann::json to_json(const Scenario& s) {
  return {{"data", to_json(s.data)},
          {"initialAccuracy", s.initial_accuracy},
          {"learningRate", s.learning_rate},
          {"forgetting", s.forgetting},
          {"threshold", s.threshold.to_string()},
          {"mine", s.mine},
          {"ft", to_json(s.ft)}};
}

Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    Scenario s = default_scenario();
    if (j.contains("data")) s.data = dataset_spec_from_json(j.at("data"));
    s.initial_accuracy = j.value("initialAccuracy", s.initial_accuracy);
    s.learning_rate = j.value("learningRate", s.learning_rate);
    s.forgetting = j.value("forgetting", s.forgetting);
    if (j.contains("threshold")) s.threshold = Threshold::parse(j.at("threshold").get<std::string>());
    s.mine = j.value("mine", s.mine);
    if (j.contains("ft")) s.ft = ft_config_from_json(j.at("ft"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
}

std::string git_blob_sha1(const std::string& text) {
  std::string blob = "blob " + std::to_string(text.size());
  blob.push_back('\0');
  blob += text;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest) {
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 15]);
  }
  return out;
}

FtReport run_experiment(const RulesDb& rules, const Scenario& scenario, std::uint64_t seed,
                        Execution exec) {
  auto spec = scenario.data;
  spec.seed = seed;
  auto ds = generate_dataset(rules, spec);

  ProxyPair proxies;
  if (scenario.mine) {
    std::vector<LabeledSegmentRecord> records;
    records.reserve(ds.ftd.size());
    for (const auto& s : ds.ftd) {
      records.push_back({s.segment_id, s.main_label, s.aux_label, *s.grounding});
    }
    auto pool = candidate_pool(rules);
    proxies.main = mine_proxies(records, pool, scenario.threshold, rules, TaskKind::main, exec);
    proxies.aux = mine_proxies(records, pool, scenario.threshold, rules, TaskKind::aux, exec);
  } else {
    proxies.main = proxy_map_from_rules(rules, TaskKind::main);
    proxies.aux = proxy_map_from_rules(rules, TaskKind::aux);
  }

  SimulatedRecognizer main(RecognizerProfile::uniform(rules, TaskKind::main,
                                                      scenario.initial_accuracy,
                                                      scenario.learning_rate,
                                                      scenario.forgetting, seed));
  SimulatedRecognizer aux(RecognizerProfile::uniform(rules, TaskKind::aux,
                                                     scenario.initial_accuracy,
                                                     scenario.learning_rate,
                                                     scenario.forgetting, seed));
  auto cfg = scenario.ft;
  cfg.seed = seed;
  auto report = run_ft_loop(cfg, rules, proxies, main, aux, std::move(ds.ftd),
                            std::move(ds.ed), ds.test, exec);
  report.fixture_hash = git_blob_sha1(print_rules(rules));
  return report;
}

std::vector<FtReport> run_sweep(const RulesDb& rules, const Scenario& scenario,
                                const std::vector<std::uint64_t>& seeds, Execution exec) {
  std::vector<FtReport> out(seeds.size());
  if (exec == Execution::serial) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      out[i] = run_experiment(rules, scenario, seeds[i], Execution::serial);
    }
    return out;
  }
  ExceptionSlot slot;
  const auto n = static_cast<std::ptrdiff_t>(seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    slot.run([&] {
      out[static_cast<std::size_t>(i)] =
          run_experiment(rules, scenario, seeds[static_cast<std::size_t>(i)], Execution::serial);
    });
  }
  slot.rethrow();
  return out;
}

namespace {

std::pair<double, double> mean_stddev(const std::vector<double>& xs) {
  if (xs.empty()) return {0, 0};
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace

SweepSummary summarize(const std::string& label, const std::vector<FtReport>& reports) {
  SweepSummary s;
  s.label = label;
  s.runs = reports.size();
  std::vector<double> cifs, accs;
  for (const auto& r : reports) {
    if (r.cif) cifs.push_back(r.cif->value());
    accs.push_back(r.test_accuracy_main);
  }
  s.cif_runs = cifs.size();
  std::tie(s.cif_mean, s.cif_stddev) = mean_stddev(cifs);
  std::tie(s.accuracy_mean, s.accuracy_stddev) = mean_stddev(accs);
  return s;
}

nlohmann::json to_json(const SweepSummary& s) {
  return {{"label", s.label},
          {"runs", s.runs},
          {"cifRuns", s.cif_runs},
          {"cifMean", s.cif_mean},
          {"cifStddev", s.cif_stddev},
          {"testAccuracyMean", s.accuracy_mean},
          {"testAccuracyStddev", s.accuracy_stddev}};
}

}  // namespace cdft
