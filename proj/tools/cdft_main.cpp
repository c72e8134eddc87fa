// cdft: mine proxies, run fine-tuning experiments, check and justify single
// segments, generate synthetic datasets and compare reports.
//
// Exit status: 0 success / consistent, 1 inconsistent (check, justify),
// 2 usage error, 3 data or validation error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cdft/consistency.hpp"
#include "cdft/error.hpp"
#include "cdft/ft_orchestrator.hpp"
#include "cdft/proxy_miner.hpp"
#include "cdft/recognizer_sim.hpp"
#include "cdft/rules_dsl.hpp"

namespace fs = std::filesystem;
using namespace cdft;

namespace {

constexpr int kOk = 0;
constexpr int kInconsistent = 1;
constexpr int kUsage = 2;
constexpr int kData = 3;

struct Common {
  std::string format = "text";
  bool json() const { return format == "json"; }
};

void add_format(CLI::App* cmd, Common& c) {
  cmd->add_option("--format", c.format, "Output format")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

RulesDb load_rules(const std::string& path) { return parse_rules(read_file(path)); }

std::string fixed(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

// ---- mine ----------------------------------------------------------------

struct MineArgs {
  Common common;
  std::string manifest, rules, out;
  std::string threshold = "0.9";
  std::string task = "main";
};

int cmd_mine(const MineArgs& a) {
  auto rules = load_rules(a.rules);
  auto kind = parse_task_kind(a.task);
  auto data = load_manifest(a.manifest, rules);
  auto pm = mine_proxies(data, candidate_pool(rules), Threshold::parse(a.threshold), rules, kind);
  auto j = to_json(pm);
  if (!a.out.empty()) write_file(a.out, j.dump(2) + "\n");
  if (a.common.json()) {
    std::cout << j.dump(2) << "\n";
    return kOk;
  }
  std::cout << "task " << to_string(kind) << ", threshold " << pm.threshold.to_string() << "\n";
  for (const auto& [id, freq] : pm.frequencies) {
    std::cout << "class " << id << " (" << freq.total << " segments)\n";
    for (const auto& [aid, hits] : freq.hits) {
      std::cout << "  " << aid << ": " << hits << "/" << freq.total;
      if (freq.total > 0) {
        std::cout << " = " << fixed(static_cast<double>(hits) / static_cast<double>(freq.total), 3);
      }
      std::cout << "\n";
    }
    std::cout << "  mined:";
    for (const auto& aid : pm.per_class.at(id)) std::cout << " " << aid;
    std::cout << "\n";
  }
  return kOk;
}

// ---- ft ------------------------------------------------------------------

struct FtArgs {
  Common common;
  std::string rules, config, report;
  std::vector<std::string> modes;
  std::uint64_t seed = 7;
  std::size_t seeds = 0;
  bool no_aux = false;
};

std::string mode_label(const FtConfig& cfg) {
  return std::string(to_string(cfg.mode)) + (cfg.no_aux ? "+noAux" : "");
}

int cmd_ft(const FtArgs& a) {
  auto rules = load_rules(a.rules);
  Scenario base = a.config.empty() ? default_scenario() : scenario_from_json(read_json(a.config));
  if (a.no_aux) base.ft.no_aux = true;

  std::vector<FtMode> modes;
  for (const auto& m : a.modes) modes.push_back(parse_ft_mode(m));
  if (modes.empty()) modes.push_back(base.ft.mode);

  std::vector<std::uint64_t> seeds;
  const std::size_t n = a.seeds == 0 ? 1 : a.seeds;
  for (std::size_t i = 0; i < n; ++i) seeds.push_back(a.seed + i);
  const bool single = a.seeds == 0 && modes.size() == 1;

  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json summaries = nlohmann::json::array();
  std::vector<SweepSummary> sums;
  std::vector<std::vector<FtReport>> all;
  for (auto mode : modes) {
    auto s = base;
    s.ft.mode = mode;
    auto reports = run_sweep(rules, s, seeds);
    sums.push_back(summarize(mode_label(s.ft), reports));
    summaries.push_back(to_json(sums.back()));
    for (const auto& r : reports) runs.push_back(to_json(r));
    all.push_back(std::move(reports));
  }

  nlohmann::json doc;
  if (single) {
    doc = runs.at(0);
  } else {
    doc = {{"schema", "cdft.ftsweep/1"}, {"seeds", seeds}, {"summary", summaries}, {"runs", runs}};
  }
  if (!a.report.empty()) write_file(a.report, doc.dump(2) + "\n");
  if (a.common.json()) {
    std::cout << doc.dump(2) << "\n";
    return kOk;
  }
  if (single) {
    const auto& r = all[0][0];
    std::cout << "mode " << mode_label(r.config) << ", seed " << r.config.seed << "\n";
    for (const auto& it : r.iterations) {
      std::cout << "  iteration " << it.iteration << ": " << it.eval_batch_id << ", "
                << it.inconsistency_count << " inconsistent, ED consistency "
                << fixed(it.ed_consistency_rate, 3) << "\n";
    }
    for (const auto& p : r.pruned_batches) std::cout << "  pruned " << p << "\n";
    std::cout << "  n_b " << r.n_b << ", n_e " << r.n_e << ", CIF "
              << (r.cif ? r.cif->to_string() + " = " + fixed(r.cif->value()) : "undefined (no-op)")
              << "\n";
    std::cout << "  test accuracy main " << fixed(r.test_accuracy_main);
    if (!r.config.no_aux) std::cout << ", aux " << fixed(r.test_accuracy_aux);
    std::cout << "\n  stop: " << to_string(r.stop_reason) << "\n";
    return kOk;
  }
  for (const auto& s : sums) {
    std::cout << s.label << ": " << s.runs << " runs, CIF " << fixed(s.cif_mean) << " +- "
              << fixed(s.cif_stddev) << " (" << s.cif_runs << " defined), test accuracy "
              << fixed(s.accuracy_mean) << " +- " << fixed(s.accuracy_stddev) << "\n";
  }
  return kOk;
}

// ---- check / justify -----------------------------------------------------

struct CheckArgs {
  Common common;
  std::string rules, groundings, proxies_main, proxies_aux;
  ClassId m_class = 0;
  ClassId a_class = 0;
  bool no_aux = false;
};

struct Loaded {
  RulesDb rules;
  ProxyPair proxies;
  SegmentEvaluation ev;
};

Loaded load_check(const CheckArgs& a, CLI::App* cmd) {
  if (!a.no_aux && cmd->count("--a-class") == 0) {
    throw CLI::RequiredError("--a-class (or pass --no-aux)");
  }
  Loaded l;
  l.rules = load_rules(a.rules);
  l.proxies.main = a.proxies_main.empty() ? proxy_map_from_rules(l.rules, TaskKind::main)
                                          : proxy_map_from_json(read_json(a.proxies_main));
  l.proxies.aux = a.proxies_aux.empty() ? proxy_map_from_rules(l.rules, TaskKind::aux)
                                        : proxy_map_from_json(read_json(a.proxies_aux));
  l.ev.segment_id = fs::path(a.groundings).stem().string();
  l.ev.main_prediction = a.m_class;
  l.ev.aux_prediction = a.a_class;
  l.ev.grounding =
      std::make_shared<const GroundingSet>(parse_groundings(read_file(a.groundings), l.rules));
  return l;
}

int cmd_check(const CheckArgs& a, CLI::App* cmd) {
  auto l = load_check(a, cmd);
  auto v = a.no_aux ? check_segment_no_aux(l.ev, l.rules, l.proxies)
                    : check_segment(l.ev, l.rules, l.proxies);
  if (a.common.json()) {
    auto j = to_json(v);
    j["segmentId"] = l.ev.segment_id;
    j["noAux"] = a.no_aux;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << l.ev.segment_id << ": " << (v.consistent() ? "consistent" : "inconsistent") << "\n";
    if (!a.no_aux && !v.condition_a) {
      std::cout << "  condition A failed: main class " << a.m_class
                << " does not correspond to aux class " << a.a_class << "\n";
    }
    if (!v.condition_b) {
      std::cout << "  condition B failed: offending main assertions:";
      for (const auto& id : v.offending_main) std::cout << " " << id;
      std::cout << "\n";
    }
    if (!a.no_aux && !v.condition_c) {
      std::cout << "  condition C failed: offending aux assertions:";
      for (const auto& id : v.offending_aux) std::cout << " " << id;
      std::cout << "\n";
    }
  }
  return v.consistent() ? kOk : kInconsistent;
}

int cmd_justify(const CheckArgs& a, CLI::App* cmd) {
  auto l = load_check(a, cmd);
  auto j = justify(l.ev, l.rules, l.proxies, a.no_aux);
  if (a.common.json()) {
    std::cout << to_json(j).dump(2) << "\n";
  } else {
    std::cout << j.text();
  }
  return j.reliable ? kOk : kInconsistent;
}

// ---- gen -----------------------------------------------------------------

struct GenArgs {
  Common common;
  std::string rules, out_dir, counts, ftd_counts, ed_counts, test_counts;
  double noise = 0.02;
  std::uint64_t seed = 0;
  std::size_t eval_batch_size = 20;
  ClassId background_class = 0;
  double background_rate = 0.0;
  bool force = false;
};

std::map<ClassId, std::size_t> parse_counts(const std::string& text) {
  std::map<ClassId, std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw CLI::ValidationError("--counts", "expected class:count pairs, got '" + item + "'");
    }
    try {
      std::size_t used = 0;
      auto cls = std::stoi(item.substr(0, colon), &used);
      auto n = std::stoul(item.substr(colon + 1));
      out[cls] = n;
    } catch (const std::exception&) {
      throw CLI::ValidationError("--counts", "bad class:count pair '" + item + "'");
    }
  }
  if (out.empty()) throw CLI::ValidationError("--counts", "no classes given");
  return out;
}

int cmd_gen(const GenArgs& a) {
  auto rules = load_rules(a.rules);
  DatasetSpec spec;
  auto base = a.counts.empty() ? std::map<ClassId, std::size_t>{} : parse_counts(a.counts);
  spec.ftd_counts = a.ftd_counts.empty() ? base : parse_counts(a.ftd_counts);
  spec.ed_counts = a.ed_counts.empty() ? base : parse_counts(a.ed_counts);
  spec.test_counts = a.test_counts.empty() ? base : parse_counts(a.test_counts);
  if (spec.ftd_counts.empty() || spec.ed_counts.empty() || spec.test_counts.empty()) {
    throw CLI::ValidationError("--counts", "counts are required for every split");
  }
  spec.noise = a.noise;
  spec.seed = a.seed;
  spec.eval_batch_size = a.eval_batch_size;
  spec.background_class = a.background_class;
  spec.background_rate = a.background_rate;

  fs::path dir(a.out_dir);
  if (!a.force) {
    for (const char* name : {"ftd.json", "ed.json", "test.json", "spec.json", "groundings"}) {
      if (fs::exists(dir / name)) {
        throw ConfigError("refusing to overwrite '" + (dir / name).string() +
                          "' (pass --force)");
      }
    }
  }
  auto ds = generate_dataset(rules, spec);
  if (a.force && fs::exists(dir / "groundings")) fs::remove_all(dir / "groundings");
  write_dataset(ds, dir.string());
  write_file((dir / "spec.json").string(), to_json(spec).dump(2) + "\n");

  std::size_t ed = 0;
  for (const auto& b : ds.ed) ed += b.segments.size();
  if (a.common.json()) {
    std::cout << nlohmann::json{{"outDir", dir.string()},
                                {"ftd", ds.ftd.size()},
                                {"ed", ed},
                                {"edBatches", ds.ed.size()},
                                {"test", ds.test.size()}}
                     .dump(2)
              << "\n";
  } else {
    std::cout << "wrote " << ds.ftd.size() << " FTD, " << ed << " ED (" << ds.ed.size()
              << " batches), " << ds.test.size() << " TEST segments to " << dir.string() << "\n";
  }
  return kOk;
}

// ---- compare -------------------------------------------------------------

struct Group {
  std::string label;
  std::vector<double> cif;
  std::vector<double> acc;
};

std::vector<Group> groups_of(const nlohmann::json& doc) {
  std::vector<nlohmann::json> runs;
  if (doc.contains("runs")) {
    for (const auto& r : doc.at("runs")) runs.push_back(r);
  } else {
    runs.push_back(doc);
  }
  std::vector<Group> out;
  for (const auto& r : runs) {
    const auto& cfg = r.at("config");
    std::string label = cfg.at("mode").get<std::string>() +
                        (cfg.at("noAux").get<bool>() ? "+noAux" : "");
    auto it = std::find_if(out.begin(), out.end(), [&](const Group& g) { return g.label == label; });
    if (it == out.end()) {
      out.push_back({label, {}, {}});
      it = out.end() - 1;
    }
    if (!r.at("cifValue").is_null()) it->cif.push_back(r.at("cifValue").get<double>());
    it->acc.push_back(r.at("testAccuracyMain").get<double>());
  }
  return out;
}

std::pair<double, double> mean_var(const std::vector<double>& xs) {
  if (xs.empty()) return {0, 0};
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0};
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, ss / static_cast<double>(xs.size() - 1)};
}

// Welch t statistic and a plain-language note. Needs two or more runs per side.
std::pair<std::optional<double>, std::string> significance(const std::vector<double>& a,
                                                           const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) return {std::nullopt, "single runs, no significance estimate"};
  auto [ma, va] = mean_var(a);
  auto [mb, vb] = mean_var(b);
  double se = std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
  if (se == 0) {
    return {std::nullopt, ma == mb ? "identical samples" : "zero variance, difference is exact"};
  }
  double t = (ma - mb) / se;
  return {t, std::fabs(t) >= 2.0 ? "likely significant (|t| >= 2)" : "not significant (|t| < 2)"};
}

int cmd_compare(const std::vector<std::string>& paths, const Common& c) {
  if (paths.size() != 2) throw CLI::ValidationError("--report", "exactly two reports are required");
  auto ga = groups_of(read_json(paths[0]));
  auto gb = groups_of(read_json(paths[1]));
  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream text;
  const bool single = ga.size() == 1 && gb.size() == 1;
  for (const auto& a : ga) {
    for (const auto& b : gb) {
      if (!single && a.label != b.label && ga.size() == gb.size()) continue;
      auto [cif_a, cva] = mean_var(a.cif);
      auto [cif_b, cvb] = mean_var(b.cif);
      auto [acc_a, ava] = mean_var(a.acc);
      auto [acc_b, avb] = mean_var(b.acc);
      auto [t_cif, note_cif] = significance(a.cif, b.cif);
      auto [t_acc, note_acc] = significance(a.acc, b.acc);
      nlohmann::json row{{"a", a.label},
                         {"b", b.label},
                         {"runsA", a.acc.size()},
                         {"runsB", b.acc.size()},
                         {"cifDelta", cif_a - cif_b},
                         {"accuracyDelta", acc_a - acc_b},
                         {"cifNote", note_cif},
                         {"accuracyNote", note_acc}};
      row["cifT"] = t_cif ? nlohmann::json(*t_cif) : nlohmann::json();
      row["accuracyT"] = t_acc ? nlohmann::json(*t_acc) : nlohmann::json();
      rows.push_back(row);
      text << a.label << " (" << a.acc.size() << " runs) vs " << b.label << " ("
           << b.acc.size() << " runs)\n"
           << "  CIF delta       " << fixed(cif_a - cif_b) << "  " << note_cif << "\n"
           << "  accuracy delta  " << fixed(acc_a - acc_b) << "  " << note_acc << "\n";
    }
  }
  if (rows.empty()) throw ConfigError("the reports share no mode to compare");
  if (c.json()) {
    std::cout << nlohmann::json{{"comparisons", rows}}.dump(2) << "\n";
  } else {
    std::cout << text.str();
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consistency-directed fine-tuning toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cdft 0.1.0");

  auto threshold_check = CLI::Validator(
      [](std::string& s) -> std::string {
        try {
          Threshold::parse(s);
          return {};
        } catch (const Error& e) {
          return e.what();
        }
      },
      "RATIO in (0,1]", "threshold");

  MineArgs mine;
  auto* mine_cmd = app.add_subcommand("mine", "Mine per-class proxy assertion sets from labeled groundings");
  mine_cmd->add_option("--manifest", mine.manifest, "Dataset manifest (JSON)")->required()->check(CLI::ExistingFile);
  mine_cmd->add_option("--rules", mine.rules, "Rules file")->required()->check(CLI::ExistingFile);
  mine_cmd->add_option("--threshold", mine.threshold, "Frequency threshold, decimal or n/d")
      ->check(threshold_check)
      ->capture_default_str();
  mine_cmd->add_option("--task", mine.task, "Which labels to mine")
      ->check(CLI::IsMember({"main", "aux"}))
      ->capture_default_str();
  mine_cmd->add_option("--out", mine.out, "Write the proxy map (JSON) here");
  add_format(mine_cmd, mine.common);

  FtArgs ft;
  auto* ft_cmd = app.add_subcommand("ft", "Run the fine-tuning loop for one seed or a seed sweep");
  ft_cmd->add_option("--rules", ft.rules, "Rules file")->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("--mode", ft.modes,
                     "directed, undirected or accuracy-driven; repeat or comma-separate to run several")
      ->delimiter(',')
      ->check(CLI::IsMember({"directed", "undirected", "accuracy-driven", "accuracyDriven"}));
  ft_cmd->add_option("--config", ft.config, "Scenario (JSON); defaults to the built-in scenario")
      ->check(CLI::ExistingFile);
  ft_cmd->add_option("--seed", ft.seed, "Seed, or first seed of a sweep")->capture_default_str();
  ft_cmd->add_option("--seeds", ft.seeds, "Run a sweep over this many consecutive seeds")
      ->check(CLI::PositiveNumber);
  ft_cmd->add_option("--report", ft.report, "Write the report (JSON) here");
  ft_cmd->add_flag("--no-aux", ft.no_aux, "Fine-tune with the main recognizer only");
  add_format(ft_cmd, ft.common);

  CheckArgs chk;
  CLI::App* check_cmd = app.add_subcommand("check", "Check one segment's predictions for consistency");
  CLI::App* justify_cmd = app.add_subcommand("justify", "Explain a consistency verdict");
  for (auto* cmd : {check_cmd, justify_cmd}) {
    cmd->add_option("--rules", chk.rules, "Rules file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--groundings", chk.groundings, "Groundings file of the segment")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--m-class", chk.m_class, "Main recognizer prediction")->required();
    cmd->add_option("--a-class", chk.a_class, "Aux recognizer prediction");
    cmd->add_flag("--no-aux", chk.no_aux, "Evaluate condition B only");
    cmd->add_option("--proxies-main", chk.proxies_main, "Mined main proxy map (JSON) instead of the rules' implications")
        ->check(CLI::ExistingFile);
    cmd->add_option("--proxies-aux", chk.proxies_aux, "Mined aux proxy map (JSON) instead of the rules' implications")
        ->check(CLI::ExistingFile);
    add_format(cmd, chk.common);
  }

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate synthetic FTD / ED / TEST datasets");
  gen_cmd->add_option("--rules", gen.rules, "Rules file")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--counts", gen.counts, "Segments per class for every split, e.g. 1:10,2:10");
  gen_cmd->add_option("--ftd-counts", gen.ftd_counts, "Override --counts for FTD");
  gen_cmd->add_option("--ed-counts", gen.ed_counts, "Override --counts for ED");
  gen_cmd->add_option("--test-counts", gen.test_counts, "Override --counts for TEST");
  gen_cmd->add_option("--noise", gen.noise, "Per-atom drop and insert probability")
      ->check(CLI::Range(0.0, 0.999999))
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed")->capture_default_str();
  gen_cmd->add_option("--eval-batch-size", gen.eval_batch_size, "ED batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--background-class", gen.background_class, "Class whose proxies form the scene background (0 = none)")
      ->capture_default_str();
  gen_cmd->add_option("--background-rate", gen.background_rate, "Probability of background activity")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  gen_cmd->add_flag("--force", gen.force, "Overwrite existing manifests");
  add_format(gen_cmd, gen.common);

  std::vector<std::string> compare_paths;
  Common compare_common;
  auto* compare_cmd = app.add_subcommand("compare", "Compare two ft reports or sweeps");
  compare_cmd->add_option("--report", compare_paths, "Report file; give exactly two")
      ->required()
      ->check(CLI::ExistingFile);
  add_format(compare_cmd, compare_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*mine_cmd) return cmd_mine(mine);
    if (*ft_cmd) return cmd_ft(ft);
    if (*check_cmd) return cmd_check(chk, check_cmd);
    if (*justify_cmd) return cmd_justify(chk, justify_cmd);
    if (*gen_cmd) return cmd_gen(gen);
    if (*compare_cmd) return cmd_compare(compare_paths, compare_common);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
