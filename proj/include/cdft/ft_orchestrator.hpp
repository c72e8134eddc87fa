#pragma once

// The directed / undirected fine-tuning loop, batch selection, CIF and the
// seeded experiment harness built on top of them.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdft/consistency.hpp"
#include "cdft/execution.hpp"
#include "cdft/proxy_miner.hpp"
#include "cdft/recognizer_sim.hpp"
#include "cdft/rules.hpp"
#include "json.hpp"

namespace cdft {

enum class FtMode { directed, undirected, accuracy_driven };

std::string_view to_string(FtMode mode);
/// Accepts directed, undirected, accuracyDriven and accuracy-driven.
FtMode parse_ft_mode(std::string_view text);

struct FtConfig {
  FtMode mode = FtMode::directed;
  std::size_t batch_size = 20;
  std::size_t max_iterations = 4;
  std::optional<double> time_budget_seconds;
  /// Stop when the ED consistency rate improves by less than this across an
  /// iteration. Zero disables the check.
  double improvement_epsilon = 0.01;
  std::uint64_t seed = 0;
  bool no_aux = false;

  /// Throws ConfigError on a zero batch size or iteration bound.
  void validate() const;

  friend bool operator==(const FtConfig&, const FtConfig&) = default;
};

nlohmann::json to_json(const FtConfig& cfg);
FtConfig ft_config_from_json(const nlohmann::json& j);

/// Exact signed fraction in lowest terms with a positive denominator.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  /// "3/4", "0", "-1/4".
  std::string to_string() const;

  friend bool operator==(const Fraction&, const Fraction&) = default;
};

Fraction make_fraction(std::int64_t num, std::int64_t den);

/// (n_b - n_e) / n_b. Throws UndefinedCif when n_b is zero.
Fraction compute_cif(std::uint64_t n_b, std::uint64_t n_e);

enum class StopReason { exhausted_ftd, exhausted_ed, time_budget, stalled, max_iterations };

std::string_view to_string(StopReason reason);

struct ImplicatedCount {
  ClassRef ref;
  std::size_t count = 0;

  friend bool operator==(const ImplicatedCount&, const ImplicatedCount&) = default;
};

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  std::string eval_batch_id;
  std::size_t inconsistency_count = 0;
  std::vector<ImplicatedCount> implicated;
  std::vector<std::string> selected_ft_batch;
  std::size_t fallback_segments = 0;
  std::map<ClassId, double> post_accuracy_main;
  std::map<ClassId, double> post_accuracy_aux;
  /// Consistent fraction of the full ED after this iteration.
  double ed_consistency_rate = 0;
};

struct FtReport {
  FtConfig config;
  std::string fixture_hash;
  std::vector<IterationRecord> iterations;
  std::vector<std::string> pruned_batches;  // in pruning order
  std::uint64_t n_b = 0;
  std::uint64_t n_e = 0;
  std::optional<Fraction> cif;  // absent on a no-op run
  bool no_op = false;
  std::uint64_t ft_segments_used = 0;
  std::uint64_t test_size = 0;
  double test_accuracy_main = 0;
  double test_accuracy_aux = 0;  // not measured when no_aux
  StopReason stop_reason = StopReason::max_iterations;
  /// One line per iteration that needed an undirected top-up.
  std::vector<std::string> fallbacks;
};

nlohmann::json to_json(const FtReport& report);

struct FtSelection {
  std::vector<SimulatedSegment> segments;
  std::size_t fallback = 0;  // segments drawn undirected to fill a shortfall
};

/// Removes up to `batch_size` segments from `ftd` and returns them.
/// directed / accuracy_driven: quotas proportional to the implicated counts
/// (floor), remainder to the largest count (ties by ascending class, main
/// first), segments taken in FTD order; any shortfall is drawn uniformly.
/// undirected: uniform draw without replacement.
/// Throws ConfigError when `ftd` is empty.
FtSelection select_ft_batch(FtMode mode, const std::vector<ImplicatedCount>& implicated,
                            std::vector<SimulatedSegment>& ftd, std::size_t batch_size,
                            RandomStream& stream);

/// Per-segment stream for a recognizer tag, shared by every evaluation of
/// that segment within a run.
RandomStream segment_stream(std::uint64_t seed, TaskKind task, const std::string& segment_id);

struct TestAccuracy {
  double main = 0;
  double aux = 0;
};

/// Throws ConfigError when `test` is empty.
TestAccuracy evaluate_test_accuracy(const Recognizer& main, const Recognizer& aux,
                                    const std::vector<SimulatedSegment>& test,
                                    std::uint64_t seed);

/// One complete loop. Recognizers are cloned; the caller's are untouched.
/// Throws ConfigError on an empty ED or a batch size larger than FTD.
FtReport run_ft_loop(const FtConfig& cfg, const RulesDb& rules, const ProxyPair& proxies,
                     const Recognizer& main, const Recognizer& aux,
                     std::vector<SimulatedSegment> ftd, std::vector<EvalBatch> ed,
                     const std::vector<SimulatedSegment>& test,
                     Execution exec = Execution::parallel);

/// Everything needed to rerun an experiment from a seed.
struct Scenario {
  DatasetSpec data;
  double initial_accuracy = 0.6;
  double learning_rate = 0.25;
  double forgetting = 0.01;
  Threshold threshold = Threshold::parse("0.9");
  /// Mine proxies from FTD; otherwise take them from the rules' implications.
  bool mine = true;
  FtConfig ft;
};

/// The TU_DAT-style scenario used by the experiments: six main / aux class
/// pairs plus two extra aux classes, FTD dominated by normal traffic, balanced
/// ED and TEST, four iterations of 20 segments.
Scenario default_scenario();

nlohmann::json to_json(const Scenario& s);
/// Missing keys fall back to default_scenario().
Scenario scenario_from_json(const nlohmann::json& j);

/// Git blob SHA-1 of `text` (same digest `git hash-object` prints).
std::string git_blob_sha1(const std::string& text);

/// Generates the dataset for `seed`, mines proxies and runs the loop. The
/// seed overrides both the dataset and loop seeds in `scenario`.
FtReport run_experiment(const RulesDb& rules, const Scenario& scenario, std::uint64_t seed,
                        Execution exec = Execution::serial);

/// Independent runs, one per seed, returned in seed order. The parallel path
/// spreads seeds over OpenMP threads; the serial path is its reference.
std::vector<FtReport> run_sweep(const RulesDb& rules, const Scenario& scenario,
                                const std::vector<std::uint64_t>& seeds,
                                Execution exec = Execution::parallel);

struct SweepSummary {
  std::string label;
  std::size_t runs = 0;
  std::size_t cif_runs = 0;  // runs with a defined CIF
  double cif_mean = 0;
  double cif_stddev = 0;
  double accuracy_mean = 0;
  double accuracy_stddev = 0;
};

/// Sample statistics (n - 1 denominator) over the reports.
SweepSummary summarize(const std::string& label, const std::vector<FtReport>& reports);
nlohmann::json to_json(const SweepSummary& s);

}  // namespace cdft
