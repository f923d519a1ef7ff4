#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "latentadv/attacks.hpp"
#include "latentadv/classifiers.hpp"
#include "latentadv/config.hpp"
#include "latentadv/eventlog.hpp"
#include "latentadv/manifold.hpp"
#include "latentadv/metrics.hpp"
#include "latentadv/profiling.hpp"

namespace latentadv {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "LATENTADV_OUTPUT_ROOT";

struct RunConfig {
  // "synthetic" or a CSV path.
  std::string source = "synthetic";
  int synthetic_traces = 500;
  ColumnMapping mapping;

  double train_fraction = 0.8;
  // Tail of the training part (by trace start) held out for model selection
  // and the decision threshold.
  double validation_fraction = 0.2;

  int min_len = 1;
  int max_len = 10;
  bool dedup = true;
  bool remove_ambiguous = true;
  bool dedup_test = false;

  ClassifierKind classifier = ClassifierKind::kRecurrent;
  bool grid_search = true;
  ClassifierHyperparams hyperparams;

  VaeConfig vae;

  std::vector<AttackConfig> attacks;
  std::size_t max_prefixes = 0;
  int threads = 1;

  std::uint64_t seed = 7;
  std::string output_dir = "latentadv_out";

  RunConfig();

  // Reads every known key; unknown keys are an error.
  static RunConfig from_config(const Config& config);
  static std::vector<std::string> known_keys();

  // Throws ConfigError for inconsistent settings, e.g. gradient steps with a
  // non-recurrent classifier or a missing source file.
  void validate() const;

  // Stable rendering of every setting except the output directory.
  std::string canonical() const;
  std::uint64_t hash() const;

  // output_dir, placed under $LATENTADV_OUTPUT_ROOT when that is set and the
  // directory is relative.
  std::filesystem::path resolved_output() const;

  // Seeds of the named sub-streams (synth, train, vae, attack).
  std::uint64_t stream_seed(const char* name) const;
};

// One row of the result tables. adversarials.csv fills the attack columns,
// results.csv adds the metric panel and profiled.csv the profile.
struct ResultRow {
  AdversarialResult result;
  std::optional<MetricPanel> panel;
  int adversarial_length = 0;
  std::optional<NormalizedAttackMetrics> normalized;
  std::optional<ClusterProfile> profile;
};

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& in);

void write_prefixes_csv(std::ostream& out, const std::vector<Prefix>& prefixes);
std::vector<Prefix> read_prefixes_csv(std::istream& in);

// Writes summary.csv, success_by_length.csv and profile_counts.csv into dir.
// Throws ReportError when rows is empty.
std::vector<std::filesystem::path> emit_report(const std::vector<ResultRow>& rows, const std::string& classifier,
                                               const std::filesystem::path& dir);

struct StageRecord {
  std::string name;
  std::string started;
  std::string finished;
  std::string status;
  std::string message;
};

struct RunManifest {
  std::string config_hash;
  std::string version = kVersion;
  std::vector<StageRecord> stages;
  std::vector<std::pair<std::string, std::string>> artifacts;  // name, path relative to the output dir
  std::string failed_stage;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

// Pipeline stages. Each reads what earlier stages persisted in the output
// directory and writes its own artifacts before returning. Failures are
// rethrown as StageError after the manifest records them.
namespace stages {
inline constexpr const char* kIngest = "ingest";
inline constexpr const char* kSplit = "split";
inline constexpr const char* kTrain = "train";
inline constexpr const char* kAttack = "attack";
inline constexpr const char* kEvaluate = "evaluate";
inline constexpr const char* kProfile = "profile";
inline constexpr const char* kReport = "report";

std::vector<std::string> all();
RunManifest run(const RunConfig& config, const std::string& stage);
}  // namespace stages

// ingest -> split -> train -> attack -> evaluate -> profile -> report.
RunManifest run_pipeline(const RunConfig& config);

// Writes a synthetic class-pattern log as canonical CSV.
void write_synthetic_log(const std::filesystem::path& path, int traces, std::uint64_t seed);

}  // namespace latentadv
