#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepreport/evaluator.hpp"

namespace deepreport {

/// One report of one system on one task. Several entries with the same
/// system and task are repeated runs and get averaged.
struct SystemRun {
  std::string system;
  std::string task_id;
  std::filesystem::path report;
  std::optional<std::filesystem::path> sidecar;
  std::optional<double> time_seconds;

  json to_json() const;
  static SystemRun from_json(const json& value);
  /// "system:task_id:report.md[:sidecar.ndjson]".
  static SystemRun parse_spec(const std::string& spec);
};

struct EvalJob {
  std::filesystem::path dataset;
  std::vector<SystemRun> runs;
  EvalMode mode = EvalMode::full;
  EvalConfig config;

  static EvalJob from_json(const json& value);
};

struct SystemResult {
  std::string system;
  MetricReport mean;
  std::vector<MetricReport> runs;  // per-run values kept next to the mean
};

struct Comparison {
  std::vector<SystemResult> systems;
  std::optional<RankTable> table;  // two or more systems

  json to_json() const;
  /// The rank table, or the raw metric values for a single system.
  std::string render() const;
};

/// Evaluates every run against its dataset task and ranks the systems.
/// Throws SchemaError for bad dataset or sidecar lines, PreconditionError
/// for missing files or unknown task ids, DimensionMismatch when systems
/// end up with different metric sets.
Comparison compare_systems(const EvalJob& job, EvalJudge& judge, SourceLookup& sources);

}  // namespace deepreport
