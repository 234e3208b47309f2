#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsq/agent.hpp"

namespace nsq {

/// The experiment grid: every mode crossed with every seed, one agent per
/// cell, all cells starting from the same bootstrap program and curriculum.
struct ExperimentMatrix {
  std::vector<AgentMode> modes;
  std::vector<uint64_t> seeds;
  std::string curriculum_path;
  std::string bootstrap_path;
  std::string output_dir;
  /// Template for every run; mode is overridden per cell.
  AgentConfig agent;
  size_t workers = 4;
};

/// Mean and population standard deviation over seeds, so one seed reads
/// exactly 0.
struct Stat {
  double mean = 0.0;
  double stddev = 0.0;
};

struct ModeStats {
  Stat success_pct;
  Stat first_try_pct;
  Stat iterations;         // mean per quest
  Stat interactions;       // mean per quest
  Stat rules_added;        // total per run
  Stat rules_retracted;    // total per run
  Stat adaptation_trials;  // total per run
  std::map<int, Stat> difficulty_success_pct;
};

struct RunResult {
  AgentMode mode = AgentMode::full;
  uint64_t seed = 0;
  std::vector<QuestRecord> quests;
  bool crashed = false;
  std::string error;
};

struct AggregateReport {
  std::map<std::string, ModeStats> modes;
  /// Mode-major, seed-minor, matching the matrix declaration order.
  std::vector<RunResult> runs;
  size_t quest_count = 0;
};

/// Runs the grid in parallel (up to matrix.workers threads) and writes, under
/// matrix.output_dir: run_<mode>_<seed>.jsonl, growth_<mode>_<seed>.csv,
/// snapshots/<mode>_<seed>_<index>_<quest>.cpg, report.csv, report.json.
/// A run that throws keeps its partial log, records the remaining quests as
/// failures, and the rest of the matrix continues.
AggregateReport run_matrix(const ExperimentMatrix& matrix);

/// The single-threaded reduce behind run_matrix, usable on parsed logs.
AggregateReport aggregate(std::vector<RunResult> runs);

/// Rebuilds a run's quest records from its JSONL event log.
RunResult parse_run_log(std::istream& in, AgentMode mode, uint64_t seed);

struct OrderingCheck {
  bool pass = false;
  /// Each entry names one violated comparison.
  std::vector<std::string> violations;
};

/// Ablation ordering on mean quest success and first-try success:
/// full >= no_ntp >= no_ilp, full >= no_ntp >= baseline, and full strictly
/// highest on first-try. Throws std::invalid_argument when the report does
/// not cover all four modes.
OrderingCheck check_ordering(const AggregateReport& report);

/// Checks that a run log is a legal interleaving of the loop's phases:
/// episodes recorded before a delta, deltas before retractions, every cycle
/// closed by an attempt, quests bracketed by quest_start/quest_end. Returns
/// a description of the first offence, or nullopt for a clean log.
std::optional<std::string> validate_run_log(
    const std::vector<std::string>& lines);

/// Reads a JSON run-config file; relative paths inside it resolve against
/// the config file's directory. Throws std::runtime_error on unreadable or
/// malformed input.
ExperimentMatrix load_run_config(const std::string& path);

std::string report_csv(const AggregateReport& report);
std::string report_json(const AggregateReport& report);

}  // namespace nsq
