#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nsq/cpg.hpp"
#include "nsq/grounding.hpp"
#include "nsq/memory.hpp"
#include "nsq/ntp.hpp"
#include "nsq/planner.hpp"
#include "nsq/world.hpp"

namespace nsq {

/// full: plan, verify, learn. no_ntp: plan and learn, execute the first
/// candidate unverified. no_ilp: plan and verify over the frozen bootstrap
/// model. baseline: plan blind, no verification, no learning.
enum class AgentMode { full, no_ntp, no_ilp, baseline };

std::string_view to_string(AgentMode m);
std::optional<AgentMode> agent_mode_from(std::string_view name);

struct AgentConfig {
  AgentMode mode = AgentMode::full;
  PlannerConfig planner;
  VerifierPolicy verifier;
  GroundingConfig grounding;
  TrainConfig train;
  size_t embedding_dim = 64;
  size_t memory_capacity = 256;
  int max_attempts = 20;
  /// Ring entries a damage belief must survive unpunished before the fact
  /// behind it is withdrawn.
  int retraction_threshold = 2;
  /// Entity kinds folded into negative sampling before they carry any rules.
  std::vector<std::string> sweep_kinds;
};

struct VerdictRecord {
  std::string rationale;
  std::string outcome;
  std::string detail;
  double sigma = 0.0;
};

struct AttemptRecord {
  int index = 0;
  bool stalled = false;
  std::string selected_rationale;
  std::vector<VerdictRecord> verdicts;
  std::vector<std::string> commands;
  std::vector<std::string> signals;
  int interactions = 0;
  int hp_delta = 0;
  std::vector<std::string> rules_added;
  std::vector<std::string> rules_retracted;
};

struct QuestRecord {
  std::string quest_id;
  int difficulty = 0;
  bool success = false;
  bool first_try = false;
  /// Attempts consumed, stalls included.
  int iterations = 0;
  /// Commands actually executed across all attempts.
  int interactions = 0;
  /// World-model deltas committed while adapting to this quest.
  int adaptation_trials = 0;
  int rules_added = 0;
  int rules_retracted = 0;
  int hp_start = kHpMax;
  int hp_end = kHpMax;
  std::vector<AttemptRecord> attempts;
};

/// Planner-verifier loop around one persistent world model, episodic memory,
/// and embedding table. Quests run sequentially and share everything the
/// mode allows them to share.
class Agent {
 public:
  Agent(AgentConfig cfg, uint64_t seed);

  /// Loads the foundational program and trains embeddings against it (all
  /// modes except baseline, whose model is never consulted).
  void bootstrap(const std::vector<HornClause>& program);

  QuestRecord run_quest(const QuestSpec& q);

  const CausalProgramGraph& world_model() const { return w_; }
  const EpisodicMemory& memory() const { return memory_; }
  const EmbeddingTable& embeddings() const { return emb_; }
  const AgentConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }

  /// Receives one JSON object per line-worthy event; no wall-clock fields.
  void set_log_sink(std::function<void(const std::string&)> sink);

 private:
  AttemptRecord perceive_and_act(WorldState& ws, const QuestSpec& q);
  void learn_from_experience(AttemptRecord& attempt, const QuestSpec& q);
  void apply_retractions(AttemptRecord& attempt, const QuestSpec& q);
  void note_contradiction(const std::string& kind);
  TrainConfig train_config() const;
  const CausalProgramGraph& planning_graph() const;
  bool uses_verifier() const;
  bool learns() const;
  void emit(const std::string& line);

  struct BlameEntry {
    HornClause fact;
    int count = 0;
  };

  AgentConfig cfg_;
  uint64_t seed_;
  CausalProgramGraph w_;
  EmbeddingTable emb_;
  EpisodicMemory memory_;
  CausalProgramGraph empty_w_;
  /// Unpunished ring entries per believed-harmful fact, keyed by rendering.
  std::map<std::string, BlameEntry> contradictions_;
  std::function<void(const std::string&)> sink_;
  uint64_t quest_counter_ = 0;
};

}  // namespace nsq
