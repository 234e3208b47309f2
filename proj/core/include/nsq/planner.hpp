#pragma once

#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsq/cpg.hpp"
#include "nsq/logic.hpp"
#include "nsq/ntp.hpp"
#include "nsq/world.hpp"

namespace nsq {

/// One candidate plan toward a quest goal. proposed_plan holds abstract
/// action atoms (approach(coin), pickup(coin), goto(loc7_2), ...);
/// avoid_kinds lists entity kinds whose adjacency rings the translated path
/// must keep out of. A candidate for an already-satisfied goal has an empty
/// plan and `complete` set.
struct Subgoal {
  Literal atom;
  std::string rationale_text;
  std::vector<Literal> proposed_plan;
  std::vector<std::string> avoid_kinds;
  bool complete = false;
};

struct VerifierPolicy {
  double sigma_min = 0.5;
  std::vector<Symbol> harm_predicates{Symbol::intern("causes_damage")};
  bool reject_on_harm = true;
  ProveConfig prove;
};

enum class PlannerBackend { scripted, llm };

struct LlmConfig {
  std::string endpoint;
  std::string model = "planner-large";
  int max_tokens = 512;
};

struct PlannerConfig {
  PlannerBackend backend = PlannerBackend::scripted;
  LlmConfig llm;
  size_t max_candidates = 6;
  /// Sink for backend warnings and redacted request logs; null silences.
  std::ostream* log = nullptr;
};

class TranslateError : public std::runtime_error {
 public:
  explicit TranslateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Expands a subgoal into executable commands against the current percept.
/// approach/goto atoms become shortest move sequences (honoring the
/// candidate's avoid list); every other atom maps 1:1 onto a command.
/// Throws TranslateError naming the offending atom when a target is unknown
/// or unreachable.
std::vector<Command> translate(const Subgoal& sg, const Percept& p);

/// Candidate plans in judgment order. The scripted backend emits the direct
/// plan, one hazard-avoiding variant per entity kind adjacent to the direct
/// path, an avoid-everything variant when several such kinds exist, and a
/// fetch-key-unlock-door variant when the scene allows it. Kinds with
/// harm or blocking facts in `w` promote the cautious variants ahead of the
/// direct plan. Untranslatable candidates are dropped. The llm backend
/// parses structured candidates from one HTTP call and falls back to the
/// scripted list (with a logged warning) on any transport or parse failure.
std::vector<Subgoal> generate_subgoals(const Literal& goal, const Percept& p,
                                       const CausalProgramGraph& w,
                                       const PlannerConfig& cfg);

enum class VerdictOutcome { harm_rejected, cleared, low_confidence };

struct CandidateVerdict {
  int index = 0;
  VerdictOutcome outcome = VerdictOutcome::low_confidence;
  /// Kind and predicate behind a harm rejection, or the goal atom scored.
  std::string detail;
  double sigma = 0.0;
};

struct SelectionResult {
  /// Index into the candidate list; -1 when every candidate was rejected.
  int selected_index = -1;
  bool rejected_all = false;
  std::vector<CandidateVerdict> verdicts;
};

/// Entity kinds whose adjacency ring the command path enters. The starting
/// cell is exempt: standing next to something is not the same as walking up
/// to it.
std::set<std::string> touched_kinds(const std::vector<Command>& commands,
                                    const Percept& p);

/// Walks candidates in order. A candidate whose path touches a kind provable
/// harmful at or above sigma_min is rejected (when reject_on_harm). The
/// first surviving candidate whose goal atom proves at or above sigma_min
/// wins; if none does, the first surviving candidate wins. rejected_all is
/// set only when no candidate survives.
SelectionResult verify_and_select(std::span<const Subgoal> candidates,
                                  const Percept& p,
                                  const CausalProgramGraph& w,
                                  const EmbeddingTable& e,
                                  const VerifierPolicy& policy);

struct LlmResult {
  bool ok = false;
  int status = 0;
  std::string body;
  std::string error;
};

/// Single POST of {model, prompt, max_tokens} to cfg.endpoint. The bearer
/// token comes from NSQUEST_LLM_TOKEN; request logs always redact it.
LlmResult llm_post(const LlmConfig& cfg, const std::string& prompt,
                   std::ostream* log);

}  // namespace nsq
