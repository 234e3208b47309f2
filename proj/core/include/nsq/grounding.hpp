#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsq/cpg.hpp"
#include "nsq/logic.hpp"
#include "nsq/memory.hpp"
#include "nsq/ntp.hpp"

namespace nsq {

/// A mismatch between what the world model predicted for an episode and the
/// feedback that actually came back. `causal_predicate` is the channel's
/// outcome predicate (causes_damage, blocks_pickup, ...), fixed at detection
/// time because the hp channel maps to different predicates by sign.
struct PredictionError {
  Episode failing_episode;
  FeedbackPattern expected;
  FeedbackSignal actual;
  Symbol causal_predicate;
};

/// Output of minimal-contrast search: the one state atom separating the
/// failure from its closest successful precedent, plus the ground outcome
/// literal it suggests.
struct CausalHypothesis {
  Literal literal;
  Literal antecedent;
  uint64_t fail_step = 0;
  uint64_t success_step = 0;
};

enum class MetaruleKind { ident, chain2, prop };

struct Metarule {
  MetaruleKind kind;
  std::string name;
};

std::span<const Metarule> default_metarules();

struct InductionTask {
  CausalHypothesis hypothesis;
  std::vector<Literal> negatives;
};

struct GroundingConfig {
  double sigma_min = 0.5;
  /// How many recent episodes detection scans for the latest error.
  int window = 16;
  ProveConfig prove;
};

/// Everything one grounding pass produced. `delta` is a proposal; the caller
/// decides whether to commit it to the graph.
struct GroundingResult {
  std::optional<PredictionError> error;
  std::optional<CausalHypothesis> hypothesis;
  std::vector<HornClause> delta;
  std::vector<Literal> negatives;
};

/// Discrete entailment over an edge set plus a candidate delta, used as the
/// induction oracle.
bool entails_with(std::span<const HornClause> base,
                  std::span<const HornClause> delta, const Literal& goal);

/// Compares the feedback an episode produced against what `w` predicts for
/// the kinds present in its state. Returns the mismatch if the outcome was
/// worse than predicted (damage or a blocked pickup nobody saw coming);
/// over-predictions are the retraction machinery's business, not grounding's.
std::optional<PredictionError> detect_prediction_error(
    const Episode& episode, const CausalProgramGraph& w,
    const EmbeddingTable& e, const GroundingConfig& cfg);

/// Minimal contrastive search: finds the most recent episode with the same
/// action and the expected outcome, and keeps the hypothesis only when the
/// state difference is exactly one is-atom.
std::optional<CausalHypothesis> mcs(const PredictionError& err,
                                    const EpisodicMemory& m);

/// Negative examples for induction: the causal predicate applied to every
/// kind that sat in the contrast episode's state without producing the
/// outcome.
std::vector<Literal> negatives_from_contrast(const PredictionError& err,
                                             const Episode& success);

/// Meta-interpretive induction. Searches metarule instantiations over the
/// predicate vocabulary of `w` (fewest clauses, then fewest body literals,
/// then lexicographic), falling back to one support fact plus a bridging
/// property rule when no existing fact enables any metarule. Every returned
/// program discretely entails the hypothesis literal and none of the
/// negatives. Empty result means no consistent program exists.
std::vector<HornClause> induce(const InductionTask& task,
                               const CausalProgramGraph& w,
                               std::span<const Metarule> metarules);

/// Full pipeline over the most recent prediction error in memory:
/// detect -> mcs -> induce. Never proposes clauses already in `w`; returns
/// an empty delta when the hypothesis is already entailed.
GroundingResult ground(const EpisodicMemory& m, const CausalProgramGraph& w,
                       const EmbeddingTable& e, const GroundingConfig& cfg);

}  // namespace nsq
