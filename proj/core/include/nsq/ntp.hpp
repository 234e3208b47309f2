#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nsq/cpg.hpp"
#include "nsq/embedding.hpp"
#include "nsq/logic.hpp"

namespace nsq {

/// Search control for the differentiable prover.
struct ProveConfig {
  int depth_max = 3;
  int beam_width = 8;
  double sigma_floor = 0.01;
};

/// One clause application in a proof tree. `score` is the minimum soft-
/// unification score across the symbol pairs matched when unifying the goal
/// with the clause head; `goal_symbol`/`clause_symbol` is the pair attaining
/// that minimum (equal symbols when the match was exact).
struct ProofStep {
  size_t clause_index = 0;
  Substitution substitution;
  double score = 1.0;
  Symbol goal_symbol;
  Symbol clause_symbol;
};

/// Proof score and the tree that attained it. `score` is the max over
/// enumerated proof trees of the min over their steps; when no tree clears
/// the floor, `score` == sigma_floor and `path` is empty.
struct ProofResult {
  double score = 0.0;
  std::vector<ProofStep> path;
};

/// (1 + cosine(e[u], e[v])) / 2, exactly 1.0 when u == v.
double soft_unify(Symbol u, Symbol v, const EmbeddingTable& e);

/// Differentiable backward chaining: clauses are matched by embedding
/// similarity rather than symbol identity (arity and structure still match
/// discretely), each goal expansion keeps the `beam_width` best-scoring
/// clause heads, and nesting is capped at `depth_max` like `entails`.
ProofResult prove(const Literal& goal, std::span<const HornClause> kb,
                  const EmbeddingTable& e, const ProveConfig& cfg = {});

inline ProofResult prove(const Literal& goal, const CausalProgramGraph& w,
                         const EmbeddingTable& e, const ProveConfig& cfg = {}) {
  return prove(goal, w.edges(), e, cfg);
}

struct LabeledGoal {
  Literal goal;
  bool label = true;
};

using Gradients = std::map<Symbol, std::vector<double>>;

/// Mean binary cross-entropy of proof scores against labels, with the
/// subgradient flowing through each goal's best proof tree at its weakest
/// (argmin) symbol pair. Scores are clamped to [eps, 1-eps] before the log;
/// goals stuck at the clamp boundary contribute zero gradient.
std::pair<double, Gradients> loss_and_grad(std::span<const LabeledGoal> batch,
                                           std::span<const HornClause> kb,
                                           const EmbeddingTable& e,
                                           const ProveConfig& cfg = {});

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 300;
  int negatives_per_positive = 8;
  int depth_max = 3;
  double sigma_floor = 0.01;
  int beam_width = 8;
  /// Unary predicates that should score low on every constant not discretely
  /// entailed; sampled as standing negatives so untrained similarity noise
  /// cannot fake a proof of e.g. harm.
  std::vector<Symbol> reserved_negative_predicates;
  /// Constants outside the current KB vocabulary to fold into corruption
  /// sampling and the reserved sweep (e.g. world kinds the agent has seen but
  /// not yet reasoned about). An unseen constant scores ~0.5 on everything.
  std::vector<Symbol> extra_sweep_constants;
};

struct TrainReport {
  int epochs_run = 0;
  double final_loss = 0.0;
  double min_positive_sigma = 1.0;
  double max_negative_sigma = 0.0;
  double min_replay_sigma = 1.0;
  bool converged = true;
  std::string warning;
};

/// Link-prediction training over the current graph: positives are the given
/// facts, negatives corrupt the first constant argument (never producing a
/// discretely entailed atom) plus the reserved-predicate sweep. Plain
/// gradient descent, deterministic given the table seed.
TrainReport train_bootstrap(const CausalProgramGraph& w,
                            const std::vector<Literal>& facts,
                            const TrainConfig& cfg, EmbeddingTable& e);

/// Continual update after a world-model delta: trains on ground queries the
/// new clauses made provable plus a replay sample of existing facts, so old
/// knowledge keeps high scores. Empty deltas are a no-op.
TrainReport fine_tune(const CausalProgramGraph& w_new, const CpgDelta& delta,
                      const TrainConfig& cfg, EmbeddingTable& e);

}  // namespace nsq
