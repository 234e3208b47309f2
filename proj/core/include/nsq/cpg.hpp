#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nsq/logic.hpp"

namespace nsq {

/// Where a world-model mutation came from.
enum class Provenance { bootstrap, induced, retraction };

std::string_view to_string(Provenance p);

/// Outcome of a single mutation: which clauses actually entered or left the
/// graph. No-ops produce empty deltas.
struct CpgDelta {
  std::vector<HornClause> added;
  std::vector<HornClause> retracted;
  Provenance reason = Provenance::bootstrap;

  bool empty() const { return added.empty() && retracted.empty(); }
};

/// Causal world model: a hypergraph whose nodes are the predicate and
/// constant symbols in play and whose hyperedges are Horn clauses. Clauses
/// are kept in insertion order and deduplicated up to variable renaming.
///
/// Single-writer, multiple-reader: mutations must be serialized by the
/// owner; const reads (including snapshot) may run concurrently as long as
/// no mutation is in flight.
class CausalProgramGraph {
 public:
  /// Inserts `c` unless an alpha-equivalent clause is already present.
  /// Throws std::invalid_argument if `c` is not range-restricted.
  CpgDelta add_rule(const HornClause& c, Provenance reason);

  /// Removes the clause alpha-equivalent to `c`, if any. Symbols no longer
  /// mentioned by any remaining edge leave the node set.
  CpgDelta retract_rule(const HornClause& c);

  /// Hyperedges whose head predicate is `predicate`, in insertion order.
  std::vector<HornClause> clauses_for(Symbol predicate) const;

  bool contains(const HornClause& c) const;

  /// All hyperedges in insertion order; usable directly as a KB for
  /// entailment queries.
  std::span<const HornClause> edges() const { return edges_; }
  const std::set<Symbol>& nodes() const { return nodes_; }

  uint64_t revision() const { return revision_; }
  uint64_t rules_added() const { return rules_added_; }
  uint64_t rules_retracted() const { return rules_retracted_; }

  /// Rule-format text with a `%%` metadata header. `timestamp` is the
  /// caller's step counter; wall-clock time never enters snapshots.
  std::string snapshot(uint64_t timestamp) const;

  /// Parses text produced by snapshot (or any rule file; `%%` lines are
  /// treated as comments by the parser and counters are restored from the
  /// header when present).
  static CausalProgramGraph load(std::string_view text);

 private:
  void rebuild_derived_state();

  std::vector<HornClause> edges_;
  std::map<Symbol, std::vector<size_t>> by_head_;
  std::set<std::string> alpha_keys_;
  std::set<Symbol> nodes_;
  uint64_t revision_ = 0;
  uint64_t rules_added_ = 0;
  uint64_t rules_retracted_ = 0;
};

}  // namespace nsq
