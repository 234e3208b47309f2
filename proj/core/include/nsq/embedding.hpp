#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nsq/logic.hpp"

namespace nsq {

/// Trainable symbol embeddings. Vectors are created lazily: the first lookup
/// of an unseen symbol derives a reproducible vector from (table seed,
/// symbol name), so concurrent readers and growing vocabularies both work
/// without coordination beyond the internal lock. One-hot tables are fixed
/// vocabulary and refuse unknown symbols instead.
class EmbeddingTable {
 public:
  EmbeddingTable(size_t dim, uint64_t seed);

  /// Orthonormal basis table over exactly `vocab`; dim = |vocab|. Unknown
  /// symbols are an error rather than lazily initialized.
  static EmbeddingTable one_hot(std::span<const Symbol> vocab);

  EmbeddingTable(const EmbeddingTable& o);
  EmbeddingTable& operator=(const EmbeddingTable& o);

  size_t dim() const { return dim_; }
  uint64_t seed() const { return seed_; }

  /// Returns the vector for `s`, creating it if the table is lazily
  /// initialized. Throws std::out_of_range naming the symbol on fixed-
  /// vocabulary tables.
  const std::vector<double>& lookup(Symbol s) const;

  bool has(Symbol s) const;
  void set(Symbol s, std::vector<double> v);

  /// Forces initialization for every non-variable symbol in `kb`.
  void ensure_vocabulary(std::span<const HornClause> kb);

  /// Symbols with materialized vectors, sorted by name (stable across runs
  /// regardless of interning order).
  std::vector<Symbol> vocabulary() const;

  /// Header line (dim, seed, lazy flag, vocab size) followed by one line per
  /// symbol: name then dim values, 17 significant digits, name-sorted.
  std::string serialize() const;
  static EmbeddingTable deserialize(std::string_view text);

 private:
  std::vector<double> initial_vector(std::string_view name) const;

  size_t dim_;
  uint64_t seed_;
  bool lazy_init_ = true;
  mutable std::mutex mu_;
  mutable std::map<Symbol, std::vector<double>> vectors_;
};

/// Predicate and constant symbols appearing in a clause set. Variables are
/// excluded; a symbol in predicate position lands in `predicates`, one in
/// argument position lands in `constants`.
struct VocabularySplit {
  std::set<Symbol> predicates;
  std::set<Symbol> constants;
};
VocabularySplit split_vocabulary(std::span<const HornClause> kb);

}  // namespace nsq
