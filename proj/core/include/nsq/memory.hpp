#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nsq/logic.hpp"
#include "nsq/world.hpp"

namespace nsq {

/// One executed abstract action: the local state it ran in, the action atom,
/// and the feedback it produced. step_index is the global episode counter of
/// the recording agent, so later episodes always carry larger values.
struct Episode {
  std::set<Literal> state;
  Literal action;
  std::vector<FeedbackSignal> feedback;
  uint64_t step_index = 0;
  std::string quest_id;
};

/// Matches episodes by the net signed value accumulated on one channel:
/// {hp, 0} picks out episodes that ended with no hp change.
struct FeedbackPattern {
  FeedbackChannel channel = FeedbackChannel::hp;
  double net_value = 0.0;
};

double net_value(const Episode& e, FeedbackChannel channel);

bool matches(const Episode& e, const FeedbackPattern& pattern);

/// Bounded FIFO of episodes. Eviction drops the oldest entry once capacity
/// is reached; lookups never mutate.
class EpisodicMemory {
 public:
  explicit EpisodicMemory(size_t capacity = 256) : capacity_(capacity) {}

  void record(Episode e);

  /// The most recent min(n, size) episodes, oldest first, newest last.
  std::vector<Episode> recent(size_t n) const;

  /// Most recent episode whose action matches `action` (same predicate after
  /// canonicalization, same argument count) and whose feedback matches
  /// `pattern`. Ties cannot occur: step indices are unique.
  std::optional<Episode> find_minimal_pair(const Literal& action,
                                           const FeedbackPattern& pattern) const;

  /// Maps action predicate synonyms onto a canonical name before matching.
  void set_equivalence(std::map<std::string, std::string> table);

  size_t size() const { return buffer_.size(); }
  size_t capacity() const { return capacity_; }

 private:
  std::string canonical(Symbol predicate) const;

  size_t capacity_;
  std::deque<Episode> buffer_;
  std::map<std::string, std::string> equivalence_;
};

}  // namespace nsq
