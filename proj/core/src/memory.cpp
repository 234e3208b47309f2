#include "nsq/memory.hpp"

#include <algorithm>

namespace nsq {

double net_value(const Episode& e, FeedbackChannel channel) {
  double total = 0.0;
  for (const FeedbackSignal& s : e.feedback) {
    if (s.channel == channel) total += s.value;
  }
  return total;
}

bool matches(const Episode& e, const FeedbackPattern& pattern) {
  return net_value(e, pattern.channel) == pattern.net_value;
}

void EpisodicMemory::record(Episode e) {
  buffer_.push_back(std::move(e));
  while (buffer_.size() > capacity_) buffer_.pop_front();
}

std::vector<Episode> EpisodicMemory::recent(size_t n) const {
  size_t take = std::min(n, buffer_.size());
  return std::vector<Episode>(buffer_.end() - static_cast<ptrdiff_t>(take),
                              buffer_.end());
}

std::string EpisodicMemory::canonical(Symbol predicate) const {
  std::string name{predicate.name()};
  auto it = equivalence_.find(name);
  return it == equivalence_.end() ? name : it->second;
}

std::optional<Episode> EpisodicMemory::find_minimal_pair(
    const Literal& action, const FeedbackPattern& pattern) const {
  std::string want = canonical(action.predicate);
  for (auto it = buffer_.rbegin(); it != buffer_.rend(); ++it) {
    if (canonical(it->action.predicate) == want &&
        it->action.args.size() == action.args.size() && matches(*it, pattern)) {
      return *it;
    }
  }
  return std::nullopt;
}

void EpisodicMemory::set_equivalence(std::map<std::string, std::string> table) {
  equivalence_ = std::move(table);
}

}  // namespace nsq
