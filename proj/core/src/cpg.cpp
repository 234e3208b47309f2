#include "nsq/cpg.hpp"

#include <charconv>
#include <sstream>

namespace nsq {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::bootstrap: return "bootstrap";
    case Provenance::induced: return "induced";
    case Provenance::retraction: return "retraction";
  }
  return "unknown";
}

void CausalProgramGraph::rebuild_derived_state() {
  by_head_.clear();
  alpha_keys_.clear();
  nodes_.clear();
  for (size_t i = 0; i < edges_.size(); ++i) {
    const HornClause& c = edges_[i];
    by_head_[c.head.predicate].push_back(i);
    alpha_keys_.insert(alpha_key(c));
    nodes_.insert(c.head.predicate);
    for (const auto& t : c.head.args)
      if (!t.is_variable()) nodes_.insert(t.sym);
    for (const auto& l : c.body) {
      nodes_.insert(l.predicate);
      for (const auto& t : l.args)
        if (!t.is_variable()) nodes_.insert(t.sym);
    }
  }
}

CpgDelta CausalProgramGraph::add_rule(const HornClause& c, Provenance reason) {
  validate_clause(c);
  CpgDelta delta;
  delta.reason = reason;
  if (alpha_keys_.count(alpha_key(c))) return delta;
  edges_.push_back(c);
  rebuild_derived_state();
  ++revision_;
  ++rules_added_;
  delta.added.push_back(c);
  return delta;
}

CpgDelta CausalProgramGraph::retract_rule(const HornClause& c) {
  CpgDelta delta;
  delta.reason = Provenance::retraction;
  const std::string key = alpha_key(c);
  for (auto it = edges_.begin(); it != edges_.end(); ++it) {
    if (alpha_key(*it) != key) continue;
    delta.retracted.push_back(*it);
    edges_.erase(it);
    rebuild_derived_state();
    ++revision_;
    ++rules_retracted_;
    break;
  }
  return delta;
}

std::vector<HornClause> CausalProgramGraph::clauses_for(Symbol predicate) const {
  std::vector<HornClause> out;
  auto it = by_head_.find(predicate);
  if (it == by_head_.end()) return out;
  out.reserve(it->second.size());
  for (size_t i : it->second) out.push_back(edges_[i]);
  return out;
}

bool CausalProgramGraph::contains(const HornClause& c) const {
  return alpha_keys_.count(alpha_key(c)) > 0;
}

std::string CausalProgramGraph::snapshot(uint64_t timestamp) const {
  std::ostringstream out;
  out << "%% revision: " << revision_ << "\n";
  out << "%% nodes: " << nodes_.size() << "\n";
  out << "%% edges: " << edges_.size() << "\n";
  out << "%% added: " << rules_added_ << "\n";
  out << "%% retracted: " << rules_retracted_ << "\n";
  out << "%% timestamp: " << timestamp << "\n";
  for (const auto& c : edges_) out << render(c) << "\n";
  return out.str();
}

CausalProgramGraph CausalProgramGraph::load(std::string_view text) {
  CausalProgramGraph w;
  for (const auto& c : parse_program(text)) {
    w.edges_.push_back(c);
  }
  w.rebuild_derived_state();

  // The parser skips %% lines as comments; recover persisted counters here.
  auto header_value = [text](std::string_view field) -> std::optional<uint64_t> {
    std::string needle = std::string("%% ") + std::string(field) + ":";
    size_t pos = text.find(needle);
    if (pos == std::string_view::npos) return std::nullopt;
    size_t start = pos + needle.size();
    while (start < text.size() && text[start] == ' ') ++start;
    size_t end = start;
    while (end < text.size() && text[end] >= '0' && text[end] <= '9') ++end;
    uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data() + start, text.data() + end, value);
    if (ec != std::errc() || ptr == text.data() + start) return std::nullopt;
    return value;
  };

  w.revision_ = header_value("revision").value_or(w.edges_.size());
  w.rules_added_ = header_value("added").value_or(w.edges_.size());
  w.rules_retracted_ = header_value("retracted").value_or(0);
  return w;
}

}  // namespace nsq
