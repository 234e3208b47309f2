#include "nsq/grounding.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>

namespace nsq {

namespace {

constexpr int kOracleDepth = 8;

Symbol sym(std::string_view name) { return Symbol::intern(name); }

/// Channel outcome predicate -> reserved property predicate used by the
/// support-fact route. enables has no property twin; composite goals are out
/// of induction's scope.
std::optional<Symbol> property_twin(Symbol causal) {
  if (causal == sym("causes_damage")) return sym("is_harmful");
  if (causal == sym("blocks_pickup")) return sym("is_blocking");
  if (causal == sym("causes_healing")) return sym("is_beneficial");
  return std::nullopt;
}

/// Kinds mentioned by the is-atoms of a state.
std::vector<Symbol> state_subjects(const std::set<Literal>& state) {
  std::vector<Symbol> out;
  for (const Literal& l : state) {
    if (l.predicate == sym("is") && l.args.size() == 2 && l.is_ground()) {
      out.push_back(l.args[0].sym);
    }
  }
  return out;
}

bool predicted(const CausalProgramGraph& w, const EmbeddingTable& e,
               const GroundingConfig& cfg, Symbol causal,
               std::span<const Symbol> subjects) {
  for (Symbol s : subjects) {
    Literal goal{causal, {Term(s)}};
    if (prove(goal, w, e, cfg.prove).score >= cfg.sigma_min) return true;
  }
  return false;
}

}  // namespace

std::span<const Metarule> default_metarules() {
  static const std::array<Metarule, 3> all = {
      Metarule{MetaruleKind::ident, "ident"},
      Metarule{MetaruleKind::chain2, "chain2"},
      Metarule{MetaruleKind::prop, "prop"},
  };
  return all;
}

bool entails_with(std::span<const HornClause> base,
                  std::span<const HornClause> delta, const Literal& goal) {
  std::vector<HornClause> kb(base.begin(), base.end());
  kb.insert(kb.end(), delta.begin(), delta.end());
  return entails(kb, goal, kOracleDepth);
}

std::optional<PredictionError> detect_prediction_error(
    const Episode& episode, const CausalProgramGraph& w,
    const EmbeddingTable& e, const GroundingConfig& cfg) {
  std::vector<Symbol> subjects = state_subjects(episode.state);

  double hp = net_value(episode, FeedbackChannel::hp);
  if (hp < 0 && !predicted(w, e, cfg, sym("causes_damage"), subjects)) {
    PredictionError err;
    err.failing_episode = episode;
    err.expected = {FeedbackChannel::hp, 0};
    err.actual = make_signal(FeedbackChannel::hp, "hp", hp);
    err.causal_predicate = sym("causes_damage");
    return err;
  }
  if (hp > 0 && !predicted(w, e, cfg, sym("causes_healing"), subjects)) {
    PredictionError err;
    err.failing_episode = episode;
    err.expected = {FeedbackChannel::hp, 0};
    err.actual = make_signal(FeedbackChannel::hp, "hp", hp);
    err.causal_predicate = sym("causes_healing");
    return err;
  }

  bool blocked = std::any_of(
      episode.feedback.begin(), episode.feedback.end(), [](const FeedbackSignal& s) {
        return s.channel == FeedbackChannel::inventory && s.content == "blocked";
      });
  if (blocked && !predicted(w, e, cfg, sym("blocks_pickup"), subjects)) {
    PredictionError err;
    err.failing_episode = episode;
    err.expected = {FeedbackChannel::inventory, 1};
    err.actual = make_signal(FeedbackChannel::inventory, "blocked", 0);
    err.causal_predicate = sym("blocks_pickup");
    return err;
  }
  return std::nullopt;
}

std::optional<CausalHypothesis> mcs(const PredictionError& err,
                                    const EpisodicMemory& m) {
  auto pair = m.find_minimal_pair(err.failing_episode.action, err.expected);
  if (!pair) return std::nullopt;

  std::vector<Literal> diff;
  std::set_difference(err.failing_episode.state.begin(),
                      err.failing_episode.state.end(), pair->state.begin(),
                      pair->state.end(), std::back_inserter(diff));
  if (diff.size() != 1) return std::nullopt;
  const Literal& antecedent = diff[0];
  if (antecedent.predicate != sym("is") || antecedent.args.size() != 2 ||
      !antecedent.is_ground()) {
    return std::nullopt;
  }

  CausalHypothesis h;
  h.antecedent = antecedent;
  h.literal = Literal{err.causal_predicate, {antecedent.args[0]}};
  h.fail_step = err.failing_episode.step_index;
  h.success_step = pair->step_index;
  return h;
}

std::vector<Literal> negatives_from_contrast(const PredictionError& err,
                                             const Episode& success) {
  std::set<Literal> out;
  for (Symbol subject : state_subjects(success.state)) {
    out.insert(Literal{err.causal_predicate, {Term(subject)}});
  }
  return {out.begin(), out.end()};
}

namespace {

bool program_valid(const CausalProgramGraph& w,
                   std::span<const HornClause> delta, const Literal& e_plus,
                   std::span<const Literal> negatives) {
  if (!entails_with(w.edges(), delta, e_plus)) return false;
  for (const Literal& n : negatives) {
    if (entails_with(w.edges(), delta, n)) return false;
  }
  return true;
}

}  // namespace

std::vector<HornClause> induce(const InductionTask& task,
                               const CausalProgramGraph& w,
                               std::span<const Metarule> metarules) {
  const Literal& e_plus = task.hypothesis.literal;
  if (entails_with(w.edges(), {}, e_plus)) return {};

  bool use_ident = false, use_chain2 = false, use_prop = false;
  for (const Metarule& m : metarules) {
    if (m.kind == MetaruleKind::ident) use_ident = true;
    if (m.kind == MetaruleKind::chain2) use_chain2 = true;
    if (m.kind == MetaruleKind::prop) use_prop = true;
  }

  // Predicate vocabulary of the current graph, keyed by name for stable
  // enumeration order.
  std::map<std::string, Symbol> unary, binary;
  auto note = [&](const Literal& l) {
    if (l.predicate == e_plus.predicate) return;
    if (l.args.size() == 1) unary.emplace(std::string{l.predicate.name()}, l.predicate);
    if (l.args.size() == 2) binary.emplace(std::string{l.predicate.name()}, l.predicate);
  };
  for (const HornClause& c : w.edges()) {
    note(c.head);
    for (const Literal& l : c.body) note(l);
  }

  Term x = Term::variable("X");
  Term y = Term::variable("Y");
  Literal head{e_plus.predicate, {x}};

  // One clause, one body literal: ident and prop instantiations compete
  // lexicographically on their rendered form.
  std::vector<HornClause> single;
  if (use_ident) {
    for (const auto& [_, q] : unary) {
      single.push_back(HornClause{head, {Literal{q, {x}}}});
    }
  }
  if (use_prop) {
    for (const auto& [_, q] : binary) {
      single.push_back(HornClause{head, {Literal{q, {x, y}}}});
    }
  }
  std::sort(single.begin(), single.end(), [](const HornClause& a, const HornClause& b) {
    return render(a) < render(b);
  });
  for (const HornClause& c : single) {
    if (w.contains(c)) continue;
    std::vector<HornClause> h{c};
    if (program_valid(w, h, e_plus, task.negatives)) return h;
  }

  // One clause, two body literals.
  if (use_chain2) {
    std::vector<HornClause> doubles;
    for (const auto& [qn, q] : unary) {
      for (const auto& [rn, r] : unary) {
        if (qn >= rn) continue;
        doubles.push_back(HornClause{head, {Literal{q, {x}}, Literal{r, {x}}}});
      }
    }
    std::sort(doubles.begin(), doubles.end(),
              [](const HornClause& a, const HornClause& b) {
                return render(a) < render(b);
              });
    for (const HornClause& c : doubles) {
      if (w.contains(c)) continue;
      std::vector<HornClause> h{c};
      if (program_valid(w, h, e_plus, task.negatives)) return h;
    }
  }

  // No existing fact enables any metarule: introduce one property fact and,
  // unless it is already present, the bridging rule to the outcome.
  std::optional<Symbol> p_star = property_twin(e_plus.predicate);
  if (!p_star) return {};
  HornClause fact{Literal{*p_star, {e_plus.args[0]}}, {}};
  HornClause bridge{head, {Literal{*p_star, {x}}}};
  std::vector<HornClause> support{fact};
  if (!w.contains(bridge)) support.push_back(bridge);
  if (program_valid(w, support, e_plus, task.negatives)) return support;
  return {};
}

GroundingResult ground(const EpisodicMemory& m, const CausalProgramGraph& w,
                       const EmbeddingTable& e, const GroundingConfig& cfg) {
  GroundingResult result;
  std::vector<Episode> window = m.recent(static_cast<size_t>(cfg.window));
  for (auto it = window.rbegin(); it != window.rend(); ++it) {
    if (auto err = detect_prediction_error(*it, w, e, cfg)) {
      result.error = std::move(err);
      break;
    }
  }
  if (!result.error) return result;

  result.hypothesis = mcs(*result.error, m);
  if (!result.hypothesis) return result;

  auto success = m.find_minimal_pair(result.error->failing_episode.action,
                                     result.error->expected);
  result.negatives = negatives_from_contrast(*result.error, *success);

  InductionTask task{*result.hypothesis, result.negatives};
  std::vector<HornClause> delta = induce(task, w, default_metarules());
  for (const HornClause& c : delta) {
    if (!w.contains(c)) result.delta.push_back(c);
  }
  return result;
}

}  // namespace nsq
