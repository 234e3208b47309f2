#include "nsq/ntp.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <optional>
#include <sstream>

namespace nsq {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

double soft_unify(Symbol u, Symbol v, const EmbeddingTable& e) {
  if (u == v) {
    e.lookup(u);  // still an error if the symbol has no embedding
    return 1.0;
  }
  const auto& a = e.lookup(u);
  const auto& b = e.lookup(v);
  double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.5;
  double cosine = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
  return (1.0 + cosine) / 2.0;
}

namespace {

struct Pending {
  Literal lit;
  int depth;
};

struct HeadMatch {
  size_t clause_index;
  double score;
  Symbol goal_symbol;
  Symbol clause_symbol;
  Substitution theta;
  HornClause renamed;
};

// Soft unification of a goal with a clause head: arity must match and
// variables bind discretely; every constant/constant and predicate pair
// contributes a similarity score, of which the minimum is kept.
std::optional<HeadMatch> head_match(const Literal& goal, const HornClause& clause,
                                    size_t index, const Substitution& start,
                                    const EmbeddingTable& e) {
  HornClause renamed = rename_apart(clause);
  const Literal& head = renamed.head;
  if (goal.args.size() != head.args.size()) return std::nullopt;

  Substitution s = start;
  double min_score = soft_unify(goal.predicate, head.predicate, e);
  Symbol gs = goal.predicate, cs = head.predicate;
  for (size_t i = 0; i < goal.args.size(); ++i) {
    Term a = s.resolve(goal.args[i]);
    Term b = s.resolve(head.args[i]);
    if (a == b) continue;
    if (a.is_variable()) {
      s.bind(a.sym, b);
    } else if (b.is_variable()) {
      s.bind(b.sym, a);
    } else {
      double sc = soft_unify(a.sym, b.sym, e);
      if (sc < min_score) {
        min_score = sc;
        gs = a.sym;
        cs = b.sym;
      }
    }
  }
  return HeadMatch{index, min_score, gs, cs, std::move(s), std::move(renamed)};
}

struct Search {
  std::span<const HornClause> kb;
  const EmbeddingTable& e;
  const ProveConfig& cfg;
  double best;
  bool found = false;
  std::vector<ProofStep> best_path;
  std::vector<ProofStep> steps;
};

// Depth-first enumeration of proof trees with branch-and-bound: a branch
// whose running minimum cannot strictly beat the best complete tree is cut,
// which also makes the first tree found the stable argmax under ties.
void descend(Search& s, std::vector<Pending> goals, const Substitution& theta,
             double run_min) {
  if (run_min <= s.best) return;
  if (goals.empty()) {
    s.best = run_min;
    s.best_path = s.steps;
    s.found = true;
    return;
  }
  Pending g = goals.back();
  goals.pop_back();
  if (g.depth <= 0) return;
  Literal goal = theta.apply(g.lit);

  std::vector<HeadMatch> matches;
  for (size_t ci = 0; ci < s.kb.size(); ++ci) {
    if (auto m = head_match(goal, s.kb[ci], ci, theta, s.e)) {
      matches.push_back(std::move(*m));
    }
  }
  std::stable_sort(matches.begin(), matches.end(),
                   [](const HeadMatch& a, const HeadMatch& b) { return a.score > b.score; });
  if (matches.size() > static_cast<size_t>(s.cfg.beam_width))
    matches.resize(s.cfg.beam_width);

  for (auto& m : matches) {
    double next_min = std::min(run_min, m.score);
    if (next_min <= s.best) continue;
    std::vector<Pending> next = goals;
    for (auto it = m.renamed.body.rbegin(); it != m.renamed.body.rend(); ++it)
      next.push_back({*it, g.depth - 1});
    ProofStep step;
    step.clause_index = m.clause_index;
    step.substitution = m.theta;
    step.substitution.normalize();
    step.score = m.score;
    step.goal_symbol = m.goal_symbol;
    step.clause_symbol = m.clause_symbol;
    s.steps.push_back(std::move(step));
    descend(s, std::move(next), m.theta, next_min);
    s.steps.pop_back();
  }
}

}  // namespace

ProofResult prove(const Literal& goal, std::span<const HornClause> kb,
                  const EmbeddingTable& e, const ProveConfig& cfg) {
  Search s{kb, e, cfg, cfg.sigma_floor, false, {}, {}};
  descend(s, {{goal, cfg.depth_max}}, Substitution{}, 1.0);
  if (!s.found) return ProofResult{cfg.sigma_floor, {}};
  return ProofResult{s.best, std::move(s.best_path)};
}

std::pair<double, Gradients> loss_and_grad(std::span<const LabeledGoal> batch,
                                           std::span<const HornClause> kb,
                                           const EmbeddingTable& e,
                                           const ProveConfig& cfg) {
  constexpr double kEps = 1e-6;
  double total = 0.0;
  Gradients grads;
  for (const auto& item : batch) {
    ProofResult res = prove(item.goal, kb, e, cfg);
    double sigma = res.score;
    double clamped = std::clamp(sigma, kEps, 1.0 - kEps);
    double y = item.label ? 1.0 : 0.0;
    total += -(y * std::log(clamped) + (1.0 - y) * std::log(1.0 - clamped));

    if (res.path.empty()) continue;                        // at the floor: flat
    if (sigma <= kEps || sigma >= 1.0 - kEps) continue;    // clamped: flat
    const ProofStep* weakest = nullptr;
    for (const auto& st : res.path) {
      if (st.score == sigma) {
        weakest = &st;
        break;
      }
    }
    if (!weakest || weakest->goal_symbol == weakest->clause_symbol) continue;

    const auto& u = e.lookup(weakest->goal_symbol);
    const auto& v = e.lookup(weakest->clause_symbol);
    double nu = norm(u), nv = norm(v);
    if (nu == 0.0 || nv == 0.0) continue;
    double cosine = dot(u, v) / (nu * nv);
    double coeff = (clamped - y) / (clamped * (1.0 - clamped)) * 0.5 /
                   static_cast<double>(batch.size());
    auto& gu = grads[weakest->goal_symbol];
    auto& gv = grads[weakest->clause_symbol];
    if (gu.empty()) gu.assign(e.dim(), 0.0);
    if (gv.empty()) gv.assign(e.dim(), 0.0);
    for (size_t i = 0; i < e.dim(); ++i) {
      gu[i] += coeff * (v[i] / (nu * nv) - cosine * u[i] / (nu * nu));
      gv[i] += coeff * (u[i] / (nu * nv) - cosine * v[i] / (nv * nv));
    }
  }
  return {total / static_cast<double>(batch.size()), grads};
}

namespace {

std::vector<Symbol> sorted_constants(std::span<const HornClause> kb,
                                     const std::vector<Literal>& extra) {
  auto split = split_vocabulary(kb);
  for (const auto& l : extra)
    for (const auto& t : l.args)
      if (!t.is_variable()) split.constants.insert(t.sym);
  std::vector<Symbol> out(split.constants.begin(), split.constants.end());
  std::sort(out.begin(), out.end(),
            [](Symbol a, Symbol b) { return a.name() < b.name(); });
  return out;
}

// Every corruption of the first constant argument that is not discretely
// entailed. Enumerated rather than drawn so that audits cover exactly what
// training rotates through.
std::vector<Literal> corruption_pool(const Literal& pos,
                                     const std::vector<Symbol>& constants,
                                     std::span<const HornClause> kb, int depth) {
  std::vector<Literal> out;
  for (size_t i = 0; i < pos.args.size(); ++i) {
    if (pos.args[i].is_variable()) continue;
    for (Symbol c : constants) {
      if (c == pos.args[i].sym) continue;
      Literal neg = pos;
      neg.args[i] = Term(c);
      if (!entails(kb, neg, depth)) out.push_back(neg);
    }
    break;
  }
  return out;
}

struct SigmaStats {
  double min_positive = 1.0;
  double max_negative = 0.0;
};

SigmaStats evaluate(std::span<const LabeledGoal> batch, std::span<const HornClause> kb,
                    const EmbeddingTable& e, const ProveConfig& pc) {
  SigmaStats st;
  for (const auto& item : batch) {
    double sigma = prove(item.goal, kb, e, pc).score;
    if (item.label)
      st.min_positive = std::min(st.min_positive, sigma);
    else
      st.max_negative = std::max(st.max_negative, sigma);
  }
  return st;
}

TrainReport run_link_prediction(std::span<const HornClause> kb,
                                const std::vector<Literal>& positives,
                                const std::vector<Literal>& replay,
                                const TrainConfig& cfg, EmbeddingTable& e) {
  ProveConfig pc{cfg.depth_max, cfg.beam_width, cfg.sigma_floor};
  e.ensure_vocabulary(kb);
  for (const auto& l : positives) {
    e.lookup(l.predicate);
    for (const auto& t : l.args)
      if (!t.is_variable()) e.lookup(t.sym);
  }
  for (Symbol p : cfg.reserved_negative_predicates) e.lookup(p);

  // Corruptions range over the KB constants plus any world constants the
  // caller says exist; a constant the table has never seen during training
  // scores near 0.5 on everything, which is exactly the band that causes
  // spurious verification vetoes later.
  std::set<Symbol> const_set;
  for (Symbol c : sorted_constants(kb, positives)) const_set.insert(c);
  for (Symbol c : cfg.extra_sweep_constants) const_set.insert(c);
  std::vector<Symbol> constants(const_set.begin(), const_set.end());
  std::sort(constants.begin(), constants.end(),
            [](Symbol a, Symbol b) { return a.name() < b.name(); });
  for (Symbol c : constants) e.lookup(c);

  std::vector<Literal> reserved;
  for (Symbol p : cfg.reserved_negative_predicates) {
    for (Symbol c : constants) {
      Literal q(p, {Term(c)});
      if (!entails(kb, q, cfg.depth_max)) reserved.push_back(q);
    }
  }

  std::vector<std::vector<Literal>> pools;
  pools.reserve(positives.size());
  for (const auto& p : positives)
    pools.push_back(corruption_pool(p, constants, kb, cfg.depth_max));

  std::vector<LabeledGoal> audit;
  for (const auto& p : positives) audit.push_back({p, true});
  for (const auto& p : replay) audit.push_back({p, true});
  for (const auto& pool : pools)
    for (const auto& q : pool) audit.push_back({q, false});
  for (const auto& q : reserved) audit.push_back({q, false});

  // Per epoch: all positives, plus a rotating window of each positive's
  // corruption pool, plus the reserved sweep. The rotation visits every
  // pool member once per ceil(pool/negatives_per_positive) epochs.
  auto assemble = [&](int epoch) {
    std::vector<LabeledGoal> batch;
    for (const auto& p : positives) batch.push_back({p, true});
    for (const auto& p : replay) batch.push_back({p, true});
    for (const auto& pool : pools) {
      if (pool.empty()) continue;
      size_t window = std::min(pool.size(), static_cast<size_t>(cfg.negatives_per_positive));
      for (size_t k = 0; k < window; ++k) {
        size_t idx = (static_cast<size_t>(epoch) * window + k) % pool.size();
        batch.push_back({pool[idx], false});
      }
    }
    for (const auto& q : reserved) batch.push_back({q, false});
    return batch;
  };

  // Only margin violators enter the gradient step. BCE keeps pushing on
  // already-satisfied negatives (the coefficient tends to 0.5, not 0), and at
  // this scale dozens of settled reserved queries exert a steady background
  // torque that traps the few remaining violators in a force-balance
  // equilibrium. Dropping settled items from the batch removes that torque.
  // The negative margin sits above 1/3 because k mutually-constrained
  // constants can do no better than the simplex score (1 - 1/(k-1))/2, which
  // is exactly 1/3 at k = 4; a tighter margin would keep such a family active
  // forever.
  constexpr double kPositiveMargin = 0.95;
  constexpr double kNegativeMargin = 0.35;

  TrainReport rep;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto assembled = assemble(epoch);
    std::vector<LabeledGoal> batch;
    for (const auto& item : assembled) {
      double sigma = prove(item.goal, kb, e, pc).score;
      if (item.label ? sigma < kPositiveMargin : sigma > kNegativeMargin)
        batch.push_back(item);
    }
    rep.epochs_run = epoch + 1;
    if (batch.empty()) break;
    auto [loss, grads] = loss_and_grad(batch, kb, e, pc);
    rep.final_loss = loss;
    // loss_and_grad averages over the filtered batch; rescale so each item
    // carries the same weight it would in the full assembly, otherwise the
    // last few violators get ever larger steps and oscillate. The 1/t decay
    // breaks the limit cycles a fixed step produces when argmin pairs take
    // turns as the active constraint.
    double step = cfg.learning_rate / (1.0 + static_cast<double>(epoch) / 50.0) *
                  static_cast<double>(batch.size()) /
                  static_cast<double>(assembled.size());
    for (const auto& [sym, g] : grads) {
      std::vector<double> v = e.lookup(sym);
      double before = 0;
      for (double x : v) before += x * x;
      for (size_t i = 0; i < v.size(); ++i) v[i] -= step * g[i];
      double after = 0;
      for (double x : v) after += x * x;
      // cosine gradients are tangent to the vector, so plain steps inflate
      // norms and stall angular progress; rescale back to the prior norm
      if (after > 0 && before > 0) {
        double scale = std::sqrt(before / after);
        for (double& x : v) x *= scale;
      }
      e.set(sym, std::move(v));
    }
    if ((epoch + 1) % 5 == 0) {
      SigmaStats st = evaluate(audit, kb, e, pc);
      if (st.min_positive >= 0.92 && st.max_negative <= 0.38) break;
    }
  }

  SigmaStats st = evaluate(audit, kb, e, pc);
  rep.min_positive_sigma = st.min_positive;
  rep.max_negative_sigma = st.max_negative;
  for (const auto& p : replay)
    rep.min_replay_sigma = std::min(rep.min_replay_sigma, prove(p, kb, e, pc).score);
  rep.converged = rep.min_positive_sigma >= 0.9 && rep.max_negative_sigma <= 0.4;
  if (!rep.converged) {
    std::ostringstream w;
    w << "training did not reach targets after " << rep.epochs_run
      << " epochs: min positive sigma " << rep.min_positive_sigma
      << ", max negative sigma " << rep.max_negative_sigma;
    rep.warning = w.str();
  }
  return rep;
}

}  // namespace

TrainReport train_bootstrap(const CausalProgramGraph& w, const std::vector<Literal>& facts,
                            const TrainConfig& cfg, EmbeddingTable& e) {
  return run_link_prediction(w.edges(), facts, {}, cfg, e);
}

TrainReport fine_tune(const CausalProgramGraph& w_new, const CpgDelta& delta,
                      const TrainConfig& cfg, EmbeddingTable& e) {
  if (delta.empty()) return TrainReport{};

  std::set<std::string> added_keys;
  for (const auto& c : delta.added) added_keys.insert(alpha_key(c));

  // Queries the new clauses make provable: fact heads directly, rule heads
  // by enumerating ground instantiations that the updated graph entails.
  auto constants = sorted_constants(w_new.edges(), {});
  std::vector<Literal> fresh;
  for (const auto& c : delta.added) {
    if (c.is_fact()) {
      fresh.push_back(c.head);
      continue;
    }
    std::vector<size_t> var_slots;
    for (size_t i = 0; i < c.head.args.size(); ++i)
      if (c.head.args[i].is_variable()) var_slots.push_back(i);
    if (!var_slots.empty() && constants.empty()) continue;
    std::vector<size_t> idx(var_slots.size(), 0);
    int emitted = 0;
    while (emitted < 12) {
      Literal inst = c.head;
      for (size_t k = 0; k < var_slots.size(); ++k)
        inst.args[var_slots[k]] = Term(constants[idx[k]]);
      // repeated head variables must agree
      bool consistent = true;
      for (size_t i = 0; consistent && i < c.head.args.size(); ++i)
        for (size_t j = i + 1; j < c.head.args.size(); ++j)
          if (c.head.args[i] == c.head.args[j] && inst.args[i] != inst.args[j])
            consistent = false;
      if (consistent && inst.is_ground() &&
          entails(w_new.edges(), inst, cfg.depth_max)) {
        fresh.push_back(inst);
        ++emitted;
      }
      if (var_slots.empty() || constants.empty()) break;
      size_t k = 0;
      while (k < idx.size() && ++idx[k] == constants.size()) idx[k++] = 0;
      if (k == idx.size()) break;
    }
  }

  // Replay sample: facts that predate the delta keep their scores high.
  std::vector<Literal> replay;
  for (const auto& c : w_new.edges()) {
    if (!c.is_fact()) continue;
    if (added_keys.count(alpha_key(c))) continue;
    replay.push_back(c.head);
    if (replay.size() >= 24) break;
  }

  return run_link_prediction(w_new.edges(), fresh, replay, cfg, e);
}

}  // namespace nsq
