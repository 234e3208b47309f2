#pragma once

// Beam-free exhaustive reference prover: enumerates every proof tree up to
// the depth bound and returns the max of min soft scores, recomputing the
// similarity itself. Only suitable for tiny KBs.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "nsq/embedding.hpp"
#include "nsq/logic.hpp"

namespace oracles {

inline double soft_score(nsq::Symbol u, nsq::Symbol v, const nsq::EmbeddingTable& e) {
  if (u == v) return 1.0;
  const auto& a = e.lookup(u);
  const auto& b = e.lookup(v);
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.5;
  double c = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return (1.0 + c) / 2.0;
}

// Returns the best achievable tree min-score, or -1 when no tree exists.
inline double best_tree(std::span<const nsq::HornClause> kb,
                        std::vector<std::pair<nsq::Literal, int>> goals,
                        const nsq::Substitution& theta, double run_min,
                        const nsq::EmbeddingTable& e) {
  using namespace nsq;
  if (goals.empty()) return run_min;
  auto [lit, depth] = goals.back();
  goals.pop_back();
  if (depth <= 0) return -1.0;
  Literal goal = theta.apply(lit);

  double best = -1.0;
  for (const auto& clause : kb) {
    HornClause r = rename_apart(clause);
    if (r.head.args.size() != goal.args.size()) continue;
    Substitution s = theta;
    double mn = soft_score(goal.predicate, r.head.predicate, e);
    for (size_t i = 0; i < goal.args.size(); ++i) {
      Term a = s.resolve(goal.args[i]);
      Term b = s.resolve(r.head.args[i]);
      if (a == b) continue;
      if (a.is_variable())
        s.bind(a.sym, b);
      else if (b.is_variable())
        s.bind(b.sym, a);
      else
        mn = std::min(mn, soft_score(a.sym, b.sym, e));
    }
    auto next = goals;
    for (auto it = r.body.rbegin(); it != r.body.rend(); ++it)
      next.push_back({*it, depth - 1});
    best = std::max(best, best_tree(kb, std::move(next), s, std::min(run_min, mn), e));
  }
  return best;
}

inline double oracle_sigma(std::span<const nsq::HornClause> kb, const nsq::Literal& goal,
                           int depth, double sigma_floor, const nsq::EmbeddingTable& e) {
  double best = best_tree(kb, {{goal, depth}}, {}, 1.0, e);
  return best > sigma_floor ? best : sigma_floor;
}

}  // namespace oracles
