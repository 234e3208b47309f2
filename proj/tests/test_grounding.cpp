#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nsq/grounding.hpp"
#include "nsq/rng.hpp"
#include "oracles.hpp"

using namespace nsq;

namespace {

CausalProgramGraph bootstrap_graph() {
  CausalProgramGraph w;
  for (const HornClause& c : parse_program(R"(
      kind_of(coin, treasure).
      kind_of(key, treasure).
      aggressive(goblin).
      valuable(X) :- kind_of(X, treasure).
  )")) {
    w.add_rule(c, Provenance::bootstrap);
  }
  return w;
}

/// One-hot embeddings make soft scores exactly 0.5 for mismatched symbols,
/// so with sigma_min above 0.5 the prover predicts exactly the discrete
/// entailments. Grounding unit tests run in that regime.
GroundingConfig unit_config() {
  GroundingConfig cfg;
  cfg.sigma_min = 0.55;
  return cfg;
}

EmbeddingTable table_for(const CausalProgramGraph& w) {
  std::vector<Symbol> vocab(w.nodes().begin(), w.nodes().end());
  for (const char* extra : {"causes_damage", "causes_healing", "blocks_pickup",
                            "is_harmful", "is_blocking", "is_beneficial",
                            "fire", "door", "pumpkin", "is", "at", "here",
                            "agent"}) {
    vocab.push_back(Symbol::intern(extra));
  }
  return EmbeddingTable::one_hot(vocab);
}

Episode episode_with(uint64_t step, const std::string& action,
                     const std::vector<std::string>& state_atoms,
                     double hp_delta, const std::string& quest = "q") {
  Episode e;
  e.action = parse_literal(action);
  e.step_index = step;
  e.quest_id = quest;
  for (const std::string& a : state_atoms) e.state.insert(parse_literal(a));
  if (hp_delta != 0) {
    e.feedback.push_back(make_signal(FeedbackChannel::hp, "hp", hp_delta));
  } else {
    e.feedback.push_back(make_signal(FeedbackChannel::message, "ok", 0));
  }
  return e;
}

std::set<std::string> rendered(const std::vector<HornClause>& delta) {
  std::set<std::string> out;
  for (const HornClause& c : delta) out.insert(render(c));
  return out;
}

}  // namespace

TEST_CASE("detection separates surprising damage from predicted damage") {
  CausalProgramGraph w = bootstrap_graph();
  EmbeddingTable e = table_for(w);
  GroundingConfig cfg = unit_config();

  Episode fail = episode_with(10, "approach(coin)",
                              {"at(agent, here)", "is(fire, here)"}, -50);

  SUBCASE("unpredicted damage is an error on the hp channel") {
    auto err = detect_prediction_error(fail, w, e, cfg);
    REQUIRE(err.has_value());
    CHECK(err->causal_predicate == Symbol::intern("causes_damage"));
    CHECK(err->expected.channel == FeedbackChannel::hp);
    CHECK(err->expected.net_value == 0);
    CHECK(err->actual.value == -50);
  }

  SUBCASE("damage the model already derives is no error") {
    w.add_rule(parse_clause("is_harmful(fire)."), Provenance::induced);
    w.add_rule(parse_clause("causes_damage(X) :- is_harmful(X)."),
               Provenance::induced);
    Episode small = fail;
    small.feedback = {make_signal(FeedbackChannel::hp, "hp", -10)};
    CHECK(!detect_prediction_error(small, w, e, cfg).has_value());
  }

  SUBCASE("quiet episodes are no error") {
    Episode quiet = episode_with(11, "approach(coin)",
                                 {"at(agent, here)", "is(coin, here)"}, 0);
    CHECK(!detect_prediction_error(quiet, w, e, cfg).has_value());
  }

  SUBCASE("unpredicted healing maps to causes_healing") {
    Episode heal = episode_with(12, "approach(coin)",
                                {"at(agent, here)", "is(pumpkin, here)"}, 25);
    auto err = detect_prediction_error(heal, w, e, cfg);
    REQUIRE(err.has_value());
    CHECK(err->causal_predicate == Symbol::intern("causes_healing"));
  }
}

TEST_CASE("detection flags blocked pickups on the inventory channel") {
  CausalProgramGraph w = bootstrap_graph();
  EmbeddingTable e = table_for(w);
  GroundingConfig cfg = unit_config();

  Episode fail;
  fail.action = parse_literal("pickup(coin)");
  fail.step_index = 20;
  fail.quest_id = "q6";
  fail.state = {parse_literal("at(agent, here)"), parse_literal("is(coin, here)"),
                parse_literal("is(door, here)")};
  fail.feedback = {make_signal(FeedbackChannel::inventory, "blocked", 0)};

  auto err = detect_prediction_error(fail, w, e, cfg);
  REQUIRE(err.has_value());
  CHECK(err->causal_predicate == Symbol::intern("blocks_pickup"));
  CHECK(err->expected.channel == FeedbackChannel::inventory);
  CHECK(err->expected.net_value == 1);

  w.add_rule(parse_clause("is_blocking(door)."), Provenance::induced);
  w.add_rule(parse_clause("blocks_pickup(X) :- is_blocking(X)."),
             Provenance::induced);
  CHECK(!detect_prediction_error(fail, w, e, cfg).has_value());
}

TEST_CASE("mcs returns a hypothesis exactly for singleton contrasts") {
  EpisodicMemory m;
  m.record(episode_with(3, "approach(coin)",
                        {"at(agent, loc1)", "is(coin, loc1)"}, 0, "q2"));

  PredictionError err;
  err.failing_episode = episode_with(
      9, "approach(coin)",
      {"at(agent, loc1)", "is(fire, loc1)", "is(coin, loc1)"}, -50, "q4");
  err.expected = {FeedbackChannel::hp, 0};
  err.actual = make_signal(FeedbackChannel::hp, "hp", -50);
  err.causal_predicate = Symbol::intern("causes_damage");

  SUBCASE("the worked contrast yields causes_damage(fire)") {
    auto h = mcs(err, m);
    REQUIRE(h.has_value());
    CHECK(render(h->literal) == "causes_damage(fire)");
    CHECK(render(h->antecedent) == "is(fire, loc1)");
    CHECK(h->fail_step == 9);
    CHECK(h->success_step == 3);
  }

  SUBCASE("no stored success means no hypothesis") {
    EpisodicMemory empty;
    CHECK(!mcs(err, empty).has_value());
  }

  SUBCASE("two extra atoms in the failure means no hypothesis") {
    err.failing_episode.state.insert(parse_literal("is(goblin, loc1)"));
    CHECK(!mcs(err, m).has_value());
  }

  SUBCASE("identical states mean no hypothesis") {
    err.failing_episode.state = {parse_literal("at(agent, loc1)"),
                                 parse_literal("is(coin, loc1)")};
    CHECK(!mcs(err, m).has_value());
  }

  SUBCASE("a non-is contrast atom is rejected") {
    err.failing_episode.state = {parse_literal("at(agent, loc1)"),
                                 parse_literal("is(coin, loc1)"),
                                 parse_literal("has(agent, potion)")};
    CHECK(!mcs(err, m).has_value());
  }

  SUBCASE("the most recent qualifying contrast wins") {
    m.record(episode_with(7, "approach(key)",
                          {"at(agent, loc1)", "is(fire, loc1)", "is(coin, loc1)",
                           "is(goblin, loc1)"},
                          0, "q5"));
    // Newest same-arity approach success now differs by is(goblin, loc1) in
    // the other direction; the one-sided difference is empty, so no result.
    CHECK(!mcs(err, m).has_value());
  }
}

TEST_CASE("negatives come from the contrast episode's is atoms") {
  PredictionError err;
  err.causal_predicate = Symbol::intern("causes_damage");
  Episode success = episode_with(3, "approach(coin)",
                                 {"at(agent, loc1)", "is(coin, loc1)"}, 0);
  auto negs = negatives_from_contrast(err, success);
  REQUIRE(negs.size() == 1);
  CHECK(render(negs[0]) == "causes_damage(coin)");
}

TEST_CASE("induce prefers metarule instantiations and falls back to a support fact") {
  CausalProgramGraph w = bootstrap_graph();

  SUBCASE("no enabling fact: support fact plus bridging rule") {
    InductionTask task;
    task.hypothesis.literal = parse_literal("causes_damage(fire)");
    task.negatives = {parse_literal("causes_damage(coin)")};
    auto delta = induce(task, w, default_metarules());
    CHECK(rendered(delta) ==
          std::set<std::string>{"is_harmful(fire).",
                                "causes_damage(X) :- is_harmful(X)."});
  }

  SUBCASE("an enabling fact picks ident over the support route") {
    w.add_rule(parse_clause("is_harmful(fire)."), Provenance::induced);
    w.add_rule(parse_clause("causes_damage(X) :- is_harmful(X)."),
               Provenance::induced);
    InductionTask task;
    task.hypothesis.literal = parse_literal("causes_damage(goblin)");
    task.negatives = {parse_literal("causes_damage(coin)")};
    auto delta = induce(task, w, default_metarules());
    CHECK(rendered(delta) ==
          std::set<std::string>{"causes_damage(X) :- aggressive(X)."});
  }

  SUBCASE("an existing bridge turns the support route into one fact") {
    w.add_rule(parse_clause("is_harmful(fire)."), Provenance::induced);
    w.add_rule(parse_clause("causes_damage(X) :- is_harmful(X)."),
               Provenance::induced);
    InductionTask task;
    task.hypothesis.literal = parse_literal("causes_damage(pumpkin)");
    task.negatives = {parse_literal("causes_damage(coin)"),
                      parse_literal("causes_damage(npc)")};
    auto delta = induce(task, w, default_metarules());
    CHECK(rendered(delta) == std::set<std::string>{"is_harmful(pumpkin)."});
  }

  SUBCASE("already entailed hypotheses produce nothing") {
    w.add_rule(parse_clause("is_harmful(fire)."), Provenance::induced);
    w.add_rule(parse_clause("causes_damage(X) :- is_harmful(X)."),
               Provenance::induced);
    InductionTask task;
    task.hypothesis.literal = parse_literal("causes_damage(fire)");
    CHECK(induce(task, w, default_metarules()).empty());
  }
}

TEST_CASE("induce covers chain2 and prop metarules") {
  SUBCASE("chain2 fires when every single-literal body is inconsistent") {
    CausalProgramGraph w;
    for (const HornClause& c : parse_program(R"(
        is_hot(fire). is_hot(lava). is_wild(fire). is_wild(storm).
    )")) {
      w.add_rule(c, Provenance::bootstrap);
    }
    InductionTask task;
    task.hypothesis.literal = parse_literal("causes_damage(fire)");
    task.negatives = {parse_literal("causes_damage(lava)"),
                      parse_literal("causes_damage(storm)")};
    auto delta = induce(task, w, default_metarules());
    CHECK(rendered(delta) ==
          std::set<std::string>{"causes_damage(X) :- is_hot(X), is_wild(X)."});
  }

  SUBCASE("prop projects a binary relation") {
    CausalProgramGraph w;
    w.add_rule(parse_clause("guards(door, coin)."), Provenance::bootstrap);
    InductionTask task;
    task.hypothesis.literal = parse_literal("blocks_pickup(door)");
    task.negatives = {parse_literal("blocks_pickup(coin)")};
    auto delta = induce(task, w, default_metarules());
    CHECK(rendered(delta) ==
          std::set<std::string>{"blocks_pickup(X) :- guards(X, Y)."});
  }

  SUBCASE("restricting the metarule set forces the fallback") {
    CausalProgramGraph w = bootstrap_graph();
    InductionTask task;
    task.hypothesis.literal = parse_literal("causes_damage(goblin)");
    task.negatives = {parse_literal("causes_damage(coin)")};
    std::vector<Metarule> only_chain{{MetaruleKind::chain2, "chain2"}};
    auto delta = induce(task, w, only_chain);
    CHECK(rendered(delta) ==
          std::set<std::string>{"is_harmful(goblin).",
                                "causes_damage(X) :- is_harmful(X)."});
  }

  SUBCASE("a channel without a property twin cannot use the fallback") {
    CausalProgramGraph w = bootstrap_graph();
    InductionTask task;
    task.hypothesis.literal = parse_literal("enables(door)");
    task.negatives = {};
    CHECK(induce(task, w, default_metarules()).empty());
  }

  SUBCASE("negating the hypothesis itself leaves no program") {
    CausalProgramGraph w = bootstrap_graph();
    InductionTask task;
    task.hypothesis.literal = parse_literal("causes_damage(goblin)");
    task.negatives = {parse_literal("causes_damage(goblin)")};
    CHECK(induce(task, w, default_metarules()).empty());
  }
}

TEST_CASE("induce is deterministic") {
  CausalProgramGraph w = bootstrap_graph();
  w.add_rule(parse_clause("is_hot(goblin)."), Provenance::bootstrap);
  InductionTask task;
  task.hypothesis.literal = parse_literal("causes_damage(goblin)");
  task.negatives = {parse_literal("causes_damage(coin)")};
  auto first = induce(task, w, default_metarules());
  for (int i = 0; i < 5; ++i) {
    auto again = induce(task, w, default_metarules());
    CHECK(rendered(again) == rendered(first));
  }
  // Two enabling facts tie on clause count; the lexicographically smaller
  // body wins.
  CHECK(rendered(first) ==
        std::set<std::string>{"causes_damage(X) :- aggressive(X)."});
}

TEST_CASE("ground runs the full pipeline on the worked example") {
  CausalProgramGraph w = bootstrap_graph();
  EmbeddingTable e = table_for(w);
  GroundingConfig cfg = unit_config();

  EpisodicMemory m;
  m.record(episode_with(3, "approach(coin)",
                        {"at(agent, here)", "is(coin, here)"}, 0, "q2"));
  m.record(episode_with(9, "approach(coin)",
                        {"at(agent, here)", "is(fire, here)"}, -50, "q4"));

  GroundingResult r = ground(m, w, e, cfg);
  REQUIRE(r.error.has_value());
  REQUIRE(r.hypothesis.has_value());
  CHECK(render(r.hypothesis->literal) == "causes_damage(fire)");
  CHECK(rendered(r.delta) ==
        std::set<std::string>{"is_harmful(fire).",
                              "causes_damage(X) :- is_harmful(X)."});
  REQUIRE(r.negatives.size() == 1);
  CHECK(render(r.negatives[0]) == "causes_damage(coin)");

  SUBCASE("once the delta is committed the failure is predicted, not an error") {
    for (const HornClause& c : r.delta) w.add_rule(c, Provenance::induced);
    GroundingResult again = ground(m, w, e, cfg);
    CHECK(!again.error.has_value());
    CHECK(again.delta.empty());
  }

  SUBCASE("a known hazard shadows an unknown one in the same state") {
    // Damage was predicted for the goblin, so the co-present fire raises no
    // error; the fire gets learned later, once it hurts the agent alone.
    for (const HornClause& c : r.delta) w.add_rule(c, Provenance::induced);
    w.add_rule(parse_clause("causes_damage(X) :- aggressive(X)."),
               Provenance::induced);
    m.record(episode_with(15, "approach(coin)",
                          {"at(agent, here)", "is(goblin, here)",
                           "is(fire, here)"},
                          -80, "q8"));
    GroundingResult gob = ground(m, w, e, cfg);
    CHECK(!gob.error.has_value());
  }

  SUBCASE("quiet memories ground to nothing") {
    EpisodicMemory quiet;
    quiet.record(episode_with(1, "approach(coin)",
                              {"at(agent, here)", "is(coin, here)"}, 0));
    GroundingResult none = ground(quiet, w, e, cfg);
    CHECK(!none.error.has_value());
    CHECK(!none.hypothesis.has_value());
    CHECK(none.delta.empty());
  }
}

TEST_CASE("every induced program is complete, consistent and subset-minimal") {
  // Randomized scenario matrix checked against the closure oracle, including
  // brute-force subset minimality.
  Rng rng(4242);
  std::vector<std::string> constants = {"fire", "lava",  "goblin", "wolf",
                                        "door", "gate",  "coin",   "key"};
  std::vector<std::string> unary = {"is_hot", "is_wild", "aggressive", "locked"};
  int produced = 0;
  for (int trial = 0; trial < 100; ++trial) {
    CausalProgramGraph w;
    std::vector<HornClause> base;
    for (const std::string& p : unary) {
      for (const std::string& c : constants) {
        if (rng.below(4) == 0) {
          HornClause fact = parse_clause(p + "(" + c + ").");
          base.push_back(fact);
          w.add_rule(fact, Provenance::bootstrap);
        }
      }
    }
    if (rng.below(2) == 0) {
      HornClause bridge = parse_clause("causes_damage(X) :- is_harmful(X).");
      base.push_back(bridge);
      w.add_rule(bridge, Provenance::bootstrap);
    }

    InductionTask task;
    std::string subject = constants[rng.below(constants.size())];
    task.hypothesis.literal = parse_literal("causes_damage(" + subject + ")");
    for (const std::string& c : constants) {
      if (c != subject && rng.below(3) == 0) {
        task.negatives.push_back(parse_literal("causes_damage(" + c + ")"));
      }
    }

    auto delta = induce(task, w, default_metarules());
    if (delta.empty()) continue;
    ++produced;
    CHECK(delta.size() <= 3);

    auto closure_entails = [&](const std::vector<HornClause>& extra,
                               const Literal& goal) {
      std::vector<HornClause> kb = base;
      kb.insert(kb.end(), extra.begin(), extra.end());
      return oracles::herbrand_closure(kb).count(goal) > 0;
    };

    CHECK(closure_entails(delta, task.hypothesis.literal));
    for (const Literal& n : task.negatives) {
      CHECK(!closure_entails(delta, n));
    }

    // No strict subset may already work.
    size_t n = delta.size();
    for (size_t mask = 0; mask + 1 < (size_t{1} << n); ++mask) {
      std::vector<HornClause> subset;
      for (size_t i = 0; i < n; ++i) {
        if (mask & (size_t{1} << i)) subset.push_back(delta[i]);
      }
      bool complete = closure_entails(subset, task.hypothesis.literal);
      bool consistent = std::none_of(
          task.negatives.begin(), task.negatives.end(),
          [&](const Literal& neg) { return closure_entails(subset, neg); });
      CHECK((!complete || !consistent));
    }
  }
  // The matrix must actually exercise induction.
  CHECK(produced > 30);
}

TEST_CASE("mcs agrees with a linear-scan oracle over randomized memories") {
  Rng rng(991);
  std::vector<std::string> actions = {"approach(coin)", "approach(key)",
                                      "pickup(coin)", "talk(npc)"};
  std::vector<std::string> atoms = {"is(fire, here)", "is(coin, here)",
                                    "is(goblin, here)", "is(door, here)",
                                    "is(sheep, here)"};
  int hypotheses = 0;
  for (int trial = 0; trial < 500; ++trial) {
    EpisodicMemory m(8 + rng.below(16));
    std::vector<Episode> shadow;
    uint64_t step = 0;
    int n = 3 + static_cast<int>(rng.below(24));
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> state = {"at(agent, here)"};
      for (const std::string& a : atoms) {
        if (rng.below(3) == 0) state.push_back(a);
      }
      double delta = rng.below(3) == 0 ? -50 : 0;
      Episode e = episode_with(++step, actions[rng.below(actions.size())],
                               state, delta);
      m.record(e);
      shadow.push_back(e);
      if (shadow.size() > m.capacity()) shadow.erase(shadow.begin());
    }

    // Synthesize a failure against the current memory.
    std::vector<std::string> fail_state = {"at(agent, here)"};
    for (const std::string& a : atoms) {
      if (rng.below(2) == 0) fail_state.push_back(a);
    }
    PredictionError err;
    err.failing_episode = episode_with(++step, actions[rng.below(actions.size())],
                                       fail_state, -50);
    err.expected = {FeedbackChannel::hp, 0};
    err.actual = make_signal(FeedbackChannel::hp, "hp", -50);
    err.causal_predicate = Symbol::intern("causes_damage");

    auto got = mcs(err, m);

    // Oracle: newest same-shape action with net hp 0, then set difference.
    std::optional<Episode> pair;
    for (const Episode& e : shadow) {
      if (e.action.predicate == err.failing_episode.action.predicate &&
          e.action.args.size() == err.failing_episode.action.args.size() &&
          net_value(e, FeedbackChannel::hp) == 0) {
        if (!pair || e.step_index > pair->step_index) pair = e;
      }
    }
    std::optional<Literal> expect;
    if (pair) {
      std::vector<Literal> diff;
      std::set_difference(err.failing_episode.state.begin(),
                          err.failing_episode.state.end(), pair->state.begin(),
                          pair->state.end(), std::back_inserter(diff));
      if (diff.size() == 1 && diff[0].predicate == Symbol::intern("is")) {
        expect = Literal{err.causal_predicate, {diff[0].args[0]}};
      }
    }

    CHECK(got.has_value() == expect.has_value());
    if (got && expect) {
      CHECK(render(got->literal) == render(*expect));
      CHECK(got->success_step == pair->step_index);
      ++hypotheses;
    }
  }
  CHECK(hypotheses > 50);
}
