#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "nsq/agent.hpp"

using namespace nsq;

namespace {

std::vector<HornClause> bootstrap_program() {
  return parse_program(R"(
      kind_of(coin, treasure).
      kind_of(key, treasure).
      aggressive(goblin).
      valuable(X) :- kind_of(X, treasure).
  )");
}

AgentConfig agent_config(AgentMode mode) {
  AgentConfig cfg;
  cfg.mode = mode;
  cfg.embedding_dim = 32;
  cfg.sweep_kinds = {"fire",    "coin", "goblin", "sheep", "pumpkin",
                     "npc",     "door", "key",    "potion"};
  return cfg;
}

Agent make_agent(AgentMode mode, uint64_t seed = 7) {
  Agent a(agent_config(mode), seed);
  a.bootstrap(bootstrap_program());
  return a;
}

QuestSpec quest(const std::string& id, const std::string& goal, Vec2 agent,
                std::vector<Entity> entities, int difficulty = 1) {
  QuestSpec q;
  q.id = id;
  q.goal_text = goal;
  q.goal_atom = parse_literal(goal);
  q.difficulty = difficulty;
  q.scene.agent = agent;
  q.scene.entities = std::move(entities);
  return q;
}

/// Easy starter: walk over, grab the coin. Seeds the success episodes every
/// later contrast needs.
QuestSpec coin_quest() {
  return quest("t_coin", "has(agent, coin)", {1, 1},
               {Entity{"c1", "coin", {4, 1}, {}}});
}

/// The hazard layout: fire between the agent and the coin, one step from the
/// start so the naive route hurts immediately.
QuestSpec fire_quest() {
  return quest("t_fire", "has(agent, coin)", {3, 2},
               {Entity{"f1", "fire", {5, 2}, {-50, ""}},
                Entity{"c1", "coin", {8, 2}, {}}},
               3);
}

/// Same shape with a monster whose menace is only derivable through the
/// bootstrap aggressive() fact, never through a scanned belief fact.
QuestSpec goblin_quest() {
  return quest("t_goblin", "has(agent, coin)", {3, 2},
               {Entity{"g1", "goblin", {5, 2}, {-30, ""}},
                Entity{"c1", "coin", {8, 2}, {}}},
               3);
}

/// Walled corridor whose only route crosses two doused fire rings: the
/// damage belief gets contradicted twice in one run.
QuestSpec doused_quest() {
  std::vector<Entity> entities;
  int id = 0;
  auto sheep = [&](int x, int y) {
    entities.push_back(Entity{"s" + std::to_string(id++), "sheep", {x, y}, {}});
  };
  for (int x = 1; x <= 11; ++x) {
    if (x != 3 && x != 6) sheep(x, 1);
    sheep(x, 3);
  }
  entities.push_back(Entity{"f1", "fire", {3, 1}, {0, ""}});
  entities.push_back(Entity{"f2", "fire", {6, 1}, {0, ""}});
  entities.push_back(Entity{"c1", "coin", {9, 2}, {}});
  return quest("t_doused", "has(agent, coin)", {0, 2}, std::move(entities), 2);
}

bool has_verdict(const AttemptRecord& at, const std::string& outcome,
                 const std::string& detail) {
  return std::any_of(at.verdicts.begin(), at.verdicts.end(),
                     [&](const VerdictRecord& v) {
                       return v.outcome == outcome && v.detail == detail;
                     });
}

}  // namespace

TEST_CASE("the worked hazard quest adapts in two attempts") {
  Agent agent = make_agent(AgentMode::full);
  QuestRecord warmup = agent.run_quest(coin_quest());
  REQUIRE(warmup.success);
  REQUIRE(warmup.first_try);

  QuestRecord rec = agent.run_quest(fire_quest());
  CHECK(rec.success);
  CHECK(!rec.first_try);
  CHECK(rec.iterations == 2);
  CHECK(rec.adaptation_trials == 1);
  CHECK(rec.rules_added == 2);
  CHECK(rec.rules_retracted == 0);

  REQUIRE(rec.attempts.size() == 2);
  const AttemptRecord& naive = rec.attempts[0];
  CHECK(naive.selected_rationale == "direct route to the coin");
  CHECK(naive.interactions == 1);
  CHECK(naive.hp_delta == -50);
  REQUIRE(naive.signals.size() == 1);
  CHECK(naive.signals[0] == "hp:hp:-50");
  std::set<std::string> added(naive.rules_added.begin(),
                              naive.rules_added.end());
  CHECK(added == std::set<std::string>{"causes_damage(X) :- is_harmful(X).",
                                       "is_harmful(fire)."});

  const AttemptRecord& careful = rec.attempts[1];
  CHECK(careful.selected_rationale == "detour around the fire");
  CHECK(careful.hp_delta == 0);
  CHECK(has_verdict(careful, "harm_rejected", "causes_damage(fire)"));
  CHECK(rec.hp_end == 50);

  CHECK(agent.world_model().contains(
      parse_clause("causes_damage(X) :- is_harmful(X).")));
  CHECK(agent.world_model().contains(parse_clause("is_harmful(fire).")));
  for (Symbol s : agent.world_model().nodes()) {
    CHECK(agent.embeddings().has(s));
  }
}

TEST_CASE("rule-derived menace is invisible to scanning but caught by the verifier") {
  // The goblin threat exists only through causes_damage(X) :- aggressive(X),
  // so plan ordering cannot see it while the prover can.
  Agent agent = make_agent(AgentMode::full);
  agent.run_quest(coin_quest());
  QuestRecord rec = agent.run_quest(goblin_quest());

  CHECK(rec.success);
  CHECK(rec.iterations == 2);
  REQUIRE(rec.attempts.size() == 2);
  CHECK(rec.attempts[0].selected_rationale == "direct route to the coin");
  CHECK(rec.attempts[0].rules_added ==
        std::vector<std::string>{"causes_damage(X) :- aggressive(X)."});
  // Even after learning, no fact names the goblin, so the naive route is
  // still generated first and must be harm-rejected by the prover.
  CHECK(rec.attempts[1].selected_rationale == "detour around the goblin");
  CHECK(has_verdict(rec.attempts[1], "harm_rejected", "causes_damage(goblin)"));
}

TEST_CASE("no_ntp learns and reorders but never verifies") {
  Agent agent = make_agent(AgentMode::no_ntp);
  agent.run_quest(coin_quest());
  QuestRecord rec = agent.run_quest(fire_quest());

  CHECK(rec.success);
  CHECK(rec.iterations == 2);
  REQUIRE(rec.attempts.size() == 2);
  CHECK(rec.attempts[0].selected_rationale == "direct route to the coin");
  CHECK(rec.attempts[0].hp_delta == -50);
  CHECK(rec.attempts[0].rules_added.size() == 2);
  CHECK(rec.attempts[1].selected_rationale == "detour around the fire");
  for (const AttemptRecord& at : rec.attempts) {
    CHECK(at.verdicts.empty());
  }

  SUBCASE("the same menace through a rule is not avoided") {
    QuestRecord goblin = agent.run_quest(goblin_quest());
    REQUIRE(goblin.attempts.size() >= 2);
    CHECK(goblin.attempts[0].selected_rationale == "direct route to the coin");
    CHECK(goblin.attempts[0].hp_delta == -30);
    // Second attempt replans from the ring; the scan still sees no fact
    // about goblins, so the naive route leads again.
    CHECK(goblin.attempts[1].selected_rationale == "direct route to the coin");
  }
}

TEST_CASE("no_ilp keeps the world model frozen and dies to the unknown hazard") {
  Agent agent = make_agent(AgentMode::no_ilp);
  std::string before = agent.world_model().snapshot(0);
  agent.run_quest(coin_quest());
  QuestRecord rec = agent.run_quest(fire_quest());

  CHECK(!rec.success);
  CHECK(rec.rules_added == 0);
  CHECK(rec.adaptation_trials == 0);
  CHECK(agent.world_model().snapshot(0) == before);
  CHECK(rec.hp_end <= 0);
  for (const AttemptRecord& at : rec.attempts) {
    CHECK(at.selected_rationale == "direct route to the coin");
    CHECK(at.rules_added.empty());
    for (const VerdictRecord& v : at.verdicts) {
      CHECK(v.outcome != "harm_rejected");
    }
  }
}

TEST_CASE("baseline ignores the model even when it spells out the danger") {
  std::vector<HornClause> informed = bootstrap_program();
  for (const HornClause& c : parse_program(
           "is_harmful(fire). causes_damage(X) :- is_harmful(X).")) {
    informed.push_back(c);
  }

  AgentConfig base_cfg = agent_config(AgentMode::baseline);
  Agent baseline(base_cfg, 7);
  baseline.bootstrap(informed);
  QuestRecord base_rec = baseline.run_quest(fire_quest());
  CHECK(!base_rec.success);
  CHECK(base_rec.hp_end <= 0);
  REQUIRE(!base_rec.attempts.empty());
  CHECK(base_rec.attempts[0].selected_rationale == "direct route to the coin");
  for (const AttemptRecord& at : base_rec.attempts) {
    CHECK(at.verdicts.empty());
    CHECK(at.rules_added.empty());
  }

  AgentConfig ntp_cfg = agent_config(AgentMode::no_ntp);
  Agent informed_planner(ntp_cfg, 7);
  informed_planner.bootstrap(informed);
  QuestRecord rec = informed_planner.run_quest(fire_quest());
  CHECK(rec.success);
  CHECK(rec.first_try);
  CHECK(rec.attempts[0].selected_rationale == "detour around the fire");
}

TEST_CASE("two unpunished ring entries retract the damage fact") {
  Agent agent = make_agent(AgentMode::no_ntp);
  agent.run_quest(coin_quest());
  QuestRecord fire = agent.run_quest(fire_quest());
  REQUIRE(fire.success);
  REQUIRE(agent.world_model().contains(parse_clause("is_harmful(fire).")));

  QuestRecord rec = agent.run_quest(doused_quest());
  CHECK(rec.success);
  CHECK(rec.first_try);
  CHECK(rec.iterations == 1);
  CHECK(rec.rules_retracted == 1);
  REQUIRE(rec.attempts.size() == 1);
  CHECK(rec.attempts[0].selected_rationale == "direct route to the coin");
  CHECK(rec.attempts[0].rules_retracted ==
        std::vector<std::string>{"is_harmful(fire)."});
  CHECK(!agent.world_model().contains(parse_clause("is_harmful(fire).")));
  // The bridging rule survives; only the blamed fact goes.
  CHECK(agent.world_model().contains(
      parse_clause("causes_damage(X) :- is_harmful(X).")));

  SUBCASE("a single contradiction is not enough") {
    Agent cautious = make_agent(AgentMode::no_ntp);
    cautious.run_quest(coin_quest());
    cautious.run_quest(fire_quest());
    QuestSpec one_ring = doused_quest();
    // Wall off the second fire's ring cell so only one entry happens.
    one_ring.scene.entities.erase(
        std::remove_if(one_ring.scene.entities.begin(),
                       one_ring.scene.entities.end(),
                       [](const Entity& e) { return e.id == "f2"; }),
        one_ring.scene.entities.end());
    one_ring.scene.entities.push_back(Entity{"s99", "sheep", {6, 1}, {}});
    QuestRecord partial = cautious.run_quest(one_ring);
    CHECK(partial.success);
    CHECK(partial.rules_retracted == 0);
    CHECK(cautious.world_model().contains(parse_clause("is_harmful(fire).")));
  }
}

TEST_CASE("a fully rejected plan set stalls the attempt without acting") {
  AgentConfig cfg = agent_config(AgentMode::full);
  cfg.max_attempts = 3;
  Agent agent(cfg, 7);
  std::vector<HornClause> informed = bootstrap_program();
  for (const HornClause& c : parse_program(
           "is_harmful(fire). causes_damage(X) :- is_harmful(X).")) {
    informed.push_back(c);
  }
  agent.bootstrap(informed);

  // Fires wall the coin: every translatable plan walks a ring.
  QuestSpec q = quest("t_wall", "has(agent, coin)", {1, 2},
                      {Entity{"f1", "fire", {3, 1}, {-50, ""}},
                       Entity{"f2", "fire", {3, 4}, {-50, ""}},
                       Entity{"f3", "fire", {3, 7}, {-50, ""}},
                       Entity{"f4", "fire", {3, 10}, {-50, ""}},
                       Entity{"c1", "coin", {6, 2}, {}}},
                      4);
  QuestRecord rec = agent.run_quest(q);
  CHECK(!rec.success);
  CHECK(rec.iterations == 3);
  CHECK(rec.interactions == 0);
  CHECK(rec.hp_end == kHpMax);
  for (const AttemptRecord& at : rec.attempts) {
    CHECK(at.stalled);
    CHECK(at.commands.empty());
  }
}

TEST_CASE("an already satisfied goal resolves in one empty attempt") {
  Agent agent = make_agent(AgentMode::full);
  QuestSpec q = quest("t_here", "at(agent, loc2_2)", {2, 2},
                      {Entity{"c1", "coin", {5, 5}, {}}});
  QuestRecord rec = agent.run_quest(q);
  CHECK(rec.success);
  CHECK(rec.first_try);
  CHECK(rec.iterations == 1);
  CHECK(rec.interactions == 0);
  CHECK(rec.attempts[0].selected_rationale == "goal already satisfied");
}

TEST_CASE("event logs are deterministic, parseable, and clock free") {
  auto run = [](std::vector<std::string>& lines) {
    Agent agent = make_agent(AgentMode::full, 11);
    agent.set_log_sink([&lines](const std::string& l) { lines.push_back(l); });
    agent.run_quest(coin_quest());
    agent.run_quest(fire_quest());
    return agent.world_model().snapshot(0);
  };
  std::vector<std::string> first, second;
  std::string snap1 = run(first);
  std::string snap2 = run(second);

  CHECK(first == second);
  CHECK(snap1 == snap2);
  CHECK(!first.empty());

  std::set<std::string> events;
  for (const std::string& line : first) {
    nlohmann::json doc = nlohmann::json::parse(line);
    REQUIRE(doc.contains("event"));
    events.insert(doc["event"].get<std::string>());
    for (const auto& [key, value] : doc.items()) {
      CHECK(key.find("time") == std::string::npos);
      CHECK(key.find("clock") == std::string::npos);
    }
  }
  CHECK(events.count("quest_start") == 1);
  CHECK(events.count("attempt") == 1);
  CHECK(events.count("episode") == 1);
  CHECK(events.count("delta") == 1);
  CHECK(events.count("quest_end") == 1);
}

TEST_CASE("episodes use egocentric here states") {
  Agent agent = make_agent(AgentMode::full);
  agent.run_quest(coin_quest());
  agent.run_quest(fire_quest());

  // The failing approach episode must carry is(fire, here); the successful
  // one from the starter quest carries is(coin, here). Nothing mentions grid
  // locations.
  bool saw_fire_context = false;
  bool saw_coin_context = false;
  for (const Episode& ep : agent.memory().recent(agent.memory().size())) {
    for (const Literal& atom : ep.state) {
      std::string text = render(atom);
      CHECK(text.find("loc") == std::string::npos);
      if (text == "is(fire, here)") saw_fire_context = true;
      if (text == "is(coin, here)") saw_coin_context = true;
    }
  }
  CHECK(saw_fire_context);
  CHECK(saw_coin_context);
}
