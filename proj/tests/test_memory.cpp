#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <optional>
#include <string>
#include <vector>

#include "nsq/logic.hpp"
#include "nsq/memory.hpp"
#include "nsq/rng.hpp"

using namespace nsq;

namespace {

Episode make_episode(uint64_t step, const std::string& action,
                     double hp_delta = 0, const std::string& quest = "q") {
  Episode e;
  e.action = parse_literal(action);
  e.step_index = step;
  e.quest_id = quest;
  if (hp_delta != 0) {
    e.feedback.push_back(make_signal(FeedbackChannel::hp, "hp", hp_delta));
  } else {
    e.feedback.push_back(make_signal(FeedbackChannel::message, "ok", 0));
  }
  return e;
}

// Linear-scan reference: newest episode satisfying both criteria.
std::optional<Episode> oracle_pair(const std::vector<Episode>& all,
                                   const Literal& action,
                                   const FeedbackPattern& pattern) {
  std::optional<Episode> best;
  for (const Episode& e : all) {
    if (e.action.predicate == action.predicate &&
        e.action.args.size() == action.args.size() && matches(e, pattern)) {
      if (!best || e.step_index > best->step_index) best = e;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("record evicts the oldest entry at capacity") {
  EpisodicMemory m(2);
  m.record(make_episode(1, "approach(coin)"));
  m.record(make_episode(2, "pickup(coin)"));
  m.record(make_episode(3, "talk(npc)"));
  CHECK(m.size() == 2);
  auto window = m.recent(10);
  REQUIRE(window.size() == 2);
  CHECK(window[0].step_index == 2);
  CHECK(window[1].step_index == 3);
}

TEST_CASE("recent returns newest-last windows") {
  EpisodicMemory m;
  CHECK(m.recent(5).empty());
  for (uint64_t i = 1; i <= 4; ++i) m.record(make_episode(i, "pickup(coin)"));
  CHECK(m.recent(0).empty());
  auto one = m.recent(1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].step_index == 4);
  auto all = m.recent(100);
  REQUIRE(all.size() == 4);
  CHECK(all.front().step_index == 1);
  CHECK(all.back().step_index == 4);
}

TEST_CASE("find_minimal_pair needs both the action and the outcome to match") {
  EpisodicMemory m;
  CHECK(!m.find_minimal_pair(parse_literal("pickup(coin)"), {FeedbackChannel::hp, 0}));

  m.record(make_episode(1, "pickup(coin)", -50));
  m.record(make_episode(2, "talk(npc)"));
  CHECK(!m.find_minimal_pair(parse_literal("pickup(coin)"), {FeedbackChannel::hp, 0}));

  m.record(make_episode(3, "pickup(coin)"));
  auto hit = m.find_minimal_pair(parse_literal("pickup(coin)"), {FeedbackChannel::hp, 0});
  REQUIRE(hit.has_value());
  CHECK(hit->step_index == 3);
}

TEST_CASE("matching is by predicate and arity, not argument values") {
  EpisodicMemory m;
  m.record(make_episode(1, "approach(coin)"));
  auto hit = m.find_minimal_pair(parse_literal("approach(key)"),
                                 {FeedbackChannel::hp, 0});
  REQUIRE(hit.has_value());
  CHECK(hit->step_index == 1);
  CHECK(!m.find_minimal_pair(parse_literal("approach(key, fast)"),
                             {FeedbackChannel::hp, 0}));
}

TEST_CASE("the most recent of two candidates wins") {
  EpisodicMemory m;
  m.record(make_episode(5, "approach(coin)", 0, "q2"));
  m.record(make_episode(9, "approach(coin)", 0, "q3"));
  auto hit = m.find_minimal_pair(parse_literal("approach(coin)"),
                                 {FeedbackChannel::hp, 0});
  REQUIRE(hit.has_value());
  CHECK(hit->step_index == 9);
  CHECK(hit->quest_id == "q3");
}

TEST_CASE("equivalence table folds synonym predicates together") {
  EpisodicMemory m;
  m.set_equivalence({{"grab", "pickup"}});
  m.record(make_episode(1, "grab(coin)"));
  auto hit = m.find_minimal_pair(parse_literal("pickup(coin)"),
                                 {FeedbackChannel::hp, 0});
  REQUIRE(hit.has_value());
  CHECK(hit->step_index == 1);
}

TEST_CASE("pattern matching sums the channel, other channels are ignored") {
  Episode e = make_episode(1, "pickup(coin)");
  e.feedback.push_back(make_signal(FeedbackChannel::inventory, "+coin", 1));
  e.feedback.push_back(make_signal(FeedbackChannel::hp, "hp", -10));
  e.feedback.push_back(make_signal(FeedbackChannel::hp, "hp", 10));
  CHECK(net_value(e, FeedbackChannel::hp) == 0);
  CHECK(net_value(e, FeedbackChannel::inventory) == 1);
  CHECK(matches(e, {FeedbackChannel::hp, 0}));
  CHECK(matches(e, {FeedbackChannel::inventory, 1}));
  CHECK(!matches(e, {FeedbackChannel::inventory, 0}));
}

TEST_CASE("property: capacity holds and lookups agree with a linear scan") {
  Rng rng(77);
  std::vector<std::string> actions = {"approach(coin)", "approach(fire)",
                                      "pickup(coin)",   "pickup(key)",
                                      "talk(npc)",      "use_item(key)"};
  for (int trial = 0; trial < 40; ++trial) {
    size_t capacity = 1 + rng.below(12);
    EpisodicMemory m(capacity);
    std::vector<Episode> shadow;
    uint64_t step = 0;
    int n = 5 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i) {
      double delta = 0;
      uint64_t roll = rng.below(3);
      if (roll == 1) delta = -50;
      if (roll == 2) delta = -10;
      Episode e = make_episode(++step, actions[rng.below(actions.size())], delta);
      m.record(e);
      shadow.push_back(e);
      if (shadow.size() > capacity) shadow.erase(shadow.begin());
      CHECK(m.size() <= capacity);
    }
    // The retained window is exactly the newest `capacity` records.
    auto window = m.recent(capacity + 5);
    REQUIRE(window.size() == shadow.size());
    for (size_t i = 0; i < window.size(); ++i) {
      CHECK(window[i].step_index == shadow[i].step_index);
    }
    for (const std::string& a : actions) {
      for (double want : {0.0, -50.0, -10.0}) {
        auto got = m.find_minimal_pair(parse_literal(a), {FeedbackChannel::hp, want});
        auto ref = oracle_pair(shadow, parse_literal(a), {FeedbackChannel::hp, want});
        CHECK(got.has_value() == ref.has_value());
        if (got && ref) CHECK(got->step_index == ref->step_index);
      }
    }
  }
}
