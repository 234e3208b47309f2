#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nsq/logic.hpp"

namespace nsq {

struct Vec2 {
  int x = 0;
  int y = 0;

  bool operator==(const Vec2&) const = default;
};

int manhattan(Vec2 a, Vec2 b);

/// Grid cells are named loc<x>_<y> wherever they surface as constants.
std::string loc_name(Vec2 p);

inline constexpr int kGridWidth = 12;
inline constexpr int kGridHeight = 12;
inline constexpr int kHpMax = 100;

/// Closed set of entity kinds the simulator knows how to place.
bool is_known_kind(std::string_view kind);

/// Solid entities block movement through their cell.
bool is_solid_kind(std::string_view kind);

/// Pickable entities can enter the inventory.
bool is_pickable_kind(std::string_view kind);

/// Hidden per-entity effects. These drive feedback during execution but are
/// never exposed through percepts; the agent has to discover them.
struct EntityEffects {
  /// Applied to agent hp once per entry into this entity's adjacency ring.
  int hp_delta = 0;
  /// Kind whose pickup this entity blocks while standing next to the item.
  std::string blocks;
};

struct Entity {
  std::string id;
  std::string kind;
  Vec2 pos;
  EntityEffects effects;
};

enum class Verb {
  move_up,
  move_down,
  move_left,
  move_right,
  approach,
  pickup,
  attack,
  talk,
  use_item,
};

std::string_view to_string(Verb v);

/// Movement verbs take no target; every other verb takes exactly one
/// (an entity kind, or an item kind for use_item).
struct Command {
  Verb verb;
  std::string target;
};

std::string render(const Command& c);

enum class FeedbackChannel { hp, inventory, quest, message };

std::string_view to_string(FeedbackChannel c);

/// One signal per executed command. `value` is the signed numeric payload
/// where the channel has one (hp delta, inventory delta); `intensity` is its
/// magnitude.
struct FeedbackSignal {
  FeedbackChannel channel = FeedbackChannel::message;
  std::string content;
  double value = 0.0;
  double intensity = 0.0;
};

FeedbackSignal make_signal(FeedbackChannel channel, std::string content,
                           double value);

struct Scene {
  Vec2 agent;
  std::vector<Entity> entities;
};

struct QuestSpec {
  std::string id;
  std::string goal_text;
  Literal goal_atom;
  int difficulty = 1;
  int step_budget = 50;
  Scene scene;
};

/// Raised by load_curriculum with the offending quest id and field path in
/// the message.
class CurriculumError : public std::runtime_error {
 public:
  explicit CurriculumError(const std::string& msg) : std::runtime_error(msg) {}
};

struct WorldState {
  std::vector<Entity> entities;
  Vec2 agent_pos;
  int hp = kHpMax;
  std::map<std::string, int> inventory;
  std::set<std::string> talked_to;
  /// Commands executed since the last begin_attempt call.
  int step = 0;
  /// Commands executed since reset.
  int total_steps = 0;
  uint64_t seed = 0;

  void begin_attempt() { step = 0; }
  bool dead() const { return hp <= 0; }
  const Entity* find_entity(std::string_view id) const;
};

/// What the agent can see: ground atoms plus a positional sidecar so callers
/// do not have to parse loc constants back out of the atoms. Hidden entity
/// effects appear in neither.
struct EntityView {
  std::string id;
  std::string kind;
  Vec2 pos;
};

struct Percept {
  std::set<Literal> atoms;
  std::vector<EntityView> entities;
  Vec2 agent_pos;
  int hp = kHpMax;
};

enum class QuestStatus { in_progress, succeeded, failed };

std::string_view to_string(QuestStatus s);

/// Builds the initial world for a quest. Identical (spec, seed) pairs give
/// identical states.
WorldState reset(const QuestSpec& q, uint64_t seed);

/// Full visibility: at(agent, LOC), is(KIND, LOC) per entity,
/// adjacent_to(agent, KIND) per entity within Manhattan distance 1,
/// has(agent, ITEM) per inventory kind, talked_to(agent, KIND) per past
/// conversation, hp_band(agent, full|hurt|low).
Percept observe(const WorldState& ws);

/// Runs commands in order, producing exactly one feedback signal per
/// executed command. Execution halts early when the agent dies; remaining
/// commands are skipped.
std::vector<FeedbackSignal> execute(WorldState& ws,
                                    const std::vector<Command>& commands);

QuestStatus quest_status(const WorldState& ws, const QuestSpec& q);

/// Parses a curriculum JSON document. Schema violations raise
/// CurriculumError naming the quest id and field.
std::vector<QuestSpec> load_curriculum(std::string_view json_text);

std::vector<QuestSpec> load_curriculum_file(const std::string& path);

}  // namespace nsq
