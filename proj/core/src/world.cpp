#include "nsq/world.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <optional>
#include <sstream>

#include "json.hpp"

namespace nsq {

namespace {

constexpr std::array<std::string_view, 10> kKinds = {
    "agent", "fire", "coin",   "goblin", "sheep",
    "pumpkin", "npc", "door", "key",    "potion"};

constexpr std::array<std::string_view, 6> kSolid = {"fire",    "goblin", "sheep",
                                                    "pumpkin", "npc",    "door"};

constexpr std::array<std::string_view, 3> kPickable = {"coin", "key", "potion"};

bool in_bounds(Vec2 p) {
  return p.x >= 0 && p.x < kGridWidth && p.y >= 0 && p.y < kGridHeight;
}

}  // namespace

int manhattan(Vec2 a, Vec2 b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

std::string loc_name(Vec2 p) {
  return "loc" + std::to_string(p.x) + "_" + std::to_string(p.y);
}

bool is_known_kind(std::string_view kind) {
  return std::find(kKinds.begin(), kKinds.end(), kind) != kKinds.end();
}

bool is_solid_kind(std::string_view kind) {
  return std::find(kSolid.begin(), kSolid.end(), kind) != kSolid.end();
}

bool is_pickable_kind(std::string_view kind) {
  return std::find(kPickable.begin(), kPickable.end(), kind) != kPickable.end();
}

std::string_view to_string(Verb v) {
  switch (v) {
    case Verb::move_up: return "move_up";
    case Verb::move_down: return "move_down";
    case Verb::move_left: return "move_left";
    case Verb::move_right: return "move_right";
    case Verb::approach: return "approach";
    case Verb::pickup: return "pickup";
    case Verb::attack: return "attack";
    case Verb::talk: return "talk";
    case Verb::use_item: return "use_item";
  }
  return "?";
}

std::string render(const Command& c) {
  std::string out{to_string(c.verb)};
  if (!c.target.empty()) {
    out += "(" + c.target + ")";
  }
  return out;
}

std::string_view to_string(FeedbackChannel c) {
  switch (c) {
    case FeedbackChannel::hp: return "hp";
    case FeedbackChannel::inventory: return "inventory";
    case FeedbackChannel::quest: return "quest";
    case FeedbackChannel::message: return "message";
  }
  return "?";
}

FeedbackSignal make_signal(FeedbackChannel channel, std::string content,
                           double value) {
  FeedbackSignal s;
  s.channel = channel;
  s.content = std::move(content);
  s.value = value;
  s.intensity = std::abs(value);
  return s;
}

std::string_view to_string(QuestStatus s) {
  switch (s) {
    case QuestStatus::in_progress: return "in_progress";
    case QuestStatus::succeeded: return "succeeded";
    case QuestStatus::failed: return "failed";
  }
  return "?";
}

const Entity* WorldState::find_entity(std::string_view id) const {
  for (const Entity& e : entities) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

WorldState reset(const QuestSpec& q, uint64_t seed) {
  WorldState ws;
  ws.entities = q.scene.entities;
  ws.agent_pos = q.scene.agent;
  ws.hp = kHpMax;
  ws.seed = seed;
  return ws;
}

Percept observe(const WorldState& ws) {
  Percept p;
  p.agent_pos = ws.agent_pos;
  p.hp = ws.hp;
  p.atoms.insert(Literal{Symbol::intern("at"),
                         {Term::constant("agent"), Term::constant(loc_name(ws.agent_pos))}});
  for (const Entity& e : ws.entities) {
    p.atoms.insert(Literal{Symbol::intern("is"),
                           {Term::constant(e.kind), Term::constant(loc_name(e.pos))}});
    if (manhattan(ws.agent_pos, e.pos) <= 1) {
      p.atoms.insert(Literal{Symbol::intern("adjacent_to"),
                             {Term::constant("agent"), Term::constant(e.kind)}});
    }
    p.entities.push_back(EntityView{e.id, e.kind, e.pos});
  }
  for (const auto& [kind, count] : ws.inventory) {
    if (count > 0) {
      p.atoms.insert(Literal{Symbol::intern("has"),
                             {Term::constant("agent"), Term::constant(kind)}});
    }
  }
  for (const std::string& kind : ws.talked_to) {
    p.atoms.insert(Literal{Symbol::intern("talked_to"),
                           {Term::constant("agent"), Term::constant(kind)}});
  }
  std::string band = ws.hp >= kHpMax ? "full" : (ws.hp > 25 ? "hurt" : "low");
  p.atoms.insert(Literal{Symbol::intern("hp_band"),
                         {Term::constant("agent"), Term::constant(band)}});
  return p;
}

namespace {

/// Neighbor order fixes BFS tie-breaking: up, down, left, right.
constexpr std::array<Vec2, 4> kDirs = {Vec2{0, -1}, Vec2{0, 1}, Vec2{-1, 0},
                                       Vec2{1, 0}};

bool cell_blocked(const WorldState& ws, Vec2 p) {
  if (!in_bounds(p)) return true;
  for (const Entity& e : ws.entities) {
    if (e.pos == p && is_solid_kind(e.kind)) return true;
  }
  return false;
}

/// Shortest path from the agent to any cell adjacent to `goal`, walking only
/// through unblocked cells. Returns the move sequence, empty if already
/// adjacent, nullopt if unreachable.
std::optional<std::vector<Vec2>> path_to_adjacent(const WorldState& ws, Vec2 goal) {
  if (manhattan(ws.agent_pos, goal) <= 1) return std::vector<Vec2>{};
  std::map<std::pair<int, int>, Vec2> parent;
  std::deque<Vec2> frontier{ws.agent_pos};
  parent[{ws.agent_pos.x, ws.agent_pos.y}] = ws.agent_pos;
  while (!frontier.empty()) {
    Vec2 cur = frontier.front();
    frontier.pop_front();
    for (Vec2 d : kDirs) {
      Vec2 next{cur.x + d.x, cur.y + d.y};
      if (parent.count({next.x, next.y}) || cell_blocked(ws, next)) continue;
      parent[{next.x, next.y}] = cur;
      if (manhattan(next, goal) <= 1) {
        std::vector<Vec2> path{next};
        Vec2 back = cur;
        while (!(back == ws.agent_pos)) {
          path.push_back(back);
          back = parent[{back.x, back.y}];
        }
        std::reverse(path.begin(), path.end());
        return path;
      }
      frontier.push_back(next);
    }
  }
  return std::nullopt;
}

/// Sum of hazard deltas the agent picks up by moving from `from` to `to`:
/// each damaging entity whose adjacency ring the move enters fires once.
int hazard_delta(const WorldState& ws, Vec2 from, Vec2 to) {
  int delta = 0;
  for (const Entity& e : ws.entities) {
    if (e.effects.hp_delta == 0) continue;
    if (manhattan(from, e.pos) > 1 && manhattan(to, e.pos) <= 1) {
      delta += e.effects.hp_delta;
    }
  }
  return delta;
}

/// Moves the agent one cell, returning the signal for the step.
FeedbackSignal step_agent(WorldState& ws, Vec2 dir) {
  Vec2 next{ws.agent_pos.x + dir.x, ws.agent_pos.y + dir.y};
  if (cell_blocked(ws, next)) {
    return make_signal(FeedbackChannel::message, "blocked", 0);
  }
  int delta = hazard_delta(ws, ws.agent_pos, next);
  ws.agent_pos = next;
  if (delta != 0) {
    ws.hp += delta;
    return make_signal(FeedbackChannel::hp, "hp", delta);
  }
  return make_signal(FeedbackChannel::message, "ok", 0);
}

/// Nearest entity of `kind` by (distance, id); null if absent.
const Entity* nearest_of_kind(const WorldState& ws, std::string_view kind) {
  const Entity* best = nullptr;
  for (const Entity& e : ws.entities) {
    if (e.kind != kind) continue;
    if (!best || manhattan(ws.agent_pos, e.pos) < manhattan(ws.agent_pos, best->pos) ||
        (manhattan(ws.agent_pos, e.pos) == manhattan(ws.agent_pos, best->pos) &&
         e.id < best->id)) {
      best = &e;
    }
  }
  return best;
}

void remove_entity(WorldState& ws, const std::string& id) {
  std::erase_if(ws.entities, [&](const Entity& e) { return e.id == id; });
}

FeedbackSignal run_command(WorldState& ws, const Command& c) {
  switch (c.verb) {
    case Verb::move_up: return step_agent(ws, {0, -1});
    case Verb::move_down: return step_agent(ws, {0, 1});
    case Verb::move_left: return step_agent(ws, {-1, 0});
    case Verb::move_right: return step_agent(ws, {1, 0});
    case Verb::approach: {
      const Entity* target = nearest_of_kind(ws, c.target);
      if (!target) return make_signal(FeedbackChannel::message, "invalid", 0);
      auto path = path_to_adjacent(ws, target->pos);
      if (!path) return make_signal(FeedbackChannel::message, "blocked", 0);
      for (Vec2 cell : *path) {
        int delta = hazard_delta(ws, ws.agent_pos, cell);
        ws.agent_pos = cell;
        if (delta != 0) {
          ws.hp += delta;
          return make_signal(FeedbackChannel::hp, "hp", delta);
        }
      }
      return make_signal(FeedbackChannel::message, "ok", 0);
    }
    case Verb::pickup: {
      const Entity* item = nearest_of_kind(ws, c.target);
      if (!item || !is_pickable_kind(c.target) ||
          manhattan(ws.agent_pos, item->pos) > 1) {
        return make_signal(FeedbackChannel::message, "invalid", 0);
      }
      for (const Entity& guard : ws.entities) {
        if (!guard.effects.blocks.empty() && guard.effects.blocks == c.target &&
            manhattan(guard.pos, item->pos) <= 1) {
          return make_signal(FeedbackChannel::inventory, "blocked", 0);
        }
      }
      std::string kind = item->kind;
      remove_entity(ws, item->id);
      ws.inventory[kind] += 1;
      return make_signal(FeedbackChannel::inventory, "+" + kind, 1);
    }
    case Verb::attack: {
      const Entity* target = nearest_of_kind(ws, c.target);
      if (!target || manhattan(ws.agent_pos, target->pos) > 1) {
        return make_signal(FeedbackChannel::message, "invalid", 0);
      }
      std::string kind = target->kind;
      remove_entity(ws, target->id);
      return make_signal(FeedbackChannel::message, "defeated " + kind, 0);
    }
    case Verb::talk: {
      const Entity* target = nearest_of_kind(ws, c.target);
      if (!target || target->kind != "npc" ||
          manhattan(ws.agent_pos, target->pos) > 1) {
        return make_signal(FeedbackChannel::message, "invalid", 0);
      }
      ws.talked_to.insert(target->kind);
      return make_signal(FeedbackChannel::quest, "talked " + target->kind, 1);
    }
    case Verb::use_item: {
      if (ws.inventory[c.target] <= 0) {
        return make_signal(FeedbackChannel::message, "invalid", 0);
      }
      if (c.target == "key") {
        const Entity* door = nearest_of_kind(ws, "door");
        if (door && manhattan(ws.agent_pos, door->pos) <= 1) {
          remove_entity(ws, door->id);
          ws.inventory["key"] -= 1;
          return make_signal(FeedbackChannel::quest, "unlocked", 1);
        }
        return make_signal(FeedbackChannel::message, "invalid", 0);
      }
      if (c.target == "potion") {
        ws.inventory["potion"] -= 1;
        int delta = std::min(30, kHpMax - ws.hp);
        ws.hp += delta;
        return make_signal(FeedbackChannel::hp, "hp", delta);
      }
      return make_signal(FeedbackChannel::message, "invalid", 0);
    }
  }
  return make_signal(FeedbackChannel::message, "invalid", 0);
}

}  // namespace

std::vector<FeedbackSignal> execute(WorldState& ws,
                                    const std::vector<Command>& commands) {
  std::vector<FeedbackSignal> signals;
  for (const Command& c : commands) {
    if (ws.dead()) break;
    signals.push_back(run_command(ws, c));
    ws.step += 1;
    ws.total_steps += 1;
    if (ws.dead()) break;
  }
  return signals;
}

QuestStatus quest_status(const WorldState& ws, const QuestSpec& q) {
  if (ws.dead()) return QuestStatus::failed;
  const Literal& g = q.goal_atom;
  bool holds = false;
  std::string pred{g.predicate.name()};
  if (pred == "at" && g.args.size() == 2) {
    holds = g.args[1].sym.name() == loc_name(ws.agent_pos);
  } else if (pred == "has" && g.args.size() == 2) {
    auto it = ws.inventory.find(std::string{g.args[1].sym.name()});
    holds = it != ws.inventory.end() && it->second > 0;
  } else if (pred == "talked_to" && g.args.size() == 2) {
    holds = ws.talked_to.count(std::string{g.args[1].sym.name()}) > 0;
  }
  if (holds) return QuestStatus::succeeded;
  if (ws.step >= q.step_budget) return QuestStatus::failed;
  return QuestStatus::in_progress;
}

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw CurriculumError(where + ": " + what);
}

int require_int(const json& j, const std::string& where, const std::string& key,
                int lo, int hi) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    fail(where + "." + key, "expected an integer");
  }
  int v = j[key].get<int>();
  if (v < lo || v > hi) {
    fail(where + "." + key, "out of range [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "]");
  }
  return v;
}

std::string require_string(const json& j, const std::string& where,
                           const std::string& key) {
  if (!j.contains(key) || !j[key].is_string()) {
    fail(where + "." + key, "expected a string");
  }
  return j[key].get<std::string>();
}

QuestSpec parse_quest(const json& j, size_t index) {
  std::string where = "quests[" + std::to_string(index) + "]";
  QuestSpec q;
  q.id = require_string(j, where, "id");
  where = q.id;
  q.goal_text = require_string(j, where, "goal_text");
  std::string goal = require_string(j, where, "goal_atom");
  try {
    q.goal_atom = parse_literal(goal);
  } catch (const ParseError& e) {
    fail(where + ".goal_atom", e.what());
  }
  if (!q.goal_atom.is_ground()) fail(where + ".goal_atom", "must be ground");
  q.difficulty = require_int(j, where, "difficulty", 1, 5);
  if (j.contains("step_budget")) {
    q.step_budget = require_int(j, where, "step_budget", 1, 1000);
  }
  if (!j.contains("scene") || !j["scene"].is_object()) {
    fail(where + ".scene", "expected an object");
  }
  const json& scene = j["scene"];
  if (!scene.contains("agent") || !scene["agent"].is_object()) {
    fail(where + ".scene.agent", "expected an object");
  }
  q.scene.agent.x = require_int(scene["agent"], where + ".scene.agent", "x", 0,
                                kGridWidth - 1);
  q.scene.agent.y = require_int(scene["agent"], where + ".scene.agent", "y", 0,
                                kGridHeight - 1);
  if (!scene.contains("entities") || !scene["entities"].is_array()) {
    fail(where + ".scene.entities", "expected an array");
  }
  std::set<std::string> ids;
  for (size_t i = 0; i < scene["entities"].size(); ++i) {
    const json& ej = scene["entities"][i];
    std::string ewhere = where + ".scene.entities[" + std::to_string(i) + "]";
    Entity e;
    e.id = require_string(ej, ewhere, "id");
    if (!ids.insert(e.id).second) fail(ewhere + ".id", "duplicate id " + e.id);
    e.kind = require_string(ej, ewhere, "kind");
    if (!is_known_kind(e.kind) || e.kind == "agent") {
      fail(ewhere + ".kind", "unknown kind " + e.kind);
    }
    e.pos.x = require_int(ej, ewhere, "x", 0, kGridWidth - 1);
    e.pos.y = require_int(ej, ewhere, "y", 0, kGridHeight - 1);
    if (ej.contains("effects")) {
      const json& fx = ej["effects"];
      if (!fx.is_object()) fail(ewhere + ".effects", "expected an object");
      if (fx.contains("damage")) {
        e.effects.hp_delta =
            require_int(fx, ewhere + ".effects", "damage", -kHpMax, kHpMax);
      }
      if (fx.contains("blocks")) {
        e.effects.blocks = require_string(fx, ewhere + ".effects", "blocks");
        if (!is_pickable_kind(e.effects.blocks)) {
          fail(ewhere + ".effects.blocks", "not a pickable kind");
        }
      }
    }
    q.scene.entities.push_back(std::move(e));
  }
  return q;
}

}  // namespace

std::vector<QuestSpec> load_curriculum(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw CurriculumError(std::string{"curriculum: "} + e.what());
  }
  if (!doc.is_object() || !doc.contains("quests") || !doc["quests"].is_array()) {
    throw CurriculumError("curriculum.quests: expected an array");
  }
  std::vector<QuestSpec> quests;
  std::set<std::string> ids;
  for (size_t i = 0; i < doc["quests"].size(); ++i) {
    QuestSpec q = parse_quest(doc["quests"][i], i);
    if (!ids.insert(q.id).second) {
      fail(q.id + ".id", "duplicate quest id");
    }
    quests.push_back(std::move(q));
  }
  return quests;
}

std::vector<QuestSpec> load_curriculum_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CurriculumError("curriculum: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_curriculum(buf.str());
}

}  // namespace nsq
