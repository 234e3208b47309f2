#include "nsq/planner.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <deque>
#include <optional>
#include <ostream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace nsq {

namespace {

constexpr std::array<Vec2, 4> kDirs = {Vec2{0, -1}, Vec2{0, 1}, Vec2{-1, 0},
                                       Vec2{1, 0}};
constexpr std::array<Verb, 4> kDirVerbs = {Verb::move_up, Verb::move_down,
                                           Verb::move_left, Verb::move_right};

bool in_bounds(Vec2 p) {
  return p.x >= 0 && p.x < kGridWidth && p.y >= 0 && p.y < kGridHeight;
}

int cell_index(Vec2 p) { return p.y * kGridWidth + p.x; }

std::vector<bool> blocked_cells(const Percept& p,
                                const std::vector<std::string>& avoid_kinds) {
  std::vector<bool> blocked(kGridWidth * kGridHeight, false);
  for (const EntityView& ev : p.entities) {
    if (is_solid_kind(ev.kind)) blocked[cell_index(ev.pos)] = true;
    if (std::find(avoid_kinds.begin(), avoid_kinds.end(), ev.kind) ==
        avoid_kinds.end()) {
      continue;
    }
    blocked[cell_index(ev.pos)] = true;
    for (Vec2 d : kDirs) {
      Vec2 ring{ev.pos.x + d.x, ev.pos.y + d.y};
      if (in_bounds(ring)) blocked[cell_index(ring)] = true;
    }
  }
  return blocked;
}

/// Cells after `start`, or nullopt. The start cell is never treated as
/// blocked: standing inside a ring is free, walking back in is not. Among
/// equal-length paths the one heading toward `hint` wins, so routes beeline
/// instead of hugging an arbitrary expansion order.
template <typename GoalPred>
std::optional<std::vector<Vec2>> bfs_path(Vec2 start, Vec2 hint,
                                          const std::vector<bool>& blocked,
                                          GoalPred&& is_goal) {
  if (is_goal(start)) return std::vector<Vec2>{};
  std::vector<int> parent(kGridWidth * kGridHeight, -2);
  parent[cell_index(start)] = -1;
  std::deque<Vec2> frontier{start};
  while (!frontier.empty()) {
    Vec2 cur = frontier.front();
    frontier.pop_front();
    std::array<Vec2, 4> dirs = kDirs;
    std::stable_sort(dirs.begin(), dirs.end(), [&](Vec2 a, Vec2 b) {
      return manhattan({cur.x + a.x, cur.y + a.y}, hint) <
             manhattan({cur.x + b.x, cur.y + b.y}, hint);
    });
    for (Vec2 d : dirs) {
      Vec2 nxt{cur.x + d.x, cur.y + d.y};
      if (!in_bounds(nxt)) continue;
      int idx = cell_index(nxt);
      if (parent[idx] != -2 || blocked[idx]) continue;
      parent[idx] = cell_index(cur);
      if (is_goal(nxt)) {
        std::vector<Vec2> path;
        for (int at = idx; at != cell_index(start); at = parent[at]) {
          path.push_back(Vec2{at % kGridWidth, at / kGridWidth});
        }
        std::reverse(path.begin(), path.end());
        return path;
      }
      frontier.push_back(nxt);
    }
  }
  return std::nullopt;
}

Verb verb_for_step(Vec2 from, Vec2 to) {
  for (size_t i = 0; i < kDirs.size(); ++i) {
    if (to.x - from.x == kDirs[i].x && to.y - from.y == kDirs[i].y) {
      return kDirVerbs[i];
    }
  }
  throw TranslateError("non-adjacent path step");
}

const EntityView* nearest_of_kind(const Percept& p, Vec2 from,
                                  std::string_view kind) {
  const EntityView* best = nullptr;
  for (const EntityView& ev : p.entities) {
    if (ev.kind != kind) continue;
    if (!best || manhattan(from, ev.pos) < manhattan(from, best->pos) ||
        (manhattan(from, ev.pos) == manhattan(from, best->pos) &&
         ev.id < best->id)) {
      best = &ev;
    }
  }
  return best;
}

std::optional<Vec2> parse_loc(std::string_view name) {
  if (name.substr(0, 3) != "loc") return std::nullopt;
  size_t sep = name.find('_', 3);
  if (sep == std::string_view::npos) return std::nullopt;
  Vec2 out;
  try {
    out.x = std::stoi(std::string(name.substr(3, sep - 3)));
    out.y = std::stoi(std::string(name.substr(sep + 1)));
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (!in_bounds(out)) return std::nullopt;
  return out;
}

std::string step_constant(const Literal& step) {
  if (step.args.size() != 1 || step.args[0].is_variable()) {
    throw TranslateError("cannot translate " + render(step) +
                         ": expected one ground argument");
  }
  return step.args[0].sym.name();
}

void append_moves(std::vector<Command>& out, Vec2& pos,
                  const std::vector<Vec2>& path) {
  for (Vec2 cell : path) {
    out.push_back(Command{verb_for_step(pos, cell), ""});
    pos = cell;
  }
}

}  // namespace

std::vector<Command> translate(const Subgoal& sg, const Percept& p) {
  std::vector<Command> out;
  Vec2 pos = p.agent_pos;
  for (const Literal& step : sg.proposed_plan) {
    const std::string& action = step.predicate.name();
    if (action == "approach") {
      std::string kind = step_constant(step);
      const EntityView* target = nearest_of_kind(p, pos, kind);
      if (!target) {
        throw TranslateError("cannot translate " + render(step) +
                             ": no such entity");
      }
      std::vector<std::string> avoid = sg.avoid_kinds;
      std::erase(avoid, kind);
      Vec2 goal_pos = target->pos;
      auto path = bfs_path(pos, goal_pos, blocked_cells(p, avoid),
                           [goal_pos](Vec2 c) {
                             return manhattan(c, goal_pos) == 1;
                           });
      if (!path) {
        throw TranslateError("cannot translate " + render(step) +
                             ": unreachable");
      }
      append_moves(out, pos, *path);
    } else if (action == "goto") {
      std::string loc = step_constant(step);
      std::optional<Vec2> cell = parse_loc(loc);
      if (!cell) {
        throw TranslateError("cannot translate " + render(step) +
                             ": bad location");
      }
      Vec2 goal_pos = *cell;
      auto path = bfs_path(pos, goal_pos, blocked_cells(p, sg.avoid_kinds),
                           [goal_pos](Vec2 c) { return c == goal_pos; });
      if (!path) {
        throw TranslateError("cannot translate " + render(step) +
                             ": unreachable");
      }
      append_moves(out, pos, *path);
    } else if (action == "pickup") {
      out.push_back(Command{Verb::pickup, step_constant(step)});
    } else if (action == "talk") {
      out.push_back(Command{Verb::talk, step_constant(step)});
    } else if (action == "attack") {
      out.push_back(Command{Verb::attack, step_constant(step)});
    } else if (action == "use_item") {
      out.push_back(Command{Verb::use_item, step_constant(step)});
    } else {
      throw TranslateError("cannot translate " + render(step) +
                           ": unknown action");
    }
  }
  return out;
}

std::set<std::string> touched_kinds(const std::vector<Command>& commands,
                                    const Percept& p) {
  std::vector<bool> solid(kGridWidth * kGridHeight, false);
  for (const EntityView& ev : p.entities) {
    if (is_solid_kind(ev.kind)) solid[cell_index(ev.pos)] = true;
  }
  std::set<std::string> out;
  Vec2 pos = p.agent_pos;
  for (const Command& c : commands) {
    size_t dir = kDirVerbs.size();
    for (size_t i = 0; i < kDirVerbs.size(); ++i) {
      if (c.verb == kDirVerbs[i]) dir = i;
    }
    if (dir == kDirVerbs.size()) continue;
    Vec2 nxt{pos.x + kDirs[dir].x, pos.y + kDirs[dir].y};
    if (!in_bounds(nxt) || solid[cell_index(nxt)]) continue;
    for (const EntityView& ev : p.entities) {
      if (manhattan(ev.pos, nxt) <= 1 && manhattan(ev.pos, pos) > 1) {
        out.insert(ev.kind);
      }
    }
    pos = nxt;
  }
  return out;
}

namespace {

struct GoalShape {
  enum Kind { at, has, talked } kind;
  std::string target;
};

std::optional<GoalShape> classify_goal(const Literal& goal) {
  if (goal.args.size() != 2 || !goal.is_ground()) return std::nullopt;
  const std::string& pred = goal.predicate.name();
  const std::string& target = goal.args[1].sym.name();
  if (pred == "at") return GoalShape{GoalShape::at, target};
  if (pred == "has") return GoalShape{GoalShape::has, target};
  if (pred == "talked_to") return GoalShape{GoalShape::talked, target};
  return std::nullopt;
}

std::vector<Literal> goal_steps(const GoalShape& shape) {
  auto atom = [](std::string_view pred, const std::string& arg) {
    return Literal{Symbol::intern(pred), {Term::constant(arg)}};
  };
  switch (shape.kind) {
    case GoalShape::at:
      return {atom("goto", shape.target)};
    case GoalShape::has:
      return {atom("approach", shape.target), atom("pickup", shape.target)};
    case GoalShape::talked:
      return {atom("approach", shape.target), atom("talk", shape.target)};
  }
  return {};
}

/// Kinds asserted through ground unary facts under any of `predicates`.
/// Rule-derived conclusions stay invisible here on purpose: this scan stands
/// in for what a prompt reader would pick up from the fact list.
std::set<std::string> fact_kinds(const CausalProgramGraph& w,
                                 std::initializer_list<const char*> predicates) {
  std::set<std::string> out;
  for (const HornClause& c : w.edges()) {
    if (!c.is_fact() || c.head.args.size() != 1 || !c.head.is_ground()) continue;
    for (const char* pred : predicates) {
      if (c.head.predicate.name() == pred) out.insert(c.head.args[0].sym.name());
    }
  }
  return out;
}

std::string join_kinds(const std::set<std::string>& kinds) {
  std::string out;
  for (const std::string& k : kinds) {
    if (!out.empty()) out += ", ";
    out += k;
  }
  return out;
}

std::vector<Subgoal> scripted_candidates(const Literal& goal, const Percept& p,
                                         const CausalProgramGraph& w,
                                         const PlannerConfig& cfg) {
  if (p.atoms.count(goal) > 0) {
    return {Subgoal{goal, "goal already satisfied", {}, {}, true}};
  }
  std::optional<GoalShape> shape = classify_goal(goal);
  if (!shape) return {};
  std::vector<Literal> steps = goal_steps(*shape);

  auto try_candidate = [&](std::string rationale, std::vector<Literal> plan,
                           std::vector<std::string> avoid)
      -> std::optional<Subgoal> {
    Subgoal sg{goal, std::move(rationale), std::move(plan), std::move(avoid),
               false};
    try {
      translate(sg, p);
    } catch (const TranslateError&) {
      return std::nullopt;
    }
    return sg;
  };

  std::set<std::string> believed_harmful =
      fact_kinds(w, {"is_harmful", "causes_damage"});
  std::set<std::string> believed_blocking =
      fact_kinds(w, {"is_blocking", "blocks_pickup"});

  struct Ranked {
    int rank;
    Subgoal sg;
  };
  std::vector<Ranked> ranked;

  std::optional<Subgoal> direct =
      try_candidate("direct route to the " + shape->target, steps, {});
  std::set<std::string> adjacent;
  if (direct) {
    adjacent = touched_kinds(translate(*direct, p), p);
    if (shape->kind != GoalShape::at) adjacent.erase(shape->target);
  }
  bool bad_direct = std::any_of(
      adjacent.begin(), adjacent.end(),
      [&](const std::string& k) { return believed_harmful.count(k) > 0; });
  if (direct) ranked.push_back({bad_direct ? 50 : 0, std::move(*direct)});

  for (const std::string& kind : adjacent) {
    auto variant = try_candidate("detour around the " + kind, steps, {kind});
    if (variant) {
      int rank = bad_direct ? (believed_harmful.count(kind) ? 10 : 30) : 20;
      ranked.push_back({rank, std::move(*variant)});
    }
  }
  if (adjacent.size() >= 2) {
    auto wide = try_candidate(
        "detour around " + join_kinds(adjacent), steps,
        std::vector<std::string>(adjacent.begin(), adjacent.end()));
    if (wide) ranked.push_back({bad_direct ? 20 : 25, std::move(*wide)});
  }

  bool door_present = nearest_of_kind(p, p.agent_pos, "door") != nullptr;
  bool key_at_hand =
      p.atoms.count(Literal{Symbol::intern("has"),
                            {Term::constant("agent"), Term::constant("key")}}) > 0;
  bool key_in_scene = nearest_of_kind(p, p.agent_pos, "key") != nullptr;
  std::optional<Subgoal> item_use;
  if (shape->kind == GoalShape::has && door_present &&
      (key_at_hand || key_in_scene)) {
    auto atom = [](std::string_view pred, const char* arg) {
      return Literal{Symbol::intern(pred), {Term::constant(arg)}};
    };
    std::vector<Literal> plan;
    if (!key_at_hand) {
      plan.push_back(atom("approach", "key"));
      plan.push_back(atom("pickup", "key"));
    }
    plan.push_back(atom("approach", "door"));
    plan.push_back(atom("use_item", "key"));
    plan.insert(plan.end(), steps.begin(), steps.end());
    std::vector<std::string> avoid;
    for (const std::string& kind : believed_harmful) {
      if (nearest_of_kind(p, p.agent_pos, kind)) avoid.push_back(kind);
    }
    item_use = try_candidate("fetch the key and unlock the door first",
                             std::move(plan), std::move(avoid));
  }
  bool blocked_goal = false;
  if (item_use) {
    blocked_goal = std::any_of(believed_blocking.begin(),
                               believed_blocking.end(),
                               [&](const std::string& k) {
                                 return nearest_of_kind(p, p.agent_pos, k);
                               });
    ranked.push_back({blocked_goal ? -10 : 40, std::move(*item_use)});
  }

  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.rank < b.rank; });
  std::vector<Subgoal> out;
  for (Ranked& r : ranked) {
    if (out.size() >= cfg.max_candidates) break;
    out.push_back(std::move(r.sg));
  }
  return out;
}

std::string build_prompt(const Literal& goal, const Percept& p,
                         const CausalProgramGraph& w) {
  std::ostringstream os;
  os << "Goal: " << render(goal) << "\n";
  os << "Percept:\n";
  for (const Literal& atom : p.atoms) os << "  " << render(atom) << "\n";
  os << "Known rules:\n";
  for (const HornClause& c : w.edges()) os << "  " << render(c) << "\n";
  os << "Propose candidate plans as JSON: {\"candidates\": [{\"atom\": "
        "\"...\", \"rationale\": \"...\", \"plan\": [\"approach(coin)\"], "
        "\"avoid\": [\"fire\"]}]}\n";
  return os.str();
}

std::optional<std::vector<Subgoal>> llm_candidates(const Literal& goal,
                                                   const Percept& p,
                                                   const CausalProgramGraph& w,
                                                   const PlannerConfig& cfg) {
  LlmResult res = llm_post(cfg.llm, build_prompt(goal, p, w), cfg.log);
  if (!res.ok) {
    if (cfg.log) {
      *cfg.log << "planner: llm request failed (" << res.error
               << "); falling back to scripted candidates\n";
    }
    return std::nullopt;
  }
  std::vector<Subgoal> out;
  try {
    nlohmann::json doc = nlohmann::json::parse(res.body);
    for (const nlohmann::json& c : doc.at("candidates")) {
      if (out.size() >= cfg.max_candidates) break;
      try {
        Subgoal sg;
        sg.atom = parse_literal(c.at("atom").get<std::string>());
        sg.rationale_text = c.value("rationale", std::string{});
        for (const nlohmann::json& step : c.at("plan")) {
          sg.proposed_plan.push_back(parse_literal(step.get<std::string>()));
        }
        if (c.contains("avoid")) {
          for (const nlohmann::json& kind : c.at("avoid")) {
            sg.avoid_kinds.push_back(kind.get<std::string>());
          }
        }
        if (sg.proposed_plan.empty()) continue;
        translate(sg, p);
        out.push_back(std::move(sg));
      } catch (const std::exception&) {
        continue;
      }
    }
  } catch (const std::exception& ex) {
    if (cfg.log) {
      *cfg.log << "planner: llm response unparseable (" << ex.what()
               << "); falling back to scripted candidates\n";
    }
    return std::nullopt;
  }
  if (out.empty()) {
    if (cfg.log) {
      *cfg.log << "planner: llm response held no usable candidates; falling "
                  "back to scripted candidates\n";
    }
    return std::nullopt;
  }
  return out;
}

}  // namespace

std::vector<Subgoal> generate_subgoals(const Literal& goal, const Percept& p,
                                       const CausalProgramGraph& w,
                                       const PlannerConfig& cfg) {
  if (cfg.backend == PlannerBackend::llm) {
    if (p.atoms.count(goal) > 0) {
      return {Subgoal{goal, "goal already satisfied", {}, {}, true}};
    }
    if (auto parsed = llm_candidates(goal, p, w, cfg)) return *parsed;
  }
  return scripted_candidates(goal, p, w, cfg);
}

SelectionResult verify_and_select(std::span<const Subgoal> candidates,
                                  const Percept& p,
                                  const CausalProgramGraph& w,
                                  const EmbeddingTable& e,
                                  const VerifierPolicy& policy) {
  SelectionResult result;
  int fallback = -1;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const Subgoal& sg = candidates[i];
    CandidateVerdict verdict;
    verdict.index = static_cast<int>(i);
    if (sg.complete) {
      verdict.outcome = VerdictOutcome::cleared;
      verdict.detail = "goal already satisfied";
      verdict.sigma = 1.0;
      result.verdicts.push_back(std::move(verdict));
      result.selected_index = static_cast<int>(i);
      return result;
    }
    std::vector<Command> commands;
    try {
      commands = translate(sg, p);
    } catch (const TranslateError& ex) {
      verdict.outcome = VerdictOutcome::low_confidence;
      verdict.detail = ex.what();
      verdict.sigma = 0.0;
      result.verdicts.push_back(std::move(verdict));
      continue;
    }
    bool rejected = false;
    if (policy.reject_on_harm) {
      for (const std::string& kind : touched_kinds(commands, p)) {
        for (Symbol harm : policy.harm_predicates) {
          Literal query{harm, {Term::constant(kind)}};
          double sigma = prove(query, w, e, policy.prove).score;
          if (sigma >= policy.sigma_min) {
            verdict.outcome = VerdictOutcome::harm_rejected;
            verdict.detail = render(query);
            verdict.sigma = sigma;
            rejected = true;
            break;
          }
        }
        if (rejected) break;
      }
    }
    if (rejected) {
      result.verdicts.push_back(std::move(verdict));
      continue;
    }
    double goal_sigma = prove(sg.atom, w, e, policy.prove).score;
    verdict.detail = render(sg.atom);
    verdict.sigma = goal_sigma;
    if (goal_sigma >= policy.sigma_min) {
      verdict.outcome = VerdictOutcome::cleared;
      result.verdicts.push_back(std::move(verdict));
      result.selected_index = static_cast<int>(i);
      return result;
    }
    verdict.outcome = VerdictOutcome::low_confidence;
    result.verdicts.push_back(std::move(verdict));
    if (fallback < 0) fallback = static_cast<int>(i);
  }
  if (fallback >= 0) {
    result.selected_index = fallback;
    return result;
  }
  result.rejected_all =
      !result.verdicts.empty() &&
      std::all_of(result.verdicts.begin(), result.verdicts.end(),
                  [](const CandidateVerdict& v) {
                    return v.outcome == VerdictOutcome::harm_rejected;
                  });
  return result;
}

LlmResult llm_post(const LlmConfig& cfg, const std::string& prompt,
                   std::ostream* log) {
  LlmResult result;
  size_t scheme = cfg.endpoint.find("://");
  if (scheme == std::string::npos) {
    result.error = "malformed endpoint: " + cfg.endpoint;
    return result;
  }
  size_t path_start = cfg.endpoint.find('/', scheme + 3);
  std::string base = path_start == std::string::npos
                         ? cfg.endpoint
                         : cfg.endpoint.substr(0, path_start);
  std::string path =
      path_start == std::string::npos ? "/" : cfg.endpoint.substr(path_start);

  nlohmann::json body{
      {"model", cfg.model}, {"prompt", prompt}, {"max_tokens", cfg.max_tokens}};
  const char* token = std::getenv("NSQUEST_LLM_TOKEN");
  httplib::Headers headers;
  if (token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  if (log) {
    *log << "planner: POST " << cfg.endpoint << " model=" << cfg.model
         << " authorization="
         << (token && *token ? "Bearer <redacted>" : "<none>") << "\n";
  }
  httplib::Client client(base);
  client.set_connection_timeout(2, 0);
  client.set_read_timeout(5, 0);
  httplib::Result res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    result.error = "transport: " + httplib::to_string(res.error());
    return result;
  }
  result.status = res->status;
  result.body = res->body;
  if (res->status != 200) {
    result.error = "http status " + std::to_string(res->status);
    return result;
  }
  result.ok = true;
  return result;
}

}  // namespace nsq
