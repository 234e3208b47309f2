#include "nsq/agent.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace nsq {

namespace {

using nlohmann::json;

std::string render_signal(const FeedbackSignal& s) {
  std::ostringstream os;
  os << to_string(s.channel) << ":" << s.content << ":" << s.value;
  return os.str();
}

std::string_view to_string(VerdictOutcome o) {
  switch (o) {
    case VerdictOutcome::harm_rejected:
      return "harm_rejected";
    case VerdictOutcome::cleared:
      return "cleared";
    case VerdictOutcome::low_confidence:
      return "low_confidence";
  }
  return "unknown";
}

Literal here_atom(std::string_view pred, std::string_view arg) {
  return Literal{Symbol::intern(pred),
                 {Term::constant(arg), Term::constant("here")}};
}

/// What the agent remembers acting in: everything bordering its own cell or
/// the step's target, folded onto a single "here" constant so contexts from
/// different quests stay comparable. Including the target's surroundings is
/// what lets a guard be part of the context of a pickup it blocks, since a
/// guard adjacent to the item is never adjacent to the agent as well.
std::set<Literal> egocentric_state(Vec2 pos, std::optional<Vec2> target,
                                   const std::vector<Entity>& entities) {
  std::set<Literal> state;
  state.insert(here_atom("at", "agent"));
  for (const Entity& ent : entities) {
    bool near_agent = manhattan(ent.pos, pos) <= 1;
    bool near_target = target && manhattan(ent.pos, *target) <= 1;
    if (near_agent || near_target) state.insert(here_atom("is", ent.kind));
  }
  return state;
}

/// Where the step's one ground argument lives, resolved the way the world
/// resolves command targets: nearest entity of that kind, ties by id.
std::optional<Vec2> step_target(const Literal& step, const WorldState& ws) {
  if (step.args.size() != 1 || step.args[0].is_variable()) return std::nullopt;
  const std::string& kind = step.args[0].sym.name();
  const Entity* best = nullptr;
  for (const Entity& e : ws.entities) {
    if (e.kind != kind) continue;
    if (!best ||
        manhattan(ws.agent_pos, e.pos) < manhattan(ws.agent_pos, best->pos) ||
        (manhattan(ws.agent_pos, e.pos) == manhattan(ws.agent_pos, best->pos) &&
         e.id < best->id)) {
      best = &e;
    }
  }
  if (!best) return std::nullopt;
  return best->pos;
}

}  // namespace

std::string_view to_string(AgentMode m) {
  switch (m) {
    case AgentMode::full:
      return "full";
    case AgentMode::no_ntp:
      return "no_ntp";
    case AgentMode::no_ilp:
      return "no_ilp";
    case AgentMode::baseline:
      return "baseline";
  }
  return "unknown";
}

std::optional<AgentMode> agent_mode_from(std::string_view name) {
  if (name == "full") return AgentMode::full;
  if (name == "no_ntp") return AgentMode::no_ntp;
  if (name == "no_ilp") return AgentMode::no_ilp;
  if (name == "baseline") return AgentMode::baseline;
  return std::nullopt;
}

Agent::Agent(AgentConfig cfg, uint64_t seed)
    : cfg_(std::move(cfg)),
      seed_(seed),
      emb_(cfg_.embedding_dim, seed),
      memory_(cfg_.memory_capacity) {}

void Agent::set_log_sink(std::function<void(const std::string&)> sink) {
  sink_ = std::move(sink);
}

void Agent::emit(const std::string& line) {
  if (sink_) sink_(line);
}

const CausalProgramGraph& Agent::planning_graph() const {
  return cfg_.mode == AgentMode::baseline ? empty_w_ : w_;
}

bool Agent::uses_verifier() const {
  return cfg_.mode == AgentMode::full || cfg_.mode == AgentMode::no_ilp;
}

bool Agent::learns() const {
  return cfg_.mode == AgentMode::full || cfg_.mode == AgentMode::no_ntp;
}

TrainConfig Agent::train_config() const {
  TrainConfig t = cfg_.train;
  for (const char* pred : {"causes_damage", "causes_healing", "blocks_pickup",
                           "is_harmful", "is_blocking", "is_beneficial"}) {
    Symbol s = Symbol::intern(pred);
    if (std::find(t.reserved_negative_predicates.begin(),
                  t.reserved_negative_predicates.end(),
                  s) == t.reserved_negative_predicates.end()) {
      t.reserved_negative_predicates.push_back(s);
    }
  }
  for (const std::string& kind : cfg_.sweep_kinds) {
    Symbol s = Symbol::intern(kind);
    if (std::find(t.extra_sweep_constants.begin(), t.extra_sweep_constants.end(),
                  s) == t.extra_sweep_constants.end()) {
      t.extra_sweep_constants.push_back(s);
    }
  }
  return t;
}

void Agent::bootstrap(const std::vector<HornClause>& program) {
  for (const HornClause& c : program) {
    w_.add_rule(c, Provenance::bootstrap);
  }
  bool trained = false;
  if (cfg_.mode != AgentMode::baseline) {
    std::vector<Literal> facts;
    for (const HornClause& c : w_.edges()) {
      if (c.is_fact()) facts.push_back(c.head);
    }
    train_bootstrap(w_, facts, train_config(), emb_);
    trained = true;
  }
  emit(json{{"event", "bootstrap"},
            {"mode", std::string(to_string(cfg_.mode))},
            {"rules", w_.edges().size()},
            {"trained", trained}}
           .dump());
}

AttemptRecord Agent::perceive_and_act(WorldState& ws, const QuestSpec& q) {
  AttemptRecord at;
  ws.begin_attempt();
  Percept percept = observe(ws);

  // Plan-time damage beliefs, frozen before anything moves; the retraction
  // counters only charge predictions the agent actually held going in.
  std::map<std::string, bool> believed;
  if (learns()) {
    std::set<std::string> kinds;
    for (const EntityView& ev : percept.entities) kinds.insert(ev.kind);
    for (const std::string& kind : kinds) {
      Literal harm{Symbol::intern("causes_damage"), {Term::constant(kind)}};
      believed[kind] =
          prove(harm, w_, emb_, cfg_.verifier.prove).score >= cfg_.verifier.sigma_min;
    }
  }

  std::vector<Subgoal> candidates =
      generate_subgoals(q.goal_atom, percept, planning_graph(), cfg_.planner);
  if (candidates.empty()) {
    at.stalled = true;
    return at;
  }

  int selected = 0;
  if (uses_verifier()) {
    SelectionResult sel =
        verify_and_select(candidates, percept, w_, emb_, cfg_.verifier);
    for (const CandidateVerdict& v : sel.verdicts) {
      at.verdicts.push_back(VerdictRecord{
          candidates[static_cast<size_t>(v.index)].rationale_text,
          std::string(to_string(v.outcome)), v.detail, v.sigma});
    }
    if (sel.selected_index < 0) {
      at.stalled = true;
      return at;
    }
    selected = sel.selected_index;
  }

  const Subgoal& sg = candidates[static_cast<size_t>(selected)];
  at.selected_rationale = sg.rationale_text;
  if (sg.complete) return at;

  int hp_before = ws.hp;
  bool abort = false;
  for (const Literal& step : sg.proposed_plan) {
    if (abort || quest_status(ws, q) != QuestStatus::in_progress) break;
    Subgoal one{sg.atom, sg.rationale_text, {step}, sg.avoid_kinds, false};
    std::vector<Command> commands;
    try {
      commands = translate(one, observe(ws));
    } catch (const TranslateError& ex) {
      at.signals.push_back(std::string("plan:") + ex.what());
      break;
    }

    std::optional<Vec2> target = step_target(step, ws);
    Episode ep;
    ep.action = step;
    ep.quest_id = q.id;
    ep.state = egocentric_state(ws.agent_pos, target, ws.entities);
    for (const Command& cmd : commands) {
      std::vector<Entity> before = ws.entities;
      Vec2 pos_before = ws.agent_pos;
      std::vector<FeedbackSignal> signals = execute(ws, {cmd});
      at.commands.push_back(render(cmd));
      ++at.interactions;
      if (signals.empty()) break;
      const FeedbackSignal& s = signals.front();
      at.signals.push_back(render_signal(s));
      ep.feedback.push_back(s);
      // The context the feedback landed in: where the agent ended up, next
      // to what was there when the command started.
      ep.state = egocentric_state(ws.agent_pos, target, before);

      if (learns()) {
        for (const Entity& ent : before) {
          if (!believed[ent.kind]) continue;
          bool entered = manhattan(ent.pos, pos_before) > 1 &&
                         manhattan(ent.pos, ws.agent_pos) <= 1;
          bool harmed = s.channel == FeedbackChannel::hp && s.value < 0;
          if (entered && !harmed) note_contradiction(ent.kind);
        }
      }

      if ((s.channel == FeedbackChannel::hp && s.value < 0) || ws.dead()) {
        abort = true;
      }
      if (abort || quest_status(ws, q) != QuestStatus::in_progress) break;
    }
    ep.step_index = ws.total_steps;
    memory_.record(ep);
    json state = json::array();
    for (const Literal& atom : ep.state) state.push_back(render(atom));
    json feedback = json::array();
    for (const FeedbackSignal& s : ep.feedback) feedback.push_back(render_signal(s));
    emit(json{{"event", "episode"},
              {"quest", q.id},
              {"step", ep.step_index},
              {"state", state},
              {"action", render(ep.action)},
              {"feedback", feedback}}
             .dump());
  }
  at.hp_delta = ws.hp - hp_before;
  return at;
}

void Agent::note_contradiction(const std::string& kind) {
  Literal harm{Symbol::intern("causes_damage"), {Term::constant(kind)}};
  auto path = entails_with_path(w_.edges(), harm, 8);
  if (!path) return;
  std::span<const HornClause> edges = w_.edges();
  for (size_t idx : *path) {
    if (!edges[idx].is_fact()) continue;
    std::string key = render(edges[idx]);
    BlameEntry& entry = contradictions_[key];
    entry.fact = edges[idx];
    ++entry.count;
  }
}

void Agent::apply_retractions(AttemptRecord& attempt, const QuestSpec& q) {
  for (auto it = contradictions_.begin(); it != contradictions_.end();) {
    if (it->second.count < cfg_.retraction_threshold) {
      ++it;
      continue;
    }
    CpgDelta d = w_.retract_rule(it->second.fact);
    if (!d.empty()) {
      attempt.rules_retracted.push_back(it->first);
      emit(json{{"event", "retraction"},
                {"quest", q.id},
                {"fact", it->first},
                {"contradictions", it->second.count}}
               .dump());
    }
    it = contradictions_.erase(it);
  }
}

void Agent::learn_from_experience(AttemptRecord& attempt, const QuestSpec& q) {
  GroundingResult result = ground(memory_, w_, emb_, cfg_.grounding);
  if (result.delta.empty()) return;

  CpgDelta combined;
  combined.reason = Provenance::induced;
  for (const HornClause& c : result.delta) {
    CpgDelta d = w_.add_rule(c, Provenance::induced);
    combined.added.insert(combined.added.end(), d.added.begin(), d.added.end());
  }
  if (combined.added.empty()) return;

  for (const HornClause& c : combined.added) {
    attempt.rules_added.push_back(render(c));
  }
  json event{{"event", "delta"}, {"quest", q.id}, {"added", attempt.rules_added}};
  if (result.hypothesis) {
    event["hypothesis"] = render(result.hypothesis->literal);
    event["antecedent"] = render(result.hypothesis->antecedent);
  }
  std::vector<std::string> negatives;
  for (const Literal& n : result.negatives) negatives.push_back(render(n));
  event["negatives"] = negatives;
  emit(event.dump());

  if (cfg_.mode == AgentMode::full) {
    fine_tune(w_, combined, train_config(), emb_);
  } else {
    emb_.ensure_vocabulary(w_.edges());
  }
}

QuestRecord Agent::run_quest(const QuestSpec& q) {
  QuestRecord rec;
  rec.quest_id = q.id;
  rec.difficulty = q.difficulty;

  WorldState ws = reset(q, seed_);
  rec.hp_start = ws.hp;
  emit(json{{"event", "quest_start"},
            {"quest", q.id},
            {"difficulty", q.difficulty},
            {"goal", render(q.goal_atom)},
            {"index", quest_counter_}}
           .dump());

  uint64_t added_before = w_.rules_added();
  uint64_t retracted_before = w_.rules_retracted();

  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    AttemptRecord at = perceive_and_act(ws, q);
    at.index = attempt;
    ++rec.iterations;
    rec.interactions += at.interactions;
    if (learns()) {
      learn_from_experience(at, q);
      apply_retractions(at, q);
    }
    if (!at.rules_added.empty()) ++rec.adaptation_trials;

    json averdicts = json::array();
    for (const VerdictRecord& v : at.verdicts) {
      averdicts.push_back(json{{"rationale", v.rationale},
                               {"outcome", v.outcome},
                               {"detail", v.detail},
                               {"sigma", v.sigma}});
    }
    emit(json{{"event", "attempt"},
              {"quest", q.id},
              {"attempt", attempt},
              {"stalled", at.stalled},
              {"selected", at.selected_rationale},
              {"verdicts", averdicts},
              {"commands", at.commands},
              {"signals", at.signals},
              {"interactions", at.interactions},
              {"hp_delta", at.hp_delta},
              {"rules_added", at.rules_added},
              {"rules_retracted", at.rules_retracted}}
             .dump());
    rec.attempts.push_back(std::move(at));

    if (quest_status(ws, q) == QuestStatus::succeeded || ws.dead()) break;
  }

  rec.success = quest_status(ws, q) == QuestStatus::succeeded;
  rec.first_try = rec.success && rec.iterations == 1;
  rec.hp_end = ws.hp;
  rec.rules_added = static_cast<int>(w_.rules_added() - added_before);
  rec.rules_retracted = static_cast<int>(w_.rules_retracted() - retracted_before);

  emit(json{{"event", "quest_end"},
            {"quest", q.id},
            {"success", rec.success},
            {"first_try", rec.first_try},
            {"iterations", rec.iterations},
            {"interactions", rec.interactions},
            {"adaptation_trials", rec.adaptation_trials},
            {"rules_added", rec.rules_added},
            {"rules_retracted", rec.rules_retracted},
            {"hp_end", rec.hp_end},
            {"model_revision", w_.revision()},
            {"model_edges", w_.edges().size()}}
           .dump());
  ++quest_counter_;
  return rec;
}

}  // namespace nsq
