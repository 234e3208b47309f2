#include "nsq/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace nsq {

namespace {

using nlohmann::json;

constexpr std::array<AgentMode, 4> kModeOrder = {
    AgentMode::full, AgentMode::no_ntp, AgentMode::no_ilp,
    AgentMode::baseline};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string run_tag(AgentMode mode, uint64_t seed) {
  return std::string(to_string(mode)) + "_" + std::to_string(seed);
}

/// Symbol ids are assigned in interning order, and ordered containers of
/// literals follow those ids into the logs. Interning everything a run can
/// mention before the workers start keeps the grid's output independent of
/// thread scheduling.
void intern_known_symbols(const ExperimentMatrix& matrix,
                          const std::vector<QuestSpec>& curriculum) {
  static constexpr std::array<std::string_view, 20> kFixed = {
      "agent",        "here",           "at",
      "is",           "has",            "talked_to",
      "causes_damage", "causes_healing", "blocks_pickup",
      "is_harmful",   "is_blocking",    "is_beneficial",
      "aggressive",   "approach",       "goto",
      "pickup",       "talk",           "attack",
      "use_item",     "X"};
  for (std::string_view name : kFixed) Symbol::intern(name);
  for (const std::string& kind : matrix.agent.sweep_kinds) {
    Symbol::intern(kind);
  }
  for (const QuestSpec& q : curriculum) {
    Symbol::intern(q.goal_atom.predicate.name());
    for (const Term& t : q.goal_atom.args) Symbol::intern(t.sym.name());
    for (const Entity& e : q.scene.entities) Symbol::intern(e.kind);
  }
  for (int y = 0; y < kGridHeight; ++y) {
    for (int x = 0; x < kGridWidth; ++x) {
      Symbol::intern(loc_name({x, y}));
    }
  }
}

Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

QuestRecord crashed_record(const QuestSpec& q) {
  QuestRecord rec;
  rec.quest_id = q.id;
  rec.difficulty = q.difficulty;
  return rec;
}

json synthetic_quest_start(const QuestSpec& q, size_t index) {
  return json{{"event", "quest_start"},
              {"quest", q.id},
              {"difficulty", q.difficulty},
              {"goal", render(q.goal_atom)},
              {"index", index}};
}

json synthetic_quest_end(const QuestSpec& q) {
  return json{{"event", "quest_end"},   {"quest", q.id},
              {"success", false},       {"first_try", false},
              {"iterations", 0},        {"interactions", 0},
              {"adaptation_trials", 0}, {"rules_added", 0},
              {"rules_retracted", 0},   {"hp_end", 0},
              {"crashed", true}};
}

RunResult execute_run(const ExperimentMatrix& matrix,
                      const std::vector<QuestSpec>& curriculum,
                      const std::vector<HornClause>& bootstrap,
                      AgentMode mode, uint64_t seed) {
  RunResult result;
  result.mode = mode;
  result.seed = seed;

  fs::path out(matrix.output_dir);
  std::string tag = run_tag(mode, seed);
  std::ofstream log(out / ("run_" + tag + ".jsonl"));
  std::ofstream growth(out / ("growth_" + tag + ".csv"));
  growth << "index,quest,difficulty,added,retracted,added_total,"
            "retracted_total,edges\n";

  AgentConfig cfg = matrix.agent;
  cfg.mode = mode;
  Agent agent(cfg, seed);
  bool quest_open = false;
  agent.set_log_sink([&log, &quest_open](const std::string& line) {
    if (line.find("\"event\":\"quest_start\"") != std::string::npos) {
      quest_open = true;
    } else if (line.find("\"event\":\"quest_end\"") != std::string::npos) {
      quest_open = false;
    }
    log << line << '\n';
  });

  auto growth_row = [&](size_t index, const std::string& id, int difficulty,
                        int added, int retracted) {
    const CausalProgramGraph& w = agent.world_model();
    growth << index << ',' << id << ',' << difficulty << ',' << added << ','
           << retracted << ',' << w.rules_added() << ',' << w.rules_retracted()
           << ',' << w.edges().size() << '\n';
  };

  size_t done = 0;
  uint64_t steps = 0;
  try {
    agent.bootstrap(bootstrap);
    growth_row(0, "bootstrap", 0,
               static_cast<int>(agent.world_model().rules_added()), 0);
    for (size_t i = 0; i < curriculum.size(); ++i) {
      QuestRecord rec = agent.run_quest(curriculum[i]);
      steps += static_cast<uint64_t>(rec.interactions);
      growth_row(i + 1, rec.quest_id, rec.difficulty, rec.rules_added,
                 rec.rules_retracted);
      std::ofstream snap(out / "snapshots" /
                         (tag + "_" + std::to_string(i + 1) + "_" +
                          rec.quest_id + ".cpg"));
      snap << agent.world_model().snapshot(steps);
      result.quests.push_back(std::move(rec));
      ++done;
    }
  } catch (const std::exception& ex) {
    result.crashed = true;
    result.error = ex.what();
    log << json{{"event", "run_crash"}, {"error", result.error}}.dump()
        << '\n';
    // Close the log with explicit failures so re-aggregating it reproduces
    // the report this crash feeds into.
    for (size_t i = done; i < curriculum.size(); ++i) {
      const QuestSpec& q = curriculum[i];
      bool dangling = quest_open && i == done;
      if (!dangling) log << synthetic_quest_start(q, i).dump() << '\n';
      log << synthetic_quest_end(q).dump() << '\n';
      result.quests.push_back(crashed_record(q));
    }
  }
  return result;
}

struct Violations {
  OrderingCheck check;
  const AggregateReport* report;

  double success(const std::string& mode) const {
    return report->modes.at(mode).success_pct.mean;
  }
  double first_try(const std::string& mode) const {
    return report->modes.at(mode).first_try_pct.mean;
  }
  void expect_ge(double hi_v, double lo_v, const std::string& hi,
                 const std::string& lo, const std::string& metric) {
    if (lo_v > hi_v) {
      check.violations.push_back(lo + " exceeds " + hi + " on " + metric);
    }
  }
};

}  // namespace

AggregateReport aggregate(std::vector<RunResult> runs) {
  AggregateReport report;
  for (const RunResult& r : runs) {
    report.quest_count = std::max(report.quest_count, r.quests.size());
  }

  std::map<std::string, std::vector<const RunResult*>> by_mode;
  for (const RunResult& r : runs) {
    by_mode[std::string(to_string(r.mode))].push_back(&r);
  }

  for (const auto& [name, cell] : by_mode) {
    std::vector<double> succ, ft, iters, inters, added, retracted, trials;
    std::map<int, std::vector<double>> dsucc;
    for (const RunResult* run : cell) {
      double n = static_cast<double>(
          std::max<size_t>(run->quests.size(), 1));
      double s = 0, f = 0, it = 0, in = 0, ad = 0, re = 0, tr = 0;
      std::map<int, std::pair<int, int>> per_difficulty;
      for (const QuestRecord& q : run->quests) {
        s += q.success ? 1 : 0;
        f += q.first_try ? 1 : 0;
        it += q.iterations;
        in += q.interactions;
        ad += q.rules_added;
        re += q.rules_retracted;
        tr += q.adaptation_trials;
        auto& slot = per_difficulty[q.difficulty];
        slot.first += q.success ? 1 : 0;
        slot.second += 1;
      }
      succ.push_back(100.0 * s / n);
      ft.push_back(100.0 * f / n);
      iters.push_back(it / n);
      inters.push_back(in / n);
      added.push_back(ad);
      retracted.push_back(re);
      trials.push_back(tr);
      for (const auto& [difficulty, slot] : per_difficulty) {
        dsucc[difficulty].push_back(100.0 * slot.first / slot.second);
      }
    }
    ModeStats stats;
    stats.success_pct = stat_of(succ);
    stats.first_try_pct = stat_of(ft);
    stats.iterations = stat_of(iters);
    stats.interactions = stat_of(inters);
    stats.rules_added = stat_of(added);
    stats.rules_retracted = stat_of(retracted);
    stats.adaptation_trials = stat_of(trials);
    for (const auto& [difficulty, values] : dsucc) {
      stats.difficulty_success_pct[difficulty] = stat_of(values);
    }
    report.modes[name] = std::move(stats);
  }
  report.runs = std::move(runs);
  return report;
}

AggregateReport run_matrix(const ExperimentMatrix& matrix) {
  if (matrix.modes.empty() || matrix.seeds.empty()) {
    throw std::invalid_argument("matrix needs at least one mode and one seed");
  }
  std::vector<QuestSpec> curriculum =
      load_curriculum_file(matrix.curriculum_path);
  CausalProgramGraph loaded =
      CausalProgramGraph::load(read_file(matrix.bootstrap_path));
  std::vector<HornClause> bootstrap(loaded.edges().begin(),
                                    loaded.edges().end());
  intern_known_symbols(matrix, curriculum);

  fs::create_directories(fs::path(matrix.output_dir) / "snapshots");

  struct Cell {
    AgentMode mode;
    uint64_t seed;
  };
  std::vector<Cell> cells;
  for (AgentMode mode : matrix.modes) {
    for (uint64_t seed : matrix.seeds) cells.push_back({mode, seed});
  }

  std::vector<RunResult> results(cells.size());
  std::atomic<size_t> next{0};
  size_t workers = std::max<size_t>(1, std::min(matrix.workers, cells.size()));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < cells.size();
           i = next.fetch_add(1)) {
        results[i] = execute_run(matrix, curriculum, bootstrap, cells[i].mode,
                                 cells[i].seed);
      }
    });
  }
  for (std::thread& t : pool) t.join();

  AggregateReport report = aggregate(std::move(results));
  std::ofstream(fs::path(matrix.output_dir) / "report.csv")
      << report_csv(report);
  std::ofstream(fs::path(matrix.output_dir) / "report.json")
      << report_json(report);
  return report;
}

RunResult parse_run_log(std::istream& in, AgentMode mode, uint64_t seed) {
  RunResult result;
  result.mode = mode;
  result.seed = seed;
  std::map<std::string, int> difficulty;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json doc = json::parse(line);
    std::string event = doc.value("event", "");
    if (event == "quest_start") {
      difficulty[doc.at("quest").get<std::string>()] =
          doc.value("difficulty", 0);
    } else if (event == "quest_end") {
      QuestRecord rec;
      rec.quest_id = doc.at("quest").get<std::string>();
      rec.difficulty = difficulty.count(rec.quest_id)
                           ? difficulty[rec.quest_id]
                           : doc.value("difficulty", 0);
      rec.success = doc.value("success", false);
      rec.first_try = doc.value("first_try", false);
      rec.iterations = doc.value("iterations", 0);
      rec.interactions = doc.value("interactions", 0);
      rec.adaptation_trials = doc.value("adaptation_trials", 0);
      rec.rules_added = doc.value("rules_added", 0);
      rec.rules_retracted = doc.value("rules_retracted", 0);
      rec.hp_end = doc.value("hp_end", 0);
      result.quests.push_back(std::move(rec));
    } else if (event == "run_crash") {
      result.crashed = true;
      result.error = doc.value("error", "");
    }
  }
  return result;
}

OrderingCheck check_ordering(const AggregateReport& report) {
  for (AgentMode mode : kModeOrder) {
    std::string name(to_string(mode));
    if (!report.modes.count(name)) {
      throw std::invalid_argument("report missing mode: " + name);
    }
  }
  Violations v{OrderingCheck{}, &report};
  v.expect_ge(v.success("full"), v.success("no_ntp"), "full", "no_ntp",
              "quest success");
  v.expect_ge(v.success("no_ntp"), v.success("no_ilp"), "no_ntp", "no_ilp",
              "quest success");
  v.expect_ge(v.success("no_ntp"), v.success("baseline"), "no_ntp", "baseline",
              "quest success");
  v.expect_ge(v.first_try("full"), v.first_try("no_ntp"), "full", "no_ntp",
              "first-try success");
  v.expect_ge(v.first_try("no_ntp"), v.first_try("no_ilp"), "no_ntp", "no_ilp",
              "first-try success");
  v.expect_ge(v.first_try("no_ntp"), v.first_try("baseline"), "no_ntp",
              "baseline", "first-try success");
  for (const char* other : {"no_ntp", "no_ilp", "baseline"}) {
    if (v.first_try("full") <= v.first_try(other)) {
      v.check.violations.push_back(
          std::string("full not strictly above ") + other +
          " on first-try success");
    }
  }
  v.check.pass = v.check.violations.empty();
  return v.check;
}

std::optional<std::string> validate_run_log(
    const std::vector<std::string>& lines) {
  bool in_quest = false;
  bool begun = false;
  int phase = 0;  // 0 recording, 1 delta applied, 2 retracting
  std::string quest;
  for (size_t i = 0; i < lines.size(); ++i) {
    auto fail = [&](const std::string& msg) {
      return "line " + std::to_string(i + 1) + ": " + msg;
    };
    json doc = json::parse(lines[i], nullptr, false);
    if (doc.is_discarded()) return fail("not valid JSON");
    if (!doc.contains("event")) return fail("missing event field");
    std::string event = doc["event"].get<std::string>();
    if (event == "bootstrap") {
      if (begun) return fail("bootstrap after the run began");
    } else if (event == "quest_start") {
      if (in_quest) return fail("quest_start inside quest " + quest);
      in_quest = true;
      phase = 0;
      quest = doc.value("quest", "");
    } else if (event == "episode") {
      if (!in_quest) return fail("episode outside a quest");
      if (phase != 0) return fail("episode after learning began");
    } else if (event == "delta") {
      if (!in_quest) return fail("delta outside a quest");
      if (phase >= 1) return fail("delta after learning already ran");
      phase = 1;
    } else if (event == "retraction") {
      if (!in_quest) return fail("retraction outside a quest");
      phase = 2;
    } else if (event == "attempt") {
      if (!in_quest) return fail("attempt outside a quest");
      phase = 0;
    } else if (event == "quest_end") {
      if (!in_quest) return fail("quest_end without quest_start");
      if (doc.value("quest", "") != quest) {
        return fail("quest_end for " + doc.value("quest", "") +
                    " inside quest " + quest);
      }
      in_quest = false;
    } else if (event == "run_crash") {
      // marker only
    } else {
      return fail("unknown event " + event);
    }
    begun = true;
  }
  if (in_quest) return "log ends inside quest " + quest;
  return std::nullopt;
}

ExperimentMatrix load_run_config(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& ex) {
    throw std::runtime_error("config " + path + ": " + ex.what());
  }
  fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (base / p).string();
  };

  ExperimentMatrix matrix;
  if (!doc.contains("curriculum")) {
    throw std::runtime_error("config " + path + ": missing curriculum");
  }
  matrix.curriculum_path = resolve(doc["curriculum"].get<std::string>());
  if (!doc.contains("bootstrap")) {
    throw std::runtime_error("config " + path + ": missing bootstrap");
  }
  matrix.bootstrap_path = resolve(doc["bootstrap"].get<std::string>());
  matrix.output_dir = resolve(doc.value("output", "out"));
  matrix.workers = doc.value("workers", size_t{4});

  for (const json& m : doc.value("modes", json::array())) {
    std::optional<AgentMode> mode = agent_mode_from(m.get<std::string>());
    if (!mode) {
      throw std::runtime_error("config " + path + ": unknown mode " +
                               m.get<std::string>());
    }
    matrix.modes.push_back(*mode);
  }
  if (matrix.modes.empty()) {
    matrix.modes.assign(kModeOrder.begin(), kModeOrder.end());
  }
  for (const json& s : doc.value("seeds", json::array())) {
    matrix.seeds.push_back(s.get<uint64_t>());
  }
  if (matrix.seeds.empty()) matrix.seeds = {1, 2, 3};

  json agent = doc.value("agent", json::object());
  AgentConfig& cfg = matrix.agent;
  cfg.max_attempts = agent.value("max_attempts", cfg.max_attempts);
  cfg.retraction_threshold =
      agent.value("retraction_threshold", cfg.retraction_threshold);
  cfg.embedding_dim = agent.value("embedding_dim", cfg.embedding_dim);
  cfg.memory_capacity = agent.value("memory_capacity", cfg.memory_capacity);
  for (const json& k : agent.value("sweep_kinds", json::array())) {
    cfg.sweep_kinds.push_back(k.get<std::string>());
  }
  double sigma_min = agent.value("sigma_min", cfg.verifier.sigma_min);
  cfg.verifier.sigma_min = sigma_min;
  cfg.grounding.sigma_min = sigma_min;
  std::string backend = agent.value("planner", "scripted");
  if (backend == "scripted") {
    cfg.planner.backend = PlannerBackend::scripted;
  } else if (backend == "llm") {
    cfg.planner.backend = PlannerBackend::llm;
  } else {
    throw std::runtime_error("config " + path + ": unknown planner " +
                             backend);
  }
  cfg.planner.llm.endpoint = agent.value("llm_endpoint", "");
  cfg.planner.llm.model = agent.value("llm_model", cfg.planner.llm.model);

  json train = agent.value("train", json::object());
  cfg.train.learning_rate =
      train.value("learning_rate", cfg.train.learning_rate);
  cfg.train.epochs = train.value("epochs", cfg.train.epochs);
  cfg.train.negatives_per_positive = train.value(
      "negatives_per_positive", cfg.train.negatives_per_positive);
  return matrix;
}

std::string report_csv(const AggregateReport& report) {
  std::set<int> difficulties;
  for (const auto& [name, stats] : report.modes) {
    for (const auto& [difficulty, stat] : stats.difficulty_success_pct) {
      difficulties.insert(difficulty);
    }
  }

  std::ostringstream out;
  out << "mode,success_pct_mean,success_pct_std,first_try_pct_mean,"
         "first_try_pct_std,iterations_mean,iterations_std,interactions_mean,"
         "interactions_std,rules_added_mean,rules_added_std,"
         "rules_retracted_mean,rules_retracted_std,adaptation_trials_mean,"
         "adaptation_trials_std";
  for (int d : difficulties) {
    out << ",success_d" << d << "_mean,success_d" << d << "_std";
  }
  out << '\n';

  for (AgentMode mode : kModeOrder) {
    std::string name(to_string(mode));
    auto it = report.modes.find(name);
    if (it == report.modes.end()) continue;
    const ModeStats& s = it->second;
    out << name << ',' << fmt(s.success_pct.mean) << ','
        << fmt(s.success_pct.stddev) << ',' << fmt(s.first_try_pct.mean) << ','
        << fmt(s.first_try_pct.stddev) << ',' << fmt(s.iterations.mean) << ','
        << fmt(s.iterations.stddev) << ',' << fmt(s.interactions.mean) << ','
        << fmt(s.interactions.stddev) << ',' << fmt(s.rules_added.mean) << ','
        << fmt(s.rules_added.stddev) << ',' << fmt(s.rules_retracted.mean)
        << ',' << fmt(s.rules_retracted.stddev) << ','
        << fmt(s.adaptation_trials.mean) << ','
        << fmt(s.adaptation_trials.stddev);
    for (int d : difficulties) {
      auto dit = s.difficulty_success_pct.find(d);
      if (dit == s.difficulty_success_pct.end()) {
        out << ",,";
      } else {
        out << ',' << fmt(dit->second.mean) << ',' << fmt(dit->second.stddev);
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string report_json(const AggregateReport& report) {
  auto stat_json = [](const Stat& s) {
    return json{{"mean", s.mean}, {"std", s.stddev}};
  };
  json modes = json::object();
  for (const auto& [name, s] : report.modes) {
    json difficulty = json::object();
    for (const auto& [d, stat] : s.difficulty_success_pct) {
      difficulty[std::to_string(d)] = stat_json(stat);
    }
    modes[name] = json{{"success_pct", stat_json(s.success_pct)},
                       {"first_try_pct", stat_json(s.first_try_pct)},
                       {"iterations", stat_json(s.iterations)},
                       {"interactions", stat_json(s.interactions)},
                       {"rules_added", stat_json(s.rules_added)},
                       {"rules_retracted", stat_json(s.rules_retracted)},
                       {"adaptation_trials", stat_json(s.adaptation_trials)},
                       {"difficulty_success_pct", difficulty}};
  }
  json runs = json::array();
  for (const RunResult& r : report.runs) {
    runs.push_back(json{{"mode", std::string(to_string(r.mode))},
                        {"seed", r.seed},
                        {"crashed", r.crashed}});
  }
  json doc{{"quest_count", report.quest_count},
           {"modes", modes},
           {"runs", runs}};
  return doc.dump(2) + "\n";
}

}  // namespace nsq
