#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "nsq/agent.hpp"
#include "nsq/grounding.hpp"
#include "nsq/harness.hpp"
#include "nsq/ntp.hpp"
#include "nsq/world.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void print_summary(const nsq::AggregateReport& report, std::ostream& out) {
  out << std::left << std::setw(10) << "mode" << std::right << std::setw(10)
      << "success%" << std::setw(11) << "first_try%" << std::setw(8) << "iters"
      << std::setw(13) << "interactions" << std::setw(8) << "rules+"
      << std::setw(8) << "rules-" << "\n";
  for (const auto& [mode, stats] : report.modes) {
    out << std::left << std::setw(10) << mode << std::right << std::fixed
        << std::setprecision(1) << std::setw(10) << stats.success_pct.mean
        << std::setw(11) << stats.first_try_pct.mean << std::setw(8)
        << std::setprecision(2) << stats.iterations.mean << std::setw(13)
        << stats.interactions.mean << std::setw(8) << std::setprecision(1)
        << stats.rules_added.mean << std::setw(8)
        << stats.rules_retracted.mean << "\n";
  }
  for (const auto& run : report.runs) {
    if (!run.crashed) continue;
    out << "crashed: " << to_string(run.mode) << " seed " << run.seed << ": "
        << run.error << "\n";
  }
}

int print_ordering(const nsq::AggregateReport& report, std::ostream& out) {
  try {
    nsq::OrderingCheck check = nsq::check_ordering(report);
    if (check.pass) {
      out << "ablation ordering: pass\n";
      return 0;
    }
    out << "ablation ordering: FAIL\n";
    for (const auto& v : check.violations) out << "  " << v << "\n";
    return 1;
  } catch (const std::invalid_argument&) {
    out << "ablation ordering: skipped (needs all four modes)\n";
    return 0;
  }
}

int cmd_run(const std::string& config_path, const std::string& mode,
            int64_t seed, const std::string& planner,
            const std::string& endpoint, const std::string& out_dir,
            int64_t workers) {
  nsq::ExperimentMatrix matrix = nsq::load_run_config(config_path);
  if (!mode.empty()) matrix.modes = {*nsq::agent_mode_from(mode)};
  if (seed >= 0) matrix.seeds = {static_cast<uint64_t>(seed)};
  if (!planner.empty()) {
    matrix.agent.planner.backend = planner == "llm"
                                       ? nsq::PlannerBackend::llm
                                       : nsq::PlannerBackend::scripted;
  }
  if (!endpoint.empty()) matrix.agent.planner.llm.endpoint = endpoint;
  if (!out_dir.empty()) matrix.output_dir = out_dir;
  if (workers > 0) matrix.workers = static_cast<size_t>(workers);

  nsq::AggregateReport report = nsq::run_matrix(matrix);
  std::cout << "wrote " << matrix.output_dir << " ("
            << matrix.modes.size() * matrix.seeds.size() << " runs, "
            << report.quest_count << " quests each)\n";
  print_summary(report, std::cout);
  return print_ordering(report, std::cout);
}

int cmd_quest(const std::string& config_path, const std::string& quest_id,
              const std::string& mode, int64_t seed) {
  nsq::ExperimentMatrix matrix = nsq::load_run_config(config_path);
  std::vector<nsq::QuestSpec> quests =
      nsq::load_curriculum_file(matrix.curriculum_path);
  auto hit = std::find_if(quests.begin(), quests.end(),
                          [&](const auto& q) { return q.id == quest_id; });
  if (hit == quests.end()) {
    std::cerr << "unknown quest '" << quest_id << "'; curriculum has:";
    for (const auto& q : quests) std::cerr << " " << q.id;
    std::cerr << "\n";
    return 1;
  }

  nsq::AgentConfig cfg = matrix.agent;
  cfg.mode = *nsq::agent_mode_from(mode);
  nsq::Agent agent(cfg, static_cast<uint64_t>(seed));
  bool emitting = false;
  agent.set_log_sink([&](const std::string& line) {
    if (emitting) std::cout << line << "\n";
  });
  nsq::CausalProgramGraph boot =
      nsq::CausalProgramGraph::load(read_file(matrix.bootstrap_path));
  std::vector<nsq::HornClause> program(boot.edges().begin(),
                                       boot.edges().end());
  agent.bootstrap(program);

  // Earlier quests run silently: they are the experience the target quest's
  // adaptation draws on, exactly as in a full run.
  for (const auto& q : quests) {
    emitting = q.id == quest_id;
    nsq::QuestRecord rec = agent.run_quest(q);
    if (q.id != quest_id) continue;
    std::cout << "quest " << rec.quest_id << " (d" << rec.difficulty
              << "): " << (rec.success ? "success" : "failure")
              << (rec.first_try ? " on the first attempt" : "")
              << ", iterations=" << rec.iterations
              << " interactions=" << rec.interactions << " hp " << rec.hp_start
              << " -> " << rec.hp_end << " rules +" << rec.rules_added << " -"
              << rec.rules_retracted << "\n";
    return rec.success ? 0 : 1;
  }
  return 1;
}

int cmd_prove(const std::string& kb_path, const std::string& query, int depth,
              int beam, double floor, bool one_hot, int64_t dim, int64_t seed) {
  std::vector<nsq::HornClause> kb = nsq::parse_program(read_file(kb_path));
  nsq::Literal goal = nsq::parse_literal(query);
  nsq::ProveConfig cfg;
  cfg.depth_max = depth;
  cfg.beam_width = beam;
  cfg.sigma_floor = one_hot && floor < 0 ? 0.0 : (floor < 0 ? 0.01 : floor);

  std::unique_ptr<nsq::EmbeddingTable> table;
  if (one_hot) {
    nsq::VocabularySplit split = nsq::split_vocabulary(kb);
    std::set<std::string> names;
    std::vector<nsq::Symbol> vocab;
    auto add = [&](nsq::Symbol s) {
      if (names.insert(std::string(s.name())).second) vocab.push_back(s);
    };
    for (nsq::Symbol s : split.predicates) add(s);
    for (nsq::Symbol s : split.constants) add(s);
    add(goal.predicate);
    for (const auto& t : goal.args)
      if (!t.is_variable()) add(t.sym);
    std::sort(vocab.begin(), vocab.end(), [](nsq::Symbol a, nsq::Symbol b) {
      return a.name() < b.name();
    });
    table = std::make_unique<nsq::EmbeddingTable>(
        nsq::EmbeddingTable::one_hot(vocab));
  } else {
    table = std::make_unique<nsq::EmbeddingTable>(static_cast<size_t>(dim),
                                                  static_cast<uint64_t>(seed));
    nsq::CausalProgramGraph w;
    std::vector<nsq::Literal> facts;
    for (const auto& c : kb) {
      w.add_rule(c, nsq::Provenance::bootstrap);
      if (c.is_fact()) facts.push_back(c.head);
    }
    nsq::TrainConfig tcfg;
    nsq::TrainReport rep = nsq::train_bootstrap(w, facts, tcfg, *table);
    std::cout << "trained " << rep.epochs_run << " epochs, loss "
              << std::setprecision(4) << rep.final_loss << ", positives >= "
              << rep.min_positive_sigma << ", negatives <= "
              << rep.max_negative_sigma << "\n";
    if (!rep.warning.empty()) std::cout << "warning: " << rep.warning << "\n";
  }

  nsq::ProofResult proof = nsq::prove(goal, kb, *table, cfg);
  std::cout << "sigma(" << nsq::render(goal) << ") = " << std::setprecision(6)
            << proof.score << "\n";
  for (const auto& step : proof.path) {
    std::cout << "  [" << step.clause_index << "] "
              << nsq::render(kb[step.clause_index]) << "  score "
              << std::setprecision(4) << step.score;
    if (step.goal_symbol != step.clause_symbol) {
      std::cout << "  (" << step.goal_symbol.name() << " ~ "
                << step.clause_symbol.name() << ")";
    }
    std::cout << "\n";
  }
  if (proof.path.empty()) std::cout << "  no proof above the floor\n";
  return 0;
}

nsq::FeedbackSignal parse_signal(const std::string& text) {
  size_t first = text.find(':');
  size_t last = text.rfind(':');
  if (first == std::string::npos || last == first)
    throw std::runtime_error("bad signal: " + text);
  std::string channel = text.substr(0, first);
  std::string content = text.substr(first + 1, last - first - 1);
  double value = std::stod(text.substr(last + 1));
  nsq::FeedbackChannel c;
  if (channel == "hp") c = nsq::FeedbackChannel::hp;
  else if (channel == "inventory") c = nsq::FeedbackChannel::inventory;
  else if (channel == "quest") c = nsq::FeedbackChannel::quest;
  else if (channel == "message") c = nsq::FeedbackChannel::message;
  else throw std::runtime_error("bad signal channel: " + channel);
  return nsq::make_signal(c, content, value);
}

int cmd_induce(const std::string& log_path, const std::string& kb_path,
               int window, double sigma_min) {
  nsq::CausalProgramGraph w = nsq::CausalProgramGraph::load(read_file(kb_path));

  std::ifstream in(log_path);
  if (!in) throw std::runtime_error("cannot read " + log_path);
  std::vector<nsq::Episode> episodes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] != '{') continue;
    json j = json::parse(line);
    if (j.value("event", "") != "episode") continue;
    nsq::Episode ep;
    ep.quest_id = j.value("quest", "");
    ep.step_index = j.value("step", 0ull);
    ep.action = nsq::parse_literal(j.at("action").get<std::string>());
    for (const auto& atom : j.at("state"))
      ep.state.insert(nsq::parse_literal(atom.get<std::string>()));
    for (const auto& sig : j.at("feedback"))
      ep.feedback.push_back(parse_signal(sig.get<std::string>()));
    episodes.push_back(std::move(ep));
  }
  if (episodes.empty()) {
    std::cout << "no episode events in " << log_path << "\n";
    return 1;
  }
  nsq::EpisodicMemory memory(std::max<size_t>(episodes.size(), 256));
  for (auto& ep : episodes) memory.record(std::move(ep));

  // One-hot over everything the replayed episodes and the graph mention, so
  // soft proofs coincide with discrete entailment during detection.
  std::set<std::string> names;
  std::vector<nsq::Symbol> vocab;
  auto add = [&](nsq::Symbol s) {
    if (names.insert(std::string(s.name())).second) vocab.push_back(s);
  };
  nsq::VocabularySplit split = nsq::split_vocabulary(w.edges());
  for (nsq::Symbol s : split.predicates) add(s);
  for (nsq::Symbol s : split.constants) add(s);
  for (const auto& ep : memory.recent(memory.size())) {
    add(ep.action.predicate);
    for (const auto& t : ep.action.args)
      if (!t.is_variable()) add(t.sym);
    for (const auto& atom : ep.state) {
      add(atom.predicate);
      for (const auto& t : atom.args)
        if (!t.is_variable()) add(t.sym);
    }
  }
  for (const char* p : {"causes_damage", "causes_healing", "blocks_pickup",
                        "is_harmful", "is_blocking", "is_beneficial"})
    add(nsq::Symbol::intern(p));
  std::sort(vocab.begin(), vocab.end(), [](nsq::Symbol a, nsq::Symbol b) {
    return a.name() < b.name();
  });
  nsq::EmbeddingTable table = nsq::EmbeddingTable::one_hot(vocab);

  nsq::GroundingConfig cfg;
  cfg.sigma_min = sigma_min;
  cfg.window = window;
  nsq::GroundingResult result = nsq::ground(memory, w, table, cfg);

  if (!result.error) {
    std::cout << "no prediction error in the last " << window
              << " episodes\n";
    return 0;
  }
  const auto& err = *result.error;
  std::cout << "error: " << nsq::render(err.failing_episode.action) << " in "
            << err.failing_episode.quest_id << " step "
            << err.failing_episode.step_index << " -> "
            << to_string(err.actual.channel) << ":" << err.actual.content
            << ":" << err.actual.value << " (predicate "
            << err.causal_predicate.name() << ")\n";
  if (!result.hypothesis) {
    std::cout << "no minimal contrast pair\n";
    return 0;
  }
  std::cout << "hypothesis: " << nsq::render(result.hypothesis->literal)
            << "  (contrast atom " << nsq::render(result.hypothesis->antecedent)
            << ", fail step " << result.hypothesis->fail_step
            << " vs success step " << result.hypothesis->success_step << ")\n";
  for (const auto& neg : result.negatives)
    std::cout << "negative: " << nsq::render(neg) << "\n";
  if (result.delta.empty()) {
    std::cout << "no consistent program (or hypothesis already entailed)\n";
    return 0;
  }
  for (const auto& c : result.delta)
    std::cout << "delta: " << nsq::render(c) << "\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  std::vector<nsq::RunResult> runs;
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("run_", 0) == 0 && entry.path().extension() == ".jsonl")
      logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& path : logs) {
    std::string tag = path.stem().string().substr(4);
    size_t cut = tag.rfind('_');
    if (cut == std::string::npos) continue;
    std::optional<nsq::AgentMode> mode = nsq::agent_mode_from(tag.substr(0, cut));
    uint64_t seed = 0;
    try {
      seed = std::stoull(tag.substr(cut + 1));
    } catch (const std::exception&) {
      mode.reset();
    }
    if (!mode) {
      std::cerr << "skipping " << path.filename().string()
                << ": unrecognized tag\n";
      continue;
    }
    std::string text = read_file(path.string());
    std::vector<std::string> lines;
    std::istringstream split(text);
    for (std::string l; std::getline(split, l);) lines.push_back(l);
    if (auto offence = nsq::validate_run_log(lines))
      std::cerr << path.filename().string() << ": " << *offence << "\n";
    std::istringstream replay(text);
    runs.push_back(nsq::parse_run_log(replay, *mode, seed));
  }
  if (runs.empty()) {
    std::cerr << "no run_*.jsonl logs under " << dir << "\n";
    return 1;
  }
  nsq::AggregateReport report = nsq::aggregate(std::move(runs));
  print_summary(report, std::cout);
  std::cout << report_csv(report);
  return print_ordering(report, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neuro-symbolic quest agent"};
  app.require_subcommand(1);

  std::string config_path, mode, planner, endpoint, out_dir;
  int64_t seed = -1, workers = -1;
  CLI::App* run = app.add_subcommand("run", "run the full experiment matrix");
  run->add_option("--config", config_path, "run config json")->required();
  run->add_option("--mode", mode, "restrict to one mode")
      ->check(CLI::IsMember({"full", "no_ntp", "no_ilp", "baseline"}));
  run->add_option("--seed", seed, "restrict to one seed");
  run->add_option("--planner", planner, "planner backend")
      ->check(CLI::IsMember({"scripted", "llm"}));
  run->add_option("--llm-endpoint", endpoint, "llm proposer url");
  run->add_option("--out", out_dir, "output directory override");
  run->add_option("--workers", workers, "worker threads");

  std::string quest_id, quest_mode = "full";
  int64_t quest_seed = 1;
  CLI::App* quest = app.add_subcommand(
      "quest", "replay the curriculum up to one quest and print its events");
  quest->add_option("--config", config_path, "run config json")->required();
  quest->add_option("--quest", quest_id, "quest id to report")->required();
  quest->add_option("--mode", quest_mode, "agent mode")
      ->check(CLI::IsMember({"full", "no_ntp", "no_ilp", "baseline"}));
  quest->add_option("--seed", quest_seed, "agent seed");

  std::string kb_path, query;
  int depth = 3, beam = 8;
  double floor = -1.0;
  bool one_hot = false;
  int64_t dim = 32, table_seed = 7;
  CLI::App* prove = app.add_subcommand("prove", "score a query against a kb");
  prove->add_option("--kb", kb_path, "rules file")->required();
  prove->add_option("--query", query, "ground or open literal")->required();
  prove->add_option("--depth", depth, "proof depth cap");
  prove->add_option("--beam", beam, "beam width");
  prove->add_option("--floor", floor, "sigma floor (default 0.01, 0 one-hot)");
  prove->add_flag("--one-hot", one_hot, "exact-match embeddings, no training");
  prove->add_option("--dim", dim, "embedding dimension (trained table)");
  prove->add_option("--seed", table_seed, "embedding seed (trained table)");

  std::string log_path;
  int window = 16;
  double sigma_min = 0.5;
  CLI::App* induce = app.add_subcommand(
      "induce", "rerun grounding over episodes from a run log");
  induce->add_option("--log", log_path, "run_*.jsonl event log")->required();
  induce->add_option("--kb", kb_path, "world model rules file")->required();
  induce->add_option("--window", window, "detection window");
  induce->add_option("--sigma-min", sigma_min, "prediction threshold");

  std::string report_dir;
  CLI::App* report = app.add_subcommand(
      "report", "re-aggregate run_*.jsonl logs from a directory");
  report->add_option("--dir", report_dir, "output directory of a run")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, mode, seed, planner, endpoint, out_dir,
                     workers);
    if (quest->parsed())
      return cmd_quest(config_path, quest_id, quest_mode, quest_seed);
    if (prove->parsed())
      return cmd_prove(kb_path, query, depth, beam, floor, one_hot, dim,
                       table_seed);
    if (induce->parsed()) return cmd_induce(log_path, kb_path, window, sigma_min);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
