#include <benchmark/benchmark.h>

#include "nsq/logic.hpp"

using namespace nsq;

namespace {

std::vector<HornClause> reachability_kb(int chain) {
  std::string text;
  for (int i = 0; i < chain; ++i) {
    text += "edge(n" + std::to_string(i) + ", n" + std::to_string(i + 1) + ").\n";
  }
  text += "path(X, Y) :- edge(X, Y).\n";
  text += "path(X, Y) :- edge(X, Z), path(Z, Y).\n";
  return parse_program(text);
}

}  // namespace

static void bm_unify(benchmark::State& state) {
  Literal a = parse_literal("at(agent, X)");
  Literal b = parse_literal("at(agent, loc1)");
  for (auto _ : state) {
    auto s = unify(a, b);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(bm_unify);

static void bm_entails_chain(benchmark::State& state) {
  int chain = static_cast<int>(state.range(0));
  auto program = reachability_kb(chain);
  Literal goal = parse_literal("path(n0, n" + std::to_string(chain) + ")");
  for (auto _ : state) {
    bool ok = entails(program, goal, chain + 1);
    benchmark::DoNotOptimize(ok);
  }
}
BENCHMARK(bm_entails_chain)->Arg(4)->Arg(8)->Arg(12);

static void bm_parse_program(benchmark::State& state) {
  std::string text;
  for (int i = 0; i < 64; ++i)
    text += "fact_" + std::to_string(i) + "(a, b).\n";
  text += "derived(X) :- fact_0(X, Y), fact_1(Y, X).\n";
  for (auto _ : state) {
    auto program = parse_program(text);
    benchmark::DoNotOptimize(program);
  }
}
BENCHMARK(bm_parse_program);

BENCHMARK_MAIN();
