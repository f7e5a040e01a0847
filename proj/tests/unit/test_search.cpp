#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "tensorial/errors.hpp"
#include "tensorial/search.hpp"

using namespace tensorial;
namespace fs = std::filesystem;

namespace {

// Deterministic smooth objective over the configuration.
std::vector<FoldScore> smooth(const DenoiserConfig& c) {
  const double k = static_cast<double>(c.patch.kernel), s = static_cast<double>(c.patch.stride);
  const double rk = static_cast<double>(c.rank_k), rp = static_cast<double>(c.rank_p);
  const double score = std::exp(-std::pow((k - 16) / 8, 2) - std::pow((s - 2) / 2, 2) - std::pow((rk - 40) / 30, 2) -
                                std::pow((rp - 8) / 6, 2));
  return {{score, score * 0.9}};
}

fs::path temp_log(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tensorial_search_" + std::to_string(::getpid()) + "_" + name + ".jsonl");
  fs::remove(p);
  return p;
}

std::vector<std::size_t> ids_by_config(const std::vector<Trial>& trials) {
  std::vector<Trial> sorted = trials;
  std::sort(sorted.begin(), sorted.end(), [](const Trial& a, const Trial& b) { return a.trial_id < b.trial_id; });
  std::vector<std::size_t> keys;
  for (const auto& t : sorted) keys.push_back(t.config.patch.kernel * 1000000 + t.config.patch.stride * 10000 + t.config.rank_k * 100 + t.config.rank_p);
  return keys;
}

}  // namespace

TEST(SearchSpaceTest, ConstraintArithmetic) {
  SearchSpace space;
  EXPECT_EQ(patch_count(space, 8, 2), 169u);
  const auto rk = rank_k_choices(space, 8, 2);
  ASSERT_EQ(rk.size(), 20u);
  EXPECT_EQ(rk.front(), 4u);
  EXPECT_EQ(rk.back(), 80u);
  EXPECT_EQ(rank_p_choices(space, 8), (std::vector<std::size_t>{4, 8}));
  EXPECT_EQ(rank_k_choices(space, 24, 4), (std::vector<std::size_t>{4, 8}));
  EXPECT_EQ(patch_count(space, 40, 1), 0u);

  DenoiserConfig c;
  c.patch = PatchConfig{.kernel = 8, .stride = 2};
  c.rank_k = 80;
  c.rank_p = 8;
  EXPECT_TRUE(is_feasible(space, c));
  c.rank_k = 84;
  EXPECT_FALSE(is_feasible(space, c));
  c.rank_k = 6;
  EXPECT_FALSE(is_feasible(space, c));
  c.rank_k = 8;
  c.rank_p = 12;
  EXPECT_FALSE(is_feasible(space, c));
  c.rank_p = 4;
  c.patch.stride = 3;
  EXPECT_FALSE(is_feasible(space, c));
}

TEST(SearchSpaceTest, EnumerationIsExactlyTheFeasibleSet) {
  SearchSpace space;
  space.width = space.height = 20;
  const auto all = enumerate_feasible(space);
  std::size_t expected = 0;
  for (std::size_t k : space.patch_sizes)
    for (std::size_t s : space.strides) expected += rank_k_choices(space, k, s).size() * rank_p_choices(space, k).size();
  EXPECT_EQ(all.size(), expected);
  for (const auto& c : all) EXPECT_TRUE(is_feasible(space, c));
}

TEST(SearchSpaceTest, EmptySpaceRaises) {
  SearchSpace space;
  space.patch_sizes = {16};
  space.width = space.height = 8;
  EXPECT_THROW(suggest(TpeState{}, space), ConfigError);
  SearchOptions opt;
  EXPECT_THROW(run_search(space, smooth, opt), ConfigError);
  space.rank_step = 0;
  EXPECT_THROW(validate(space), ConfigError);
}

TEST(FitnessTest, Arithmetic) {
  const FoldScore table[] = {{0.8393, 0.7160}};
  EXPECT_EQ(fitness(table), 0.77765);
  const FoldScore ones[] = {{1, 1}, {1, 1}, {1, 1}};
  EXPECT_EQ(fitness(ones), 1.0);
  const FoldScore sym[] = {{0.8, 0.6}, {0.6, 0.8}};
  EXPECT_NEAR(fitness(sym), 0.7, 1e-12);
  EXPECT_THROW(fitness(std::span<const FoldScore>{}), ArgumentError);
}

TEST(TpeTest, SuggestionsAreFeasibleAndDeterministic) {
  SearchSpace space;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TpeState state;
    state.options.seed = seed;
    for (std::size_t i = 0; i < 40; ++i) {
      DenoiserConfig c = suggest(state, space);
      EXPECT_TRUE(is_feasible(space, c));
      EXPECT_EQ(suggest(state, space), c);
      state.trials.push_back(evaluate_trial(i, c, smooth));
    }
  }
}

TEST(TpeTest, NoRepeatsWhileUnvisitedRemain) {
  SearchSpace space;
  space.patch_sizes = {4, 8};
  space.strides = {2, 4};
  space.width = space.height = 12;
  const std::size_t size = enumerate_feasible(space).size();
  TpeState state;
  state.options.seed = 9;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> seen;
  for (std::size_t i = 0; i < size; ++i) {
    DenoiserConfig c = suggest(state, space);
    EXPECT_TRUE(seen.insert({c.patch.kernel, c.patch.stride, c.rank_k, c.rank_p}).second);
    state.trials.push_back(evaluate_trial(i, c, smooth));
  }
  EXPECT_TRUE(is_feasible(space, suggest(state, space)));
}

TEST(TrialTest, FailuresAreRecorded) {
  DenoiserConfig c;
  Trial t = evaluate_trial(3, c, [](const DenoiserConfig&) -> std::vector<FoldScore> { throw EvaluatorError("boom"); });
  EXPECT_EQ(t.status, TrialStatus::failed);
  EXPECT_NE(t.error.find("boom"), std::string::npos);
  Trial bad = evaluate_trial(4, c, [](const DenoiserConfig&) { return std::vector<FoldScore>{{1.5, 0.0}}; });
  EXPECT_EQ(bad.status, TrialStatus::failed);
  Trial ok = evaluate_trial(5, c, [](const DenoiserConfig&) { return std::vector<FoldScore>{{0.8, 0.6}, {0.6, 0.8}}; });
  EXPECT_EQ(ok.status, TrialStatus::complete);
  EXPECT_NEAR(ok.fitness, 0.7, 1e-12);
}

TEST(TrialTest, JsonRoundTrip) {
  Trial t;
  t.trial_id = 7;
  t.config.patch = PatchConfig{.kernel = 16, .stride = 4};
  t.config.method = Method::tt;
  t.config.rank_k = 12;
  t.config.rank_p = 8;
  t.folds = {{0.1, 0.2}, {0.3, 0.4}};
  t.fitness = fitness(t.folds);
  t.status = TrialStatus::complete;
  const auto doc = to_json(t);
  EXPECT_EQ(doc["config"]["method"], "tt");
  Trial back = trial_from_json(nlohmann::json::parse(doc.dump()));
  EXPECT_EQ(back.config, t.config);
  EXPECT_EQ(back.fitness, t.fitness);
  EXPECT_EQ(back.folds.size(), 2u);
  t.status = TrialStatus::failed;
  EXPECT_TRUE(to_json(t)["fitness"].is_null());
  EXPECT_THROW(trial_from_json(nlohmann::json::parse(R"({"trial_id":1})")), FormatError);
}

TEST(RunSearchTest, BudgetOneAndRanking) {
  SearchSpace space;
  SearchOptions opt;
  opt.budget = 1;
  opt.tpe.seed = 3;
  auto one = run_search(space, smooth, opt);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].trial_id, 0u);

  opt.budget = 25;
  auto ranked = run_search(space, smooth, opt);
  ASSERT_EQ(ranked.size(), 25u);
  for (std::size_t i = 0; i + 1 < ranked.size(); ++i) {
    EXPECT_GE(ranked[i].fitness, ranked[i + 1].fitness);
    if (ranked[i].fitness == ranked[i + 1].fitness) {
      EXPECT_LT(ranked[i].trial_id, ranked[i + 1].trial_id);
    }
  }
  auto top = top_trials(ranked);
  ASSERT_EQ(top.size(), 10u);
  EXPECT_EQ(top[0].trial_id, ranked[0].trial_id);
  EXPECT_NEAR(top[0].clean, smooth(ranked[0].config)[0].clean, 1e-15);
  EXPECT_EQ(to_json(top).size(), 10u);
}

TEST(RunSearchTest, TiesBreakByTrialId) {
  std::vector<Trial> trials(4);
  for (std::size_t i = 0; i < 4; ++i) {
    trials[i].trial_id = 3 - i;
    trials[i].status = TrialStatus::complete;
    trials[i].fitness = 0.5;
  }
  trials[1].status = TrialStatus::failed;
  sort_trials(trials);
  EXPECT_EQ(trials[0].trial_id, 0u);
  EXPECT_EQ(trials[1].trial_id, 1u);
  EXPECT_EQ(trials[2].trial_id, 3u);
  EXPECT_EQ(trials[3].status, TrialStatus::failed);
}

TEST(RunSearchTest, LogAndResume) {
  SearchSpace space;
  SearchOptions opt;
  opt.budget = 15;
  opt.tpe.seed = 11;
  const auto full = run_search(space, smooth, opt);

  const fs::path log = temp_log("resume");
  opt.log_path = log;
  opt.budget = 7;
  run_search(space, smooth, opt);
  {
    std::ifstream in(log);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    EXPECT_EQ(lines, 7u);
  }
  // Simulate a crash in the middle of writing record 7.
  {
    std::ofstream out(log, std::ios::app);
    out << R"({"trial_id":7,"config":{"patch")";
  }
  opt.budget = 15;
  const auto resumed = run_search(space, smooth, opt);
  EXPECT_EQ(ids_by_config(resumed), ids_by_config(full));
  EXPECT_EQ(read_trial_log(log).size(), 15u);
  fs::remove(log);
}

TEST(RunSearchTest, ParallelIsDeterministicAndResumable) {
  SearchSpace space;
  SearchOptions opt;
  opt.budget = 20;
  opt.parallel = 4;
  opt.tpe.seed = 5;
  std::atomic<int> calls{0};
  auto objective = [&](const DenoiserConfig& c) {
    ++calls;
    return smooth(c);
  };
  const auto a = run_search(space, objective, opt);
  const auto b = run_search(space, objective, opt);
  EXPECT_EQ(ids_by_config(a), ids_by_config(b));
  EXPECT_EQ(calls.load(), 40);

  const fs::path log = temp_log("parallel");
  opt.log_path = log;
  opt.budget = 6;  // stops mid-batch
  run_search(space, objective, opt);
  opt.budget = 20;
  EXPECT_EQ(ids_by_config(run_search(space, objective, opt)), ids_by_config(a));
  fs::remove(log);
}

TEST(RunSearchTest, CorruptLogIsAFormatError) {
  const fs::path log = temp_log("corrupt");
  {
    std::ofstream out(log);
    out << "garbage\n";
  }
  SearchOptions opt;
  opt.log_path = log;
  EXPECT_THROW(run_search(SearchSpace{}, smooth, opt), FormatError);
  {
    std::ofstream out(log);
    Trial t;
    t.trial_id = 2;
    t.status = TrialStatus::failed;
    out << to_json(t).dump() << "\n";
  }
  EXPECT_THROW(read_trial_log(log), FormatError);
  fs::remove(log);
}

TEST(RunSearchTest, FailedTrialsDoNotStopTheSearch) {
  SearchSpace space;
  SearchOptions opt;
  opt.budget = 12;
  opt.tpe.seed = 2;
  auto flaky = [](const DenoiserConfig& c) -> std::vector<FoldScore> {
    if (c.patch.kernel == 4) throw EvaluatorError("classifier crashed");
    return smooth(c);
  };
  auto trials = run_search(space, flaky, opt);
  EXPECT_EQ(trials.size(), 12u);
  for (const auto& t : trials) EXPECT_EQ(t.status == TrialStatus::failed, t.config.patch.kernel == 4);
}
