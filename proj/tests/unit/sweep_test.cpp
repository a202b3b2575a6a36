#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "jrt/checkpoint.hpp"
#include "jrt/sweep.hpp"

namespace jrt {
namespace {

RunRecord rec(std::size_t d, bool causal, double lr, double a_small, double b_small,
              bool diverged = false) {
  RunRecord r;
  r.d_model = d;
  r.feature_dim = 4;
  r.causal = causal;
  r.lr = lr;
  r.state_bytes = d * 100;
  r.acc_a_smaller = a_small;
  r.acc_b_smaller = b_small;
  r.acc = 0.5 * (a_small + b_small);
  r.diverged = diverged;
  return r;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TEST(SweepPlan, GridSizes) {
  const auto desk = sweep_plan(Profile::desk);
  EXPECT_EQ(desk.d_models, (std::vector<std::size_t>{16, 24, 32}));
  EXPECT_EQ(desk.feature_dims, (std::vector<std::size_t>{4, 8}));
  EXPECT_EQ(desk.lrs.size(), 3u);
  EXPECT_EQ(desk.seeds.size(), 2u);
  EXPECT_EQ(desk.run_count(), 72u);
  const auto paper = sweep_plan(Profile::paper);
  EXPECT_EQ(paper.lrs, (std::vector<double>{1e-4, 5e-4, 8e-4}));
  EXPECT_EQ(paper.epochs, 48u);
  EXPECT_EQ(paper.run_count(), 240u);
}

TEST(ReduceMax, TakesMaximumOverNonDivergedRuns) {
  const std::vector<RunRecord> runs{rec(16, true, 1e-4, 0.2, 0.1), rec(16, true, 5e-4, 0.1, 0.3),
                                    rec(16, true, 8e-4, 0.9, 0.9, true), rec(16, false, 1e-4, 0.4, 0.4)};
  const auto points = reduce_max(runs);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_TRUE(points[0].causal);
  EXPECT_EQ(points[0].runs, 2u);
  EXPECT_EQ(points[0].acc_a_smaller, 0.2);
  EXPECT_EQ(points[0].acc_b_smaller, 0.3);
  EXPECT_DOUBLE_EQ(points[0].order_gap(), -0.1);
  EXPECT_EQ(points[1].runs, 1u);
}

TEST(OrderCheck, ComparesMeanGapsAndSmallestState) {
  const auto points = reduce_max({rec(16, true, 0, 0.8, 0.2), rec(32, true, 0, 0.9, 0.5),
                                  rec(16, false, 0, 0.6, 0.6), rec(32, false, 0, 0.9, 0.8)});
  const auto c = check_order_effect(points);
  EXPECT_DOUBLE_EQ(c.causal_mean_gap, 0.5);
  EXPECT_DOUBLE_EQ(c.noncausal_mean_gap, 0.05);
  EXPECT_TRUE(c.gap_ordering);
  EXPECT_EQ(c.smallest_state_bytes, 1600u);
  EXPECT_EQ(c.causal_b_smaller, 0.2);
  EXPECT_EQ(c.noncausal_b_smaller, 0.6);
  EXPECT_TRUE(c.small_state_ordering);

  const auto flipped = check_order_effect(reduce_max({rec(16, true, 0, 0.5, 0.5), rec(16, false, 0, 0.7, 0.1)}));
  EXPECT_FALSE(flipped.gap_ordering);
  EXPECT_FALSE(flipped.small_state_ordering);
  EXPECT_THROW(check_order_effect(reduce_max({rec(16, true, 0, 0.5, 0.5)})), std::invalid_argument);
}

TEST(RunsCsv, RoundTripIsExact) {
  std::vector<RunRecord> runs{rec(16, true, 5e-4, 1.0 / 3.0, 0.1), rec(24, false, 8e-4, 0.25, 2.0 / 7.0, true)};
  runs[0].seconds = 12.345678901234;
  runs[1].seed = 1;
  std::stringstream ss;
  write_runs_csv(ss, runs);
  const auto back = read_runs_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].d_model, runs[i].d_model);
    EXPECT_EQ(back[i].causal, runs[i].causal);
    EXPECT_EQ(back[i].lr, runs[i].lr);
    EXPECT_EQ(back[i].seed, runs[i].seed);
    EXPECT_EQ(back[i].acc_a_smaller, runs[i].acc_a_smaller);
    EXPECT_EQ(back[i].acc_b_smaller, runs[i].acc_b_smaller);
    EXPECT_EQ(back[i].diverged, runs[i].diverged);
    EXPECT_EQ(back[i].seconds, runs[i].seconds);
  }
}

TEST(RunsCsv, MalformedInputThrows) {
  std::stringstream empty;
  EXPECT_THROW(read_runs_csv(empty), std::runtime_error);
  std::stringstream ss;
  write_runs_csv(ss, {});
  std::stringstream bad(ss.str() + "16,4,1,0.1\n");
  EXPECT_THROW(read_runs_csv(bad), std::runtime_error);
  std::stringstream flag(ss.str() + "16,4,7,0.1,0,100,0,0,0,0,1\n");
  EXPECT_THROW(read_runs_csv(flag), std::runtime_error);
}

TEST(Fig2Tables, OneRowPerPointInEachTable) {
  const auto points = reduce_max({rec(16, true, 0, 0.8, 0.2), rec(32, true, 0, 0.9, 0.5),
                                  rec(16, false, 0, 0.6, 0.6), rec(32, false, 0, 0.9, 0.8)});
  const auto t = fig2_tables(points);
  EXPECT_EQ(lines(t.b_smaller), 5u);
  EXPECT_EQ(lines(t.a_smaller), 5u);
  EXPECT_EQ(lines(t.gap), 5u);
  EXPECT_EQ(t.gap.substr(0, t.gap.find('\n')), "state_bytes,causal,d_model,feature_dim,order_gap");
  EXPECT_NE(t.gap.find("1600,1,16,4,0.6"), std::string::npos);
}

TEST(RunSweep, TinyPlanProducesOneRecordPerCellAndCheckpoints) {
  SweepPlan plan;
  plan.profile = Profile::desk;
  plan.d_models = {8};
  plan.feature_dims = {2};
  plan.lrs = {5e-4};
  plan.seeds = {0};
  plan.train_scale = 0.0005;
  plan.eval_scale = 0.01;
  plan.epochs = 1;
  plan.batch_size = 8;
  const auto dir = std::filesystem::temp_directory_path() / "jrt_sweep_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  plan.checkpoint_dir = dir.string();
  std::size_t calls = 0;
  const auto runs = run_sweep(plan, [&](const RunRecord&, std::size_t, std::size_t total) {
    ++calls;
    EXPECT_EQ(total, 2u);
  });
  ASSERT_EQ(runs.size(), plan.run_count());
  EXPECT_EQ(calls, 2u);
  EXPECT_TRUE(runs[0].causal);
  EXPECT_FALSE(runs[1].causal);
  for (const auto& r : runs) {
    const auto ckpt = load_checkpoint(dir / checkpoint_name(r));
    EXPECT_EQ(config_from_json(ckpt.metadata_json).causal, r.causal);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace jrt
