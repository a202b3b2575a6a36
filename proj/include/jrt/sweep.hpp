#pragma once

// Data-order sweep: trains causal and non-causal toy models over a grid of
// widths and feature dimensions, keeps the best score per grid point over
// learning rates and seeds, and compares the two presentation orders.

#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "jrt/set_disjointness.hpp"
#include "jrt/toy_model.hpp"

namespace jrt {

struct SweepPlan {
  Profile profile = Profile::desk;
  std::vector<std::size_t> d_models;
  std::vector<std::size_t> feature_dims;
  std::vector<double> lrs;
  std::vector<std::uint64_t> seeds;
  std::vector<bool> causal_modes{true, false};
  double train_scale = 1.0;
  double eval_scale = 1.0;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double final_lr_fraction = 0.1;  // see TrainOptions
  std::uint64_t data_seed = 0;
  std::string checkpoint_dir;  // when set, every trained cell is saved there

  std::size_t run_count() const;
};

// Desk: widths {16, 24, 32}, features {4, 8}, 1% of the mixture for 28
// epochs at constant lr, sized to finish 72 runs within an hour on one core.
// Paper: widths {36, 48, 64, 96, 128}, features {4, 8, 16, 24}, 48 epochs on
// the full mixture with cosine decay. Both sweep three learning rates and two
// seeds.
SweepPlan sweep_plan(Profile profile);

struct RunRecord {
  std::size_t d_model = 0, feature_dim = 0;
  bool causal = true;
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::size_t state_bytes = 0;
  double acc = 0.0, acc_a_smaller = 0.0, acc_b_smaller = 0.0;
  bool diverged = false;
  double seconds = 0.0;
};

using RunCallback = std::function<void(const RunRecord&, std::size_t done, std::size_t total)>;

// Every (width, features, causal, lr, seed) cell, in plan order. Cells are
// independent and run in parallel when OpenMP has more than one thread.
std::vector<RunRecord> run_sweep(const SweepPlan& plan, const RunCallback& on_run = nullptr);

// One trained cell; the model is initialized from opts.seed. A non-empty
// `checkpoint_path` receives the trained parameters.
RunRecord run_cell(const ToyConfig& cfg, const TrainOptions& opts,
                   const std::vector<SDInstance>& train_set,
                   const std::vector<SDInstance>& eval_set,
                   const std::string& checkpoint_path = "");

std::string checkpoint_name(const RunRecord& run);

struct SweepPoint {
  std::size_t d_model = 0, feature_dim = 0;
  bool causal = true;
  std::size_t state_bytes = 0;
  // Each value is the maximum over the point's non-diverged runs.
  double acc = 0.0, acc_a_smaller = 0.0, acc_b_smaller = 0.0;
  std::size_t runs = 0;

  // acc(|A| < |B|) - acc(|B| < |A|).
  double order_gap() const { return acc_a_smaller - acc_b_smaller; }
};

// Groups runs by (width, features, causal) in first-seen order.
std::vector<SweepPoint> reduce_max(const std::vector<RunRecord>& runs);

struct OrderCheck {
  double causal_mean_gap = 0.0;
  double noncausal_mean_gap = 0.0;
  std::size_t smallest_state_bytes = 0;
  double causal_b_smaller = 0.0;     // at the smallest state size
  double noncausal_b_smaller = 0.0;  // at the smallest state size
  bool gap_ordering = false;         // causal mean gap > non-causal mean gap
  bool small_state_ordering = false; // non-causal >= causal on |A| > |B|
};

// Throws std::invalid_argument unless both causal modes are present.
OrderCheck check_order_effect(const std::vector<SweepPoint>& points);

void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs);
// Throws std::runtime_error naming the line on a malformed row or header.
std::vector<RunRecord> read_runs_csv(std::istream& in);

// Three plot tables, one row per point: |A| > |B| accuracy, |B| > |A|
// accuracy, and the order gap, each against state bytes.
struct Fig2Tables {
  std::string b_smaller, a_smaller, gap;
};
Fig2Tables fig2_tables(const std::vector<SweepPoint>& points);

}  // namespace jrt
