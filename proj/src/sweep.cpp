#include "jrt/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <exception>
#include <chrono>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "jrt/checkpoint.hpp"

namespace jrt {
namespace {

constexpr const char* kRunsHeader =
    "d_model,feature_dim,causal,lr,seed,state_bytes,acc,acc_a_smaller,acc_b_smaller,diverged,"
    "seconds";

// Shortest text that parses back to the same double.
std::string exact(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

template <typename N>
N parse_field(const std::string& field, std::size_t line) {
  N value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw std::runtime_error("runs csv line " + std::to_string(line) + ": bad field '" + field +
                             "'");
  }
  return value;
}

std::vector<std::string> split(const std::string& row) {
  std::vector<std::string> fields;
  std::stringstream ss(row);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!row.empty() && row.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::size_t SweepPlan::run_count() const {
  return d_models.size() * feature_dims.size() * causal_modes.size() * lrs.size() * seeds.size();
}

SweepPlan sweep_plan(Profile profile) {
  SweepPlan plan;
  plan.profile = profile;
  plan.lrs = {1e-4, 5e-4, 8e-4};
  plan.seeds = {0, 1};
  if (profile == Profile::desk) {
    plan.d_models = {16, 24, 32};
    plan.feature_dims = {4, 8};
    plan.train_scale = 0.01;
    plan.eval_scale = 0.05;
    plan.epochs = 28;
    plan.batch_size = 16;
    plan.final_lr_fraction = 1.0;
  } else {
    plan.d_models = {36, 48, 64, 96, 128};
    plan.feature_dims = {4, 8, 16, 24};
    plan.train_scale = 1.0;
    plan.eval_scale = 1.0;
    plan.epochs = 48;
    plan.batch_size = 64;
  }
  return plan;
}

RunRecord run_cell(const ToyConfig& cfg, const TrainOptions& opts,
                   const std::vector<SDInstance>& train_set,
                   const std::vector<SDInstance>& eval_set,
                   const std::string& checkpoint_path) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.d_model = cfg.d_model;
  rec.feature_dim = cfg.feature_dim;
  rec.causal = cfg.causal;
  rec.lr = opts.lr;
  rec.seed = opts.seed;
  rec.state_bytes = state_size_bytes(cfg);
  ToyModel<float> model(cfg, opts.seed);
  const TrainResult result = train(model, train_set, opts);
  rec.diverged = result.diverged;
  if (!rec.diverged) {
    try {
      const SlicedAccuracy acc = eval_sliced(model, eval_set);
      rec.acc = acc.overall;
      rec.acc_a_smaller = acc.a_smaller;
      rec.acc_b_smaller = acc.b_smaller;
    } catch (const NumericError&) {
      rec.diverged = true;
    }
  }
  if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, {config_json(cfg), model.params()});
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::string checkpoint_name(const RunRecord& run) {
  return "d" + std::to_string(run.d_model) + "_f" + std::to_string(run.feature_dim) +
         (run.causal ? "_causal" : "_noncausal") + "_lr" + exact(run.lr) + "_s" +
         std::to_string(run.seed) + ".ckpt";
}

std::vector<RunRecord> run_sweep(const SweepPlan& plan, const RunCallback& on_run) {
  const int vocab = mixture_spec(Split::train, plan.train_scale, plan.profile).vocab;
  const auto train_set = gen_mixture(Split::train, plan.train_scale, plan.profile, plan.data_seed);
  const auto eval_set = gen_mixture(Split::eval, plan.eval_scale, plan.profile, plan.data_seed);

  struct Cell {
    ToyConfig cfg;
    TrainOptions opts;
  };
  std::vector<Cell> cells;
  for (std::size_t d : plan.d_models)
    for (std::size_t f : plan.feature_dims)
      for (bool causal : plan.causal_modes)
        for (double lr : plan.lrs)
          for (std::uint64_t seed : plan.seeds) {
            Cell c;
            c.cfg.d_model = d;
            c.cfg.feature_dim = f;
            c.cfg.causal = causal;
            c.cfg.vocab = vocab;
            c.opts.lr = lr;
            c.opts.seed = seed;
            c.opts.epochs = plan.epochs;
            c.opts.batch_size = plan.batch_size;
            c.opts.final_lr_fraction = plan.final_lr_fraction;
            cells.push_back(c);
          }

  std::vector<RunRecord> runs(cells.size());
  std::size_t done = 0;
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::string path;
    if (!plan.checkpoint_dir.empty()) {
      RunRecord key;
      key.d_model = cells[i].cfg.d_model;
      key.feature_dim = cells[i].cfg.feature_dim;
      key.causal = cells[i].cfg.causal;
      key.lr = cells[i].opts.lr;
      key.seed = cells[i].opts.seed;
      path = (std::filesystem::path(plan.checkpoint_dir) / checkpoint_name(key)).string();
    }
    // Exceptions may not cross the parallel region; the first one is rethrown after it.
    try {
      runs[i] = run_cell(cells[i].cfg, cells[i].opts, train_set, eval_set, path);
#pragma omp critical(jrt_sweep_progress)
      {
        ++done;
        if (on_run) on_run(runs[i], done, cells.size());
      }
    } catch (...) {
#pragma omp critical(jrt_sweep_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return runs;
}

std::vector<SweepPoint> reduce_max(const std::vector<RunRecord>& runs) {
  std::vector<SweepPoint> points;
  std::map<std::tuple<std::size_t, std::size_t, bool>, std::size_t> index;
  for (const RunRecord& r : runs) {
    const auto key = std::make_tuple(r.d_model, r.feature_dim, r.causal);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, points.size()).first;
      SweepPoint p;
      p.d_model = r.d_model;
      p.feature_dim = r.feature_dim;
      p.causal = r.causal;
      p.state_bytes = r.state_bytes;
      points.push_back(p);
    }
    if (r.diverged) continue;
    SweepPoint& p = points[it->second];
    p.acc = std::max(p.acc, r.acc);
    p.acc_a_smaller = std::max(p.acc_a_smaller, r.acc_a_smaller);
    p.acc_b_smaller = std::max(p.acc_b_smaller, r.acc_b_smaller);
    ++p.runs;
  }
  return points;
}

OrderCheck check_order_effect(const std::vector<SweepPoint>& points) {
  OrderCheck check;
  double causal_sum = 0.0, noncausal_sum = 0.0;
  std::size_t causal_n = 0, noncausal_n = 0;
  for (const SweepPoint& p : points) {
    if (p.causal) {
      causal_sum += p.order_gap();
      ++causal_n;
    } else {
      noncausal_sum += p.order_gap();
      ++noncausal_n;
    }
  }
  if (causal_n == 0 || noncausal_n == 0) {
    throw std::invalid_argument("order check: need both causal and non-causal points");
  }
  check.causal_mean_gap = causal_sum / static_cast<double>(causal_n);
  check.noncausal_mean_gap = noncausal_sum / static_cast<double>(noncausal_n);
  check.gap_ordering = check.causal_mean_gap > check.noncausal_mean_gap;

  const auto smallest = std::min_element(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return a.state_bytes < b.state_bytes;
  });
  check.smallest_state_bytes = smallest->state_bytes;
  bool have_causal = false, have_noncausal = false;
  for (const SweepPoint& p : points) {
    if (p.state_bytes != check.smallest_state_bytes) continue;
    if (p.causal) {
      check.causal_b_smaller = std::max(check.causal_b_smaller, p.acc_b_smaller);
      have_causal = true;
    } else {
      check.noncausal_b_smaller = std::max(check.noncausal_b_smaller, p.acc_b_smaller);
      have_noncausal = true;
    }
  }
  check.small_state_ordering =
      have_causal && have_noncausal && check.noncausal_b_smaller >= check.causal_b_smaller;
  return check;
}

void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
  out << kRunsHeader << '\n';
  for (const RunRecord& r : runs) {
    out << r.d_model << ',' << r.feature_dim << ',' << (r.causal ? 1 : 0) << ',' << exact(r.lr)
        << ',' << r.seed << ',' << r.state_bytes << ',' << exact(r.acc) << ','
        << exact(r.acc_a_smaller) << ',' << exact(r.acc_b_smaller) << ','
        << (r.diverged ? 1 : 0) << ',' << exact(r.seconds) << '\n';
  }
}

std::vector<RunRecord> read_runs_csv(std::istream& in) {
  std::string row;
  if (!std::getline(in, row) || row != kRunsHeader) {
    throw std::runtime_error("runs csv: missing or unexpected header");
  }
  std::vector<RunRecord> runs;
  std::size_t line = 1;
  while (std::getline(in, row)) {
    ++line;
    if (row.empty()) continue;
    const auto f = split(row);
    if (f.size() != 11) {
      throw std::runtime_error("runs csv line " + std::to_string(line) + ": expected 11 fields, got " +
                               std::to_string(f.size()));
    }
    auto flag = [&](const std::string& s) {
      const int v = parse_field<int>(s, line);
      if (v != 0 && v != 1) throw std::runtime_error("runs csv line " + std::to_string(line) + ": bad flag");
      return v == 1;
    };
    RunRecord r;
    r.d_model = parse_field<std::size_t>(f[0], line);
    r.feature_dim = parse_field<std::size_t>(f[1], line);
    r.causal = flag(f[2]);
    r.lr = parse_field<double>(f[3], line);
    r.seed = parse_field<std::uint64_t>(f[4], line);
    r.state_bytes = parse_field<std::size_t>(f[5], line);
    r.acc = parse_field<double>(f[6], line);
    r.acc_a_smaller = parse_field<double>(f[7], line);
    r.acc_b_smaller = parse_field<double>(f[8], line);
    r.diverged = flag(f[9]);
    r.seconds = parse_field<double>(f[10], line);
    runs.push_back(r);
  }
  return runs;
}

Fig2Tables fig2_tables(const std::vector<SweepPoint>& points) {
  std::vector<const SweepPoint*> order;
  for (const auto& p : points) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](const SweepPoint* a, const SweepPoint* b) {
    return std::tie(a->causal, a->state_bytes) < std::tie(b->causal, b->state_bytes);
  });
  std::ostringstream b_smaller, a_smaller, gap;
  const char* head = "state_bytes,causal,d_model,feature_dim,";
  b_smaller << head << "acc_b_smaller\n";
  a_smaller << head << "acc_a_smaller\n";
  gap << head << "order_gap\n";
  for (const SweepPoint* p : order) {
    std::ostringstream key;
    key << p->state_bytes << ',' << (p->causal ? 1 : 0) << ',' << p->d_model << ','
        << p->feature_dim << ',';
    b_smaller << key.str() << exact(p->acc_b_smaller) << '\n';
    a_smaller << key.str() << exact(p->acc_a_smaller) << '\n';
    gap << key.str() << exact(p->order_gap()) << '\n';
  }
  return {b_smaller.str(), a_smaller.str(), gap.str()};
}

}  // namespace jrt
