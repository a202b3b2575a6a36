// Acceptance suite: one PASS/FAIL line per criterion. With an argument, runs
// only that criterion; the exit status is non-zero when any run criterion fails.
// Every tolerance is a named constant next to the check that uses it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gradcheck.hpp"
#include "jrt/bench.hpp"
#include "jrt/feature_maps.hpp"
#include "jrt/gar.hpp"
#include "jrt/jrt_prompt.hpp"
#include "jrt/linear_attention.hpp"
#include "jrt/objective.hpp"
#include "jrt/prefix_attention.hpp"
#include "jrt/set_disjointness.hpp"
#include "jrt/sweep.hpp"
#include "jrt/toy_model.hpp"
#include "oracles.hpp"

namespace {

using namespace jrt;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// Elementwise relative error with the same near-zero floor as max_rel_error.
double rel(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-6); }

// ---- 1: parallel vs recurrent linear attention ------------------------------

Outcome parallel_recurrent() {
  constexpr double kTol = 1e-10;
  constexpr std::size_t kTrials = 100, kMaxN = 64, kMaxD = 8;
  std::mt19937_64 gen(1);
  double worst = 0.0;
  for (std::size_t t = 0; t < kTrials; ++t) {
    const std::size_t n = 1 + gen() % kMaxN, f = 1 + gen() % kMaxD, d = 1 + gen() % kMaxD;
    const auto phi = FeatureMap::taylor2(f);
    const auto q = oracle::random_matrix(n, f, gen, 0.5), k = oracle::random_matrix(n, f, gen, 0.5);
    const auto v = oracle::random_matrix(n, d, gen);
    worst = std::max(worst, max_rel_error(la_recurrent(q, k, v, phi), la_parallel(q, k, v, phi)));
  }
  return {worst <= kTol, "max rel err " + fmt(worst) + " over 100 instances (tol 1e-10)"};
}

// ---- 2: prefix attention three ways ------------------------------------------

Outcome pla_three_way() {
  constexpr double kTol = 1e-10;
  std::mt19937_64 gen(2);
  double worst = 0.0;
  bool m0_exact = true;
  for (std::size_t t = 0; t < 100; ++t) {
    const std::size_t n = 1 + gen() % 64, f = 1 + gen() % 8, d = 1 + gen() % 8;
    const std::size_t m = t < 10 ? 0 : gen() % (n + 1);
    const auto phi = FeatureMap::taylor2(f);
    PLAInputs<double> in{oracle::random_matrix(n, f, gen, 0.5), oracle::random_matrix(n, f, gen, 0.5),
                         oracle::random_matrix(n, d, gen),      oracle::random_matrix(m, f, gen, 0.5),
                         oracle::random_matrix(m, d, gen),      PLAInputs<double>::unmasked(m)};
    const auto y = pla_parallel(in, phi);
    worst = std::max(worst, max_rel_error(two_pass_prefill(in, phi).y, y));
    auto state = pla_init_state(in, phi);
    for (std::size_t i = m; i < n; ++i) {
      const auto yi = la_decode_step<double>(state, in.q_dec.row(i), in.k_dec.row(i), in.v_dec.row(i), phi);
      for (std::size_t c = 0; c < d; ++c) worst = std::max(worst, rel(yi[c], y(i, c)));
    }
    if (m == 0) {
      m0_exact = m0_exact && y.storage() == la_parallel(in.q_dec, in.k_dec, in.v_dec, phi).storage() &&
                 two_pass_prefill(in, phi).y.storage() ==
                     la_prefill(in.q_dec, in.k_dec, in.v_dec, phi).y.storage();
    }
  }
  return {worst <= kTol && m0_exact, "max rel err " + fmt(worst) + " (tol 1e-10); M=0 bitwise equal to causal: " +
                                         (m0_exact ? "yes" : "no")};
}

// ---- 3: gradients ------------------------------------------------------------

double toy_model_gradient_error(bool causal) {
  ToyConfig cfg;
  cfg.d_model = 8;
  cfg.feature_dim = 2;
  cfg.n_heads = 2;
  cfg.vocab = 16;
  cfg.causal = causal;
  cfg.precision = Precision::fp64;
  const ToyModel<double> model(cfg, 7);
  std::mt19937_64 gen(causal ? 30 : 31);
  std::vector<int> tokens(12);
  for (int& x : tokens) x = static_cast<int>(gen() % 16);
  const std::vector<std::size_t> rows{5, 11};
  const std::vector<int> labels{3, 9};

  Tape<double> tape;
  const auto g = model.build(tape, tokens, 6, rows, true);
  tape.backward(tape.softmax_cross_entropy(g.logits, labels));
  std::vector<Tensor<double>> values;
  for (const auto& p : model.params()) values.push_back(p.value);
  const std::function<double(std::vector<Tensor<double>>&)> loss = [&](std::vector<Tensor<double>>& ps) {
    auto named = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) named[i].value = ps[i];
    const ToyModel<double> m(cfg, named);
    Tape<double> t;
    return softmax_cross_entropy(t.value(m.build(t, tokens, 6, rows).logits), labels).loss;
  };
  const auto numeric = finite_diff_grad(loss, values, 1e-5);
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    worst = std::max(worst, oracle::grad_rel_error(tape.grad(g.params[i]), numeric[i]));
  return worst;
}

Outcome gradients() {
  constexpr double kTol = 1e-5;
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& c : gradcheck::primitive_cases(seed)) {
      const auto r = gradcheck::check(c, seed);
      ++cases;
      if (r.rel_error > worst) {
        worst = r.rel_error;
        worst_name = r.name;
      }
    }
  }
  const double causal = toy_model_gradient_error(true), full = toy_model_gradient_error(false);
  const bool pass = worst <= kTol && causal <= kTol && full <= kTol;
  return {pass, std::to_string(cases) + " primitive cases, worst " + fmt(worst) + " (" + worst_name +
                    "); d_model=8 toy model causal " + fmt(causal) + ", non-causal " + fmt(full) +
                    " (tol 1e-5)"};
}

// ---- 4: streaming set disjointness -------------------------------------------

std::vector<BitRow> doubled_rows(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b,
                                 std::size_t bits) {
  auto rows = encode_sd_rows(a, b, bits);
  const auto copy = rows;
  rows.insert(rows.end(), copy.begin(), copy.end());
  return rows;
}

Outcome streaming_sd() {
  std::size_t instances = 0, wrong = 0, over_space = 0;
  const auto sets = oracle::subsets(8, 4);
  for (const auto& a : sets)
    for (const auto& b : sets) {
      const auto r = streaming_sd_solve(doubled_rows(a, b, 3), 3);
      ++instances;
      wrong += r.intersection != oracle::intersection(a, b);
      over_space += r.max_state_rows > std::min(a.size(), b.size());
    }
  std::mt19937_64 gen(4);
  for (int t = 0; t < 1000; ++t) {
    std::set<std::uint64_t> sa, sb;
    const std::size_t la = gen() % 64, lb = gen() % 64;
    while (sa.size() < la) sa.insert(gen() % 200);
    while (sb.size() < lb) sb.insert(gen() % 200);
    std::vector<std::uint64_t> a(sa.begin(), sa.end()), b(sb.begin(), sb.end());
    std::shuffle(a.begin(), a.end(), gen);
    std::shuffle(b.begin(), b.end(), gen);
    const auto r = streaming_sd_solve(doubled_rows(a, b, 8), 8);
    ++instances;
    wrong += r.intersection != oracle::intersection(a, b);
    over_space += r.max_state_rows > std::min(la, lb);
  }
  return {wrong == 0 && over_space == 0, std::to_string(instances) + " instances, " + std::to_string(wrong) +
                                             " wrong, " + std::to_string(over_space) + " over min(|A|,|B|) rows"};
}

// ---- 5: linear attention + MLP construction ----------------------------------

struct SDDraw {
  std::vector<std::size_t> a, b;
};

SDDraw draw_sets(std::size_t universe, std::size_t la, std::size_t lb, std::mt19937_64& gen) {
  std::vector<std::size_t> pool(universe);
  for (std::size_t i = 0; i < universe; ++i) pool[i] = i;
  std::shuffle(pool.begin(), pool.end(), gen);
  SDDraw d{{pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(la)}, {}};
  // B mixes fresh elements with a random number of elements of A.
  const std::size_t shared = gen() % (std::min(la, lb) + 1);
  d.b.assign(d.a.begin(), d.a.begin() + static_cast<std::ptrdiff_t>(shared));
  d.b.insert(d.b.end(), pool.begin() + static_cast<std::ptrdiff_t>(la),
             pool.begin() + static_cast<std::ptrdiff_t>(la + lb - shared));
  std::shuffle(d.b.begin(), d.b.end(), gen);
  return d;
}

bool members_agree(const SDDraw& d, const std::vector<bool>& member) {
  const std::set<std::size_t> a(d.a.begin(), d.a.end());
  for (std::size_t i = 0; i < d.b.size(); ++i)
    if (member[i] != (a.count(d.b[i]) == 1)) return false;
  return true;
}

Outcome linatt_construction() {
  constexpr std::size_t kUniverse = 256, kTrials = 100, kNeeded = 95;
  std::mt19937_64 gen(5);
  std::size_t exact_ok = 0;
  for (std::size_t t = 0; t < kTrials; ++t) {
    const auto d = draw_sets(kUniverse, 1 + gen() % 16, 1 + gen() % 32, gen);
    const auto r = linatt_sd_solve(d.a, d.b, FeatureMap::ip_data_dependent(d.a, kUniverse), 2);
    const std::set<std::size_t> a(d.a.begin(), d.a.end());
    // Roster elements are orthogonal to everything; only B rows are queried.
    bool ok = true;
    for (std::size_t i = 0; i < d.b.size(); ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        const double z = r.z(i, c);
        ok = ok && (a.count(d.b[i]) ? (z >= 1.0 / 3.0 && z <= 1.0) : z == 0.0);
      }
    exact_ok += ok;
  }
  std::size_t random_ok = 0;
  constexpr std::size_t kA = 8, kB = 8;
  const std::size_t f = randomized_feature_dim(kA, kUniverse);
  for (std::uint64_t seed = 0; seed < kTrials; ++seed) {
    const auto d = draw_sets(kUniverse, kA, kB, gen);
    const auto r = linatt_sd_solve(d.a, d.b, FeatureMap::ip_randomized(kUniverse, f, seed));
    random_ok += members_agree(d, r.member);
  }
  return {exact_ok == kTrials && random_ok >= kNeeded,
          "data-dependent " + std::to_string(exact_ok) + "/100 exact; randomized f=" + std::to_string(f) + " " +
              std::to_string(random_ok) + "/100 agree (need 95)"};
}

// ---- 6: GAR and SD reductions -------------------------------------------------

Outcome reductions() {
  std::mt19937_64 gen(6);
  const SDSolver sd = [](std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    return oracle::intersection({a.begin(), a.end()}, {b.begin(), b.end()});
  };
  std::size_t gar_ok = 0;
  for (int t = 0; t < 200; ++t) {
    GARInstance g;
    g.c = 1 + gen() % 200;
    std::set<std::uint64_t> keys;
    const std::size_t n = 1 + gen() % 30;
    while (keys.size() < n) keys.insert(gen() % 128);
    for (auto k : keys) {
      g.keys.push_back(k);
      g.values.push_back(1 + gen() % g.c);
    }
    for (std::size_t i = 0, nq = 1 + gen() % 30; i < nq; ++i) g.queries.push_back(gen() % 128);
    const auto r = gar_solve_via_sd(g, sd);
    gar_ok += r.answers == oracle::lookup(g.keys, g.values, g.queries) && r.sd_calls == g.value_bits();
  }
  std::size_t sd_total = 0, sd_ok = 0;
  const auto sets = oracle::subsets(8, 4);
  for (const auto& a : sets)
    for (const auto& b : sets) {
      const auto r = sd_solve_via_gar(a, b, gar_lookup);
      ++sd_total;
      sd_ok += r.disjoint == oracle::intersection(a, b).empty() && r.gar_calls == 1;
    }
  return {gar_ok == 200 && sd_ok == sd_total, "GAR via SD " + std::to_string(gar_ok) +
                                                  "/200 with d calls; SD via GAR " + std::to_string(sd_ok) +
                                                  "/" + std::to_string(sd_total)};
}

// ---- 7: FLOP model -------------------------------------------------------------

Outcome flops() {
  std::size_t checked = 0, wrong = 0;
  for (std::uint64_t B : {1, 2, 8})
    for (std::uint64_t N : {1, 17, 2048})
      for (std::uint64_t H : {1, 4, 16})
        for (std::uint64_t d : {1, 16, 64})
          for (std::uint64_t D : {1, 21, 273})
            for (std::uint64_t M : {std::uint64_t{0}, std::uint64_t{1}, N / 2, N}) {
              const FlopParams p{B, N, M, H, d, D};
              const FlopCounts causal{2 * B * N * H * D, 4 * B * N * H * d * D};
              const FlopCounts prefix{B * M * H * D, 3 * B * M * H * d * D};
              ++checked;
              wrong += !(flops_causal_la(p) == causal) + !(flops_pla(p) == prefix);
            }
  return {wrong == 0, std::to_string(checked) + " parameter tuples, " + std::to_string(wrong) + " mismatches"};
}

// ---- 8: objective ----------------------------------------------------------------

Outcome objective() {
  constexpr double kFractionTol = 0.01, kArithTol = 1e-15;
  const LossWeights w;
  bool defaults = w.ntp_scale == 1.0 && w.mlm_scale == 0.25 && w.mask_prob == 0.15;
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double ntp = u(gen), mlm = u(gen);
    worst = std::max(worst, rel(combined_loss(ntp, mlm, w), (1.0 * ntp + 0.25 * mlm) / 1.25));
  }
  const std::vector<int> tokens(100000, 1);
  const auto masked = mlm_mask(tokens, tokens.size(), w.mask_prob, 0, 8);
  const double fraction = static_cast<double>(masked.positions.size()) / static_cast<double>(tokens.size());
  const bool pass = defaults && worst <= kArithTol && std::abs(fraction - 0.15) <= kFractionTol;
  return {pass, "defaults (1, 0.25, 0.15): " + std::string(defaults ? "yes" : "no") + "; arithmetic rel err " +
                    fmt(worst) + "; mask fraction " + fmt(fraction) + " (0.15 +- 0.01)"};
}

// ---- 9: data-order sweep ------------------------------------------------------------

Outcome order_sweep() {
  constexpr double kBudgetSeconds = 3600.0;
  const auto start = std::chrono::steady_clock::now();
  const SweepPlan plan = sweep_plan(Profile::desk);
  const auto runs = run_sweep(plan, [](const RunRecord& r, std::size_t done, std::size_t total) {
    std::cerr << "[" << done << "/" << total << "] d=" << r.d_model << " f=" << r.feature_dim
              << (r.causal ? " causal" : " non-causal") << " lr=" << r.lr << " seed=" << r.seed
              << " acc=" << r.acc << " a<b=" << r.acc_a_smaller << " b<a=" << r.acc_b_smaller << '\n';
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const char* out_path = std::getenv("JRT_SWEEP_OUT");
  std::ofstream out(out_path ? out_path : "desk_runs.csv");
  write_runs_csv(out, runs);
  const auto points = reduce_max(runs);
  for (const auto& p : points) {
    std::cerr << "point d=" << p.d_model << " f=" << p.feature_dim << (p.causal ? " causal" : " non-causal")
              << " bytes=" << p.state_bytes << " a<b=" << p.acc_a_smaller << " b<a=" << p.acc_b_smaller
              << " gap=" << p.order_gap() << '\n';
  }
  const auto c = check_order_effect(points);
  const bool in_budget = seconds <= kBudgetSeconds;
  return {c.gap_ordering && c.small_state_ordering && in_budget,
          "(a) mean gap causal " + fmt(c.causal_mean_gap) + " vs non-causal " + fmt(c.noncausal_mean_gap) +
              (c.gap_ordering ? " ok" : " NOT greater") + "; (b) at " + std::to_string(c.smallest_state_bytes) +
              " bytes |A|>|B| acc non-causal " + fmt(c.noncausal_b_smaller) + " vs causal " +
              fmt(c.causal_b_smaller) + (c.small_state_ordering ? " ok" : " NOT >=") + "; " + fmt(seconds) +
              " s (budget 3600)"};
}

// ---- 10: prompt transforms ---------------------------------------------------------

Outcome prompts() {
  std::mt19937_64 gen(10);
  std::size_t repeat_bad = 0, jrt_bad = 0;
  for (int t = 0; t < 500; ++t) {
    std::vector<int> u(gen() % 40);
    for (int& x : u) x = static_cast<int>(gen() % 1000);
    const std::size_t p = 1 + gen() % 8;
    const auto out = jrp_repeat(u, p);
    bool ok = out.size() == p * u.size();
    for (std::size_t i = 0; ok && i < out.size(); ++i) ok = out[i] == u[i % u.size()];
    repeat_bad += !ok;

    PromptPair pp;
    pp.context.resize(gen() % 60);
    pp.question.resize(1 + gen() % 6);
    for (int& x : pp.context) x = static_cast<int>(gen() % 1000);
    for (int& x : pp.question) x = static_cast<int>(gen() % 1000);
    pp.budget = 2 * pp.question.size() + 2 + gen() % 120;
    const auto j = jrt_transform(pp);
    const std::size_t keep = std::min(pp.context.size(), (pp.budget - 2 * pp.question.size()) / 2);
    std::vector<int> half(pp.context.begin(), pp.context.begin() + static_cast<std::ptrdiff_t>(keep));
    half.insert(half.end(), pp.question.begin(), pp.question.end());
    auto want = half;
    want.insert(want.end(), half.begin(), half.end());
    jrt_bad += !(j == want && j.size() <= pp.budget);
  }
  return {repeat_bad == 0 && jrt_bad == 0, "500 fuzzed cases each: jrp_repeat " + std::to_string(repeat_bad) +
                                               " bad, jrt_transform " + std::to_string(jrt_bad) + " bad"};
}

// ---- 11: asymptotic scaling -----------------------------------------------------------

Outcome scaling() {
  constexpr double kRecurrentMax = 1.5, kNaiveMin = 1.7;
#ifdef _OPENMP
  omp_set_num_threads(1);
#endif
  BenchConfig cfg;
  cfg.impls = {BenchImpl::la_recurrent, BenchImpl::naive_softmax_oracle};
  cfg.lengths = {1024, 2048, 4096};
  const auto records = bench_prefill(cfg);
  const double rec = scaling_exponent(records, "la_recurrent");
  const double naive = scaling_exponent(records, "naive_softmax_oracle");
  return {rec < kRecurrentMax && naive > kNaiveMin,
          "exponent la_recurrent " + fmt(rec) + " (< 1.5), naive " + fmt(naive) + " (> 1.7)"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "parallel-recurrent equivalence", parallel_recurrent},
      {2, "prefix attention three-way equivalence", pla_three_way},
      {3, "gradients vs finite differences", gradients},
      {4, "streaming set disjointness", streaming_sd},
      {5, "linear attention + MLP construction", linatt_construction},
      {6, "GAR and SD reductions", reductions},
      {7, "FLOP model", flops},
      {8, "combined objective", objective},
      {9, "data-order sweep", order_sweep},
      {10, "prompt transforms", prompts},
      {11, "prefill scaling exponents", scaling},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc > 1) {
    only = std::atoi(argv[1]);
    if (only < 1 || only > static_cast<int>(criteria().size())) {
      std::cerr << "usage: jrt_acceptance [criterion 1-" << criteria().size() << "]\n";
      return 2;
    }
  }
  bool all_pass = true;
  for (const auto& c : criteria()) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ["
              << fmt(s) << " s]" << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
