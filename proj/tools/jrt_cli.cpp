// Command-line front end. Exit codes: 0 success, 1 validation or I/O error,
// 2 failed equivalence check.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "jrt/bench.hpp"
#include "jrt/dataset_io.hpp"
#include "jrt/jrt_prompt.hpp"
#include "jrt/linear_attention.hpp"
#include "jrt/prefix_attention.hpp"
#include "jrt/set_disjointness.hpp"
#include "jrt/sweep.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kCheckFailed = 2;

std::vector<int> parse_ids(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad token id: " + item);
    ids.push_back(v);
  }
  return ids;
}

std::string join(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

jrt::Tensor<double> random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 0.5);
  jrt::Tensor<double> t({rows, cols});
  for (double& x : t.data()) x = normal(gen);
  return t;
}

// Parallel vs recurrent linear attention and the three prefix-attention
// routes on random instances; returns the worst relative error seen.
double equivalence_error(std::size_t trials, std::size_t max_n, std::size_t max_d,
                         std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, max_n)(gen);
    const std::size_t f = std::uniform_int_distribution<std::size_t>(1, max_d)(gen);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, max_d)(gen);
    const std::size_t m = std::uniform_int_distribution<std::size_t>(0, n)(gen);
    const auto phi = jrt::FeatureMap::taylor2(f);
    const auto q = random_tensor(n, f, gen), k = random_tensor(n, f, gen);
    const auto v = random_tensor(n, d, gen);
    const auto y_par = jrt::la_parallel(q, k, v, phi);
    worst = std::max(worst, jrt::max_rel_error(jrt::la_recurrent(q, k, v, phi), y_par));

    jrt::PLAInputs<double> in{q, k, v, random_tensor(m, f, gen), random_tensor(m, d, gen),
                              jrt::PLAInputs<double>::unmasked(m)};
    const auto y_pla = jrt::pla_parallel(in, phi);
    worst = std::max(worst, jrt::max_rel_error(jrt::two_pass_prefill(in, phi).y, y_pla));
    auto state = jrt::pla_init_state(in, phi);
    for (std::size_t i = m; i < n; ++i) {
      const auto yi = jrt::la_decode_step<double>(state, q.row(i), k.row(i), v.row(i), phi);
      for (std::size_t c = 0; c < d; ++c) {
        const double want = y_pla(i, c);
        worst = std::max(worst, std::abs(yi[c] - want) / std::max(std::abs(want), 1e-6));
      }
    }
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear-attention recall toolkit"};
  app.require_subcommand(1);

  // sdgen
  auto* sdgen = app.add_subcommand("sdgen", "Generate a set-disjointness dataset as JSONL");
  std::string split = "train", profile_name, sd_out;
  double scale = 0.01;
  int vocab = 256;
  std::uint64_t sd_seed = 0;
  sdgen->add_option("--split", split, "train or eval")->check(CLI::IsMember({"train", "eval"}));
  sdgen->add_option("--scale", scale, "Fraction of the per-tuple counts, in (0, 1]");
  sdgen->add_option("--vocab", vocab, "Vocabulary size (256 selects the desk tuples)");
  sdgen->add_option("--profile", profile_name, "desk or paper; overrides --vocab");
  sdgen->add_option("--seed", sd_seed);
  sdgen->add_option("--out", sd_out, "Output path")->required();

  // train
  auto* train = app.add_subcommand("train", "Run the data-order sweep and write per-run CSV");
  std::string train_profile = "desk", causal_flag = "both", runs_out, ckpt_dir;
  std::size_t epochs = 0;
  double train_scale = 0.0;
  train->add_option("--profile", train_profile)->check(CLI::IsMember({"desk", "paper"}));
  train->add_option("--causal", causal_flag, "true, false or both")
      ->check(CLI::IsMember({"true", "false", "both"}));
  train->add_option("--out", runs_out, "Runs CSV")->required();
  train->add_option("--epochs", epochs, "Override the profile's epoch count");
  train->add_option("--train-scale", train_scale, "Override the profile's training scale");
  train->add_option("--checkpoint-dir", ckpt_dir, "Save every trained model here");

  // equiv-check
  auto* equiv = app.add_subcommand("equiv-check", "Check parallel, recurrent and prefix views agree");
  std::size_t eq_trials = 100, eq_n = 64, eq_d = 8;
  std::uint64_t eq_seed = 0;
  double eq_tol = 1e-10;
  equiv->add_option("--trials", eq_trials);
  equiv->add_option("--max-n", eq_n);
  equiv->add_option("--max-d", eq_d);
  equiv->add_option("--seed", eq_seed);
  equiv->add_option("--tol", eq_tol);

  // bench
  auto* bench = app.add_subcommand("bench", "Time prefill implementations and write CSV");
  std::vector<std::string> impls{"la_parallel", "la_recurrent", "pla_two_pass",
                                 "naive_softmax_oracle"};
  jrt::BenchConfig bench_cfg;
  bench_cfg.lengths = {1024, 2048, 4096};
  std::string bench_out;
  bench->add_option("--impl", impls, "Implementations to time");
  bench->add_option("--n", bench_cfg.lengths, "Sequence lengths");
  bench->add_option("--batch", bench_cfg.batch);
  bench->add_option("--d", bench_cfg.head_dim);
  bench->add_option("--f", bench_cfg.feature_in, "Taylor input width");
  bench->add_option("--trials", bench_cfg.trials);
  bench->add_option("--seed", bench_cfg.seed);
  bench->add_option("--out", bench_out, "CSV path (stdout when omitted)");

  // prompt
  auto* prompt = app.add_subcommand("prompt", "Build a prompt from token ids");
  std::string mode = "jrt", context_ids, question_ids, seq_ids;
  std::size_t budget = 0, repeats = 2;
  prompt->add_option("mode", mode, "jrt, default or repeat")
      ->check(CLI::IsMember({"jrt", "default", "repeat"}));
  prompt->add_option("--context", context_ids, "Comma-separated context ids");
  prompt->add_option("--question", question_ids, "Comma-separated question ids");
  prompt->add_option("--budget", budget, "Token budget");
  prompt->add_option("--seq", seq_ids, "Sequence to repeat (repeat mode)");
  prompt->add_option("--p", repeats, "Repeat count (repeat mode)");

  // report
  auto* report = app.add_subcommand("report", "Turn runs CSV into the three plot tables");
  std::string report_in, report_dir = ".";
  report->add_option("--runs", report_in, "Runs CSV")->required();
  report->add_option("--out-dir", report_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (sdgen->parsed()) {
      jrt::Profile profile = vocab == 256 ? jrt::Profile::desk : jrt::Profile::paper;
      if (!profile_name.empty()) profile = jrt::parse_profile(profile_name);
      auto spec = jrt::mixture_spec(jrt::parse_split(split), scale, profile);
      if (profile_name.empty()) spec.vocab = vocab;
      const auto data = jrt::gen_mixture(spec, sd_seed);
      auto out = open_out(sd_out);
      jrt::write_jsonl(out, data);
      std::cerr << "wrote " << data.size() << " instances to " << sd_out << '\n';
      return kOk;
    }
    if (train->parsed()) {
      auto plan = jrt::sweep_plan(jrt::parse_profile(train_profile));
      if (causal_flag != "both") plan.causal_modes = {causal_flag == "true"};
      if (epochs > 0) plan.epochs = epochs;
      if (train_scale > 0.0) plan.train_scale = train_scale;
      if (!ckpt_dir.empty()) {
        std::filesystem::create_directories(ckpt_dir);
        plan.checkpoint_dir = ckpt_dir;
      }
      const auto runs = jrt::run_sweep(plan, [](const jrt::RunRecord& r, std::size_t done,
                                                std::size_t total) {
        std::cerr << '[' << done << '/' << total << "] d=" << r.d_model << " f=" << r.feature_dim
                  << (r.causal ? " causal" : " non-causal") << " lr=" << r.lr << " seed=" << r.seed
                  << " acc=" << r.acc << " (" << r.seconds << " s)\n";
      });
      auto out = open_out(runs_out);
      jrt::write_runs_csv(out, runs);
      return kOk;
    }
    if (equiv->parsed()) {
      const double err = equivalence_error(eq_trials, eq_n, eq_d, eq_seed);
      const bool ok = err <= eq_tol;
      std::cout << (ok ? "PASS" : "FAIL") << " max relative error " << err << " (tol " << eq_tol
                << ")\n";
      return ok ? kOk : kCheckFailed;
    }
    if (bench->parsed()) {
      bench_cfg.impls.clear();
      for (const auto& name : impls) bench_cfg.impls.push_back(jrt::parse_bench_impl(name));
      const auto records = jrt::bench_prefill(bench_cfg);
      if (bench_out.empty()) {
        jrt::write_bench_csv(std::cout, records);
      } else {
        auto out = open_out(bench_out);
        jrt::write_bench_csv(out, records);
      }
      if (bench_cfg.lengths.size() >= 2) {
        for (const auto& name : impls) {
          std::cerr << name << " scaling exponent "
                    << jrt::scaling_exponent(records, name) << '\n';
        }
      }
      return kOk;
    }
    if (prompt->parsed()) {
      if (mode == "repeat") {
        std::cout << join(jrt::jrp_repeat(parse_ids(seq_ids), repeats)) << '\n';
        return kOk;
      }
      jrt::PromptPair p{parse_ids(context_ids), parse_ids(question_ids), budget, std::nullopt};
      std::cout << join(mode == "jrt" ? jrt::jrt_transform(p) : jrt::default_prompt(p)) << '\n';
      return kOk;
    }
    if (report->parsed()) {
      std::ifstream in(report_in);
      if (!in) throw std::runtime_error("cannot read " + report_in);
      const auto points = jrt::reduce_max(jrt::read_runs_csv(in));
      const auto tables = jrt::fig2_tables(points);
      const std::filesystem::path dir(report_dir);
      std::filesystem::create_directories(dir);
      open_out((dir / "fig2_b_smaller.csv").string()) << tables.b_smaller;
      open_out((dir / "fig2_a_smaller.csv").string()) << tables.a_smaller;
      open_out((dir / "fig2_gap.csv").string()) << tables.gap;
      try {
        const auto check = jrt::check_order_effect(points);
        std::cout << "mean order gap: causal " << check.causal_mean_gap << ", non-causal "
                  << check.noncausal_mean_gap << '\n'
                  << "|A|>|B| accuracy at " << check.smallest_state_bytes << " bytes: causal "
                  << check.causal_b_smaller << ", non-causal " << check.noncausal_b_smaller << '\n';
      } catch (const std::invalid_argument&) {
        std::cout << "order comparison needs both causal modes\n";
      }
      return kOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kOk;
}
