#include "jrt/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "jrt/kernels.hpp"
#include "jrt/linear_attention.hpp"
#include "jrt/prefix_attention.hpp"

namespace jrt {
namespace {

constexpr const char* kBenchHeader = "impl,N,M,B,d,D,latency_ms,trials";

struct Problem {
  std::size_t n = 0, m = 0, D = 0, d = 0;
  Tensor<double> phi_q, phi_k, v, phi_ke, v_e;  // features precomputed
};

Problem make_problem(const BenchConfig& cfg, std::size_t n, std::uint64_t stream) {
  Problem p;
  p.n = n;
  p.m = static_cast<std::size_t>(std::floor(cfg.encoder_fraction * static_cast<double>(n)));
  p.d = cfg.head_dim;
  p.D = kernels::taylor2_dim(cfg.feature_in);
  std::mt19937_64 gen(cfg.seed ^ (stream * 0x9e3779b97f4a7c15ULL));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.feature_in)));
  auto random = [&](std::size_t rows, std::size_t cols) {
    Tensor<double> t({rows, cols});
    for (double& x : t.data()) x = normal(gen);
    return t;
  };
  const FeatureMap phi = FeatureMap::taylor2(cfg.feature_in);
  p.phi_q = phi.apply_rows(random(n, cfg.feature_in));
  p.phi_k = phi.apply_rows(random(n, cfg.feature_in));
  p.v = random(n, p.d);
  p.phi_ke = phi.apply_rows(random(p.m, cfg.feature_in));
  p.v_e = random(p.m, p.d);
  return p;
}

// Taylor denominators are at least 1/2 per key, so no epsilon is needed.
LAOptions la_options() {
  LAOptions o;
  o.denom_eps = 0.0;
  return o;
}

Tensor<double> run_impl(BenchImpl impl, const Problem& p) {
  const FeatureMap id = FeatureMap::identity(p.D);
  switch (impl) {
    case BenchImpl::la_parallel:
      return la_parallel(p.phi_q, p.phi_k, p.v, id, la_options());
    case BenchImpl::la_recurrent:
      return la_recurrent(p.phi_q, p.phi_k, p.v, id, 0.0);
    case BenchImpl::pla_two_pass: {
      PLAInputs<double> in{p.phi_q, p.phi_k, p.v, p.phi_ke, p.v_e,
                           PLAInputs<double>::unmasked(p.m)};
      PLAOptions o;
      o.denom_eps = 0.0;
      return two_pass_prefill(in, id, o).y;
    }
    case BenchImpl::naive_softmax_oracle: {
      Tensor<double> y({p.n, p.d});
      y.storage() = naive_prefill(p.phi_q.storage(), p.phi_k.storage(), p.v.storage(), {}, {},
                                  p.n, 0, p.D, p.d);
      return y;
    }
  }
  throw std::invalid_argument("bench: unknown implementation");
}

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
    throw std::runtime_error("bench csv line " + std::to_string(line) + ": bad field '" + field +
                             "'");
  }
  return value;
}

}  // namespace

const char* to_string(BenchImpl impl) {
  switch (impl) {
    case BenchImpl::la_parallel: return "la_parallel";
    case BenchImpl::la_recurrent: return "la_recurrent";
    case BenchImpl::pla_two_pass: return "pla_two_pass";
    case BenchImpl::naive_softmax_oracle: return "naive_softmax_oracle";
  }
  return "unknown";
}

BenchImpl parse_bench_impl(const std::string& name) {
  for (auto impl : {BenchImpl::la_parallel, BenchImpl::la_recurrent, BenchImpl::pla_two_pass,
                    BenchImpl::naive_softmax_oracle})
    if (name == to_string(impl)) return impl;
  throw std::invalid_argument("unknown bench implementation: " + name);
}

std::vector<double> naive_prefill(const std::vector<double>& phi_q, const std::vector<double>& phi_k,
                                  const std::vector<double>& v, const std::vector<double>& phi_ke,
                                  const std::vector<double>& v_e, std::size_t n, std::size_t m,
                                  std::size_t D, std::size_t d) {
  std::vector<double> y(n * d, 0.0);
  std::vector<double> scores(m + n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* q = phi_q.data() + i * D;
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < D; ++a) s += q[a] * phi_ke[j * D + a];
      scores[j] = s;
    }
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < D; ++a) s += q[a] * phi_k[j * D + a];
      scores[m + j] = s;
    }
    double den = 0.0;
    double* yi = y.data() + i * d;
    for (std::size_t j = 0; j < m; ++j) {
      den += scores[j];
      for (std::size_t c = 0; c < d; ++c) yi[c] += scores[j] * v_e[j * d + c];
    }
    for (std::size_t j = 0; j <= i; ++j) {
      den += scores[m + j];
      for (std::size_t c = 0; c < d; ++c) yi[c] += scores[m + j] * v[j * d + c];
    }
    for (std::size_t c = 0; c < d; ++c) yi[c] /= den;
  }
  return y;
}

double bench_agreement(const BenchConfig& cfg, std::size_t n) {
  const Problem p = make_problem(cfg, n, 0);
  double worst = 0.0;
  const Tensor<double> ref = run_impl(BenchImpl::naive_softmax_oracle, p);
  Tensor<double> ref_prefix({n, p.d});
  ref_prefix.storage() = naive_prefill(p.phi_q.storage(), p.phi_k.storage(), p.v.storage(),
                                       p.phi_ke.storage(), p.v_e.storage(), n, p.m, p.D, p.d);
  for (BenchImpl impl : cfg.impls) {
    const Tensor<double> y = run_impl(impl, p);
    const Tensor<double>& want = impl == BenchImpl::pla_two_pass ? ref_prefix : ref;
    worst = std::max(worst, max_rel_error(y, want));
  }
  return worst;
}

std::vector<BenchRecord> bench_prefill(const BenchConfig& cfg) {
  if (cfg.trials < 5) throw std::invalid_argument("bench: at least 5 trials are required");
  if (cfg.batch == 0 || cfg.lengths.empty()) return {};
  const double agreement = bench_agreement(cfg, cfg.agreement_len);
  if (!(agreement <= cfg.agreement_tol)) {
    throw std::runtime_error("bench: implementations disagree (max rel err " +
                             std::to_string(agreement) + ")");
  }
  std::vector<BenchRecord> records;
  for (BenchImpl impl : cfg.impls) {
    for (std::size_t n : cfg.lengths) {
      std::vector<Problem> batch;
      for (std::size_t b = 0; b < cfg.batch; ++b) batch.push_back(make_problem(cfg, n, b + 1));
      auto once = [&]() {
        for (const Problem& p : batch) {
          volatile double sink = run_impl(impl, p)[0];
          (void)sink;
        }
      };
      for (std::size_t w = 0; w < cfg.warmup; ++w) once();
      std::vector<double> ms;
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        const auto start = std::chrono::steady_clock::now();
        once();
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                         .count());
      }
      std::sort(ms.begin(), ms.end());
      const double median = ms.size() % 2 == 1 ? ms[ms.size() / 2]
                                               : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
      const Problem& p = batch.front();
      records.push_back({to_string(impl), n, impl == BenchImpl::pla_two_pass ? p.m : 0, cfg.batch,
                         p.d, p.D, median, cfg.trials});
    }
  }
  return records;
}

double scaling_exponent(const std::vector<BenchRecord>& records, const std::string& impl) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t k = 0;
  for (const auto& r : records) {
    if (r.impl != impl) continue;
    if (!(r.latency_ms > 0.0)) throw std::invalid_argument("scaling_exponent: non-positive latency");
    const double x = std::log(static_cast<double>(r.N)), y = std::log(r.latency_ms);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++k;
  }
  const double kd = static_cast<double>(k);
  const double denom = kd * sxx - sx * sx;
  if (k < 2 || denom == 0.0) {
    throw std::invalid_argument("scaling_exponent: need two distinct lengths for " + impl);
  }
  return (kd * sxy - sx * sy) / denom;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
  out << kBenchHeader << '\n';
  for (const auto& r : records) {
    out << r.impl << ',' << r.N << ',' << r.M << ',' << r.B << ',' << r.d << ',' << r.D << ','
        << exact(r.latency_ms) << ',' << r.trials << '\n';
  }
}

std::vector<BenchRecord> read_bench_csv(std::istream& in) {
  std::string row;
  if (!std::getline(in, row) || row != kBenchHeader) {
    throw std::runtime_error("bench csv: missing or unexpected header");
  }
  std::vector<BenchRecord> records;
  std::size_t line = 1;
  while (std::getline(in, row)) {
    ++line;
    if (row.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(row);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 8) {
      throw std::runtime_error("bench csv line " + std::to_string(line) + ": expected 8 fields");
    }
    BenchRecord r;
    try {
      r.impl = to_string(parse_bench_impl(f[0]));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("bench csv line " + std::to_string(line) + ": " + e.what());
    }
    r.N = parse_field<std::size_t>(f[1], line);
    r.M = parse_field<std::size_t>(f[2], line);
    r.B = parse_field<std::size_t>(f[3], line);
    r.d = parse_field<std::size_t>(f[4], line);
    r.D = parse_field<std::size_t>(f[5], line);
    r.latency_ms = parse_field<double>(f[6], line);
    r.trials = parse_field<std::size_t>(f[7], line);
    records.push_back(r);
  }
  return records;
}

}  // namespace jrt
