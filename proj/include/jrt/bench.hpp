#pragma once

// Prefill latency harness. Inputs and their Taylor features are prepared
// outside the timed region; each timed call runs the attention of B sequences
// on precomputed features. Outputs of every implementation are cross-checked
// before any timing starts.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace jrt {

enum class BenchImpl { la_parallel, la_recurrent, pla_two_pass, naive_softmax_oracle };

const char* to_string(BenchImpl impl);
BenchImpl parse_bench_impl(const std::string& name);

struct BenchRecord {
  std::string impl;
  std::size_t N = 0, M = 0, B = 0, d = 0, D = 0;
  double latency_ms = 0.0;  // median over trials
  std::size_t trials = 0;
  friend bool operator==(const BenchRecord&, const BenchRecord&) = default;
};

struct BenchConfig {
  std::vector<BenchImpl> impls{BenchImpl::la_parallel, BenchImpl::la_recurrent,
                               BenchImpl::pla_two_pass, BenchImpl::naive_softmax_oracle};
  std::vector<std::size_t> lengths;
  std::size_t batch = 1;
  std::size_t head_dim = 16;    // d
  std::size_t feature_in = 4;   // Taylor input width f; D = 1 + f + f^2
  double encoder_fraction = 0.5;  // M = floor(fraction * N) for pla_two_pass
  std::size_t trials = 5;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
  double agreement_tol = 1e-10;
  std::size_t agreement_len = 256;
};

// The quadratic reference: materializes every score phi(q_i) . phi(k_j) for
// j <= i (plus all j < M of the encoder) and normalizes each row by its sum.
std::vector<double> naive_prefill(const std::vector<double>& phi_q, const std::vector<double>& phi_k,
                                  const std::vector<double>& v, const std::vector<double>& phi_ke,
                                  const std::vector<double>& v_e, std::size_t n, std::size_t m,
                                  std::size_t D, std::size_t d);

// Largest relative disagreement between each implementation and the
// quadratic reference on one random sequence of length n.
double bench_agreement(const BenchConfig& cfg, std::size_t n);

// One record per (impl, N) in config order. Throws std::invalid_argument if
// trials < 5 and std::runtime_error if the agreement check fails. Returns an
// empty list when B = 0 or no lengths are given.
std::vector<BenchRecord> bench_prefill(const BenchConfig& cfg);

// Least-squares slope of log(latency) against log(N) over one implementation's records.
double scaling_exponent(const std::vector<BenchRecord>& records, const std::string& impl);

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records);
// Throws std::runtime_error on a malformed header or row.
std::vector<BenchRecord> read_bench_csv(std::istream& in);

}  // namespace jrt
