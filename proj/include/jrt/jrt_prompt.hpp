#pragma once

// Input-side transforms: context repetition (C, Q, C, Q) and p-fold repetition.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace jrt {

// Half-open token range [begin, end) inside the context.
struct AnswerSpan {
  std::size_t begin = 0, end = 0;
};

struct PromptPair {
  std::vector<int> context;
  std::vector<int> question;
  std::size_t budget = 0;
  std::optional<AnswerSpan> answer;  // kept inside the truncated context when present
};

// Context window that fits `limit` tokens: a prefix of the context, shifted
// right only as far as needed to keep the answer span.
std::vector<int> truncate_context(const PromptPair& p, std::size_t limit);

// C', Q, C', Q with |C'| = min(|C|, (budget - 2|Q|) / 2). Throws
// std::invalid_argument when budget < 2|Q| + 2.
std::vector<int> jrt_transform(const PromptPair& p);

// C', Q with |C'| = min(|C|, budget - |Q|).
std::vector<int> default_prompt(const PromptPair& p);

// out[i] = u[i mod N] for i < p N. Throws std::invalid_argument when p is 0.
template <typename T>
std::vector<T> jrp_repeat(std::span<const T> u, std::size_t p) {
  if (p == 0) throw std::invalid_argument("jrp_repeat: repeat count must be >= 1");
  std::vector<T> out;
  out.reserve(u.size() * p);
  for (std::size_t r = 0; r < p; ++r) out.insert(out.end(), u.begin(), u.end());
  return out;
}

template <typename T>
std::vector<T> jrp_repeat(const std::vector<T>& u, std::size_t p) {
  return jrp_repeat(std::span<const T>(u), p);
}

}  // namespace jrt
