#include "jrt/jrt_prompt.hpp"

#include <algorithm>
#include <string>

namespace jrt {

std::vector<int> truncate_context(const PromptPair& p, std::size_t limit) {
  const std::size_t keep = std::min(limit, p.context.size());
  std::size_t start = 0;
  if (p.answer) {
    const AnswerSpan& span = *p.answer;
    if (span.begin > span.end || span.end > p.context.size()) {
      throw std::out_of_range("answer span [" + std::to_string(span.begin) + ", " +
                              std::to_string(span.end) + ") outside context");
    }
    if (span.end - span.begin > keep) {
      throw std::invalid_argument("answer span does not fit in " + std::to_string(keep) +
                                  " context tokens");
    }
    if (span.end > keep) start = span.end - keep;
  }
  const auto first = p.context.begin() + static_cast<std::ptrdiff_t>(start);
  return {first, first + static_cast<std::ptrdiff_t>(keep)};
}

std::vector<int> jrt_transform(const PromptPair& p) {
  const std::size_t q = p.question.size();
  if (p.budget < 2 * q + 2) {
    throw std::invalid_argument("jrt_transform: budget " + std::to_string(p.budget) +
                                " leaves no room for context with a question of " +
                                std::to_string(q) + " tokens");
  }
  const std::vector<int> ctx = truncate_context(p, (p.budget - 2 * q) / 2);
  std::vector<int> out;
  out.reserve(2 * (ctx.size() + q));
  for (int copy = 0; copy < 2; ++copy) {
    out.insert(out.end(), ctx.begin(), ctx.end());
    out.insert(out.end(), p.question.begin(), p.question.end());
  }
  return out;
}

std::vector<int> default_prompt(const PromptPair& p) {
  const std::size_t q = p.question.size();
  if (p.budget < q) {
    throw std::invalid_argument("default_prompt: budget " + std::to_string(p.budget) +
                                " is smaller than the question");
  }
  std::vector<int> out = truncate_context(p, p.budget - q);
  out.insert(out.end(), p.question.begin(), p.question.end());
  return out;
}

}  // namespace jrt
