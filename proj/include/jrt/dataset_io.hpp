#pragma once

// JSONL datasets, one instance per line:
// {"input_ids": [...], "labels": [...], "len_a": int, "len_b": int, "vocab": int}
// Ignored label positions are written as kIgnoreLabel.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "jrt/set_disjointness.hpp"

namespace jrt {

std::string to_json_line(const SDInstance& inst);
// Rebuilds the instance and re-checks its layout; throws std::runtime_error on
// malformed JSON or a line that is not a valid set-disjointness instance.
SDInstance from_json_line(const std::string& line);

void write_jsonl(std::ostream& out, const std::vector<SDInstance>& data);
std::vector<SDInstance> read_jsonl(std::istream& in);

}  // namespace jrt
