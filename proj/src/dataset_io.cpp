#include "jrt/dataset_io.hpp"

#include <stdexcept>

#include "json.hpp"

namespace jrt {

std::string to_json_line(const SDInstance& inst) {
  nlohmann::json j;
  j["input_ids"] = inst.input_ids;
  j["labels"] = inst.labels;
  j["len_a"] = inst.len_a;
  j["len_b"] = inst.len_b;
  j["vocab"] = inst.vocab;
  return j.dump();
}

SDInstance from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    const auto ids = j.at("input_ids").get<std::vector<int>>();
    const auto labels = j.at("labels").get<std::vector<int>>();
    const auto len_a = j.at("len_a").get<std::size_t>();
    const auto len_b = j.at("len_b").get<std::size_t>();
    const int vocab = j.at("vocab").get<int>();
    if (ids.size() != len_a + len_b + 4) throw std::runtime_error("length does not match set sizes");
    const std::vector<int> a(ids.begin() + 1, ids.begin() + 1 + static_cast<std::ptrdiff_t>(len_a));
    const std::vector<int> b(ids.begin() + 2 + static_cast<std::ptrdiff_t>(len_a),
                             ids.begin() + 2 + static_cast<std::ptrdiff_t>(len_a + len_b));
    SDInstance inst = make_sd_instance(a, b, vocab);
    if (inst.input_ids != ids) throw std::runtime_error("special tokens out of place");
    if (inst.labels != labels) throw std::runtime_error("labels disagree with the sets");
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("jsonl: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("jsonl: ") + e.what());
  }
}

void write_jsonl(std::ostream& out, const std::vector<SDInstance>& data) {
  for (const auto& inst : data) out << to_json_line(inst) << '\n';
}

std::vector<SDInstance> read_jsonl(std::istream& in) {
  std::vector<SDInstance> data;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      data.push_back(from_json_line(line));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return data;
}

}  // namespace jrt
