#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "cag/errors.hpp"

#include <json.hpp>

namespace cag {

/// Reads one JSON object per line, skipping blank lines.
inline std::vector<nlohmann::ordered_json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path);
  std::vector<nlohmann::ordered_json> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::ordered_json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw IoFailure(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Writes one compact JSON object per line. Output bytes are a pure function
/// of the record sequence.
inline void write_jsonl(const std::string& path,
                        const std::vector<nlohmann::ordered_json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot write " + path);
  for (const auto& record : records) {
    out << record.dump() << '\n';
    if (!out) throw IoFailure("write failed on " + path);
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot write " + path);
  out << content;
  if (!out) throw IoFailure("write failed on " + path);
}

}  // namespace cag
