#pragma once

// Internal helpers shared by the serialization code: whole-file I/O and JSON
// parsing with uniform error reporting (ParseError carries origin plus
// 1-based line:column; SchemaError carries origin plus a description).

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "coordrp/dataset.hpp"

namespace coordrp::detail {

inline std::string location_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  std::ostringstream os;
  os << line << ":" << col;
  return os.str();
}

inline nlohmann::ordered_json parse_checked(const std::string& text,
                                            const std::string& origin) {
  try {
    return nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::ostringstream os;
    os << (origin.empty() ? "<string>" : origin) << ":"
       << location_of(text, e.byte) << ": " << e.what();
    throw core::ParseError(os.str());
  }
}

inline void require(bool cond, const std::string& origin,
                    const std::string& what) {
  if (!cond) {
    throw core::SchemaError((origin.empty() ? "<string>" : origin) + ": " +
                            what);
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw core::IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw core::IoError("cannot write " + path.string());
  out << bytes;
  if (!out) throw core::IoError("short write to " + path.string());
}

}  // namespace coordrp::detail
