#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sparsing::io {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

// Temp file in the target directory, then rename.
void write_atomic(const std::filesystem::path& path, std::string_view contents);
void write_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& contents);

// Shortest round-trip decimal representation.
std::string format_double(double v);

// Minimal CSV builder; values are written verbatim, so callers keep them comma-free.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& row(const std::vector<std::string>& cells);

  template <typename... Ts>
  CsvWriter& add(const Ts&... values) {
    return row({cell(values)...});
  }

  std::size_t columns() const { return header_.size(); }
  std::string str() const { return out_.str(); }
  void save(const std::filesystem::path& path) const { write_atomic(path, str()); }

 private:
  static std::string cell(double v) { return format_double(v); }
  static std::string cell(float v) { return format_double(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  static std::string cell(std::string_view v) { return std::string(v); }
  template <typename I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }

  std::vector<std::string> header_;
  std::ostringstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; throws DataError when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text);

}  // namespace sparsing::io
