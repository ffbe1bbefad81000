#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace prodchoice::io {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

/// Deterministic JSON text: sorted keys, two-space indent, trailing newline.
std::string dump_pretty(const json& value);

/// Minimal RFC 4180 CSV builder.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  CsvWriter& row(const std::vector<std::string>& cells);
  std::string str() const { return out_; }

 private:
  std::size_t width_;
  std::string out_;
};

std::string csv_escape(std::string_view cell);

/// Fixed, locale-independent rendering of a real for tabular output.
std::string fmt_real(double value, int precision = 6);
/// Scientific notation, for p-values.
std::string fmt_sci(double value, int precision = 3);

}  // namespace prodchoice::io
