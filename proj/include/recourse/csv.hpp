#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace recourse::csv {

/// A parsed CSV document: header plus data records. `lines[i]` is the
/// 1-based physical line on which record i starts, for error messages.
struct Document {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> lines;
};

/// RFC 4180 parsing: comma separator, double-quote quoting with "" escapes,
/// LF or CRLF line endings. Throws ParseError on ragged rows or an empty input.
Document parse(const std::string& text);
Document read_file(const std::filesystem::path& path);

std::string quote(const std::string& field);
std::string format_row(const std::vector<std::string>& fields);

}  // namespace recourse::csv
