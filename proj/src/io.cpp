#include "voxdiff/io.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <system_error>

namespace voxdiff::io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_x(std::string_view value) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = value.find('x', start);
    parts.push_back(trim(value.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected key = value, got '" + std::string(line) + "'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view value) {
  value = trim(value);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ParseError(std::string(key) + ": expected a nonnegative integer, got '" + std::string(value) + "'");
  }
  return v;
}

double parse_number(std::string_view key, std::string_view value) {
  value = trim(value);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ParseError(std::string(key) + ": expected a number, got '" + std::string(value) + "'");
  }
  return v;
}

bool parse_flag(std::string_view key, std::string_view value) {
  value = trim(value);
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParseError(std::string(key) + ": expected true or false, got '" + std::string(value) + "'");
}

std::vector<std::uint64_t> parse_triple(std::string_view key, std::string_view value) {
  const auto parts = split_x(value);
  if (parts.size() != 3) throw ParseError(std::string(key) + ": expected AxBxC, got '" + std::string(value) + "'");
  std::vector<std::uint64_t> out;
  for (auto p : parts) out.push_back(parse_unsigned(key, p));
  return out;
}

std::vector<double> parse_number_triple(std::string_view key, std::string_view value) {
  const auto parts = split_x(value);
  if (parts.size() != 3) throw ParseError(std::string(key) + ": expected AxBxC, got '" + std::string(value) + "'");
  std::vector<double> out;
  for (auto p : parts) out.push_back(parse_number(key, p));
  return out;
}

}  // namespace voxdiff::io
