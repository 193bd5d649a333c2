#include "subfn/text_io.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <limits>

namespace subfn {

namespace {

std::string describe(const std::string& source, std::size_t line, const std::string& what) {
  std::string msg = source;
  if (line > 0) msg += ":" + std::to_string(line);
  msg += ": " + what;
  return msg;
}

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(describe(source, line, what)), line_(line) {}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

bool parse_double(std::string_view token, double& out) {
  token = trim(token);
  if (token.empty()) return false;
  if (token == "inf" || token == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (token == "-inf") {
    out = -std::numeric_limits<double>::infinity();
    return true;
  }
  if (token == "nan") {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  // strtod needs a terminated buffer; from_chars for double is missing on older libstdc++.
  std::string buf(token);
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size()) return false;
  if (errno == ERANGE && std::isinf(v)) return false;
  out = v;
  return true;
}

bool parse_int64(std::string_view token, long long& out) {
  token = trim(token);
  if (token.empty()) return false;
  const char* first = token.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

std::vector<std::string> LineReader::next(const std::string& what) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);
    if (!tokens.empty()) return tokens;
  }
  throw ParseError(source_, line_, "unexpected end of file, expected " + what);
}

std::vector<std::string> LineReader::keyed(const std::string& key, std::size_t values) {
  auto t = next("'" + key + "'");
  if (t[0] != key) fail("expected '" + key + "', found '" + t[0] + "'");
  if (values != 0 && t.size() != values + 1)
    fail("'" + key + "' needs " + std::to_string(values) + " value(s), found " + std::to_string(t.size() - 1));
  return t;
}

double LineReader::number(const std::string& token) {
  double v = 0.0;
  if (!parse_double(token, v)) fail("bad number '" + token + "'");
  return v;
}

std::size_t LineReader::count(const std::string& token) {
  long long v = 0;
  if (!parse_int64(token, v) || v < 0) fail("bad count '" + token + "'");
  return static_cast<std::size_t>(v);
}

void LineReader::fail(const std::string& what) const { throw ParseError(source_, line_, what); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      break;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace subfn
