#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace subfn {

// Raised for malformed input files. Carries the 1-based line number when known
// (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Shortest form is not used on purpose: every file this project writes uses
// 17 significant digits so rewriting an unchanged file is byte-identical.
std::string format_double(double value);

// Strict parse of a whole token; accepts "inf", "-inf" and "nan" spellings.
bool parse_double(std::string_view token, double& out);
bool parse_int64(std::string_view token, long long& out);

// Whitespace-tokenized line reader for the project's keyed text formats.
// Every failure is a ParseError carrying the current line number.
class LineReader {
 public:
  LineReader(const std::string& text, std::string source) : in_(text), source_(std::move(source)) {}

  // Next non-blank line split on whitespace.
  std::vector<std::string> next(const std::string& what);
  // Next line, which must start with `key` followed by exactly `values` tokens
  // (any number when values == 0).
  std::vector<std::string> keyed(const std::string& key, std::size_t values);

  double number(const std::string& token);
  std::size_t count(const std::string& token);

  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::istringstream in_;
  std::string source_;
  std::size_t line_ = 0;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

}  // namespace subfn
