#include "subfn/patterns.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include "subfn/text_io.hpp"

namespace subfn {

namespace {

std::size_t word_count(std::size_t m) { return (m + 63) / 64; }

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

ActivationPattern::ActivationPattern(std::size_t m) : m_(m), words_(word_count(m), 0) {}

ActivationPattern ActivationPattern::from_bits(std::span<const bool> bits) {
  ActivationPattern p(bits.size());
  for (std::size_t j = 0; j < bits.size(); ++j)
    if (bits[j]) p.set(j);
  return p;
}

ActivationPattern ActivationPattern::from_hex(std::string_view hex, std::size_t m) {
  const std::size_t bytes = (m + 7) / 8;
  if (hex.size() != 2 * bytes)
    throw std::invalid_argument("pattern hex has " + std::to_string(hex.size()) +
                                " digits, expected " + std::to_string(2 * bytes) + " for m=" +
                                std::to_string(m));
  ActivationPattern p(m);
  for (std::size_t k = 0; k < bytes; ++k) {
    int hi = hex_value(hex[2 * k]);
    int lo = hex_value(hex[2 * k + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit in pattern");
    std::uint64_t byte = static_cast<std::uint64_t>(hi * 16 + lo);
    for (std::size_t b = 0; b < 8; ++b) {
      if (!((byte >> b) & 1u)) continue;
      std::size_t j = 8 * k + b;
      if (j >= m) throw std::invalid_argument("pattern hex sets pad bits beyond m");
      p.set(j);
    }
  }
  return p;
}

void ActivationPattern::set(std::size_t j, bool on) {
  const std::uint64_t mask = std::uint64_t{1} << (j & 63);
  if (on)
    words_[j >> 6] |= mask;
  else
    words_[j >> 6] &= ~mask;
}

void ActivationPattern::flip_all() {
  for (auto& w : words_) w = ~w;
  if (m_ % 64 != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << (m_ % 64)) - 1;
}

std::string ActivationPattern::to_hex() const {
  static constexpr char digits[] = "0123456789abcdef";
  const std::size_t bytes = (m_ + 7) / 8;
  std::string out;
  out.reserve(2 * bytes);
  for (std::size_t k = 0; k < bytes; ++k) {
    unsigned byte = static_cast<unsigned>((words_[k / 8] >> (8 * (k % 8))) & 0xffu);
    out.push_back(digits[byte >> 4]);
    out.push_back(digits[byte & 0xf]);
  }
  return out;
}

std::size_t PatternHash::operator()(const ActivationPattern& p) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ull ^ p.size();
  for (std::uint64_t w : p.words()) {
    h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

std::size_t hamming(const ActivationPattern& a, const ActivationPattern& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("hamming: pattern lengths differ (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  return hamming_words(a.words(), b.words());
}

RegionIndex::RegionIndex(std::size_t m, std::vector<Region> regions) : m_(m), regions_(std::move(regions)) {
  std::sort(regions_.begin(), regions_.end(),
            [](const Region& x, const Region& y) { return x.pattern < y.pattern; });
  for (std::size_t i = 0; i < regions_.size(); ++i) {
    const Region& r = regions_[i];
    if (r.pattern.size() != m_) throw std::invalid_argument("region pattern length differs from m");
    if (r.count == 0) throw std::invalid_argument("region with zero samples");
    if (!(r.mean_error >= 0.0 && r.mean_error <= 1.0))
      throw std::invalid_argument("region mean error outside [0, 1]");
    if (i > 0 && regions_[i - 1].pattern == r.pattern)
      throw std::invalid_argument("duplicate region pattern " + r.pattern.to_hex());
    n_total_ += r.count;
  }
}

double RegionIndex::empirical_error() const {
  double acc = 0.0;
  for (const auto& r : regions_) acc += static_cast<double>(r.count) * r.mean_error;
  return n_total_ == 0 ? 0.0 : acc / static_cast<double>(n_total_);
}

RegionIndex build_region_index(std::span<const PatternRecord> samples) {
  if (samples.empty()) throw std::invalid_argument("build_region_index: no samples");
  const std::size_t m = samples.front().pattern.size();
  std::map<ActivationPattern, std::vector<double>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.pattern.size() != m)
      throw std::invalid_argument("build_region_index: sample " + std::to_string(i) +
                                  " has pattern length " + std::to_string(s.pattern.size()) +
                                  ", expected " + std::to_string(m));
    if (!(s.error >= 0.0 && s.error <= 1.0))
      throw std::invalid_argument("build_region_index: sample " + std::to_string(i) +
                                  " has error outside [0, 1]");
    groups[s.pattern].push_back(s.error);
  }
  std::vector<Region> regions;
  regions.reserve(groups.size());
  for (auto& [pattern, errors] : groups) {
    // Sorted summation makes the mean independent of input order.
    std::sort(errors.begin(), errors.end());
    double sum = 0.0;
    for (double e : errors) sum += e;
    regions.push_back({pattern, errors.size(), sum / static_cast<double>(errors.size())});
  }
  return RegionIndex(m, std::move(regions));
}

std::string patterns_to_string(std::span<const PatternRecord> records, std::size_t m) {
  std::string out = "#subfn-patterns v1 m=" + std::to_string(m) + "\n";
  for (const auto& r : records) {
    if (r.pattern.size() != m) throw std::invalid_argument("write_patterns: record length differs from m");
    if (!(r.error >= 0.0 && r.error <= 1.0)) throw std::invalid_argument("write_patterns: error outside [0, 1]");
    out += r.pattern.to_hex();
    out += ',';
    out += format_double(r.error);
    if (r.label) {
      out += ',';
      out += std::to_string(*r.label);
    }
    out += '\n';
  }
  return out;
}

PatternSet patterns_from_string(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  PatternSet set;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (!have_header) {
      auto tokens = split(view, ' ');
      if (tokens.size() < 3 || tokens[0] != "#subfn-patterns")
        throw ParseError(source, line_no, "missing '#subfn-patterns' header");
      if (tokens[1] != "v1")
        throw ParseError(source, line_no, "unsupported pattern file version '" + std::string(tokens[1]) + "'");
      long long m = -1;
      if (tokens[2].substr(0, 2) != "m=" || !parse_int64(tokens[2].substr(2), m) || m < 0)
        throw ParseError(source, line_no, "header needs m=<bits>");
      set.m = static_cast<std::size_t>(m);
      have_header = true;
      continue;
    }
    if (view.empty()) continue;
    auto fields = split(view, ',');
    if (fields.size() < 2 || fields.size() > 3)
      throw ParseError(source, line_no, "expected '<hex>,<error>[,<label>]'");
    PatternRecord rec;
    try {
      rec.pattern = ActivationPattern::from_hex(trim(fields[0]), set.m);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (!parse_double(fields[1], rec.error)) throw ParseError(source, line_no, "bad error value");
    if (!(rec.error >= 0.0 && rec.error <= 1.0))
      throw ParseError(source, line_no, "error " + std::string(trim(fields[1])) + " outside [0, 1]");
    if (fields.size() == 3) {
      long long label = 0;
      if (!parse_int64(fields[2], label)) throw ParseError(source, line_no, "bad label");
      rec.label = label;
    }
    set.records.push_back(std::move(rec));
  }
  if (!have_header) throw ParseError(source, 0, "empty pattern file");
  return set;
}

void write_patterns(const std::string& path, std::span<const PatternRecord> records, std::size_t m) {
  write_text_file(path, patterns_to_string(records, m));
}

PatternSet read_patterns(const std::string& path) { return patterns_from_string(read_text_file(path), path); }

}  // namespace subfn
