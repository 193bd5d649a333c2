#pragma once

// Activation patterns as packed bit vectors, Hamming distance, and grouping
// of per-sample errors into populated activation regions.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace subfn {

class ActivationPattern {
 public:
  ActivationPattern() = default;
  // All-zero pattern of m bits.
  explicit ActivationPattern(std::size_t m);

  static ActivationPattern from_bits(std::span<const bool> bits);
  // Lowercase or uppercase hex; byte k holds bits 8k..8k+7, least significant first.
  // Throws std::invalid_argument on wrong length, bad digits, or set pad bits.
  static ActivationPattern from_hex(std::string_view hex, std::size_t m);

  std::size_t size() const { return m_; }
  bool test(std::size_t j) const { return (words_[j >> 6] >> (j & 63)) & 1u; }
  void set(std::size_t j, bool on = true);
  void flip_all();

  std::span<const std::uint64_t> words() const { return words_; }
  std::string to_hex() const;

  friend bool operator==(const ActivationPattern&, const ActivationPattern&) = default;
  friend auto operator<=>(const ActivationPattern& a, const ActivationPattern& b) {
    if (auto c = a.m_ <=> b.m_; c != 0) return c;
    return a.words_ <=> b.words_;
  }

 private:
  std::size_t m_ = 0;
  std::vector<std::uint64_t> words_;
};

struct PatternHash {
  std::size_t operator()(const ActivationPattern& p) const noexcept;
};

// Throws std::invalid_argument when lengths differ.
std::size_t hamming(const ActivationPattern& a, const ActivationPattern& b);

// Unchecked kernel over equal-length word spans.
inline std::size_t hamming_words(std::span<const std::uint64_t> a,
                                 std::span<const std::uint64_t> b) noexcept {
  std::size_t sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<std::size_t>(__builtin_popcountll(a[i] ^ b[i]));
  return sum;
}

struct PatternRecord {
  ActivationPattern pattern;
  double error = 0.0;  // in [0, 1]
  std::optional<long long> label;

  friend bool operator==(const PatternRecord&, const PatternRecord&) = default;
};

struct Region {
  ActivationPattern pattern;
  std::size_t count = 0;
  double mean_error = 0.0;
  friend bool operator==(const Region&, const Region&) = default;
};

// Populated regions sorted by pattern; immutable once built.
class RegionIndex {
 public:
  RegionIndex() = default;
  RegionIndex(std::size_t m, std::vector<Region> regions);

  std::size_t m() const { return m_; }
  std::size_t n_total() const { return n_total_; }
  const std::vector<Region>& regions() const { return regions_; }
  std::size_t size() const { return regions_.size(); }

  // Count-weighted mean of region errors, i.e. the empirical error over all samples.
  double empirical_error() const;

  friend bool operator==(const RegionIndex&, const RegionIndex&) = default;

 private:
  std::size_t m_ = 0;
  std::size_t n_total_ = 0;
  std::vector<Region> regions_;
};

RegionIndex build_region_index(std::span<const PatternRecord> samples);

// Text format: header `#subfn-patterns v1 m=<M>` then `<hex>,<error>[,<label>]` per line.
// Extra `key=value` header tokens after m are ignored on read.
void write_patterns(const std::string& path, std::span<const PatternRecord> records, std::size_t m);
struct PatternSet {
  std::size_t m = 0;
  std::vector<PatternRecord> records;
};

PatternSet read_patterns(const std::string& path);
std::string patterns_to_string(std::span<const PatternRecord> records, std::size_t m);
PatternSet patterns_from_string(const std::string& text,
                                                const std::string& source = "<string>");

}  // namespace subfn
