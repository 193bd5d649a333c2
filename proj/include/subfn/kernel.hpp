#pragma once

// Gaussian weighting over Hamming distance and log-binomial tables, both held
// in log space so the normalizer sums stay finite for layers of hundreds of units.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace subfn {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kUniformRho = std::numeric_limits<double>::infinity();

// k(h_i, h_j) = exp(-H^2 / (2 rho^2)) tabulated as log_d[H] for H in [0, m].
// rho = +inf selects the uniform kernel (log_d == 0).
struct WeightingSpec {
  double rho = kUniformRho;
  std::size_t m = 0;
  std::vector<double> log_d;

  bool uniform() const { return rho == kUniformRho; }
};

// Throws std::invalid_argument unless rho > 0 (or +inf).
WeightingSpec make_weighting(double rho, std::size_t m);

// Throws std::out_of_range when hamming > spec.m.
double log_weight(const WeightingSpec& spec, std::size_t hamming);

// log C(q, g) for 0 <= g, q <= m; -inf when g > q.
class LogBinomTable {
 public:
  LogBinomTable() = default;
  explicit LogBinomTable(std::size_t m);

  std::size_t m() const { return m_; }
  double operator()(std::size_t q, std::size_t g) const { return table_[q * (m_ + 1) + g]; }
  std::span<const double> row(std::size_t q) const { return {table_.data() + q * (m_ + 1), m_ + 1}; }

 private:
  std::size_t m_ = 0;
  std::vector<double> table_;
};

LogBinomTable make_log_binom(std::size_t m);

// log(sum(exp(values))) shifted by the maximum; -inf for empty or all -inf
// input. Throws std::invalid_argument on NaN.
double log_sum_exp(std::span<const double> values);

// Two-term form; either argument may be -inf.
double log_add_exp(double a, double b);

}  // namespace subfn
