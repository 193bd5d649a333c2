#include "subfn/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace subfn {

WeightingSpec make_weighting(double rho, std::size_t m) {
  if (std::isnan(rho) || rho <= 0.0)
    throw std::invalid_argument("weighting rho must be positive (got " + std::to_string(rho) + ")");
  WeightingSpec spec;
  spec.rho = rho;
  spec.m = m;
  spec.log_d.assign(m + 1, 0.0);
  if (!spec.uniform()) {
    const double denom = 2.0 * rho * rho;
    for (std::size_t b = 0; b <= m; ++b) {
      const double bd = static_cast<double>(b);
      spec.log_d[b] = -(bd * bd) / denom;
    }
  }
  return spec;
}

double log_weight(const WeightingSpec& spec, std::size_t hamming) {
  if (hamming > spec.m)
    throw std::out_of_range("hamming distance " + std::to_string(hamming) + " exceeds m=" +
                            std::to_string(spec.m));
  return spec.log_d[hamming];
}

LogBinomTable::LogBinomTable(std::size_t m) : m_(m), table_((m + 1) * (m + 1), kNegInf) {
  for (std::size_t q = 0; q <= m; ++q) {
    double* row = table_.data() + q * (m + 1);
    // C(q, g) = C(q, g-1) * (q - (g-1)) / g, accumulated in log space.
    row[0] = 0.0;
    for (std::size_t g = 1; g <= q; ++g)
      row[g] = row[g - 1] + std::log(static_cast<double>(q - g + 1)) - std::log(static_cast<double>(g));
    row[q] = 0.0;
  }
}

LogBinomTable make_log_binom(std::size_t m) { return LogBinomTable(m); }

double log_sum_exp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) {
    if (std::isnan(v)) throw std::invalid_argument("log_sum_exp: NaN input");
    hi = std::max(hi, v);
  }
  if (hi == kNegInf) return kNegInf;
  if (std::isinf(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace subfn
