#pragma once

// Input-dependent error bound over activation-region subfunctions.
//
// For a query pattern p, with populated regions l (count N_l, mean error E_l)
// and kernel k = exp(log_d[Hamming]):
//
//   density      P(p)  = sum_l N_l k(p, p_l) / u,      u = N * sum_b d(b) C(M, b)
//   normalizer   w(l)  = sum_{q in {0,1}^M} P(q) k(p_l, q)
//                      = (1/u) sum_i N_i z(H(p_l, p_i))
//   smooth error R*(p) = (1/N) sum_l k(p_l, p) N_l E_l / w(l)
//   bound             = R*(p) + (1/P(p)) sqrt(log(2/delta) / (2N))
//
// where z(a) = sum_b d(b) sum_c C(a, c) C(M-a, b-c) d(a + b - 2c) counts the
// kernel products over the full bit space grouped by distance. Everything is
// kept in log space; the reported score is log(bound).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "subfn/kernel.hpp"
#include "subfn/patterns.hpp"

namespace subfn {

inline constexpr double kDefaultDelta = 0.001;
inline constexpr std::size_t kMaxEnumerationBits = 20;

struct FittedScorer {
  RegionIndex index;
  WeightingSpec spec;
  LogBinomTable binom;
  double log_u = 0.0;
  std::vector<double> log_z;  // length m + 1
  std::vector<double> log_w;  // one per populated region, same order as index.regions()
  double delta = kDefaultDelta;

  // log(N_l * E_l / w(l)); -inf for regions without errors. Derived at fit/load time.
  std::vector<double> log_error_mass;

  std::size_t m() const { return index.m(); }
  std::size_t n_total() const { return index.n_total(); }
};

// Fast fit: O(M^3) for z, O(N_pop^2) Hamming distances for w.
// Throws std::invalid_argument for delta outside (0, 1] or mismatched m.
FittedScorer fit(const RegionIndex& index, const WeightingSpec& spec, double delta = kDefaultDelta);

// Literal sums over every pattern of {0,1}^M. m must not exceed kMaxEnumerationBits.
FittedScorer oracle_fit(const RegionIndex& index, const WeightingSpec& spec, double delta = kDefaultDelta);

// log P(p); finite for every pattern when the kernel is positive.
double density(const FittedScorer& scorer, const ActivationPattern& p);
double smooth_error(const FittedScorer& scorer, const ActivationPattern& p);

// Delta-independent parts of a score; lets callers re-evaluate many deltas cheaply.
struct ScoreComponents {
  double log_density = 0.0;
  double log_smooth_error = kNegInf;
};

ScoreComponents score_components(const FittedScorer& scorer, const ActivationPattern& p);

struct ScoreReport {
  double log_bound = 0.0;
  double smooth_error = 0.0;
  double log_density = 0.0;
  double gap = 0.0;      // may overflow to +inf for extremely sparse patterns; log_gap stays finite
  double log_gap = 0.0;
};

// log of the gap prefactor sqrt(log(2/delta) / (2N)).
double log_gap_factor(double delta, std::size_t n_total);
ScoreReport make_report(const ScoreComponents& c, double delta, std::size_t n_total);

ScoreReport score(const FittedScorer& scorer, const ActivationPattern& p);

// Versioned text serialization; tables are written at 17 significant digits so
// a round trip is bit-exact.
std::string scorer_to_string(const FittedScorer& scorer);
FittedScorer scorer_from_string(const std::string& text, const std::string& source = "<string>");
void save_scorer(const FittedScorer& scorer, const std::string& path);
FittedScorer load_scorer(const std::string& path);

// Synthetic datasets with fixed per-region counts and Bernoulli(q_i) per-sample
// errors, used to check the bound's coverage by simulation.
struct SyntheticRegionWorld {
  std::size_t m = 0;
  std::vector<ActivationPattern> patterns;  // distinct, one per region
  std::vector<std::size_t> counts;          // N_i >= 1
  std::vector<double> error_probs;          // q_i in [0, 1]
  std::uint64_t seed = 0;

  std::size_t n_total() const;
  void validate() const;
};

// Distinct random patterns and counts split as evenly as possible. A single
// error probability is broadcast to every region.
SyntheticRegionWorld make_world(std::size_t m, std::size_t regions, std::size_t n_total,
                                std::vector<double> error_probs, std::uint64_t seed);

// Region index whose mean errors are the q_i themselves (the expected smooth error world).
RegionIndex expected_index(const SyntheticRegionWorld& world);

struct CoverageResult {
  double violation_rate = 0.0;
  double mean_gap_slack = 0.0;  // mean of gap - |R* - E[R*]|
  double gap = 0.0;
  double expected_smooth_error = 0.0;
  std::size_t trials = 0;
};

// Draws `trials` datasets from the world and counts how often the smooth error
// of `target` (region 0's pattern by default) deviates from its expectation by
// at least the gap term. Throws std::invalid_argument when trials < 1000.
CoverageResult validate_bound_coverage(const SyntheticRegionWorld& world, const WeightingSpec& spec,
                                 double delta, std::size_t trials,
                                 std::optional<ActivationPattern> target = std::nullopt);

}  // namespace subfn
