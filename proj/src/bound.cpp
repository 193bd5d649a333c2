#include "subfn/bound.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "subfn/text_io.hpp"

namespace subfn {

namespace {

void check_inputs(const RegionIndex& index, const WeightingSpec& spec, double delta) {
  if (!(delta > 0.0 && delta <= 1.0))
    throw std::invalid_argument("delta must lie in (0, 1], got " + format_double(delta));
  if (index.m() != spec.m)
    throw std::invalid_argument("region index has m=" + std::to_string(index.m()) +
                                " but weighting has m=" + std::to_string(spec.m));
  if (spec.log_d.size() != spec.m + 1) throw std::invalid_argument("weighting table has wrong length");
  if (index.size() == 0) throw std::invalid_argument("region index is empty");
}

void check_query(const FittedScorer& scorer, const ActivationPattern& p) {
  if (p.size() != scorer.m())
    throw std::invalid_argument("query pattern has m=" + std::to_string(p.size()) + ", scorer has m=" +
                                std::to_string(scorer.m()));
}

void derive_error_mass(FittedScorer& s) {
  const auto& regions = s.index.regions();
  s.log_error_mass.assign(regions.size(), kNegInf);
  for (std::size_t l = 0; l < regions.size(); ++l) {
    const Region& r = regions[l];
    if (r.mean_error > 0.0)
      s.log_error_mass[l] = std::log(static_cast<double>(r.count)) + std::log(r.mean_error) - s.log_w[l];
  }
}

double log_normalizer(const WeightingSpec& spec, const LogBinomTable& binom, std::size_t n_total) {
  std::vector<double> terms(spec.m + 1);
  for (std::size_t b = 0; b <= spec.m; ++b) terms[b] = spec.log_d[b] + binom(spec.m, b);
  return std::log(static_cast<double>(n_total)) + log_sum_exp(terms);
}

}  // namespace

FittedScorer fit(const RegionIndex& index, const WeightingSpec& spec, double delta) {
  check_inputs(index, spec, delta);
  const std::size_t m = spec.m;
  FittedScorer s;
  s.index = index;
  s.spec = spec;
  s.binom = make_log_binom(m);
  s.delta = delta;
  s.log_u = log_normalizer(spec, s.binom, index.n_total());

  // z(a): outer a, middle b, inner c; one log-sum-exp per a over an O(M^2) buffer.
  const auto& log_d = spec.log_d;
  const LogBinomTable& binom = s.binom;
  s.log_z.assign(m + 1, kNegInf);
  std::vector<double> scratch;
  scratch.reserve((m + 1) * (m + 2) / 2);
  for (std::size_t a = 0; a <= m; ++a) {
    scratch.clear();
    for (std::size_t b = 0; b <= m; ++b) {
      for (std::size_t c = 0; c <= b; ++c) {
        // C(a, c) or C(M-a, b-c) is zero here, and the distance index would leave [0, M].
        if (c > a || b - c > m - a) continue;
        scratch.push_back(log_d[b] + binom(a, c) + binom(m - a, b - c) + log_d[a + b - 2 * c]);
      }
    }
    s.log_z[a] = log_sum_exp(scratch);
  }

  // w(l): bucket populated-region counts by distance to l, then combine with z.
  const auto& regions = index.regions();
  const std::size_t n_pop = regions.size();
  s.log_w.assign(n_pop, kNegInf);
  std::vector<double> bucket(m + 1);
  std::vector<double> terms;
  terms.reserve(m + 1);
  for (std::size_t l = 0; l < n_pop; ++l) {
    std::fill(bucket.begin(), bucket.end(), 0.0);
    const auto wl = regions[l].pattern.words();
    for (std::size_t i = 0; i < n_pop; ++i)
      bucket[hamming_words(wl, regions[i].pattern.words())] += static_cast<double>(regions[i].count);
    terms.clear();
    for (std::size_t a = 0; a <= m; ++a)
      if (bucket[a] > 0.0) terms.push_back(std::log(bucket[a]) + s.log_z[a]);
    s.log_w[l] = log_sum_exp(terms) - s.log_u;
  }
  derive_error_mass(s);
  return s;
}

FittedScorer oracle_fit(const RegionIndex& index, const WeightingSpec& spec, double delta) {
  check_inputs(index, spec, delta);
  const std::size_t m = spec.m;
  if (m > kMaxEnumerationBits)
    throw std::invalid_argument("oracle_fit enumerates 2^m patterns; m=" + std::to_string(m) +
                                " exceeds the limit of " + std::to_string(kMaxEnumerationBits));
  const std::uint64_t space = std::uint64_t{1} << m;
  std::vector<long double> d(m + 1);
  for (std::size_t b = 0; b <= m; ++b) d[b] = std::exp(static_cast<long double>(spec.log_d[b]));
  auto dist = [](std::uint64_t x, std::uint64_t y) { return static_cast<std::size_t>(__builtin_popcountll(x ^ y)); };

  const auto& regions = index.regions();
  std::vector<std::uint64_t> bits(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i)
    bits[i] = regions[i].pattern.words().empty() ? 0 : regions[i].pattern.words()[0];

  // Unnormalized density of every pattern, and u as their total.
  std::vector<long double> mass(space);
  long double u = 0.0L;
  for (std::uint64_t q = 0; q < space; ++q) {
    long double acc = 0.0L;
    for (std::size_t j = 0; j < regions.size(); ++j)
      acc += static_cast<long double>(regions[j].count) * d[dist(q, bits[j])];
    mass[q] = acc;
    u += acc;
  }

  FittedScorer s;
  s.index = index;
  s.spec = spec;
  s.binom = make_log_binom(m);
  s.delta = delta;
  s.log_u = static_cast<double>(std::log(u));

  s.log_z.assign(m + 1, kNegInf);
  for (std::size_t a = 0; a <= m; ++a) {
    const std::uint64_t other = a == 0 ? 0 : (std::uint64_t{1} << a) - 1;  // a bits away from 0
    long double acc = 0.0L;
    for (std::uint64_t q = 0; q < space; ++q) acc += d[dist(q, 0)] * d[dist(q, other)];
    s.log_z[a] = static_cast<double>(std::log(acc));
  }

  s.log_w.assign(regions.size(), kNegInf);
  for (std::size_t l = 0; l < regions.size(); ++l) {
    long double acc = 0.0L;
    for (std::uint64_t q = 0; q < space; ++q) acc += (mass[q] / u) * d[dist(bits[l], q)];
    s.log_w[l] = static_cast<double>(std::log(acc));
  }
  derive_error_mass(s);
  return s;
}

ScoreComponents score_components(const FittedScorer& scorer, const ActivationPattern& p) {
  check_query(scorer, p);
  const std::size_t m = scorer.m();
  const auto& regions = scorer.index.regions();
  const auto& log_d = scorer.spec.log_d;
  const auto words = p.words();

  std::vector<double> bucket(m + 1, 0.0);
  std::vector<double> smooth_terms;
  smooth_terms.reserve(regions.size());
  for (std::size_t l = 0; l < regions.size(); ++l) {
    const std::size_t h = hamming_words(words, regions[l].pattern.words());
    bucket[h] += static_cast<double>(regions[l].count);
    if (scorer.log_error_mass[l] != kNegInf) smooth_terms.push_back(log_d[h] + scorer.log_error_mass[l]);
  }
  std::vector<double> density_terms;
  density_terms.reserve(m + 1);
  for (std::size_t a = 0; a <= m; ++a)
    if (bucket[a] > 0.0) density_terms.push_back(std::log(bucket[a]) + log_d[a]);

  ScoreComponents c;
  c.log_density = log_sum_exp(density_terms) - scorer.log_u;
  c.log_smooth_error = log_sum_exp(smooth_terms) - std::log(static_cast<double>(scorer.n_total()));
  return c;
}

double density(const FittedScorer& scorer, const ActivationPattern& p) {
  return score_components(scorer, p).log_density;
}

double smooth_error(const FittedScorer& scorer, const ActivationPattern& p) {
  return std::exp(score_components(scorer, p).log_smooth_error);
}

double log_gap_factor(double delta, std::size_t n_total) {
  if (!(delta > 0.0 && delta < 2.0)) throw std::invalid_argument("delta must lie in (0, 2) for a positive gap");
  if (n_total == 0) throw std::invalid_argument("gap needs at least one training sample");
  return 0.5 * std::log(std::log(2.0 / delta) / (2.0 * static_cast<double>(n_total)));
}

ScoreReport make_report(const ScoreComponents& c, double delta, std::size_t n_total) {
  ScoreReport r;
  r.log_density = c.log_density;
  r.smooth_error = std::exp(c.log_smooth_error);
  r.log_gap = log_gap_factor(delta, n_total) - c.log_density;
  r.gap = std::exp(r.log_gap);
  r.log_bound = log_add_exp(c.log_smooth_error, r.log_gap);
  return r;
}

ScoreReport score(const FittedScorer& scorer, const ActivationPattern& p) {
  return make_report(score_components(scorer, p), scorer.delta, scorer.n_total());
}

// ---------------------------------------------------------------------------
// Serialization

std::string scorer_to_string(const FittedScorer& s) {
  std::string out = "#subfn-scorer v1\n";
  out += "m " + std::to_string(s.m()) + "\n";
  out += "n_total " + std::to_string(s.n_total()) + "\n";
  out += "rho " + format_double(s.spec.rho) + "\n";
  out += "delta " + format_double(s.delta) + "\n";
  out += "log_u " + format_double(s.log_u) + "\n";
  out += "log_z";
  for (double v : s.log_z) out += " " + format_double(v);
  out += "\n";
  const auto& regions = s.index.regions();
  out += "regions " + std::to_string(regions.size()) + "\n";
  for (std::size_t l = 0; l < regions.size(); ++l) {
    const Region& r = regions[l];
    out += r.pattern.to_hex();
    out += " " + std::to_string(r.count) + " " + format_double(r.mean_error) + " " + format_double(s.log_w[l]) +
           "\n";
  }
  return out;
}

FittedScorer scorer_from_string(const std::string& text, const std::string& source) {
  LineReader rd(text, source);
  auto header = rd.next("header");
  if (header[0] != "#subfn-scorer") rd.fail("missing '#subfn-scorer' header");
  if (header.size() < 2 || header[1] != "v1") rd.fail("unsupported scorer file version");

  const std::size_t m = rd.count(rd.keyed("m", 1)[1]);
  const std::size_t n_total = rd.count(rd.keyed("n_total", 1)[1]);
  const double rho = rd.number(rd.keyed("rho", 1)[1]);
  const double delta = rd.number(rd.keyed("delta", 1)[1]);
  const double log_u = rd.number(rd.keyed("log_u", 1)[1]);
  auto z_tokens = rd.keyed("log_z", m + 1);
  const std::size_t n_regions = rd.count(rd.keyed("regions", 1)[1]);

  std::vector<Region> regions;
  std::map<std::string, double> log_w_by_hex;
  regions.reserve(n_regions);
  for (std::size_t l = 0; l < n_regions; ++l) {
    auto t = rd.next("region record");
    if (t.size() != 4) rd.fail("region record needs '<hex> <count> <mean_error> <log_w>'");
    Region r;
    try {
      r.pattern = ActivationPattern::from_hex(t[0], m);
    } catch (const std::invalid_argument& e) {
      rd.fail(e.what());
    }
    r.count = rd.count(t[1]);
    r.mean_error = rd.number(t[2]);
    log_w_by_hex[t[0]] = rd.number(t[3]);
    regions.push_back(std::move(r));
  }

  FittedScorer s;
  try {
    s.index = RegionIndex(m, std::move(regions));
    s.spec = make_weighting(rho, m);
    check_inputs(s.index, s.spec, delta);
  } catch (const std::invalid_argument& e) {
    rd.fail(e.what());
  }
  if (s.index.n_total() != n_total) rd.fail("region counts do not sum to n_total");
  s.binom = make_log_binom(m);
  s.delta = delta;
  s.log_u = log_u;
  s.log_z.resize(m + 1);
  for (std::size_t a = 0; a <= m; ++a) s.log_z[a] = rd.number(z_tokens[a + 1]);
  for (const auto& r : s.index.regions()) s.log_w.push_back(log_w_by_hex.at(r.pattern.to_hex()));
  derive_error_mass(s);
  return s;
}

void save_scorer(const FittedScorer& scorer, const std::string& path) {
  write_text_file(path, scorer_to_string(scorer));
}

FittedScorer load_scorer(const std::string& path) { return scorer_from_string(read_text_file(path), path); }

// ---------------------------------------------------------------------------
// Coverage simulation

std::size_t SyntheticRegionWorld::n_total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

void SyntheticRegionWorld::validate() const {
  if (patterns.empty()) throw std::invalid_argument("world has no regions");
  if (counts.size() != patterns.size() || error_probs.size() != patterns.size())
    throw std::invalid_argument("world arrays differ in length");
  std::unordered_set<ActivationPattern, PatternHash> seen;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    if (patterns[i].size() != m) throw std::invalid_argument("world pattern length differs from m");
    if (!seen.insert(patterns[i]).second) throw std::invalid_argument("world patterns must be distinct");
    if (counts[i] == 0) throw std::invalid_argument("world region with zero samples");
    if (!(error_probs[i] >= 0.0 && error_probs[i] <= 1.0))
      throw std::invalid_argument("world error probability outside [0, 1]");
  }
}

SyntheticRegionWorld make_world(std::size_t m, std::size_t regions, std::size_t n_total,
                                std::vector<double> error_probs, std::uint64_t seed) {
  if (regions == 0 || n_total < regions) throw std::invalid_argument("need 1 <= regions <= n_total");
  if (m < 64 && regions > (std::uint64_t{1} << m)) throw std::invalid_argument("more regions than patterns");
  if (error_probs.size() == 1) error_probs.assign(regions, error_probs.front());
  SyntheticRegionWorld w;
  w.m = m;
  w.seed = seed;
  w.error_probs = std::move(error_probs);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::unordered_set<ActivationPattern, PatternHash> seen;
  while (w.patterns.size() < regions) {
    ActivationPattern p(m);
    for (std::size_t j = 0; j < m; ++j) p.set(j, coin(rng));
    if (seen.insert(p).second) w.patterns.push_back(std::move(p));
  }
  w.counts.assign(regions, n_total / regions);
  for (std::size_t i = 0; i < n_total % regions; ++i) ++w.counts[i];
  w.validate();
  return w;
}

RegionIndex expected_index(const SyntheticRegionWorld& world) {
  world.validate();
  std::vector<Region> regions;
  for (std::size_t i = 0; i < world.patterns.size(); ++i)
    regions.push_back({world.patterns[i], world.counts[i], world.error_probs[i]});
  return RegionIndex(world.m, std::move(regions));
}

CoverageResult validate_bound_coverage(const SyntheticRegionWorld& world, const WeightingSpec& spec,
                                       double delta, std::size_t trials, std::optional<ActivationPattern> target) {
  if (trials < 1000) throw std::invalid_argument("coverage check needs at least 1000 trials");
  const RegionIndex index = expected_index(world);
  // Density and w(l) depend only on patterns and counts, which every draw shares.
  const FittedScorer scorer = fit(index, spec, delta);
  const ActivationPattern query = target ? *target : world.patterns.front();
  if (query.size() != world.m) throw std::invalid_argument("target pattern length differs from world m");

  // R* is linear in per-region error counts: R* = sum_l coef_l * errors_l.
  const auto& regions = scorer.index.regions();
  const double n = static_cast<double>(scorer.n_total());
  std::vector<double> coef(regions.size());
  double expected = 0.0;
  for (std::size_t l = 0; l < regions.size(); ++l) {
    const std::size_t h = hamming(query, regions[l].pattern);
    coef[l] = std::exp(spec.log_d[h] - scorer.log_w[l]) / n;
    expected += coef[l] * static_cast<double>(regions[l].count) * regions[l].mean_error;
  }
  const ScoreReport report = score(scorer, query);

  std::mt19937_64 rng(world.seed ^ 0x5eed5eed5eed5eedull);
  std::size_t violations = 0;
  double slack = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    double smooth = 0.0;
    for (std::size_t l = 0; l < regions.size(); ++l) {
      std::binomial_distribution<long long> draw(static_cast<long long>(regions[l].count), regions[l].mean_error);
      smooth += coef[l] * static_cast<double>(draw(rng));
    }
    const double deviation = std::abs(smooth - expected);
    if (deviation >= report.gap) ++violations;
    slack += report.gap - deviation;
  }
  CoverageResult res;
  res.trials = trials;
  res.violation_rate = static_cast<double>(violations) / static_cast<double>(trials);
  res.mean_gap_slack = slack / static_cast<double>(trials);
  res.gap = report.gap;
  res.expected_smooth_error = expected;
  return res;
}

}  // namespace subfn
