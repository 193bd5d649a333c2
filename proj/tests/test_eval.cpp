#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "subfn/eval.hpp"
#include "subfn/text_io.hpp"

using namespace subfn;

namespace {

// Mann-Whitney: probability a reliable sample scores below a reject sample, ties count half.
double pairwise_auroc(const std::vector<ScoredSample>& s) {
  double wins = 0, pairs = 0;
  for (const auto& a : s)
    for (const auto& b : s)
      if (!a.ground_truth_reject && b.ground_truth_reject) {
        pairs += 1;
        wins += a.unreliability < b.unreliability ? 1.0 : (a.unreliability == b.unreliability ? 0.5 : 0.0);
      }
  return wins / pairs;
}

// Integer scores 0..n-1 and n thresholds: every cut k/n is visited.
double stepwise_aucea(const std::vector<bool>& reject_by_rank) {
  const std::size_t n = reject_by_rank.size();
  double area = 0, prev_c = 0, prev_a = 0;
  std::size_t good = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    good += reject_by_rank[k - 1] ? 0 : 1;
    const double c = static_cast<double>(k) / n, a = static_cast<double>(good) / k;
    if (k > 1) area += (c - prev_c) * 0.5 * (a + prev_a);
    prev_c = c;
    prev_a = a;
  }
  return area;
}

std::vector<ScoredSample> from_scores(const std::vector<double>& scores, const std::vector<bool>& reject) {
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({static_cast<long long>(i), scores[i], reject[i]});
  return out;
}

}  // namespace

TEST_CASE("baseline scores") {
  std::vector<double> uniform(10, 0.1);
  CHECK(entropy_score(uniform) == doctest::Approx(std::log(10.0)).epsilon(1e-14));
  const double p[] = {0.7, 0.2, 0.1};
  CHECK(entropy_score(p) == doctest::Approx(0.801819).epsilon(1e-6));
  CHECK(max_response_score(p) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(margin_score(p) == doctest::Approx(0.5).epsilon(1e-14));
  const double onehot[] = {0.0, 1.0, 0.0};
  CHECK(entropy_score(onehot) == 0.0);
  CHECK(max_response_score(onehot) == 0.0);
  CHECK(margin_score(onehot) == 0.0);
  const double tie[] = {0.5, 0.5};
  CHECK(margin_score(tie) == 1.0);

  const double bad_sum[] = {0.5, 0.6};
  CHECK_THROWS_AS(entropy_score(bad_sum), std::invalid_argument);
  const double negative[] = {1.5, -0.5};
  CHECK_THROWS_AS(max_response_score(negative), std::invalid_argument);
  const double single[] = {1.0};
  CHECK_THROWS_AS(margin_score(single), std::invalid_argument);
}

TEST_CASE("perfect and reversed rankings") {
  std::vector<double> s;
  std::vector<bool> r;
  for (int i = 0; i < 100; ++i) {
    s.push_back(i);
    r.push_back(i >= 70);
  }
  auto good = sweep(from_scores(s, r));
  CHECK(good.auroc == doctest::Approx(1.0).epsilon(1e-12));
  for (double& v : s) v = -v;
  auto bad = sweep(from_scores(s, r));
  CHECK(bad.auroc == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(good.aucea > bad.aucea);
}

TEST_CASE("six-sample AUROC equals the pairwise count") {
  auto s = from_scores({1, 2, 3, 4, 5, 6}, {false, false, true, false, true, true});
  CHECK(pairwise_auroc(s) == doctest::Approx(8.0 / 9.0));
  CHECK(sweep(s).auroc == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("random labels give chance AUROC") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<double> s;
  std::vector<bool> r;
  for (int i = 0; i < 10000; ++i) {
    s.push_back(unit(rng));
    r.push_back(unit(rng) < 0.3);
  }
  auto c = sweep(from_scores(s, r));
  CHECK(c.auroc >= 0.47);
  CHECK(c.auroc <= 0.53);
}

TEST_CASE("AUROC and AUCEA against stepwise oracles") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 20 + rng() % 60;
    std::vector<double> s(n);
    std::vector<bool> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(i);
      r[i] = rng() % 3 == 0;
    }
    r[0] = false;
    r[n - 1] = true;
    auto samples = from_scores(s, r);
    auto c = sweep(samples, n);
    CHECK(c.auroc == doctest::Approx(pairwise_auroc(samples)).epsilon(1e-12));
    CHECK(c.aucea == doctest::Approx(stepwise_aucea(r)).epsilon(1e-12));

    // Negated scores flip the ROC.
    std::vector<double> neg(s);
    for (double& v : neg) v = -v;
    CHECK(c.auroc + sweep(from_scores(neg, r), n).auroc == doctest::Approx(1.0).epsilon(1e-12));

    // Strictly increasing transforms keep AUROC.
    std::vector<double> warped(s);
    for (double& v : warped) v = std::exp(v / 10.0);
    CHECK(sweep(from_scores(warped, r), 200000).auroc == doctest::Approx(c.auroc).epsilon(1e-12));
    std::vector<double> affine(s);
    for (double& v : affine) v = 2.0 * v + 5.0;
    CHECK(sweep(from_scores(affine, r), n).auroc == doctest::Approx(c.auroc).epsilon(1e-12));
  }
}

TEST_CASE("ties share a threshold") {
  auto s = from_scores({1, 1, 1, 2}, {false, true, false, true});
  CHECK(pairwise_auroc(s) == doctest::Approx(0.75));
  CHECK(sweep(s).auroc == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("confusion counts are consistent") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> s;
  std::vector<bool> r;
  for (int i = 0; i < 500; ++i) {
    const bool rej = rng() % 4 == 0;
    r.push_back(rej);
    s.push_back(g(rng) + (rej ? 1.0 : 0.0));
  }
  auto c = sweep(from_scores(s, r), 300);
  REQUIRE(c.points.size() == 300);
  const double n_rej = static_cast<double>(std::count(r.begin(), r.end(), true));
  for (std::size_t k = 0; k < c.points.size(); ++k) {
    const auto& p = c.points[k];
    CHECK(p.tp + p.fp + p.tn + p.fn == 500);
    CHECK(p.fp + p.tn == n_rej);
    CHECK(p.coverage == doctest::Approx((p.tp + p.fp) / 500.0));
    if (p.tp + p.fp > 0) CHECK(p.effective_accuracy == doctest::Approx(double(p.tp) / (p.tp + p.fp)));
    if (k > 0) {
      CHECK(p.threshold > c.points[k - 1].threshold);
      CHECK(p.coverage >= c.points[k - 1].coverage);
    }
  }
  const auto& last = c.points.back();
  CHECK(last.coverage == 1.0);
  CHECK(last.fpr == 1.0);
  CHECK(last.tpr == 1.0);
  CHECK(last.effective_accuracy == doctest::Approx(1.0 - n_rej / 500.0));
  CHECK(c.points.front().coverage > 0.0);
  CHECK(c.aucea >= 0.0);
  CHECK(c.aucea <= 1.0);
}

TEST_CASE("degenerate and invalid sweeps") {
  auto flat = sweep(from_scores({2, 2, 2}, {false, true, false}));
  CHECK(flat.degenerate);
  CHECK(flat.points.size() == 1);
  CHECK(flat.auroc == doctest::Approx(0.5));

  CHECK_THROWS_AS(sweep(from_scores({1}, {true})), std::invalid_argument);
  CHECK_THROWS_AS(sweep(from_scores({1, 2}, {true, true})), std::invalid_argument);
  CHECK_THROWS_AS(sweep(from_scores({1, std::nan("")}, {true, false})), std::invalid_argument);
  CHECK_THROWS_AS(sweep(from_scores({1, INFINITY}, {true, false})), std::invalid_argument);
  CHECK_THROWS_AS(sweep(from_scores({1, 2}, {true, false}), 1), std::invalid_argument);
}

TEST_CASE("summary table") {
  EvalCurve a, b;
  a.auroc = 0.8;
  a.aucea = 0.9;
  b.auroc = 0.7;
  b.aucea = 0.95;
  auto rows = summarize({{"entropy", a}, {"margin", b}});
  CHECK(rows[0].delta_auroc_to_best == 0.0);
  CHECK(rows[1].delta_auroc_to_best == doctest::Approx(-0.1));
  const auto csv = summary_to_csv(rows);
  CHECK(csv.rfind("method,auroc,aucea,delta_auroc_to_best\nentropy,0.8", 0) == 0);
}

TEST_CASE("scores csv round trip and ranks") {
  std::vector<ScoreRow> rows{{{3, 0.5, true}, 1, 0}, {{1, -2.25, false}, 0, 0}, {{2, 0.5, false}, 1, 0}};
  assign_ranks(rows);
  CHECK(rows[1].rank == 1);
  CHECK(rows[2].rank == 2);  // tie with id 3, smaller id first
  CHECK(rows[0].rank == 3);

  const auto path = (std::filesystem::temp_directory_path() / "subfn_eval_scores.csv").string();
  write_scores_csv(path, rows, true, true);
  auto back = read_scores_csv(path);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].sample.id == rows[i].sample.id);
    CHECK(back[i].sample.unreliability == rows[i].sample.unreliability);
    CHECK(back[i].sample.ground_truth_reject == rows[i].sample.ground_truth_reject);
    CHECK(back[i].label == rows[i].label);
    CHECK(back[i].rank == rows[i].rank);
  }

  write_text_file(path, "id,unreliability,ground_truth_reject\n0,0.1,2\n");
  CHECK_THROWS_AS(read_scores_csv(path), ParseError);
  write_text_file(path, "id,score\n0,0.1\n");
  CHECK_THROWS_AS(read_scores_csv(path), ParseError);
  std::filesystem::remove(path);
}
