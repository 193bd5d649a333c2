#pragma once

// Baseline unreliability scores and the accept/reject evaluation harness.
//
// Convention: every score is "higher = less reliable". A threshold t accepts a
// sample iff its score <= t. Confusion counts treat acceptance as the
// predicted-positive class and a reliable (non-reject) sample as the true
// positive class, so coverage = (TP+FP)/total and effective accuracy =
// TP/(TP+FP) is the accuracy over accepted samples.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace subfn {

inline constexpr std::size_t kDefaultThresholds = 1000;

// Shannon entropy in nats, 0 log 0 = 0.
double entropy_score(std::span<const double> probs);
// 1 - max p
double max_response_score(std::span<const double> probs);
// 1 - (p_(1) - p_(2))
double margin_score(std::span<const double> probs);

struct ScoredSample {
  long long id = 0;
  double unreliability = 0.0;
  bool ground_truth_reject = false;
};

struct CurvePoint {
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double coverage = 0.0;
  double effective_accuracy = 0.0;  // NaN when nothing is accepted
  double fpr = 0.0;
  double tpr = 0.0;
};

struct EvalCurve {
  std::vector<CurvePoint> points;  // thresholds ascending
  double auroc = 0.0;
  double aucea = 0.0;
  bool degenerate = false;  // all scores equal: a single threshold
};

// Throws std::invalid_argument for fewer than 2 samples, a single ground-truth
// class, non-finite scores, or n_thresholds < 2.
EvalCurve sweep(std::span<const ScoredSample> samples, std::size_t n_thresholds = kDefaultThresholds);

struct SummaryRow {
  std::string method;
  double auroc = 0.0;
  double aucea = 0.0;
  double delta_auroc_to_best = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<std::pair<std::string, EvalCurve>>& curves);
std::string summary_to_csv(std::span<const SummaryRow> rows);

// Scores CSV: `id,unreliability,ground_truth_reject[,label][,rank]` with header.
struct ScoreRow {
  ScoredSample sample;
  long long label = -1;  // -1 when absent
  long long rank = 0;    // 0 when absent
};

std::string scores_to_csv(std::span<const ScoreRow> rows, bool with_label, bool with_rank);
void write_scores_csv(const std::string& path, std::span<const ScoreRow> rows, bool with_label, bool with_rank);
std::vector<ScoreRow> read_scores_csv(const std::string& path);

// 1-based ranks, 1 = most reliable (lowest score); ties broken by id.
void assign_ranks(std::vector<ScoreRow>& rows);

}  // namespace subfn
