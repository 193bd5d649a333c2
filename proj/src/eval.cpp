#include "subfn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "subfn/text_io.hpp"

namespace subfn {

namespace {

void check_distribution(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("empty probability vector");
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw std::invalid_argument("probabilities must be finite and non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("probabilities sum to " + format_double(sum));
}

// Two largest entries, largest first.
std::pair<double, double> top_two(std::span<const double> probs) {
  if (probs.size() < 2) throw std::invalid_argument("score needs at least two classes");
  double a = -1.0, b = -1.0;
  for (double p : probs) {
    if (p > a) {
      b = a;
      a = p;
    } else if (p > b) {
      b = p;
    }
  }
  return {a, b};
}

double trapezoid(std::vector<std::pair<double, double>> pts) {
  std::stable_sort(pts.begin(), pts.end());
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
  return area;
}

}  // namespace

double entropy_score(std::span<const double> probs) {
  check_distribution(probs);
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double max_response_score(std::span<const double> probs) {
  check_distribution(probs);
  return 1.0 - top_two(probs).first;
}

double margin_score(std::span<const double> probs) {
  check_distribution(probs);
  auto [a, b] = top_two(probs);
  return 1.0 - (a - b);
}

EvalCurve sweep(std::span<const ScoredSample> samples, std::size_t n_thresholds) {
  if (samples.size() < 2) throw std::invalid_argument("sweep needs at least two samples");
  if (n_thresholds < 2) throw std::invalid_argument("sweep needs at least two thresholds");
  std::vector<std::pair<double, bool>> sorted;  // (score, reject)
  sorted.reserve(samples.size());
  std::size_t n_reject = 0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.unreliability))
      throw std::invalid_argument("sample " + std::to_string(s.id) + " has a non-finite score");
    sorted.emplace_back(s.unreliability, s.ground_truth_reject);
    if (s.ground_truth_reject) ++n_reject;
  }
  const std::size_t n = samples.size();
  const std::size_t n_reliable = n - n_reject;
  if (n_reject == 0 || n_reliable == 0)
    throw std::invalid_argument("ground truth has a single class; AUROC is undefined");
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // reliable_prefix[k] = number of reliable samples among the k lowest scores.
  std::vector<std::size_t> reliable_prefix(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) reliable_prefix[k + 1] = reliable_prefix[k] + (sorted[k].second ? 0 : 1);

  const double lo = sorted.front().first;
  const double hi = sorted.back().first;
  EvalCurve curve;
  curve.degenerate = lo == hi;
  std::vector<double> thresholds;
  if (curve.degenerate) {
    thresholds.push_back(lo);
  } else {
    thresholds.resize(n_thresholds);
    for (std::size_t k = 0; k < n_thresholds; ++k)
      thresholds[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n_thresholds - 1);
    thresholds.back() = hi;
  }

  std::vector<std::pair<double, double>> roc{{0.0, 0.0}, {1.0, 1.0}};
  std::vector<std::pair<double, double>> cea;
  curve.points.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto accepted = static_cast<std::size_t>(
        std::upper_bound(sorted.begin(), sorted.end(), t, [](double v, const auto& s) { return v < s.first; }) -
        sorted.begin());
    CurvePoint p;
    p.threshold = t;
    p.tp = reliable_prefix[accepted];
    p.fp = accepted - p.tp;
    p.fn = n_reliable - p.tp;
    p.tn = n_reject - p.fp;
    p.coverage = static_cast<double>(accepted) / static_cast<double>(n);
    p.effective_accuracy = accepted == 0 ? std::numeric_limits<double>::quiet_NaN()
                                         : static_cast<double>(p.tp) / static_cast<double>(accepted);
    p.fpr = static_cast<double>(p.fp) / static_cast<double>(n_reject);
    p.tpr = static_cast<double>(p.tp) / static_cast<double>(n_reliable);
    roc.emplace_back(p.fpr, p.tpr);
    if (accepted > 0) cea.emplace_back(p.coverage, p.effective_accuracy);
    curve.points.push_back(p);
  }
  curve.auroc = trapezoid(std::move(roc));
  curve.aucea = trapezoid(std::move(cea));
  return curve;
}

std::vector<SummaryRow> summarize(const std::vector<std::pair<std::string, EvalCurve>>& curves) {
  std::vector<SummaryRow> rows;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [name, c] : curves) best = std::max(best, c.auroc);
  for (const auto& [name, c] : curves) rows.push_back({name, c.auroc, c.aucea, c.auroc - best});
  return rows;
}

std::string summary_to_csv(std::span<const SummaryRow> rows) {
  std::string out = "method,auroc,aucea,delta_auroc_to_best\n";
  for (const auto& r : rows)
    out += r.method + "," + format_double(r.auroc) + "," + format_double(r.aucea) + "," +
           format_double(r.delta_auroc_to_best) + "\n";
  return out;
}

std::string scores_to_csv(std::span<const ScoreRow> rows, bool with_label, bool with_rank) {
  std::string out = "id,unreliability,ground_truth_reject";
  if (with_label) out += ",label";
  if (with_rank) out += ",rank";
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.sample.id) + "," + format_double(r.sample.unreliability) + "," +
           (r.sample.ground_truth_reject ? "1" : "0");
    if (with_label) out += "," + std::to_string(r.label);
    if (with_rank) out += "," + std::to_string(r.rank);
    out += '\n';
  }
  return out;
}

void write_scores_csv(const std::string& path, std::span<const ScoreRow> rows, bool with_label, bool with_rank) {
  write_text_file(path, scores_to_csv(rows, with_label, with_rank));
}

std::vector<ScoreRow> read_scores_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> column;
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty()) continue;
    auto fields = split(view, ',');
    if (column.empty()) {
      for (std::size_t c = 0; c < fields.size(); ++c) column[std::string(trim(fields[c]))] = c;
      for (const char* need : {"id", "unreliability", "ground_truth_reject"})
        if (!column.count(need)) throw ParseError(path, line_no, std::string("header lacks column '") + need + "'");
      continue;
    }
    if (fields.size() != column.size()) throw ParseError(path, line_no, "wrong number of fields");
    ScoreRow r;
    long long v = 0;
    if (!parse_int64(fields[column["id"]], r.sample.id)) throw ParseError(path, line_no, "bad id");
    if (!parse_double(fields[column["unreliability"]], r.sample.unreliability))
      throw ParseError(path, line_no, "bad unreliability");
    if (!parse_int64(fields[column["ground_truth_reject"]], v) || (v != 0 && v != 1))
      throw ParseError(path, line_no, "ground_truth_reject must be 0 or 1");
    r.sample.ground_truth_reject = v == 1;
    if (column.count("label") && !parse_int64(fields[column["label"]], r.label))
      throw ParseError(path, line_no, "bad label");
    if (column.count("rank") && !parse_int64(fields[column["rank"]], r.rank))
      throw ParseError(path, line_no, "bad rank");
    rows.push_back(r);
  }
  if (column.empty()) throw ParseError(path, 0, "empty scores file");
  return rows;
}

void assign_ranks(std::vector<ScoreRow>& rows) {
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].sample.unreliability != rows[b].sample.unreliability)
      return rows[a].sample.unreliability < rows[b].sample.unreliability;
    return rows[a].sample.id < rows[b].sample.id;
  });
  for (std::size_t k = 0; k < order.size(); ++k) rows[order[k]].rank = static_cast<long long>(k + 1);
}

}  // namespace subfn
