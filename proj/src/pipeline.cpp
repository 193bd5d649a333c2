#include "subfn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "subfn/text_io.hpp"

namespace subfn {

std::vector<PatternRecord> extract_patterns(const MlpModel& model, const LabeledDataset& data, std::size_t layer) {
  std::vector<PatternRecord> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.inputs.row(i);
    PatternRecord r;
    r.pattern = capture_pattern(model, x, layer);
    r.error = predict_class(model, x) == data.labels[i] ? 0.0 : 1.0;
    r.label = data.labels[i];
    out.push_back(std::move(r));
  }
  return out;
}

void SweepGrid::validate() const {
  if (rhos.empty() || deltas.empty()) throw std::invalid_argument("sweep grid is empty");
  for (double r : rhos)
    if (!(r > 0.0)) throw std::invalid_argument("grid rho must be positive");
  for (double d : deltas)
    if (!(d > 0.0 && d <= 1.0)) throw std::invalid_argument("grid delta must lie in (0, 1]");
}

std::vector<double> default_rho_grid() { return {1, 2, 4, 6, 8, 12, 16, 24, 32}; }

std::vector<double> default_delta_grid() { return {0.001, 0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

std::vector<ScoredSample> score_records(const FittedScorer& scorer, std::span<const PatternRecord> records) {
  std::vector<ScoredSample> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    out.push_back({static_cast<long long>(i), score(scorer, records[i].pattern).log_bound, records[i].error > 0.5});
  return out;
}

std::size_t select_best(std::span<const SweepCell> cells, SelectionMetric metric) {
  if (cells.empty()) throw std::invalid_argument("no sweep cells to select from");
  auto value = [metric](const SweepCell& c) { return metric == SelectionMetric::aucea ? c.aucea : c.auroc; };
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const SweepCell& c = cells[i];
    const SweepCell& b = cells[best];
    if (value(c) > value(b) || (value(c) == value(b) && (c.rho < b.rho || (c.rho == b.rho && c.delta < b.delta))))
      best = i;
  }
  return best;
}

SweepResult run_sweep(const RegionIndex& train, std::span<const PatternRecord> validation, const SweepGrid& grid,
                      std::size_t n_thresholds) {
  grid.validate();
  SweepResult result;
  for (double rho : grid.rhos) {
    // Fitted tables do not depend on delta, so one fit serves the whole row.
    const FittedScorer scorer = fit(train, make_weighting(rho, train.m()), grid.deltas.front());
    std::vector<ScoreComponents> components;
    components.reserve(validation.size());
    for (const auto& r : validation) components.push_back(score_components(scorer, r.pattern));
    for (double delta : grid.deltas) {
      std::vector<ScoredSample> samples;
      samples.reserve(validation.size());
      for (std::size_t i = 0; i < validation.size(); ++i)
        samples.push_back({static_cast<long long>(i), make_report(components[i], delta, train.n_total()).log_bound,
                           validation[i].error > 0.5});
      const EvalCurve curve = sweep(samples, n_thresholds);
      result.cells.push_back({rho, delta, curve.auroc, curve.aucea});
    }
  }
  result.best = select_best(result.cells, grid.metric);
  return result;
}

SweepCell evaluate_cell(const RegionIndex& train, std::span<const PatternRecord> validation, double rho,
                        double delta, std::size_t n_thresholds) {
  const FittedScorer scorer = fit(train, make_weighting(rho, train.m()), delta);
  const EvalCurve curve = sweep(score_records(scorer, validation), n_thresholds);
  return {rho, delta, curve.auroc, curve.aucea};
}

std::vector<HeatmapPoint> heatmap(const FittedScorer& scorer, const MlpModel& model, std::size_t layer, double x0,
                                  double x1, double y0, double y1, std::size_t resolution) {
  if (model.input_dim() != 2) throw std::invalid_argument("heatmap needs a model with 2 inputs");
  if (resolution == 0) throw std::invalid_argument("heatmap resolution must be positive");
  auto lattice = [resolution](double lo, double hi, std::size_t i) {
    if (resolution == 1) return lo;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
  };
  std::vector<HeatmapPoint> out;
  out.reserve(resolution * resolution);
  for (std::size_t iy = 0; iy < resolution; ++iy) {
    for (std::size_t ix = 0; ix < resolution; ++ix) {
      const double xy[2] = {lattice(x0, x1, ix), lattice(y0, y1, iy)};
      const auto p = capture_pattern(model, xy, layer);
      out.push_back({xy[0], xy[1], score(scorer, p).log_bound});
    }
  }
  return out;
}

std::string heatmap_to_csv(std::span<const HeatmapPoint> points) {
  std::string out = "x,y,log_bound\n";
  for (const auto& p : points)
    out += format_double(p.x) + "," + format_double(p.y) + "," + format_double(p.log_bound) + "\n";
  return out;
}

ScoreMethod parse_score_method(const std::string& name) {
  if (name == "subfunction") return ScoreMethod::subfunction;
  if (name == "entropy") return ScoreMethod::entropy;
  if (name == "maxresp" || name == "max_response") return ScoreMethod::max_response;
  if (name == "margin") return ScoreMethod::margin;
  throw std::invalid_argument("unknown score method '" + name + "' (subfunction, entropy, maxresp, margin)");
}

std::string method_name(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::subfunction: return "subfunction";
    case ScoreMethod::entropy: return "entropy";
    case ScoreMethod::max_response: return "maxresp";
    case ScoreMethod::margin: return "margin";
  }
  return "unknown";
}

std::vector<ScoreRow> score_dataset(const MlpModel& model, const LabeledDataset& data, std::size_t layer,
                                    ScoreMethod method, const FittedScorer* scorer) {
  if (method == ScoreMethod::subfunction && scorer == nullptr)
    throw std::invalid_argument("subfunction scores need a fitted scorer");
  std::vector<ScoreRow> rows;
  rows.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.inputs.row(i);
    const auto logits = forward(model, x);
    const auto probs = softmax(logits);
    const int predicted = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    ScoreRow r;
    r.sample.id = static_cast<long long>(i);
    r.sample.ground_truth_reject = predicted != data.labels[i];
    r.label = data.labels[i];
    switch (method) {
      case ScoreMethod::subfunction:
        r.sample.unreliability = score(*scorer, capture_pattern(model, x, layer)).log_bound;
        break;
      case ScoreMethod::entropy: r.sample.unreliability = entropy_score(probs); break;
      case ScoreMethod::max_response: r.sample.unreliability = max_response_score(probs); break;
      case ScoreMethod::margin: r.sample.unreliability = margin_score(probs); break;
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace subfn
