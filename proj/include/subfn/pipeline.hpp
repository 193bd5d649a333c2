#pragma once

// End-to-end steps shared by the command-line tool and the integration tests:
// pattern extraction from a model, (rho, delta) grid search, heatmaps and
// baseline scores.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "subfn/bound.hpp"
#include "subfn/eval.hpp"
#include "subfn/net.hpp"
#include "subfn/patterns.hpp"

namespace subfn {

// Pattern of `layer` for every row, with 0/1 misclassification error and the
// true label attached.
std::vector<PatternRecord> extract_patterns(const MlpModel& model, const LabeledDataset& data, std::size_t layer);

enum class SelectionMetric { aucea, auroc };

struct SweepGrid {
  std::vector<double> rhos;
  std::vector<double> deltas;
  SelectionMetric metric = SelectionMetric::aucea;

  void validate() const;
};

// Grid used for the small MLPs here (last hidden layer of ~32 units).
std::vector<double> default_rho_grid();
std::vector<double> default_delta_grid();

struct SweepCell {
  double rho = 0.0;
  double delta = 0.0;
  double auroc = 0.0;
  double aucea = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // grid order: rho outer, delta inner
  std::size_t best = 0;
};

// Samples with error > 0.5 count as ground-truth rejects.
std::vector<ScoredSample> score_records(const FittedScorer& scorer, std::span<const PatternRecord> records);

// Fits one scorer per rho on `train` and scores `validation` for every delta.
// The best cell maximizes the selection metric; ties go to smaller rho, then
// smaller delta.
SweepResult run_sweep(const RegionIndex& train, std::span<const PatternRecord> validation, const SweepGrid& grid,
                      std::size_t n_thresholds = kDefaultThresholds);

// Standalone evaluation of one grid cell.
SweepCell evaluate_cell(const RegionIndex& train, std::span<const PatternRecord> validation, double rho,
                        double delta, std::size_t n_thresholds = kDefaultThresholds);

std::size_t select_best(std::span<const SweepCell> cells, SelectionMetric metric);

struct HeatmapPoint {
  double x = 0.0;
  double y = 0.0;
  double log_bound = 0.0;
};

// resolution x resolution lattice over [x0, x1] x [y0, y1] including the
// corners, y outer and x inner. Requires a 2-input model.
std::vector<HeatmapPoint> heatmap(const FittedScorer& scorer, const MlpModel& model, std::size_t layer, double x0,
                                  double x1, double y0, double y1, std::size_t resolution);
std::string heatmap_to_csv(std::span<const HeatmapPoint> points);

enum class ScoreMethod { subfunction, entropy, max_response, margin };

ScoreMethod parse_score_method(const std::string& name);
std::string method_name(ScoreMethod method);

// Scores CSV rows for `data`; ground truth is misclassification by `model`.
// `scorer` is only consulted for ScoreMethod::subfunction.
std::vector<ScoreRow> score_dataset(const MlpModel& model, const LabeledDataset& data, std::size_t layer,
                                    ScoreMethod method, const FittedScorer* scorer);

}  // namespace subfn
