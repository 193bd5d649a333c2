// subfn: train toy ReLU networks, fit subfunction error-bound scorers, score
// samples, grid-search (rho, delta) and evaluate unreliability scores.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "subfn/bound.hpp"
#include "subfn/eval.hpp"
#include "subfn/net.hpp"
#include "subfn/patterns.hpp"
#include "subfn/pipeline.hpp"
#include "subfn/text_io.hpp"

namespace {

using namespace subfn;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--seed", c.seed, "Random seed")->default_val(0);
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
  cmd->add_flag("--quiet", c.quiet, "Suppress progress logging");
}

void log(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << msg << "\n";
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (auto part : split(text, ',')) {
    double v = 0.0;
    if (!parse_double(part, v)) throw UsageError(std::string("bad ") + what + " value '" + std::string(part) + "'");
    out.push_back(v);
  }
  return out;
}

double parse_rho(const std::string& text) {
  double rho = 0.0;
  if (!parse_double(text, rho) || !(rho > 0.0)) throw UsageError("--rho must be a positive number or 'inf'");
  return rho;
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw UsageError("--delta must lie in (0, 1]");
}

std::size_t resolve_layer(const MlpModel& model, int layer) {
  if (layer < 0) return model.last_relu_layer();
  auto relus = model.relu_layers();
  if (std::find(relus.begin(), relus.end(), static_cast<std::size_t>(layer)) == relus.end())
    throw UsageError("--layer " + std::to_string(layer) + " is not a ReLU layer");
  return static_cast<std::size_t>(layer);
}

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string dataset = "halfmoons";
  std::string data;
  std::size_t n = 2000;
  double noise = 0.1;
  std::string arch = "32,32";
  TrainConfig config;
  double val_fraction = 0.15;
};

int run_train(TrainArgs& a) {
  std::vector<std::size_t> widths;
  for (auto part : split(a.arch, ',')) {
    long long w = 0;
    if (!parse_int64(part, w) || w <= 0) throw UsageError("--arch widths must be positive integers, got '" + a.arch + "'");
    widths.push_back(static_cast<std::size_t>(w));
  }
  if (!(a.val_fraction >= 0.0 && a.val_fraction < 1.0)) throw UsageError("--val-fraction must lie in [0, 1)");

  LabeledDataset full;
  if (!a.data.empty()) {
    full = load_dataset_csv(a.data);
  } else if (a.dataset == "halfmoons") {
    full = make_halfmoons(a.n, a.noise, a.common.seed);
  } else {
    throw UsageError("unknown --dataset '" + a.dataset + "' (use halfmoons or --data <csv>)");
  }
  full.validate();

  const Split split = split_rows(full.size(), 1.0 - a.val_fraction, a.common.seed);
  const LabeledDataset train = subset(full, split.train_rows);
  const LabeledDataset val = subset(full, split.validation_rows);

  a.config.seed = a.common.seed;
  const auto start = std::chrono::steady_clock::now();
  MlpModel model = MlpModel::random(full.inputs.cols, widths, static_cast<std::size_t>(full.num_classes), a.common.seed);
  model = train_sgd(std::move(model), train, a.config);

  save_model(model, a.common.out);
  save_dataset_csv(train, a.common.out + ".train.csv");
  if (val.size() > 0) save_dataset_csv(val, a.common.out + ".val.csv");
  nlohmann::ordered_json manifest;
  manifest["seed"] = a.common.seed;
  manifest["source"] = a.data.empty() ? a.dataset : a.data;
  manifest["n"] = full.size();
  manifest["train_fraction"] = 1.0 - a.val_fraction;
  manifest["train_rows"] = split.train_rows;
  manifest["validation_rows"] = split.validation_rows;
  write_text_file(a.common.out + ".split.json", manifest.dump(2) + "\n");

  char buf[160];
  std::snprintf(buf, sizeof(buf), "trained %zu epochs in %.2fs: train acc %.4f", static_cast<std::size_t>(a.config.epochs),
                elapsed_s(start), accuracy(model, train));
  std::string msg = buf;
  if (val.size() > 0) {
    std::snprintf(buf, sizeof(buf), ", validation acc %.4f", accuracy(model, val));
    msg += buf;
  }
  log(a.common, msg);
  return 0;
}

// ---------------------------------------------------------------------------

struct SourceArgs {
  std::string model;
  std::string data;
  std::string patterns;
  int layer = -1;
};

void add_source(CLI::App* cmd, SourceArgs& s) {
  cmd->add_option("--model", s.model, "Model file");
  cmd->add_option("--data", s.data, "Dataset CSV (x0,...,label)");
  cmd->add_option("--patterns", s.patterns, "Pattern file (alternative to --model/--data)");
  cmd->add_option("--layer", s.layer, "ReLU layer index for patterns (-1 = last)")->default_val(-1);
}

PatternSet load_records(const SourceArgs& s) {
  const bool from_model = !s.model.empty() || !s.data.empty();
  if (from_model == !s.patterns.empty())
    throw UsageError("give exactly one of --model with --data, or --patterns");
  if (!from_model) return read_patterns(s.patterns);
  if (s.model.empty() || s.data.empty()) throw UsageError("--model and --data go together");
  const MlpModel model = load_model(s.model);
  const std::size_t layer = resolve_layer(model, s.layer);
  PatternSet set;
  set.m = model.layers()[layer].out_dim();
  set.records = extract_patterns(model, load_dataset_csv(s.data), layer);
  return set;
}

struct FitArgs {
  Common common;
  SourceArgs source;
  std::string rho;
  double delta = kDefaultDelta;
  long long m = -1;
};

int run_fit(FitArgs& a) {
  const double rho = parse_rho(a.rho);
  check_delta(a.delta);
  const auto start = std::chrono::steady_clock::now();
  const PatternSet set = load_records(a.source);
  if (a.m >= 0 && static_cast<std::size_t>(a.m) != set.m)
    throw UsageError("--m " + std::to_string(a.m) + " does not match pattern width " + std::to_string(set.m));
  const RegionIndex index = build_region_index(set.records);
  const FittedScorer scorer = fit(index, make_weighting(rho, index.m()), a.delta);
  save_scorer(scorer, a.common.out);
  char buf[200];
  std::snprintf(buf, sizeof(buf), "fit N=%zu M=%zu regions=%zu rho=%s delta=%s in %.3fs", index.n_total(), index.m(),
                index.size(), format_double(rho).c_str(), format_double(a.delta).c_str(), elapsed_s(start));
  log(a.common, buf);
  return 0;
}

struct ExportArgs {
  Common common;
  SourceArgs source;
};

int run_export(ExportArgs& a) {
  if (a.source.model.empty() || a.source.data.empty()) throw UsageError("export-patterns needs --model and --data");
  const PatternSet set = load_records(a.source);
  write_patterns(a.common.out, set.records, set.m);
  log(a.common, "wrote " + std::to_string(set.records.size()) + " patterns (m=" + std::to_string(set.m) + ")");
  return 0;
}

struct ScoreArgs {
  Common common;
  SourceArgs source;
  std::string scorer;
  std::string method = "subfunction";
  bool rank = false;
};

int run_score(ScoreArgs& a) {
  const ScoreMethod method = parse_score_method(a.method);
  std::optional<FittedScorer> scorer;
  if (method == ScoreMethod::subfunction) {
    if (a.scorer.empty()) throw UsageError("subfunction scores need --scorer");
    scorer = load_scorer(a.scorer);
  }
  std::vector<ScoreRow> rows;
  bool with_label = false;
  if (!a.source.patterns.empty()) {
    if (!a.source.model.empty() || !a.source.data.empty())
      throw UsageError("give exactly one of --model with --data, or --patterns");
    if (method != ScoreMethod::subfunction) throw UsageError("baseline methods need --model and --data");
    const PatternSet set = read_patterns(a.source.patterns);
    if (set.m != scorer->m())
      throw std::runtime_error("pattern width " + std::to_string(set.m) + " differs from scorer m=" +
                               std::to_string(scorer->m()));
    for (std::size_t i = 0; i < set.records.size(); ++i) {
      const auto& rec = set.records[i];
      ScoreRow r;
      r.sample = {static_cast<long long>(i), score(*scorer, rec.pattern).log_bound, rec.error > 0.5};
      if (rec.label) {
        r.label = *rec.label;
        with_label = true;
      }
      rows.push_back(r);
    }
  } else {
    if (a.source.model.empty() || a.source.data.empty())
      throw UsageError("give exactly one of --model with --data, or --patterns");
    const MlpModel model = load_model(a.source.model);
    const std::size_t layer = resolve_layer(model, a.source.layer);
    if (scorer && model.layers()[layer].out_dim() != scorer->m())
      throw std::runtime_error("layer width " + std::to_string(model.layers()[layer].out_dim()) +
                               " differs from scorer m=" + std::to_string(scorer->m()));
    rows = score_dataset(model, load_dataset_csv(a.source.data), layer, method, scorer ? &*scorer : nullptr);
    with_label = true;
  }
  if (a.rank) assign_ranks(rows);
  write_scores_csv(a.common.out, rows, with_label, a.rank);
  log(a.common, "scored " + std::to_string(rows.size()) + " samples with " + method_name(method));
  return 0;
}

struct SweepArgs {
  Common common;
  std::string model;
  std::string train;
  std::string val;
  std::string train_patterns;
  std::string val_patterns;
  int layer = -1;
  std::string rhos;
  std::string deltas;
  std::string metric = "aucea";
  std::size_t n_thresholds = kDefaultThresholds;
};

int run_sweep_cmd(SweepArgs& a) {
  SweepGrid grid;
  grid.rhos = a.rhos.empty() ? default_rho_grid() : parse_list(a.rhos, "--rhos");
  grid.deltas = a.deltas.empty() ? default_delta_grid() : parse_list(a.deltas, "--deltas");
  if (a.metric == "aucea")
    grid.metric = SelectionMetric::aucea;
  else if (a.metric == "auroc")
    grid.metric = SelectionMetric::auroc;
  else
    throw UsageError("--metric must be aucea or auroc");
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  PatternSet train, val;
  if (!a.train_patterns.empty() || !a.val_patterns.empty()) {
    if (a.train_patterns.empty() || a.val_patterns.empty() || !a.model.empty())
      throw UsageError("pattern-file sweeps need --train-patterns and --val-patterns and no --model");
    train = read_patterns(a.train_patterns);
    val = read_patterns(a.val_patterns);
  } else {
    if (a.model.empty() || a.train.empty() || a.val.empty())
      throw UsageError("sweep needs --model, --train and --val (or pattern files)");
    const MlpModel model = load_model(a.model);
    const std::size_t layer = resolve_layer(model, a.layer);
    train.m = val.m = model.layers()[layer].out_dim();
    train.records = extract_patterns(model, load_dataset_csv(a.train), layer);
    val.records = extract_patterns(model, load_dataset_csv(a.val), layer);
  }
  if (train.m != val.m) throw std::runtime_error("train and validation pattern widths differ");

  const auto start = std::chrono::steady_clock::now();
  const RegionIndex index = build_region_index(train.records);
  const SweepResult result = run_sweep(index, val.records, grid, a.n_thresholds);

  std::string csv = "rho,delta,aucea,auroc,selected\n";
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    csv += format_double(c.rho) + "," + format_double(c.delta) + "," + format_double(c.aucea) + "," +
           format_double(c.auroc) + "," + (i == result.best ? "1" : "0") + "\n";
  }
  write_text_file(a.common.out, csv);
  const auto& best = result.cells[result.best];
  char buf[240];
  std::snprintf(buf, sizeof(buf), "best rho=%s delta=%s aucea=%.6f auroc=%.6f (%zu cells, %.2fs)",
                format_double(best.rho).c_str(), format_double(best.delta).c_str(), best.aucea, best.auroc,
                result.cells.size(), elapsed_s(start));
  log(a.common, buf);
  return 0;
}

struct HeatmapArgs {
  Common common;
  std::string scorer;
  std::string model;
  int layer = -1;
  double x0 = -2, x1 = 3, y0 = -2, y1 = 2;
  std::size_t resolution = 200;
};

int run_heatmap(HeatmapArgs& a) {
  const FittedScorer scorer = load_scorer(a.scorer);
  const MlpModel model = load_model(a.model);
  if (model.input_dim() != 2) throw UsageError("heatmap needs a model with 2 inputs");
  if (a.resolution == 0) throw UsageError("--resolution must be positive");
  const std::size_t layer = resolve_layer(model, a.layer);
  if (model.layers()[layer].out_dim() != scorer.m()) throw std::runtime_error("layer width differs from scorer m");
  const auto grid = heatmap(scorer, model, layer, a.x0, a.x1, a.y0, a.y1, a.resolution);
  write_text_file(a.common.out, heatmap_to_csv(grid));
  log(a.common, "wrote " + std::to_string(grid.size()) + " heatmap cells");
  return 0;
}

struct EvalArgs {
  Common common;
  std::vector<std::string> scores;
  std::size_t n_thresholds = kDefaultThresholds;
};

int run_eval(EvalArgs& a) {
  if (a.scores.empty()) throw UsageError("eval needs at least one --scores file");
  std::vector<std::pair<std::string, EvalCurve>> curves;
  std::vector<ScoreRow> reference;
  std::set<std::string> names;
  for (const auto& spec : a.scores) {
    std::string name, path = spec;
    if (auto eq = spec.find('='); eq != std::string::npos) {
      name = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      name = std::filesystem::path(spec).stem().string();
    }
    if (!names.insert(name).second) throw UsageError("duplicate method name '" + name + "'");
    auto rows = read_scores_csv(path);
    std::sort(rows.begin(), rows.end(), [](const ScoreRow& x, const ScoreRow& y) { return x.sample.id < y.sample.id; });
    if (curves.empty()) {
      reference = rows;
    } else {
      for (std::size_t i = 0; i < std::max(rows.size(), reference.size()); ++i) {
        const bool same = i < rows.size() && i < reference.size() && rows[i].sample.id == reference[i].sample.id &&
                          rows[i].sample.ground_truth_reject == reference[i].sample.ground_truth_reject;
        if (!same) {
          const long long id = i < rows.size() ? rows[i].sample.id : reference[i].sample.id;
          throw std::runtime_error(path + ": sample id " + std::to_string(id) +
                                   " does not match the first scores file (id or ground truth)");
        }
      }
    }
    std::vector<ScoredSample> samples;
    for (const auto& r : rows) samples.push_back(r.sample);
    curves.emplace_back(name, sweep(samples, a.n_thresholds));
  }
  const auto rows = summarize(curves);
  write_text_file(a.common.out, summary_to_csv(rows));
  for (const auto& r : rows) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-12s auroc=%.4f aucea=%.4f delta=%+.4f", r.method.c_str(), r.auroc, r.aucea,
                  r.delta_auroc_to_best);
    log(a.common, buf);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-sample unreliability scores from activation-region error bounds"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train an MLP on halfmoons or a CSV dataset");
  add_common(c_train, train.common);
  c_train->add_option("--dataset", train.dataset, "Generated dataset name")->default_val("halfmoons");
  c_train->add_option("--data", train.data, "Dataset CSV instead of a generated one");
  c_train->add_option("--n", train.n, "Generated sample count")->default_val(2000);
  c_train->add_option("--noise", train.noise, "Generated coordinate noise")->default_val(0.1);
  c_train->add_option("--arch", train.arch, "Hidden widths, comma separated")->default_val("32,32");
  c_train->add_option("--epochs", train.config.epochs)->default_val(100);
  c_train->add_option("--lr", train.config.lr)->default_val(0.1);
  c_train->add_option("--momentum", train.config.momentum)->default_val(0.9);
  c_train->add_option("--weight-decay", train.config.weight_decay)->default_val(5e-4);
  c_train->add_option("--batch-size", train.config.batch_size)->default_val(32);
  c_train->add_option("--val-fraction", train.val_fraction, "Held-out validation fraction")->default_val(0.15);

  FitArgs fitargs;
  auto* c_fit = app.add_subcommand("fit", "Fit a scorer from a model+dataset or a pattern file");
  add_common(c_fit, fitargs.common);
  add_source(c_fit, fitargs.source);
  c_fit->add_option("--rho", fitargs.rho, "Gaussian kernel width over Hamming distance ('inf' = uniform)")->required();
  c_fit->add_option("--delta", fitargs.delta, "Bound confidence parameter in (0, 1]")->default_val(kDefaultDelta);
  c_fit->add_option("--m", fitargs.m, "Expected pattern width (checked)");

  ExportArgs exportargs;
  auto* c_export = app.add_subcommand("export-patterns", "Write activation patterns and errors to a pattern file");
  add_common(c_export, exportargs.common);
  add_source(c_export, exportargs.source);

  ScoreArgs scoreargs;
  auto* c_score = app.add_subcommand("score", "Score samples; writes id,unreliability,ground_truth_reject[,label]");
  add_common(c_score, scoreargs.common);
  add_source(c_score, scoreargs.source);
  c_score->add_option("--scorer", scoreargs.scorer, "Scorer file from 'fit'");
  c_score->add_option("--method", scoreargs.method, "subfunction | entropy | maxresp | margin")->default_val("subfunction");
  c_score->add_flag("--rank", scoreargs.rank, "Add a rank column (1 = most reliable)");

  SweepArgs sweepargs;
  auto* c_sweep = app.add_subcommand("sweep", "Grid-search (rho, delta) on validation misclassification");
  add_common(c_sweep, sweepargs.common);
  c_sweep->add_option("--model", sweepargs.model);
  c_sweep->add_option("--train", sweepargs.train, "Training dataset CSV");
  c_sweep->add_option("--val", sweepargs.val, "Validation dataset CSV");
  c_sweep->add_option("--train-patterns", sweepargs.train_patterns);
  c_sweep->add_option("--val-patterns", sweepargs.val_patterns);
  c_sweep->add_option("--layer", sweepargs.layer)->default_val(-1);
  c_sweep->add_option("--rhos", sweepargs.rhos, "Comma-separated rho grid");
  c_sweep->add_option("--deltas", sweepargs.deltas, "Comma-separated delta grid");
  c_sweep->add_option("--metric", sweepargs.metric, "aucea | auroc")->default_val("aucea");
  c_sweep->add_option("--n-thresholds", sweepargs.n_thresholds)->default_val(kDefaultThresholds);

  HeatmapArgs heatargs;
  auto* c_heat = app.add_subcommand("heatmap", "Score a 2D lattice; writes x,y,log_bound");
  add_common(c_heat, heatargs.common);
  c_heat->add_option("--scorer", heatargs.scorer)->required();
  c_heat->add_option("--model", heatargs.model)->required();
  c_heat->add_option("--layer", heatargs.layer)->default_val(-1);
  c_heat->add_option("--x0", heatargs.x0)->default_val(-2.0);
  c_heat->add_option("--x1", heatargs.x1)->default_val(3.0);
  c_heat->add_option("--y0", heatargs.y0)->default_val(-2.0);
  c_heat->add_option("--y1", heatargs.y1)->default_val(2.0);
  c_heat->add_option("--resolution", heatargs.resolution)->default_val(200);

  EvalArgs evalargs;
  auto* c_eval = app.add_subcommand("eval", "AUROC/AUCEA summary over methods' scores files");
  add_common(c_eval, evalargs.common);
  c_eval->add_option("--scores", evalargs.scores, "[name=]path, repeatable")->required();
  c_eval->add_option("--n-thresholds", evalargs.n_thresholds)->default_val(kDefaultThresholds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_train) return run_train(train);
    if (*c_fit) return run_fit(fitargs);
    if (*c_export) return run_export(exportargs);
    if (*c_score) return run_score(scoreargs);
    if (*c_sweep) return run_sweep_cmd(sweepargs);
    if (*c_heat) return run_heatmap(heatargs);
    if (*c_eval) return run_eval(evalargs);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
