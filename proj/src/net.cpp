#include "subfn/net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "subfn/text_io.hpp"

namespace subfn {

namespace {

// Independent generator per consumer so equal seeds do not yield equal shuffles.
enum class Stream : std::uint32_t { init = 1, batches = 2, halfmoons = 3, split = 4 };

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

void check_input(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim())
    throw std::invalid_argument("input has " + std::to_string(x.size()) + " entries, model expects " +
                                std::to_string(model.input_dim()));
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("input contains a non-finite value");
}

// out = W x + b
void affine(const DenseLayer& layer, std::span<const double> x, std::vector<double>& out) {
  out.resize(layer.out_dim());
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    const auto w = layer.weights.row(r);
    double acc = layer.bias[r];
    for (std::size_t c = 0; c < w.size(); ++c) acc += w[c] * x[c];
    out[r] = acc;
  }
}

void apply_activation(Activation a, std::vector<double>& v) {
  if (a == Activation::relu)
    for (double& x : v) x = x > 0.0 ? x : 0.0;
}

}  // namespace

MlpModel::MlpModel(std::size_t input_dim, std::vector<DenseLayer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  validate();
}

MlpModel MlpModel::random(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                          std::uint64_t seed) {
  std::vector<std::size_t> widths(hidden.begin(), hidden.end());
  widths.push_back(output_dim);
  auto rng = make_rng(seed, Stream::init);
  std::vector<DenseLayer> layers;
  std::size_t fan_in = input_dim;
  for (std::size_t t = 0; t < widths.size(); ++t) {
    if (widths[t] == 0) throw std::invalid_argument("layer widths must be positive");
    DenseLayer layer;
    layer.weights = Matrix(widths[t], fan_in);
    layer.bias.assign(widths[t], 0.0);
    layer.activation = t + 1 == widths.size() ? Activation::identity : Activation::relu;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> init(-bound, bound);
    for (double& w : layer.weights.values) w = init(rng);
    for (double& b : layer.bias) b = init(rng);
    layers.push_back(std::move(layer));
    fan_in = widths[t];
  }
  return MlpModel(input_dim, std::move(layers));
}

std::vector<std::size_t> MlpModel::relu_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < layers_.size(); ++t)
    if (layers_[t].activation == Activation::relu) out.push_back(t);
  return out;
}

std::size_t MlpModel::last_relu_layer() const {
  auto relus = relu_layers();
  if (relus.empty()) throw std::invalid_argument("model has no ReLU layer");
  return relus.back();
}

void MlpModel::validate() const {
  if (input_dim_ == 0) throw std::invalid_argument("model input_dim must be positive");
  if (layers_.empty()) throw std::invalid_argument("model has no layers");
  std::size_t in = input_dim_;
  for (std::size_t t = 0; t < layers_.size(); ++t) {
    const DenseLayer& l = layers_[t];
    if (l.weights.rows == 0) throw std::invalid_argument("layer " + std::to_string(t) + " has zero width");
    if (l.weights.cols != in)
      throw std::invalid_argument("layer " + std::to_string(t) + " expects " + std::to_string(l.weights.cols) +
                                  " inputs, previous layer gives " + std::to_string(in));
    if (l.weights.values.size() != l.weights.rows * l.weights.cols || l.bias.size() != l.weights.rows)
      throw std::invalid_argument("layer " + std::to_string(t) + " has inconsistent storage");
    for (double w : l.weights.values)
      if (!std::isfinite(w)) throw std::invalid_argument("layer " + std::to_string(t) + " has a non-finite weight");
    for (double b : l.bias)
      if (!std::isfinite(b)) throw std::invalid_argument("layer " + std::to_string(t) + " has a non-finite bias");
    in = l.weights.rows;
  }
  if (layers_.back().activation != Activation::identity)
    throw std::invalid_argument("final layer must be an identity (logit) layer");
}

void LabeledDataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset is empty");
  if (inputs.rows != labels.size()) throw std::invalid_argument("dataset inputs and labels differ in length");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
}

std::vector<double> forward(const MlpModel& model, std::span<const double> x) {
  check_input(model, x);
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (const auto& layer : model.layers()) {
    affine(layer, cur, next);
    apply_activation(layer.activation, next);
    std::swap(cur, next);
  }
  return cur;
}

ActivationPattern capture_pattern(const MlpModel& model, std::span<const double> x, std::size_t layer_index) {
  if (layer_index >= model.layers().size() || model.layers()[layer_index].activation != Activation::relu)
    throw std::invalid_argument("layer " + std::to_string(layer_index) + " is not a ReLU layer");
  check_input(model, x);
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t t = 0;; ++t) {
    const DenseLayer& layer = model.layers()[t];
    affine(layer, cur, next);
    if (t == layer_index) {
      ActivationPattern p(next.size());
      for (std::size_t j = 0; j < next.size(); ++j)
        if (next[j] > 0.0) p.set(j);
      return p;
    }
    apply_activation(layer.activation, next);
    std::swap(cur, next);
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double hi = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - hi);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

int predict_class(const MlpModel& model, std::span<const double> x) {
  auto logits = forward(model, x);
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double accuracy(const MlpModel& model, const LabeledDataset& data) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predict_class(model, data.inputs.row(i)) == data.labels[i]) ++correct;
  return data.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
}

LossAndGradient loss_and_gradient(const MlpModel& model, const LabeledDataset& data,
                                  std::span<const std::size_t> rows) {
  const auto& layers = model.layers();
  const std::size_t depth = layers.size();
  if (static_cast<int>(model.output_dim()) < data.num_classes)
    throw std::invalid_argument("model has fewer outputs than dataset classes");

  LossAndGradient out;
  out.grad.weights.reserve(depth);
  for (const auto& l : layers) {
    out.grad.weights.emplace_back(l.out_dim(), l.in_dim());
    out.grad.bias.emplace_back(l.out_dim(), 0.0);
  }

  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rows = all;
  }

  // acts[t] is the input to layer t; pre[t] its pre-activation.
  std::vector<std::vector<double>> acts(depth + 1), pre(depth);
  std::vector<double> delta, prev_delta;
  for (std::size_t row : rows) {
    const auto x = data.inputs.row(row);
    check_input(model, x);
    acts[0].assign(x.begin(), x.end());
    for (std::size_t t = 0; t < depth; ++t) {
      affine(layers[t], acts[t], pre[t]);
      acts[t + 1] = pre[t];
      apply_activation(layers[t].activation, acts[t + 1]);
    }
    const auto& logits = acts[depth];
    const auto probs = softmax(logits);
    const int y = data.labels[row];
    const double hi = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - hi);
    out.loss += hi + std::log(lse) - logits[static_cast<std::size_t>(y)];

    delta = probs;
    delta[static_cast<std::size_t>(y)] -= 1.0;
    for (std::size_t t = depth; t-- > 0;) {
      const DenseLayer& layer = layers[t];
      if (layer.activation == Activation::relu)
        for (std::size_t r = 0; r < delta.size(); ++r)
          if (!(pre[t][r] > 0.0)) delta[r] = 0.0;
      Matrix& gw = out.grad.weights[t];
      auto& gb = out.grad.bias[t];
      for (std::size_t r = 0; r < layer.out_dim(); ++r) {
        gb[r] += delta[r];
        auto grow = gw.row(r);
        for (std::size_t c = 0; c < layer.in_dim(); ++c) grow[c] += delta[r] * acts[t][c];
      }
      if (t == 0) break;
      prev_delta.assign(layer.in_dim(), 0.0);
      for (std::size_t r = 0; r < layer.out_dim(); ++r) {
        const auto w = layer.weights.row(r);
        for (std::size_t c = 0; c < layer.in_dim(); ++c) prev_delta[c] += w[c] * delta[r];
      }
      std::swap(delta, prev_delta);
    }
  }

  const double scale = rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size());
  out.loss *= scale;
  for (auto& gw : out.grad.weights)
    for (double& v : gw.values) v *= scale;
  for (auto& gb : out.grad.bias)
    for (double& v : gb) v *= scale;
  return out;
}

MlpModel train_sgd(MlpModel model, const LabeledDataset& data, const TrainConfig& config) {
  data.validate();
  if (!(config.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (config.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (config.epochs < 0) throw std::invalid_argument("epochs must be non-negative");

  auto& layers = model.mutable_layers();
  std::vector<Matrix> vel_w;
  std::vector<std::vector<double>> vel_b;
  for (const auto& l : layers) {
    vel_w.emplace_back(l.out_dim(), l.in_dim());
    vel_b.emplace_back(l.out_dim(), 0.0);
  }

  auto rng = make_rng(config.seed, Stream::batches);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto step = [&](double& param, double& vel, double grad) {
    const double g = grad + config.weight_decay * param;
    vel = config.momentum * vel + g;
    param -= config.lr * vel;
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      auto lg = loss_and_gradient(model, data, rows);
      if (!std::isfinite(lg.loss))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch));
      for (std::size_t t = 0; t < layers.size(); ++t) {
        auto& w = layers[t].weights.values;
        for (std::size_t k = 0; k < w.size(); ++k) step(w[k], vel_w[t].values[k], lg.grad.weights[t].values[k]);
        auto& b = layers[t].bias;
        for (std::size_t k = 0; k < b.size(); ++k) step(b[k], vel_b[t][k], lg.grad.bias[t][k]);
      }
    }
  }
  model.validate();
  return model;
}

LabeledDataset make_halfmoons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("halfmoons needs n >= 2");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise must be non-negative");
  const std::size_t n0 = n / 2;
  const std::size_t n1 = n - n0;
  auto rng = make_rng(seed, Stream::halfmoons);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  LabeledDataset data;
  data.inputs = Matrix(n, 2);
  data.labels.assign(n, 0);
  data.num_classes = 2;
  auto angle = [](std::size_t i, std::size_t count) {
    return count == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  for (std::size_t i = 0; i < n; ++i) {
    double x, y;
    int label;
    if (i < n0) {
      const double t = angle(i, n0);
      x = std::cos(t);
      y = std::sin(t);
      label = 0;
    } else {
      const double t = angle(i - n0, n1);
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
      label = 1;
    }
    const std::size_t row = order[i];
    data.inputs(row, 0) = x + noise_sigma * noise(rng);
    data.inputs(row, 1) = y + noise_sigma * noise(rng);
    data.labels[row] = label;
  }
  return data;
}

Split split_rows(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw std::invalid_argument("train fraction must be in (0, 1]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, Stream::split);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  Split s;
  s.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

LabeledDataset subset(const LabeledDataset& data, std::span<const std::size_t> rows) {
  LabeledDataset out;
  out.num_classes = data.num_classes;
  out.inputs = Matrix(rows.size(), data.inputs.cols);
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = data.inputs.row(rows[i]);
    std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
    out.labels.push_back(data.labels[rows[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model file:
//   #subfn-mlp v1
//   input_dim <d>
//   layers <L>
//   layer <out> <in> <relu|identity>
//   <out lines of <in> weights, row-major>
//   bias <out values>

std::string model_to_string(const MlpModel& model) {
  std::string out = "#subfn-mlp v1\n";
  out += "input_dim " + std::to_string(model.input_dim()) + "\n";
  out += "layers " + std::to_string(model.layers().size()) + "\n";
  for (const auto& l : model.layers()) {
    out += "layer " + std::to_string(l.out_dim()) + " " + std::to_string(l.in_dim()) + " " +
           activation_name(l.activation) + "\n";
    for (std::size_t r = 0; r < l.out_dim(); ++r) {
      const auto row = l.weights.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out += ' ';
        out += format_double(row[c]);
      }
      out += '\n';
    }
    out += "bias";
    for (double b : l.bias) out += " " + format_double(b);
    out += '\n';
  }
  return out;
}

MlpModel model_from_string(const std::string& text, const std::string& source) {
  LineReader rd(text, source);
  auto header = rd.next("header");
  if (header[0] != "#subfn-mlp") rd.fail("missing '#subfn-mlp' header");
  if (header.size() < 2 || header[1] != "v1")
    rd.fail("unsupported model file version '" + (header.size() < 2 ? std::string() : header[1]) + "'");
  const std::size_t input_dim = rd.count(rd.keyed("input_dim", 1)[1]);
  const std::size_t n_layers = rd.count(rd.keyed("layers", 1)[1]);
  std::vector<DenseLayer> layers;
  for (std::size_t t = 0; t < n_layers; ++t) {
    auto spec = rd.keyed("layer", 3);
    DenseLayer layer;
    const std::size_t out_dim = rd.count(spec[1]);
    const std::size_t in_dim = rd.count(spec[2]);
    if (spec[3] == "relu")
      layer.activation = Activation::relu;
    else if (spec[3] == "identity")
      layer.activation = Activation::identity;
    else
      rd.fail("unknown activation '" + spec[3] + "'");
    layer.weights = Matrix(out_dim, in_dim);
    for (std::size_t r = 0; r < out_dim; ++r) {
      auto row = rd.next("weight row");
      if (row.size() != in_dim)
        rd.fail("weight row has " + std::to_string(row.size()) + " values, expected " + std::to_string(in_dim));
      for (std::size_t c = 0; c < in_dim; ++c) layer.weights(r, c) = rd.number(row[c]);
    }
    auto bias = rd.keyed("bias", out_dim);
    for (std::size_t r = 0; r < out_dim; ++r) layer.bias.push_back(rd.number(bias[r + 1]));
    layers.push_back(std::move(layer));
  }
  try {
    return MlpModel(input_dim, std::move(layers));
  } catch (const std::invalid_argument& e) {
    throw ParseError(source, 0, e.what());
  }
}

void save_model(const MlpModel& model, const std::string& path) { write_text_file(path, model_to_string(model)); }

MlpModel load_model(const std::string& path) { return model_from_string(read_text_file(path), path); }

void save_dataset_csv(const LabeledDataset& data, const std::string& path) {
  std::string out;
  for (std::size_t c = 0; c < data.inputs.cols; ++c) out += "x" + std::to_string(c) + ",";
  out += "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.inputs.row(i)) out += format_double(v) + ",";
    out += std::to_string(data.labels[i]) + "\n";
  }
  write_text_file(path, out);
}

LabeledDataset load_dataset_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t dim = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty()) continue;
    auto fields = split(view, ',');
    double probe = 0.0;
    if (first && !parse_double(fields[0], probe)) {  // header
      first = false;
      continue;
    }
    if (fields.size() < 2) throw ParseError(path, line_no, "dataset rows need at least one feature and a label");
    if (dim == 0) dim = fields.size() - 1;
    if (fields.size() - 1 != dim)
      throw ParseError(path, line_no, "expected " + std::to_string(dim) + " features, found " +
                                          std::to_string(fields.size() - 1));
    for (std::size_t c = 0; c < dim; ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v) || !std::isfinite(v)) throw ParseError(path, line_no, "bad feature value");
      values.push_back(v);
    }
    long long label = 0;
    if (!parse_int64(fields[dim], label) || label < 0) throw ParseError(path, line_no, "bad label");
    labels.push_back(static_cast<int>(label));
    first = false;
  }
  if (labels.empty()) throw ParseError(path, 0, "dataset has no rows");
  LabeledDataset data;
  data.inputs = Matrix(labels.size(), dim);
  data.inputs.values = std::move(values);
  data.labels = std::move(labels);
  data.num_classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  return data;
}

}  // namespace subfn
