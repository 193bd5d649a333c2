#pragma once

// Fully-connected ReLU networks: inference, activation-pattern capture,
// SGD training with softmax cross-entropy, the halfmoons toy dataset and
// plain-text model/dataset files.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "subfn/patterns.hpp"

namespace subfn {

enum class Activation { relu, identity };

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
};

struct DenseLayer {
  Matrix weights;  // [out x in]
  std::vector<double> bias;
  Activation activation = Activation::relu;

  std::size_t in_dim() const { return weights.cols; }
  std::size_t out_dim() const { return weights.rows; }
};

class MlpModel {
 public:
  MlpModel() = default;
  // Validates dimension chaining, identity output layer and finite weights.
  MlpModel(std::size_t input_dim, std::vector<DenseLayer> layers);

  // Hidden ReLU layers of the given widths followed by an identity output layer,
  // weights and biases drawn uniformly from +-1/sqrt(fan_in).
  static MlpModel random(std::size_t input_dim, std::span<const std::size_t> hidden,
                         std::size_t output_dim, std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return layers_.empty() ? input_dim_ : layers_.back().out_dim(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  // Indices into layers() of all ReLU layers, in order.
  std::vector<std::size_t> relu_layers() const;
  std::size_t last_relu_layer() const;

  void validate() const;

 private:
  std::size_t input_dim_ = 0;
  std::vector<DenseLayer> layers_;
};

struct LabeledDataset {
  Matrix inputs;            // [N x input_dim]
  std::vector<int> labels;  // class ids in [0, num_classes)
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

std::vector<double> forward(const MlpModel& model, std::span<const double> x);

// Bit j is set iff the j-th pre-activation of the ReLU layer `layer_index` is
// strictly positive (a zero pre-activation gives bit 0).
ActivationPattern capture_pattern(const MlpModel& model, std::span<const double> x,
                                  std::size_t layer_index);

int predict_class(const MlpModel& model, std::span<const double> x);
std::vector<double> softmax(std::span<const double> logits);

struct TrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Parameter-shaped gradient buffers, one entry per layer.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> bias;
};

struct LossAndGradient {
  double loss = 0.0;  // mean softmax cross-entropy over the batch
  Gradients grad;
};

// Mean cross-entropy and its exact gradient over the listed rows of `data`
// (all rows when `rows` is empty). Weight decay is not included.
LossAndGradient loss_and_gradient(const MlpModel& model, const LabeledDataset& data,
                                  std::span<const std::size_t> rows = {});

// Minibatch SGD with momentum and L2 weight decay applied to every parameter.
// Throws std::runtime_error naming epoch and batch on a non-finite loss.
MlpModel train_sgd(MlpModel model, const LabeledDataset& data, const TrainConfig& config);

double accuracy(const MlpModel& model, const LabeledDataset& data);

// Class 0 on the upper unit half-circle about the origin, class 1 on the
// lower half-circle about (1, 0.5); floor(n/2) and ceil(n/2) points.
LabeledDataset make_halfmoons(std::size_t n, double noise_sigma, std::uint64_t seed);

// Deterministic seeded shuffle split; the first return holds round(n*train_fraction) rows.
struct Split {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
};
Split split_rows(std::size_t n, double train_fraction, std::uint64_t seed);
LabeledDataset subset(const LabeledDataset& data, std::span<const std::size_t> rows);

void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);
std::string model_to_string(const MlpModel& model);
MlpModel model_from_string(const std::string& text, const std::string& source = "<string>");

// CSV rows `x0,...,x{d-1},label` with a header line.
void save_dataset_csv(const LabeledDataset& data, const std::string& path);
LabeledDataset load_dataset_csv(const std::string& path);

}  // namespace subfn
