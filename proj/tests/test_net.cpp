#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "subfn/net.hpp"
#include "subfn/text_io.hpp"

using namespace subfn;

namespace {

// Naive loop forward pass, returning every pre-activation vector and the output.
std::vector<std::vector<double>> naive_preacts(const MlpModel& model, std::vector<double> x) {
  std::vector<std::vector<double>> pre;
  for (const auto& l : model.layers()) {
    std::vector<double> z(l.out_dim());
    for (std::size_t r = 0; r < l.out_dim(); ++r) {
      double s = l.bias[r];
      for (std::size_t c = 0; c < l.in_dim(); ++c) s += l.weights(r, c) * x[c];
      z[r] = s;
    }
    pre.push_back(z);
    x = z;
    if (l.activation == Activation::relu)
      for (double& v : x) v = v > 0 ? v : 0;
  }
  return pre;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("subfn_net_" + name)).string();
}

std::vector<double> random_input(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(d);
  for (double& v : x) v = g(rng);
  return x;
}

}  // namespace

TEST_CASE("forward and pattern capture match naive loops") {
  std::mt19937_64 rng(1);
  const std::size_t hidden[] = {7, 5, 9};
  auto model = MlpModel::random(4, hidden, 3, 42);
  CHECK(model.relu_layers() == std::vector<std::size_t>{0, 1, 2});
  CHECK(model.last_relu_layer() == 2);
  for (int t = 0; t < 200; ++t) {
    auto x = random_input(4, rng);
    auto pre = naive_preacts(model, x);
    auto out = forward(model, x);
    REQUIRE(out.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) CHECK(out[k] == doctest::Approx(pre.back()[k]).epsilon(1e-12));
    for (std::size_t layer : model.relu_layers()) {
      auto p = capture_pattern(model, x, layer);
      REQUIRE(p.size() == pre[layer].size());
      for (std::size_t j = 0; j < p.size(); ++j) CHECK(p.test(j) == (pre[layer][j] > 0.0));
    }
  }
  CHECK_THROWS_AS(capture_pattern(model, random_input(4, rng), 3), std::invalid_argument);
  CHECK_THROWS_AS(forward(model, random_input(5, rng)), std::invalid_argument);
}

TEST_CASE("zero pre-activation gives a clear bit") {
  DenseLayer h{Matrix(2, 1, 0.0), {0.0, 1.0}, Activation::relu};
  DenseLayer o{Matrix(2, 2, 1.0), {0.0, 0.0}, Activation::identity};
  MlpModel model(1, {h, o});
  const double x[] = {3.0};
  auto p = capture_pattern(model, x, 0);
  CHECK_FALSE(p.test(0));
  CHECK(p.test(1));
}

TEST_CASE("model validation") {
  DenseLayer a{Matrix(3, 2, 0.1), {0, 0, 0}, Activation::relu};
  DenseLayer wrong_in{Matrix(2, 4, 0.1), {0, 0}, Activation::identity};
  CHECK_THROWS_AS(MlpModel(2, {a, wrong_in}), std::invalid_argument);
  DenseLayer relu_out{Matrix(2, 3, 0.1), {0, 0}, Activation::relu};
  CHECK_THROWS_AS(MlpModel(2, {a, relu_out}), std::invalid_argument);
  DenseLayer nan_out{Matrix(2, 3, std::nan("")), {0, 0}, Activation::identity};
  CHECK_THROWS_AS(MlpModel(2, {a, nan_out}), std::invalid_argument);
}

TEST_CASE("network is affine within an activation region") {
  std::mt19937_64 rng(2);
  const std::size_t hidden[] = {6, 6};
  auto model = MlpModel::random(3, hidden, 2, 7);
  for (int t = 0; t < 100; ++t) {
    auto x = random_input(3, rng);
    // Effective affine map A x + c from masked layers.
    std::vector<std::vector<double>> A(3, std::vector<double>(3, 0.0));
    for (std::size_t i = 0; i < 3; ++i) A[i][i] = 1.0;
    std::vector<double> c(3, 0.0);
    for (std::size_t li = 0; li < model.layers().size(); ++li) {
      const auto& l = model.layers()[li];
      std::vector<std::vector<double>> nA(l.out_dim(), std::vector<double>(3, 0.0));
      std::vector<double> nc(l.out_dim(), 0.0);
      ActivationPattern mask;
      if (l.activation == Activation::relu) mask = capture_pattern(model, x, li);
      for (std::size_t r = 0; r < l.out_dim(); ++r) {
        nc[r] = l.bias[r];
        for (std::size_t k = 0; k < l.in_dim(); ++k) {
          nc[r] += l.weights(r, k) * c[k];
          for (std::size_t j = 0; j < 3; ++j) nA[r][j] += l.weights(r, k) * A[k][j];
        }
        if (l.activation == Activation::relu && !mask.test(r)) {
          nc[r] = 0.0;
          std::fill(nA[r].begin(), nA[r].end(), 0.0);
        }
      }
      A = nA;
      c = nc;
    }
    auto out = forward(model, x);
    for (std::size_t r = 0; r < 2; ++r) {
      double v = c[r];
      for (std::size_t j = 0; j < 3; ++j) v += A[r][j] * x[j];
      CHECK(out[r] == doctest::Approx(v).epsilon(1e-10));
    }

    // A tiny step that keeps every pattern moves the output linearly.
    std::vector<double> step(3);
    for (std::size_t j = 0; j < 3; ++j) step[j] = x[j] + 1e-7 * (j + 1);
    bool same = true;
    for (std::size_t li : model.relu_layers()) same = same && capture_pattern(model, x, li) == capture_pattern(model, step, li);
    if (same) {
      auto out2 = forward(model, step);
      for (std::size_t r = 0; r < 2; ++r) {
        double v = c[r];
        for (std::size_t j = 0; j < 3; ++j) v += A[r][j] * step[j];
        CHECK(out2[r] == doctest::Approx(v).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("interpolation inside one region is linear") {
  std::mt19937_64 rng(17);
  const std::size_t hidden[] = {8, 8};
  auto model = MlpModel::random(2, hidden, 2, 5);
  auto all_patterns = [&](std::span<const double> x) {
    std::vector<ActivationPattern> ps;
    for (std::size_t li : model.relu_layers()) ps.push_back(capture_pattern(model, x, li));
    return ps;
  };
  int checked = 0;
  for (int t = 0; t < 400; ++t) {
    auto x1 = random_input(2, rng);
    auto x2 = x1;
    for (double& v : x2) v += std::normal_distribution<double>(0, 0.05)(rng);
    const auto ref = all_patterns(x1);
    bool same = true;
    std::vector<std::vector<double>> pts;
    for (int k = 0; k <= 10; ++k) {
      const double a = k / 10.0;
      std::vector<double> x{a * x1[0] + (1 - a) * x2[0], a * x1[1] + (1 - a) * x2[1]};
      same = same && all_patterns(x) == ref;
      pts.push_back(x);
    }
    if (!same) continue;
    ++checked;
    const auto f1 = forward(model, x1), f2 = forward(model, x2);
    for (int k = 0; k <= 10; ++k) {
      const double a = k / 10.0;
      const auto f = forward(model, pts[k]);
      for (std::size_t r = 0; r < 2; ++r) CHECK(std::abs(f[r] - (a * f1[r] + (1 - a) * f2[r])) <= 1e-9);
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("masking the designated layer reproduces forward") {
  std::mt19937_64 rng(19);
  const std::size_t hidden[] = {6, 7, 5};
  auto model = MlpModel::random(3, hidden, 2, 23);
  for (std::size_t designated : model.relu_layers()) {
    for (int t = 0; t < 50; ++t) {
      auto x = random_input(3, rng);
      const auto p = capture_pattern(model, x, designated);
      std::vector<double> h = x;
      for (std::size_t li = 0; li < model.layers().size(); ++li) {
        const auto& l = model.layers()[li];
        std::vector<double> z(l.out_dim());
        for (std::size_t r = 0; r < l.out_dim(); ++r) {
          z[r] = l.bias[r];
          for (std::size_t c = 0; c < l.in_dim(); ++c) z[r] += l.weights(r, c) * h[c];
          if (li == designated)
            z[r] = p.test(r) ? z[r] : 0.0;
          else if (l.activation == Activation::relu)
            z[r] = std::max(z[r], 0.0);
        }
        h = z;
      }
      const auto f = forward(model, x);
      for (std::size_t r = 0; r < 2; ++r) CHECK(h[r] == f[r]);
    }
  }
}

TEST_CASE("softmax and prediction") {
  const double logits[] = {1.0, 3.0, 2.0};
  auto p = softmax(logits);
  const double z = std::exp(1.0) + std::exp(3.0) + std::exp(2.0);
  CHECK(p[1] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-15));
  const double big[] = {1000.0, 999.0};
  auto q = softmax(big);
  CHECK(std::isfinite(q[0]));
  CHECK(q[0] + q[1] == doctest::Approx(1.0));
}

TEST_CASE("backprop matches finite differences") {
  const std::size_t hidden[] = {3};
  auto model = MlpModel::random(3, hidden, 2, 11);
  LabeledDataset data;
  data.inputs = Matrix(4, 3);
  std::mt19937_64 rng(3);
  for (double& v : data.inputs.values) v = std::normal_distribution<double>(0, 1)(rng);
  data.labels = {0, 1, 1, 0};
  data.num_classes = 2;

  auto lg = loss_and_gradient(model, data);
  const double eps = 1e-5;
  double worst = 0.0;
  for (std::size_t li = 0; li < model.layers().size(); ++li) {
    auto& layer = model.mutable_layers()[li];
    auto probe = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + eps;
      const double up = loss_and_gradient(model, data).loss;
      param = saved - eps;
      const double down = loss_and_gradient(model, data).loss;
      param = saved;
      const double numeric = (up - down) / (2 * eps);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    };
    for (std::size_t k = 0; k < layer.weights.values.size(); ++k)
      probe(layer.weights.values[k], lg.grad.weights[li].values[k]);
    for (std::size_t k = 0; k < layer.bias.size(); ++k) probe(layer.bias[k], lg.grad.bias[li][k]);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("training separates two points") {
  LabeledDataset data;
  data.inputs = Matrix(2, 2);
  data.inputs(0, 0) = -1.0;
  data.inputs(1, 0) = 1.0;
  data.labels = {0, 1};
  data.num_classes = 2;
  const std::size_t hidden[] = {4};
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 2;
  cfg.seed = 1;
  auto model = train_sgd(MlpModel::random(2, hidden, 2, 1), data, cfg);
  CHECK(accuracy(model, data) == 1.0);
}

TEST_CASE("training diverges loudly") {
  auto data = make_halfmoons(64, 0.1, 1);
  const std::size_t hidden[] = {16};
  TrainConfig cfg;
  cfg.lr = 1e6;
  cfg.epochs = 50;
  CHECK_THROWS_AS(train_sgd(MlpModel::random(2, hidden, 2, 1), data, cfg), std::runtime_error);
}

TEST_CASE("halfmoons geometry") {
  auto clean = make_halfmoons(200, 0.0, 5);
  REQUIRE(clean.size() == 200);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double x = clean.inputs(i, 0), y = clean.inputs(i, 1);
    if (clean.labels[i] == 0) {
      CHECK(std::hypot(x, y) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(y >= -1e-12);
    } else {
      ++ones;
      CHECK(std::hypot(x - 1.0, y - 0.5) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(y <= 0.5 + 1e-12);
    }
  }
  CHECK(ones == 100);
  auto odd = make_halfmoons(11, 0.0, 5);
  CHECK(std::count(odd.labels.begin(), odd.labels.end(), 1) == 6);

  // A classifier that only knows the two circles.
  auto noisy = make_halfmoons(2000, 0.1, 6);
  std::size_t right = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const double x = noisy.inputs(i, 0), y = noisy.inputs(i, 1);
    const double d0 = std::abs(std::hypot(x, y) - 1.0) + (y < 0 ? -y : 0.0);
    const double d1 = std::abs(std::hypot(x - 1.0, y - 0.5) - 1.0) + (y > 0.5 ? y - 0.5 : 0.0);
    right += (d0 < d1 ? 0 : 1) == noisy.labels[i];
  }
  CHECK(static_cast<double>(right) / noisy.size() >= 0.9);

  auto a = make_halfmoons(100, 0.2, 9), b = make_halfmoons(100, 0.2, 9);
  CHECK(a.inputs.values == b.inputs.values);
  CHECK(a.labels == b.labels);
}

TEST_CASE("split") {
  auto s = split_rows(10, 0.5, 3);
  CHECK(s.train_rows.size() == 5);
  CHECK(s.validation_rows.size() == 5);
  std::set<std::size_t> all(s.train_rows.begin(), s.train_rows.end());
  all.insert(s.validation_rows.begin(), s.validation_rows.end());
  CHECK(all.size() == 10);
  auto s2 = split_rows(10, 0.5, 3);
  CHECK(s2.train_rows == s.train_rows);
  CHECK_THROWS_AS(split_rows(10, 1.5, 3), std::invalid_argument);

  // Same seed for data and split must still give a representative holdout.
  for (std::uint64_t seed : {0u, 11u, 12u}) {
    auto data = make_halfmoons(2000, 0.1, seed);
    auto sp = split_rows(data.size(), 0.85, seed);
    auto val = subset(data, sp.validation_rows);
    const double ones = static_cast<double>(std::count(val.labels.begin(), val.labels.end(), 1));
    CHECK(ones / val.size() > 0.4);
    CHECK(ones / val.size() < 0.6);
    double mean_x = 0;
    for (std::size_t i = 0; i < val.size(); ++i) mean_x += val.inputs(i, 0) / val.size();
    CHECK(mean_x == doctest::Approx(0.5).epsilon(0.2));
  }
}

TEST_CASE("halfmoons training is accurate and deterministic") {
  auto data = make_halfmoons(1000, 0.1, 0);
  const std::size_t hidden[] = {32, 32};
  TrainConfig cfg;
  cfg.seed = 0;
  auto m1 = train_sgd(MlpModel::random(2, hidden, 2, 0), data, cfg);
  CHECK(accuracy(m1, data) >= 0.95);
  auto m2 = train_sgd(MlpModel::random(2, hidden, 2, 0), data, cfg);
  CHECK(model_to_string(m1) == model_to_string(m2));
}

TEST_CASE("model file round trip") {
  const std::size_t hidden[] = {5, 3};
  auto model = MlpModel::random(2, hidden, 2, 99);
  const auto path = temp_path("model.txt");
  save_model(model, path);
  auto back = load_model(path);
  CHECK(model_to_string(back) == model_to_string(model));
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    auto x = random_input(2, rng);
    CHECK(forward(back, x) == forward(model, x));
  }
  std::filesystem::remove(path);

  const auto text = model_to_string(model);
  CHECK_THROWS_AS(model_from_string(text.substr(0, text.size() * 2 / 3)), ParseError);
  CHECK_THROWS_AS(model_from_string("#subfn-mlp v1\ninput_dim 2\nlayers 1\nlayer 2 2 relu\n1 0\n0 1\nbias 0 0\n"),
                  std::exception);
}

TEST_CASE("hand-written model file") {
  const std::string text =
      "#subfn-mlp v1\n"
      "input_dim 2\n"
      "layers 2\n"
      "layer 2 2 relu\n"
      "1 -1\n"
      "0.5 0.25\n"
      "bias 0 -1\n"
      "layer 2 2 identity\n"
      "1 0\n"
      "0 2\n"
      "bias 0.5 0\n";
  auto model = model_from_string(text);
  const double x[] = {3.0, 1.0};
  auto out = forward(model, x);
  // hidden pre = (2, 0.75), relu = (2, 0.75)
  CHECK(out[0] == doctest::Approx(2.5));
  CHECK(out[1] == doctest::Approx(1.5));
  auto p = capture_pattern(model, x, 0);
  CHECK(p.test(0));
  CHECK(p.test(1));
  const double y[] = {0.0, 1.0};
  auto q = capture_pattern(model, y, 0);
  CHECK_FALSE(q.test(0));
  CHECK_FALSE(q.test(1));
}

TEST_CASE("dataset csv round trip") {
  auto data = make_halfmoons(50, 0.3, 2);
  const auto path = temp_path("data.csv");
  save_dataset_csv(data, path);
  auto back = load_dataset_csv(path);
  CHECK(back.inputs.values == data.inputs.values);
  CHECK(back.labels == data.labels);
  CHECK(back.num_classes == 2);
  std::filesystem::remove(path);
}
