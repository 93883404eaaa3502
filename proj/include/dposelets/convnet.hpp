#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dposelets/features.hpp"
#include "dposelets/imaging.hpp"

namespace dposelets::convnet {

inline constexpr int kPdfWidth = 256;

enum class LayerKind { Convolution, MaxPool, Rectifier, FullyConnected, Softmax };

struct Layer {
  LayerKind kind = LayerKind::Rectifier;
  int kernel = 0;        // convolution kernel side or pooling window
  int stride = 1;
  int in_channels = 0;   // convolution
  int out_channels = 0;  // convolution
  int inputs = 0;        // fully connected
  int outputs = 0;       // fully connected

  static Layer conv(int kernel, int in_channels, int out_channels, int stride = 1) {
    return {LayerKind::Convolution, kernel, stride, in_channels, out_channels, 0, 0};
  }
  static Layer pool(int window, int stride) { return {LayerKind::MaxPool, window, stride, 0, 0, 0, 0}; }
  static Layer rect() { return {LayerKind::Rectifier, 0, 1, 0, 0, 0, 0}; }
  static Layer fc(int inputs, int outputs) { return {LayerKind::FullyConnected, 0, 1, 0, 0, inputs, outputs}; }
  static Layer softmax() { return {LayerKind::Softmax, 0, 1, 0, 0, 0, 0}; }

  bool has_params() const { return kind == LayerKind::Convolution || kind == LayerKind::FullyConnected; }
  std::size_t weight_count() const;
  std::size_t bias_count() const;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Output side of a sliding window: floor((in - kernel) / stride) + 1.
inline int window_output_side(int in, int kernel, int stride) { return (in - kernel) / stride + 1; }

struct NetSpec {
  Shape input{3, imaging::kPatchSide, imaging::kPatchSide};
  std::vector<Layer> layers;
  int pdf_layer = -1;  // index of the fully connected layer whose rectified output is the PDF
  int class_count = 0;

  /// conv5x5x16 - rect - pool2 - conv5x5x32 - rect - pool2 - conv3x3x64 - rect -
  /// pool2 - fc256 (PDF) - rect - fc(class_count) - softmax, on 61x61x3 input.
  static NetSpec standard(int class_count);

  /// Output shape of every layer; throws ShapeMismatch when layers do not chain.
  std::vector<Shape> shapes() const;
  void validate() const;
  int pdf_width() const { return layers.at(static_cast<std::size_t>(pdf_layer)).outputs; }
  std::size_t parameter_count() const;
  /// Index of the first fully connected layer; layers before it form the
  /// convolutional trunk.
  int trunk_end() const;
  /// Product of trunk strides.
  int trunk_stride() const;

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

/// Weights and biases per layer (empty for parameter-free layers).
/// Convolution weights are [out][in][ky][kx]; fully connected are [out][in].
template <class T>
struct NetParams {
  std::vector<std::vector<T>> weights;
  std::vector<std::vector<T>> biases;

  static NetParams zeros(const NetSpec& spec);
  /// Weights ~ N(0, 2 / fan_in), biases zero.
  static NetParams he_init(const NetSpec& spec, std::uint64_t seed);

  bool matches(const NetSpec& spec) const;
  bool all_finite() const;
  std::size_t size() const;

  template <class U>
  NetParams<U> cast() const {
    NetParams<U> out;
    for (const auto& w : weights) out.weights.emplace_back(w.begin(), w.end());
    for (const auto& b : biases) out.biases.emplace_back(b.begin(), b.end());
    return out;
  }

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

template <class T>
struct ForwardResult {
  std::vector<T> probabilities;
  std::vector<T> pdf;
};

/// CHW tensor from an interleaved image.
template <class T>
std::vector<T> to_tensor(const imaging::Image& img);

template <class T>
ForwardResult<T> forward(const NetSpec& spec, const NetParams<T>& params, std::span<const T> input);

template <class T>
ForwardResult<T> forward(const NetSpec& spec, const NetParams<T>& params, const imaging::Image& patch) {
  const auto t = to_tensor<T>(patch.with_channels(spec.input.c));
  return forward<T>(spec, params, std::span<const T>(t));
}

template <class T>
struct LossGrad {
  double loss = 0.0;
  NetParams<T> grads;
};

/// Mean cross-entropy over the batch plus weight_decay / 2 * sum of squared
/// weights (biases are not decayed), with its exact gradient.
template <class T>
LossGrad<T> loss_and_grad(const NetSpec& spec, const NetParams<T>& params,
                          std::span<const std::vector<T>> inputs, std::span<const int> labels,
                          double weight_decay = 0.0);

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 10;
  double weight_decay = 1e-4;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

struct TrainReport {
  double initial_loss = 0.0;           // first minibatch, before any update
  std::vector<double> epoch_loss;      // mean minibatch loss per epoch
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Minibatch SGD with momentum; per-epoch shuffles come from cfg.rng_seed.
template <class T>
NetParams<T> train(const NetSpec& spec, std::span<const std::vector<T>> inputs, std::span<const int> labels,
                   const SgdConfig& cfg, TrainReport* report = nullptr, const EpochCallback& on_epoch = {});

/// Starts from `init` instead of a fresh He initialisation.
template <class T>
NetParams<T> train_from(const NetSpec& spec, NetParams<T> init, std::span<const std::vector<T>> inputs,
                        std::span<const int> labels, const SgdConfig& cfg, TrainReport* report = nullptr,
                        const EpochCallback& on_epoch = {});

template <class T>
std::string params_tag(const NetParams<T>& params);

/// Trained network used as a PDF feature extractor.
class PdfNetwork {
 public:
  PdfNetwork(NetSpec spec, NetParams<float> params);

  const NetSpec& spec() const { return spec_; }
  const NetParams<float>& params() const { return params_; }
  const std::string& tag() const { return tag_; }

  features::FeatureVector extract_pdf(const imaging::Image& patch) const;
  ForwardResult<float> forward(const imaging::Image& patch) const;
  int classify(const imaging::Image& patch) const;

  struct DenseResult {
    int windows_x = 0;
    int windows_y = 0;
    int stride = 0;
    std::vector<features::FeatureVector> pdfs;  // row-major window order
  };
  /// PDF vectors for every `input side` window at multiples of `stride` in
  /// `level`. The trunk runs once over the level when stride is a multiple of
  /// the trunk stride; otherwise each window is evaluated separately.
  DenseResult dense_pdf(const imaging::Image& level, int stride) const;

 private:
  NetSpec spec_;
  NetParams<float> params_;
  std::string tag_;
};

features::FeatureVector extract_pdf(const NetSpec& spec, const NetParams<float>& params,
                                    const imaging::Image& patch);

}  // namespace dposelets::convnet
