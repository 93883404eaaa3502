#include "dposelets/convnet.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace dposelets::convnet {

std::size_t Layer::weight_count() const {
  switch (kind) {
    case LayerKind::Convolution:
      return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    case LayerKind::FullyConnected:
      return static_cast<std::size_t>(outputs) * inputs;
    default:
      return 0;
  }
}

std::size_t Layer::bias_count() const {
  switch (kind) {
    case LayerKind::Convolution: return static_cast<std::size_t>(out_channels);
    case LayerKind::FullyConnected: return static_cast<std::size_t>(outputs);
    default: return 0;
  }
}

NetSpec NetSpec::standard(int class_count) {
  NetSpec spec;
  spec.input = {3, imaging::kPatchSide, imaging::kPatchSide};
  spec.layers = {Layer::conv(5, 3, 16),  Layer::rect(), Layer::pool(2, 2),
                 Layer::conv(5, 16, 32), Layer::rect(), Layer::pool(2, 2),
                 Layer::conv(3, 32, 64), Layer::rect(), Layer::pool(2, 2),
                 Layer::fc(64 * 5 * 5, kPdfWidth), Layer::rect(),
                 Layer::fc(kPdfWidth, class_count), Layer::softmax()};
  spec.pdf_layer = 9;
  spec.class_count = class_count;
  spec.validate();
  return spec;
}

namespace {

Shape layer_output(const Layer& l, const Shape& in) {
  auto fail = [](const char* why) -> Shape { throw Error(Errc::ShapeMismatch, why); };
  switch (l.kind) {
    case LayerKind::Convolution:
      if (in.c != l.in_channels) return fail("convolution input channels do not match");
      if (l.kernel < 1 || l.stride < 1 || l.kernel > in.h || l.kernel > in.w) return fail("bad convolution geometry");
      return {l.out_channels, window_output_side(in.h, l.kernel, l.stride),
              window_output_side(in.w, l.kernel, l.stride)};
    case LayerKind::MaxPool:
      if (l.kernel < 1 || l.stride < 1 || l.kernel > in.h || l.kernel > in.w) return fail("bad pooling geometry");
      return {in.c, window_output_side(in.h, l.kernel, l.stride), window_output_side(in.w, l.kernel, l.stride)};
    case LayerKind::Rectifier:
      return in;
    case LayerKind::FullyConnected:
      if (static_cast<std::size_t>(l.inputs) != in.size()) return fail("fully connected input width does not match");
      return {l.outputs, 1, 1};
    case LayerKind::Softmax:
      if (in.h != 1 || in.w != 1) return fail("softmax needs a flat input");
      return in;
  }
  return fail("unknown layer");
}

}  // namespace

std::vector<Shape> NetSpec::shapes() const {
  std::vector<Shape> out;
  Shape cur = input;
  for (const auto& l : layers) {
    cur = layer_output(l, cur);
    out.push_back(cur);
  }
  return out;
}

void NetSpec::validate() const {
  if (layers.empty()) throw Error(Errc::ShapeMismatch, "empty network");
  const auto s = shapes();
  if (layers.back().kind != LayerKind::Softmax) throw Error(Errc::ShapeMismatch, "last layer must be softmax");
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::Softmax) throw Error(Errc::ShapeMismatch, "softmax must be last");
  }
  if (s.back().c != class_count || class_count < 2) {
    throw Error(Errc::ShapeMismatch, "final width must equal class_count (>= 2)");
  }
  if (pdf_layer < 0 || pdf_layer >= static_cast<int>(layers.size()) ||
      layers[static_cast<std::size_t>(pdf_layer)].kind != LayerKind::FullyConnected) {
    throw Error(Errc::ShapeMismatch, "pdf_layer must index a fully connected layer");
  }
}

std::size_t NetSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight_count() + l.bias_count();
  return n;
}

int NetSpec::trunk_end() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::FullyConnected || layers[i].kind == LayerKind::Softmax) {
      return static_cast<int>(i);
    }
  }
  return static_cast<int>(layers.size());
}

int NetSpec::trunk_stride() const {
  int s = 1;
  for (int i = 0; i < trunk_end(); ++i) s *= layers[static_cast<std::size_t>(i)].stride;
  return s;
}

template <class T>
NetParams<T> NetParams<T>::zeros(const NetSpec& spec) {
  NetParams<T> p;
  for (const auto& l : spec.layers) {
    p.weights.emplace_back(l.weight_count(), T(0));
    p.biases.emplace_back(l.bias_count(), T(0));
  }
  return p;
}

template <class T>
NetParams<T> NetParams<T>::he_init(const NetSpec& spec, std::uint64_t seed) {
  NetParams<T> p = zeros(spec);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (!l.has_params()) continue;
    const double fan_in = l.kind == LayerKind::Convolution
                              ? static_cast<double>(l.in_channels) * l.kernel * l.kernel
                              : static_cast<double>(l.inputs);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& w : p.weights[i]) w = static_cast<T>(dist(rng));
  }
  return p;
}

template <class T>
bool NetParams<T>::matches(const NetSpec& spec) const {
  if (weights.size() != spec.layers.size() || biases.size() != spec.layers.size()) return false;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (weights[i].size() != spec.layers[i].weight_count() || biases[i].size() != spec.layers[i].bias_count()) {
      return false;
    }
  }
  return true;
}

template <class T>
bool NetParams<T>::all_finite() const {
  auto finite = [](const std::vector<T>& v) {
    return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
  };
  return std::all_of(weights.begin(), weights.end(), finite) && std::all_of(biases.begin(), biases.end(), finite);
}

template <class T>
std::size_t NetParams<T>::size() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

template <class T>
std::vector<T> to_tensor(const imaging::Image& img) {
  const int w = img.width(), h = img.height(), nc = img.channels();
  std::vector<T> t(static_cast<std::size_t>(w) * h * nc);
  for (int c = 0; c < nc; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        t[(static_cast<std::size_t>(c) * h + y) * w + x] = static_cast<T>(img.at(x, y, c));
      }
    }
  }
  return t;
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct Workspace {
  std::vector<std::vector<T>> acts;  // acts[0] input, acts[i + 1] output of layer i
  std::vector<Shape> shapes;
  std::vector<std::vector<int>> argmax;
  std::vector<T> col;
  std::vector<T> grad_a;
  std::vector<T> grad_b;
};

template <class T>
void im2col(const T* in, const Shape& is, int k, int s, const Shape& os, std::vector<T>& col) {
  const std::size_t P = static_cast<std::size_t>(os.h) * os.w;
  col.resize(static_cast<std::size_t>(is.c) * k * k * P);
  T* dst = col.data();
  for (int c = 0; c < is.c; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < os.h; ++oy) {
          const T* src = in + (static_cast<std::size_t>(c) * is.h + oy * s + ky) * is.w + kx;
          if (s == 1) {
            std::copy(src, src + os.w, dst);
            dst += os.w;
          } else {
            for (int ox = 0; ox < os.w; ++ox) *dst++ = src[ox * s];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const std::vector<T>& col, const Shape& is, int k, int s, const Shape& os, T* out) {
  const T* src = col.data();
  for (int c = 0; c < is.c; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < os.h; ++oy) {
          T* dst = out + (static_cast<std::size_t>(c) * is.h + oy * s + ky) * is.w + kx;
          for (int ox = 0; ox < os.w; ++ox) dst[ox * s] += *src++;
        }
      }
    }
  }
}

template <class T>
void conv_forward(const Layer& l, const std::vector<T>& w, const std::vector<T>& b, const T* in, const Shape& is,
                  const Shape& os, std::vector<T>& col, std::vector<T>& out) {
  im2col(in, is, l.kernel, l.stride, os, col);
  const Eigen::Index K = static_cast<Eigen::Index>(is.c) * l.kernel * l.kernel;
  const Eigen::Index P = static_cast<Eigen::Index>(os.h) * os.w;
  out.resize(os.size());
  Eigen::Map<const RowMat<T>> W(w.data(), l.out_channels, K);
  Eigen::Map<const RowMat<T>> C(col.data(), K, P);
  Eigen::Map<RowMat<T>> Y(out.data(), l.out_channels, P);
  Y.noalias() = W * C;
  Y.colwise() += Eigen::Map<const Vec<T>>(b.data(), l.out_channels);
}

template <class T>
void pool_forward(const Layer& l, const T* in, const Shape& is, const Shape& os, std::vector<T>& out,
                  std::vector<int>* argmax) {
  out.resize(os.size());
  if (argmax) argmax->resize(os.size());
  std::size_t o = 0;
  for (int c = 0; c < os.c; ++c) {
    for (int oy = 0; oy < os.h; ++oy) {
      for (int ox = 0; ox < os.w; ++ox, ++o) {
        int best = -1;
        T bv = -std::numeric_limits<T>::infinity();
        for (int ky = 0; ky < l.kernel; ++ky) {
          const int base = (c * is.h + oy * l.stride + ky) * is.w + ox * l.stride;
          for (int kx = 0; kx < l.kernel; ++kx) {
            if (in[base + kx] > bv || best < 0) {
              bv = in[base + kx];
              best = base + kx;
            }
          }
        }
        out[o] = bv;
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
}

template <class T>
void fc_forward(const Layer& l, const std::vector<T>& w, const std::vector<T>& b, const T* in,
                std::vector<T>& out) {
  out.resize(static_cast<std::size_t>(l.outputs));
  Eigen::Map<const RowMat<T>> W(w.data(), l.outputs, l.inputs);
  Eigen::Map<const Vec<T>> x(in, l.inputs);
  Eigen::Map<Vec<T>> y(out.data(), l.outputs);
  y.noalias() = W * x;
  y += Eigen::Map<const Vec<T>>(b.data(), l.outputs);
}

template <class T>
void softmax_forward(const T* in, std::size_t n, std::vector<T>& out) {
  out.resize(n);
  const T m = *std::max_element(in, in + n);
  T sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
}

/// Runs layers [from, to) on ws.acts[from], filling ws.acts[from + 1 .. to].
/// Shapes are recomputed from the actual input so the trunk also runs on
/// whole pyramid levels.
template <class T>
void run_layers(const NetSpec& spec, const NetParams<T>& params, Workspace<T>& ws, int from, int to,
                bool keep_argmax) {
  ws.acts.resize(spec.layers.size() + 1);
  ws.shapes.resize(spec.layers.size() + 1);
  ws.argmax.resize(spec.layers.size());
  for (int i = from; i < to; ++i) {
    const auto& l = spec.layers[static_cast<std::size_t>(i)];
    const Shape is = ws.shapes[static_cast<std::size_t>(i)];
    const Shape os = layer_output(l, is);
    ws.shapes[static_cast<std::size_t>(i) + 1] = os;
    const T* in = ws.acts[static_cast<std::size_t>(i)].data();
    auto& out = ws.acts[static_cast<std::size_t>(i) + 1];
    const auto& w = params.weights[static_cast<std::size_t>(i)];
    const auto& b = params.biases[static_cast<std::size_t>(i)];
    switch (l.kind) {
      case LayerKind::Convolution:
        conv_forward(l, w, b, in, is, os, ws.col, out);
        break;
      case LayerKind::MaxPool:
        pool_forward(l, in, is, os, out, keep_argmax ? &ws.argmax[static_cast<std::size_t>(i)] : nullptr);
        break;
      case LayerKind::Rectifier:
        out.resize(is.size());
        for (std::size_t k = 0; k < is.size(); ++k) out[k] = in[k] > T(0) ? in[k] : T(0);
        break;
      case LayerKind::FullyConnected:
        fc_forward(l, w, b, in, out);
        break;
      case LayerKind::Softmax:
        softmax_forward(in, is.size(), out);
        break;
    }
  }
}

template <class T>
void forward_sample(const NetSpec& spec, const NetParams<T>& params, Workspace<T>& ws, std::span<const T> input,
                    bool keep_argmax) {
  if (input.size() != spec.input.size()) throw Error(Errc::ShapeMismatch, "input size does not match the network");
  ws.acts.resize(spec.layers.size() + 1);
  ws.shapes.resize(spec.layers.size() + 1);
  ws.acts[0].assign(input.begin(), input.end());
  ws.shapes[0] = spec.input;
  run_layers(spec, params, ws, 0, static_cast<int>(spec.layers.size()), keep_argmax);
}

/// Accumulates the gradient of sum_i scale * (-log p_label) into grads.
template <class T>
double backward_sample(const NetSpec& spec, const NetParams<T>& params, Workspace<T>& ws, int label, T scale,
                       NetParams<T>& grads) {
  const std::size_t L = spec.layers.size();
  const auto& logits = ws.acts[L - 1];
  const auto& probs = ws.acts[L];
  const double m = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
  double sum = 0.0;
  for (T z : logits) sum += std::exp(static_cast<double>(z) - m);
  const double loss = std::log(sum) - (static_cast<double>(logits[static_cast<std::size_t>(label)]) - m);

  // softmax + cross-entropy
  ws.grad_a.assign(probs.begin(), probs.end());
  ws.grad_a[static_cast<std::size_t>(label)] -= T(1);
  for (auto& g : ws.grad_a) g *= scale;

  for (int i = static_cast<int>(L) - 2; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto& l = spec.layers[idx];
    const Shape& is = ws.shapes[idx];
    const Shape& os = ws.shapes[idx + 1];
    const auto& in = ws.acts[idx];
    const bool need_input_grad = i > 0;
    auto& dy = ws.grad_a;
    auto& dx = ws.grad_b;
    switch (l.kind) {
      case LayerKind::Convolution: {
        const Eigen::Index K = static_cast<Eigen::Index>(is.c) * l.kernel * l.kernel;
        const Eigen::Index P = static_cast<Eigen::Index>(os.h) * os.w;
        im2col(in.data(), is, l.kernel, l.stride, os, ws.col);
        Eigen::Map<const RowMat<T>> dY(dy.data(), l.out_channels, P);
        Eigen::Map<const RowMat<T>> C(ws.col.data(), K, P);
        Eigen::Map<RowMat<T>> dW(grads.weights[idx].data(), l.out_channels, K);
        Eigen::Map<Vec<T>> db(grads.biases[idx].data(), l.out_channels);
        dW.noalias() += dY * C.transpose();
        // Plain loop: Eigen's vectorised reductions peel by address, so the
        // sum would depend on where the heap put dy.
        for (Eigen::Index r = 0; r < dY.rows(); ++r) {
          T s = 0;
          for (Eigen::Index c = 0; c < P; ++c) s += dY(r, c);
          db(r) += s;
        }
        if (need_input_grad) {
          Eigen::Map<const RowMat<T>> W(params.weights[idx].data(), l.out_channels, K);
          Eigen::Map<RowMat<T>> dC(ws.col.data(), K, P);
          dC.noalias() = W.transpose() * dY;
          dx.assign(is.size(), T(0));
          col2im_add(ws.col, is, l.kernel, l.stride, os, dx.data());
        }
        break;
      }
      case LayerKind::MaxPool: {
        dx.assign(is.size(), T(0));
        const auto& am = ws.argmax[idx];
        for (std::size_t k = 0; k < am.size(); ++k) dx[static_cast<std::size_t>(am[k])] += dy[k];
        break;
      }
      case LayerKind::Rectifier: {
        dx.resize(is.size());
        for (std::size_t k = 0; k < is.size(); ++k) dx[k] = in[k] > T(0) ? dy[k] : T(0);
        break;
      }
      case LayerKind::FullyConnected: {
        Eigen::Map<const Vec<T>> dyv(dy.data(), l.outputs);
        Eigen::Map<const Vec<T>> x(in.data(), l.inputs);
        Eigen::Map<RowMat<T>> dW(grads.weights[idx].data(), l.outputs, l.inputs);
        Eigen::Map<Vec<T>> db(grads.biases[idx].data(), l.outputs);
        dW.noalias() += dyv * x.transpose();
        db += dyv;
        if (need_input_grad) {
          Eigen::Map<const RowMat<T>> W(params.weights[idx].data(), l.outputs, l.inputs);
          dx.resize(static_cast<std::size_t>(l.inputs));
          Eigen::Map<Vec<T>> dxv(dx.data(), l.inputs);
          dxv.noalias() = W.transpose() * dyv;
        }
        break;
      }
      case LayerKind::Softmax:
        throw Error(Errc::ShapeMismatch, "softmax must be the last layer");
    }
    if (need_input_grad) std::swap(ws.grad_a, ws.grad_b);
  }
  return loss;
}

template <class T>
double weight_decay_term(const NetParams<T>& params, double weight_decay, NetParams<T>* grads) {
  if (weight_decay == 0.0) return 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    for (std::size_t k = 0; k < params.weights[i].size(); ++k) {
      const T w = params.weights[i][k];
      sq += static_cast<double>(w) * static_cast<double>(w);
      if (grads) grads->weights[i][k] += static_cast<T>(weight_decay) * w;
    }
  }
  return 0.5 * weight_decay * sq;
}

template <class T>
double batch_loss_grad(const NetSpec& spec, const NetParams<T>& params, std::span<const std::vector<T>> inputs,
                       std::span<const int> labels, std::span<const std::size_t> indices, double weight_decay,
                       Workspace<T>& ws, NetParams<T>& grads) {
  grads = NetParams<T>::zeros(spec);
  const T scale = T(1) / static_cast<T>(indices.size());
  double loss = 0.0;
  for (std::size_t k : indices) {
    const int label = labels[k];
    if (label < 0 || label >= spec.class_count) throw Error(Errc::LabelOutOfRange, std::to_string(label));
    forward_sample(spec, params, ws, std::span<const T>(inputs[k]), true);
    loss += backward_sample(spec, params, ws, label, scale, grads);
  }
  loss /= static_cast<double>(indices.size());
  return loss + weight_decay_term(params, weight_decay, &grads);
}

}  // namespace

template <class T>
ForwardResult<T> forward(const NetSpec& spec, const NetParams<T>& params, std::span<const T> input) {
  if (!params.matches(spec)) throw Error(Errc::ShapeMismatch, "parameters do not match the network");
  thread_local Workspace<T> ws;
  forward_sample(spec, params, ws, input, false);
  ForwardResult<T> r;
  r.probabilities = ws.acts.back();
  const auto& pre = ws.acts[static_cast<std::size_t>(spec.pdf_layer) + 1];
  r.pdf.resize(pre.size());
  for (std::size_t k = 0; k < pre.size(); ++k) r.pdf[k] = pre[k] > T(0) ? pre[k] : T(0);
  return r;
}

template <class T>
LossGrad<T> loss_and_grad(const NetSpec& spec, const NetParams<T>& params, std::span<const std::vector<T>> inputs,
                          std::span<const int> labels, double weight_decay) {
  spec.validate();
  if (!params.matches(spec)) throw Error(Errc::ShapeMismatch, "parameters do not match the network");
  if (inputs.size() != labels.size() || inputs.empty()) throw Error(Errc::ShapeMismatch, "batch size mismatch");
  std::vector<std::size_t> idx(inputs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Workspace<T> ws;
  LossGrad<T> out;
  out.loss = batch_loss_grad(spec, params, inputs, labels, std::span<const std::size_t>(idx), weight_decay, ws,
                             out.grads);
  return out;
}

void SgdConfig::validate() const {
  if (!(learning_rate >= 0) || !(momentum >= 0 && momentum < 1) || batch_size < 1 || epochs < 0 ||
      !(weight_decay >= 0)) {
    throw Error(Errc::InvalidConfig, "invalid SGD configuration");
  }
}

template <class T>
NetParams<T> train_from(const NetSpec& spec, NetParams<T> params, std::span<const std::vector<T>> inputs,
                        std::span<const int> labels, const SgdConfig& cfg, TrainReport* report,
                        const EpochCallback& on_epoch) {
  spec.validate();
  cfg.validate();
  if (inputs.empty()) throw Error(Errc::EmptyDataset, "no training samples");
  if (inputs.size() != labels.size()) throw Error(Errc::ShapeMismatch, "inputs and labels differ in length");
  for (int label : labels) {
    if (label < 0 || label >= spec.class_count) throw Error(Errc::LabelOutOfRange, std::to_string(label));
  }
  if (!params.matches(spec)) throw Error(Errc::ShapeMismatch, "initial parameters do not match the network");

  NetParams<T> velocity = NetParams<T>::zeros(spec);
  NetParams<T> grads;
  Workspace<T> ws;
  std::mt19937_64 rng(cfg.rng_seed);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const T lr = static_cast<T>(cfg.learning_rate);
  const T mu = static_cast<T>(cfg.momentum);
  if (report) *report = {};

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const double loss = batch_loss_grad(spec, params, inputs, labels, batch, cfg.weight_decay, ws, grads);
      if (!std::isfinite(loss)) {
        throw Error(Errc::DivergenceDetected, "loss became non-finite at epoch " + std::to_string(epoch) +
                                                  ", batch " + std::to_string(batches));
      }
      if (report && epoch == 0 && batches == 0) report->initial_loss = loss;
      for (std::size_t i = 0; i < params.weights.size(); ++i) {
        for (std::size_t k = 0; k < params.weights[i].size(); ++k) {
          velocity.weights[i][k] = mu * velocity.weights[i][k] - lr * grads.weights[i][k];
          params.weights[i][k] += velocity.weights[i][k];
        }
        for (std::size_t k = 0; k < params.biases[i].size(); ++k) {
          velocity.biases[i][k] = mu * velocity.biases[i][k] - lr * grads.biases[i][k];
          params.biases[i][k] += velocity.biases[i][k];
        }
      }
      epoch_loss += loss;
      ++batches;
    }
    if (!params.all_finite()) {
      throw Error(Errc::DivergenceDetected, "parameters became non-finite at epoch " + std::to_string(epoch));
    }
    const double mean = epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1));
    if (report) report->epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return params;
}

template <class T>
NetParams<T> train(const NetSpec& spec, std::span<const std::vector<T>> inputs, std::span<const int> labels,
                   const SgdConfig& cfg, TrainReport* report, const EpochCallback& on_epoch) {
  spec.validate();
  return train_from(spec, NetParams<T>::he_init(spec, cfg.rng_seed), inputs, labels, cfg, report, on_epoch);
}

template <class T>
std::string params_tag(const NetParams<T>& params) {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& w : params.weights) h = fnv1a(w.data(), w.size() * sizeof(T), h);
  for (const auto& b : params.biases) h = fnv1a(b.data(), b.size() * sizeof(T), h);
  return "pdf:" + hex64(h);
}

PdfNetwork::PdfNetwork(NetSpec spec, NetParams<float> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  if (!params_.matches(spec_)) throw Error(Errc::ShapeMismatch, "parameters do not match the network");
  tag_ = params_tag(params_);
}

ForwardResult<float> PdfNetwork::forward(const imaging::Image& patch) const {
  if (patch.width() != spec_.input.w || patch.height() != spec_.input.h) {
    throw Error(Errc::ShapeMismatch, "patch size does not match the network input");
  }
  return convnet::forward<float>(spec_, params_, patch);
}

features::FeatureVector PdfNetwork::extract_pdf(const imaging::Image& patch) const {
  auto r = forward(patch);
  return {std::move(r.pdf), tag_};
}

int PdfNetwork::classify(const imaging::Image& patch) const {
  const auto r = forward(patch);
  return static_cast<int>(std::max_element(r.probabilities.begin(), r.probabilities.end()) -
                          r.probabilities.begin());
}

PdfNetwork::DenseResult PdfNetwork::dense_pdf(const imaging::Image& level, int stride) const {
  DenseResult out;
  out.stride = stride;
  const int side = spec_.input.w;
  if (stride < 1) throw Error(Errc::InvalidConfig, "stride must be positive");
  if (level.width() < side || level.height() < side) return out;
  out.windows_x = (level.width() - side) / stride + 1;
  out.windows_y = (level.height() - side) / stride + 1;
  const std::size_t n = static_cast<std::size_t>(out.windows_x) * out.windows_y;
  const int trunk = spec_.trunk_end();
  const int ts = spec_.trunk_stride();

  if (stride % ts != 0 || trunk == 0) {
    out.pdfs.reserve(n);
    for (int wy = 0; wy < out.windows_y; ++wy) {
      for (int wx = 0; wx < out.windows_x; ++wx) {
        out.pdfs.push_back(extract_pdf(level.crop(wx * stride, wy * stride, side, side)));
      }
    }
    return out;
  }

  // Run the convolutional trunk once over the whole level.
  Workspace<float> ws;
  ws.acts.resize(spec_.layers.size() + 1);
  ws.shapes.resize(spec_.layers.size() + 1);
  ws.acts[0] = to_tensor<float>(level.with_channels(spec_.input.c));
  ws.shapes[0] = {spec_.input.c, level.height(), level.width()};
  run_layers(spec_, params_, ws, 0, trunk, false);
  const Shape full = ws.shapes[static_cast<std::size_t>(trunk)];
  const Shape win = spec_.shapes()[static_cast<std::size_t>(trunk) - 1];
  const auto& fmap = ws.acts[static_cast<std::size_t>(trunk)];
  const int step = stride / ts;

  const Eigen::Index D = static_cast<Eigen::Index>(win.size());
  RowMat<float> X(D, static_cast<Eigen::Index>(n));
  Eigen::Index col = 0;
  for (int wy = 0; wy < out.windows_y; ++wy) {
    for (int wx = 0; wx < out.windows_x; ++wx, ++col) {
      Eigen::Index r = 0;
      for (int c = 0; c < win.c; ++c) {
        for (int y = 0; y < win.h; ++y) {
          const float* src = &fmap[(static_cast<std::size_t>(c) * full.h + wy * step + y) * full.w + wx * step];
          for (int x = 0; x < win.w; ++x) X(r++, col) = src[x];
        }
      }
    }
  }
  // Remaining layers up to the PDF layer, batched over windows.
  RowMat<float> cur = std::move(X);
  for (int i = trunk; i <= spec_.pdf_layer; ++i) {
    const auto& l = spec_.layers[static_cast<std::size_t>(i)];
    if (l.kind == LayerKind::FullyConnected) {
      Eigen::Map<const RowMat<float>> W(params_.weights[static_cast<std::size_t>(i)].data(), l.outputs, l.inputs);
      Eigen::Map<const Vec<float>> b(params_.biases[static_cast<std::size_t>(i)].data(), l.outputs);
      RowMat<float> next = W * cur;
      next.colwise() += b;
      cur = std::move(next);
    } else if (l.kind == LayerKind::Rectifier) {
      cur = cur.cwiseMax(0.0f);
    } else {
      throw Error(Errc::ShapeMismatch, "unsupported layer between trunk and PDF layer");
    }
  }
  out.pdfs.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto& v = out.pdfs[k];
    v.extractor_tag = tag_;
    v.values.resize(static_cast<std::size_t>(cur.rows()));
    for (Eigen::Index r = 0; r < cur.rows(); ++r) {
      v.values[static_cast<std::size_t>(r)] = std::max(cur(r, static_cast<Eigen::Index>(k)), 0.0f);
    }
  }
  return out;
}

features::FeatureVector extract_pdf(const NetSpec& spec, const NetParams<float>& params,
                                    const imaging::Image& patch) {
  return PdfNetwork(spec, params).extract_pdf(patch);
}

template struct NetParams<float>;
template struct NetParams<double>;
template std::vector<float> to_tensor<float>(const imaging::Image&);
template std::vector<double> to_tensor<double>(const imaging::Image&);
template ForwardResult<float> forward<float>(const NetSpec&, const NetParams<float>&, std::span<const float>);
template ForwardResult<double> forward<double>(const NetSpec&, const NetParams<double>&, std::span<const double>);
template LossGrad<float> loss_and_grad<float>(const NetSpec&, const NetParams<float>&,
                                              std::span<const std::vector<float>>, std::span<const int>, double);
template LossGrad<double> loss_and_grad<double>(const NetSpec&, const NetParams<double>&,
                                                std::span<const std::vector<double>>, std::span<const int>, double);
template NetParams<float> train<float>(const NetSpec&, std::span<const std::vector<float>>, std::span<const int>,
                                       const SgdConfig&, TrainReport*, const EpochCallback&);
template NetParams<double> train<double>(const NetSpec&, std::span<const std::vector<double>>, std::span<const int>,
                                         const SgdConfig&, TrainReport*, const EpochCallback&);
template NetParams<float> train_from<float>(const NetSpec&, NetParams<float>, std::span<const std::vector<float>>,
                                            std::span<const int>, const SgdConfig&, TrainReport*,
                                            const EpochCallback&);
template NetParams<double> train_from<double>(const NetSpec&, NetParams<double>,
                                              std::span<const std::vector<double>>, std::span<const int>,
                                              const SgdConfig&, TrainReport*, const EpochCallback&);
template std::string params_tag<float>(const NetParams<float>&);
template std::string params_tag<double>(const NetParams<double>&);

}  // namespace dposelets::convnet
