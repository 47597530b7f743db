#include "bitsearch/network.hpp"

#include "bitsearch/error.hpp"
#include "bitsearch/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace bitsearch {

std::string to_string(LayerKind kind) { return kind == LayerKind::dense ? "dense" : "conv2d"; }

LayerKind parse_layer_kind(const std::string& text) {
  if (text == "dense") return LayerKind::dense;
  if (text == "conv2d") return LayerKind::conv2d;
  throw Error(fmt::format("unknown layer kind '{}'", text));
}

Shape LayerSpec::weight_shape() const {
  if (kind == LayerKind::dense) return {out_dims[0], shape_size(in_dims)};
  return {out_dims[0], in_dims[0], kernel, kernel};
}

std::size_t LayerSpec::fan_in() const {
  return kind == LayerKind::dense ? shape_size(in_dims) : in_dims[0] * kernel * kernel;
}

std::size_t LayerSpec::fan_out() const {
  return kind == LayerKind::dense ? out_dims[0] : out_dims[0] * kernel * kernel;
}

std::size_t NetworkSpec::num_classes() const {
  if (layers.empty()) return 0;
  return shape_size(layers.back().out_dims);
}

NetworkSpec build_spec(const Architecture& arch) {
  if (arch.layers.empty()) throw DimensionError("architecture has no layers");
  if (arch.input.empty() || shape_size(arch.input) == 0) {
    throw DimensionError("architecture input shape is empty");
  }
  NetworkSpec spec;
  spec.name = arch.name;
  spec.input_dims = arch.input;
  Shape current = arch.input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerDef& def = arch.layers[i];
    if (def.width == 0) throw DimensionError(fmt::format("layer {} has zero width", i));
    LayerSpec layer;
    layer.index = i;
    layer.kind = def.kind;
    layer.in_dims = current;
    if (def.kind == LayerKind::dense) {
      layer.out_dims = {def.width};
      layer.n_weights = shape_size(current) * def.width;
      layer.n_macc = layer.n_weights;
    } else {
      if (current.size() != 3) {
        throw DimensionError(fmt::format("conv2d layer {} needs a {{C,H,W}} input, got {}", i, shape_to_string(current)));
      }
      const std::size_t k = def.kernel;
      if (k == 0 || k > current[1] || k > current[2]) {
        throw DimensionError(fmt::format("conv2d layer {}: kernel {} does not fit input {}", i, k, shape_to_string(current)));
      }
      layer.kernel = k;
      layer.out_dims = {def.width, current[1] - k + 1, current[2] - k + 1};
      layer.n_weights = def.width * current[0] * k * k;
      layer.n_macc = layer.n_weights * layer.out_dims[1] * layer.out_dims[2];
    }
    current = layer.out_dims;
    spec.layers.push_back(std::move(layer));
  }
  if (spec.num_classes() < 2) throw DimensionError("the last layer must produce at least two classes");
  return spec;
}

NetworkWeights NetworkWeights::zeros_like() const {
  NetworkWeights out;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) out.layers.push_back({Tensor(l.weight.shape()), Tensor(l.bias.shape())});
  return out;
}

std::size_t NetworkWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

NetworkWeights init_weights(const NetworkSpec& spec, Rng& rng) {
  NetworkWeights w;
  for (const auto& layer : spec.layers) {
    Tensor weight(layer.weight_shape());
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.fan_in() + layer.fan_out()));
    for (auto& v : weight.data()) v = rng.uniform(-limit, limit);
    w.layers.push_back({std::move(weight), Tensor({layer.out_dims[0]})});
  }
  return w;
}

void record_weight_stats(NetworkSpec& spec, const NetworkWeights& weights) {
  check_weights(spec, weights);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto data = weights.layers[l].weight.data();
    double mean = 0.0;
    for (double v : data) mean += v;
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (double v : data) var += (v - mean) * (v - mean);
    spec.layers[l].weight_std = std::sqrt(var / static_cast<double>(data.size()));
  }
}

void check_weights(const NetworkSpec& spec, const NetworkWeights& weights) {
  if (weights.layers.size() != spec.layers.size()) {
    throw DimensionError(fmt::format("weights have {} layers, spec has {}", weights.layers.size(), spec.layers.size()));
  }
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto expected = spec.layers[l].weight_shape();
    if (weights.layers[l].weight.shape() != expected) {
      throw DimensionError(fmt::format("layer {} weight shape {} != {}", l,
                                       shape_to_string(weights.layers[l].weight.shape()), shape_to_string(expected)));
    }
    if (weights.layers[l].bias.shape() != Shape{spec.layers[l].out_dims[0]}) {
      throw DimensionError(fmt::format("layer {} bias shape {}", l, shape_to_string(weights.layers[l].bias.shape())));
    }
  }
}

namespace {

void check_assignment(const NetworkSpec& spec, const std::optional<QuantAssignment>& a) {
  if (a && a->size() != spec.layer_count()) {
    throw DimensionError(fmt::format("assignment has {} entries for {} layers", a->size(), spec.layer_count()));
  }
}

std::size_t check_batch(const NetworkSpec& spec, const Tensor& batch) {
  if (batch.rank() < 1) throw DimensionError("batch tensor has no batch axis");
  const Shape feature(batch.shape().begin() + 1, batch.shape().end());
  const bool exact = feature == spec.input_dims;
  const bool flat_ok = spec.layers.front().kind == LayerKind::dense &&
                       shape_size(feature) == shape_size(spec.input_dims);
  if (!exact && !flat_ok) {
    throw DimensionError(fmt::format("batch features {} do not match network input {}", shape_to_string(feature),
                                     shape_to_string(spec.input_dims)));
  }
  return batch.dim(0);
}

// Forward activations kept for back-propagation.
struct Tape {
  std::vector<std::vector<double>> effective;  // weights as used by the forward pass
  std::vector<std::vector<double>> outputs;    // post-activation output of each layer
};

void dense_forward(const LayerSpec& layer, std::span<const double> w, std::span<const double> b,
                   std::span<const double> in, std::size_t n, std::span<double> out) {
  const std::size_t in_size = shape_size(layer.in_dims);
  const std::size_t units = layer.out_dims[0];
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = in.data() + s * in_size;
    double* y = out.data() + s * units;
    for (std::size_t o = 0; o < units; ++o) {
      const double* row = w.data() + o * in_size;
      double acc = b[o];
      for (std::size_t i = 0; i < in_size; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }
}

void dense_backward(const LayerSpec& layer, std::span<const double> w, std::span<const double> in,
                    std::span<const double> dout, std::size_t n, std::span<double> dw, std::span<double> db,
                    std::span<double> din) {
  const std::size_t in_size = shape_size(layer.in_dims);
  const std::size_t units = layer.out_dims[0];
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = in.data() + s * in_size;
    const double* dy = dout.data() + s * units;
    double* dx = din.empty() ? nullptr : din.data() + s * in_size;
    for (std::size_t o = 0; o < units; ++o) {
      const double g = dy[o];
      if (g == 0.0) continue;
      db[o] += g;
      double* dw_row = dw.data() + o * in_size;
      const double* w_row = w.data() + o * in_size;
      for (std::size_t i = 0; i < in_size; ++i) dw_row[i] += g * x[i];
      if (dx) {
        for (std::size_t i = 0; i < in_size; ++i) dx[i] += g * w_row[i];
      }
    }
  }
}

void conv_forward(const LayerSpec& layer, std::span<const double> w, std::span<const double> b,
                  std::span<const double> in, std::size_t n, std::span<double> out) {
  const std::size_t c_in = layer.in_dims[0], h_in = layer.in_dims[1], w_in = layer.in_dims[2];
  const std::size_t filters = layer.out_dims[0], h_out = layer.out_dims[1], w_out = layer.out_dims[2];
  const std::size_t k = layer.kernel;
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = in.data() + s * c_in * h_in * w_in;
    double* y = out.data() + s * filters * h_out * w_out;
    for (std::size_t f = 0; f < filters; ++f) {
      double* yf = y + f * h_out * w_out;
      std::fill(yf, yf + h_out * w_out, b[f]);
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* xc = x + c * h_in * w_in;
        const double* wfc = w.data() + (f * c_in + c) * k * k;
        for (std::size_t u = 0; u < k; ++u) {
          for (std::size_t v = 0; v < k; ++v) {
            const double wv = wfc[u * k + v];
            for (std::size_t r = 0; r < h_out; ++r) {
              const double* xr = xc + (r + u) * w_in + v;
              double* yr = yf + r * w_out;
              for (std::size_t q = 0; q < w_out; ++q) yr[q] += wv * xr[q];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const LayerSpec& layer, std::span<const double> w, std::span<const double> in,
                   std::span<const double> dout, std::size_t n, std::span<double> dw, std::span<double> db,
                   std::span<double> din) {
  const std::size_t c_in = layer.in_dims[0], h_in = layer.in_dims[1], w_in = layer.in_dims[2];
  const std::size_t filters = layer.out_dims[0], h_out = layer.out_dims[1], w_out = layer.out_dims[2];
  const std::size_t k = layer.kernel;
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = in.data() + s * c_in * h_in * w_in;
    const double* dy = dout.data() + s * filters * h_out * w_out;
    double* dx = din.empty() ? nullptr : din.data() + s * c_in * h_in * w_in;
    for (std::size_t f = 0; f < filters; ++f) {
      const double* dyf = dy + f * h_out * w_out;
      double bias_grad = 0.0;
      for (std::size_t i = 0; i < h_out * w_out; ++i) bias_grad += dyf[i];
      db[f] += bias_grad;
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* xc = x + c * h_in * w_in;
        double* dxc = dx ? dx + c * h_in * w_in : nullptr;
        const double* wfc = w.data() + (f * c_in + c) * k * k;
        double* dwfc = dw.data() + (f * c_in + c) * k * k;
        for (std::size_t u = 0; u < k; ++u) {
          for (std::size_t v = 0; v < k; ++v) {
            double acc = 0.0;
            const double wv = wfc[u * k + v];
            for (std::size_t r = 0; r < h_out; ++r) {
              const double* xr = xc + (r + u) * w_in + v;
              const double* dyr = dyf + r * w_out;
              for (std::size_t q = 0; q < w_out; ++q) acc += dyr[q] * xr[q];
              if (dxc) {
                double* dxr = dxc + (r + u) * w_in + v;
                for (std::size_t q = 0; q < w_out; ++q) dxr[q] += wv * dyr[q];
              }
            }
            dwfc[u * k + v] += acc;
          }
        }
      }
    }
  }
}

Tensor run_forward(const NetworkSpec& spec, const NetworkWeights& weights, const Tensor& batch,
                   const std::optional<QuantAssignment>& assignment, Tape* tape) {
  check_weights(spec, weights);
  check_assignment(spec, assignment);
  const std::size_t n = check_batch(spec, batch);
  const std::size_t layers = spec.layer_count();

  std::vector<std::vector<double>> effective(layers);
  std::vector<std::vector<double>> outputs(layers);
  std::span<const double> current = batch.data();
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerSpec& layer = spec.layers[l];
    const auto master = weights.layers[l].weight.data();
    std::span<const double> w = master;
    if (assignment) {
      effective[l].resize(master.size());
      quantize_into(master, (*assignment)[l], effective[l]);
      w = effective[l];
    }
    outputs[l].assign(n * shape_size(layer.out_dims), 0.0);
    if (layer.kind == LayerKind::dense) {
      dense_forward(layer, w, weights.layers[l].bias.data(), current, n, outputs[l]);
    } else {
      conv_forward(layer, w, weights.layers[l].bias.data(), current, n, outputs[l]);
    }
    if (l + 1 < layers) {
      for (auto& v : outputs[l]) v = std::max(v, 0.0);
    }
    current = outputs[l];
  }
  Tensor logits({n, spec.num_classes()}, outputs.back());
  if (tape) {
    tape->effective = std::move(effective);
    tape->outputs = std::move(outputs);
  }
  return logits;
}

}  // namespace

Tensor forward(const NetworkSpec& spec, const NetworkWeights& weights, const Tensor& batch,
               const std::optional<QuantAssignment>& assignment) {
  return run_forward(spec, weights, batch, assignment, nullptr);
}

namespace {

// Softmax probabilities of one logit row.
void row_softmax(const double* logits, std::size_t c, double* probs) {
  const double m = *std::max_element(logits, logits + c);
  double z = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    probs[j] = std::exp(logits[j] - m);
    z += probs[j];
  }
  for (std::size_t j = 0; j < c; ++j) probs[j] /= z;
}

double row_nll(const double* logits, std::size_t c, int label) {
  const double m = *std::max_element(logits, logits + c);
  double z = 0.0;
  for (std::size_t j = 0; j < c; ++j) z += std::exp(logits[j] - m);
  return std::log(z) + m - logits[label];
}

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError(fmt::format("{} labels for logits {}", labels.size(), shape_to_string(logits.shape())));
  }
  const auto c = static_cast<int>(logits.dim(1));
  for (int y : labels) {
    if (y < 0 || y >= c) throw DimensionError(fmt::format("label {} outside [0, {})", y, c));
  }
}

}  // namespace

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t n = labels.size(), c = logits.dim(1);
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) total += row_nll(logits.data().data() + s * c, c, labels[s]);
  return total / static_cast<double>(n);
}

double loss_and_gradient(const NetworkSpec& spec, const NetworkWeights& weights, const Tensor& batch,
                         std::span<const int> labels, const std::optional<QuantAssignment>& assignment,
                         NetworkWeights& grad) {
  Tape tape;
  const Tensor logits = run_forward(spec, weights, batch, assignment, &tape);
  check_labels(logits, labels);
  grad = weights.zeros_like();

  const std::size_t n = labels.size(), c = logits.dim(1);
  std::vector<double> delta(n * c);
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const double* row = logits.data().data() + s * c;
    total += row_nll(row, c, labels[s]);
    row_softmax(row, c, delta.data() + s * c);
    delta[s * c + static_cast<std::size_t>(labels[s])] -= 1.0;
  }
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  for (auto& d : delta) d *= inv_n;

  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    const LayerSpec& layer = spec.layers[l];
    std::span<const double> w = assignment ? std::span<const double>(tape.effective[l])
                                           : weights.layers[l].weight.data();
    std::span<const double> in = l == 0 ? batch.data() : std::span<const double>(tape.outputs[l - 1]);
    std::vector<double> din(l == 0 ? 0 : in.size(), 0.0);
    // Straight-through: the gradient at the quantized weight is passed to the
    // master weight unchanged (the max-abs scale keeps every weight in range).
    if (layer.kind == LayerKind::dense) {
      dense_backward(layer, w, in, delta, n, grad.layers[l].weight.data(), grad.layers[l].bias.data(), din);
    } else {
      conv_backward(layer, w, in, delta, n, grad.layers[l].weight.data(), grad.layers[l].bias.data(), din);
    }
    if (l > 0) {
      const auto& prev_out = tape.outputs[l - 1];
      for (std::size_t i = 0; i < din.size(); ++i) {
        if (prev_out[i] <= 0.0) din[i] = 0.0;
      }
      delta = std::move(din);
    }
  }
  return total * inv_n;
}

}  // namespace bitsearch
