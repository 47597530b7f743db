#pragma once

#include "bitsearch/assignment.hpp"
#include "bitsearch/rng.hpp"
#include "bitsearch/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bitsearch {

enum class LayerKind { dense, conv2d };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& text);

/// One entry of an architecture description. For dense layers `width` is the
/// number of output units; for conv2d it is the number of filters and
/// `kernel` the square kernel size (stride 1, valid padding).
struct LayerDef {
  LayerKind kind = LayerKind::dense;
  std::size_t width = 0;
  std::size_t kernel = 0;

  friend bool operator==(const LayerDef&, const LayerDef&) = default;
};

struct Architecture {
  std::string name = "network";
  Shape input;  // {features} or {channels, height, width}
  std::vector<LayerDef> layers;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct LayerSpec {
  std::size_t index = 0;
  LayerKind kind = LayerKind::dense;
  Shape in_dims;
  Shape out_dims;
  std::size_t kernel = 0;
  std::uint64_t n_weights = 0;
  std::uint64_t n_macc = 0;
  double weight_std = 0.0;

  /// Shape of the weight tensor: {out, in} or {filters, channels, k, k}.
  Shape weight_shape() const;
  std::size_t fan_in() const;
  std::size_t fan_out() const;
};

struct NetworkSpec {
  std::string name;
  Shape input_dims;
  std::vector<LayerSpec> layers;
  /// Set once baseline training has been evaluated.
  std::optional<double> full_precision_accuracy;

  std::size_t layer_count() const noexcept { return layers.size(); }
  std::size_t num_classes() const;
};

/// Derives dimensions, weight counts, and MAcc counts. Throws DimensionError
/// for impossible geometry (e.g. a kernel larger than its input).
NetworkSpec build_spec(const Architecture& arch);

struct LayerParams {
  Tensor weight;
  Tensor bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct NetworkWeights {
  std::vector<LayerParams> layers;

  /// Zero tensors with the same shapes.
  NetworkWeights zeros_like() const;
  std::size_t parameter_count() const;

  friend bool operator==(const NetworkWeights&, const NetworkWeights&) = default;
};

/// Glorot-uniform weights, zero biases.
NetworkWeights init_weights(const NetworkSpec& spec, Rng& rng);

/// Writes the population standard deviation of each layer's weights into
/// the spec.
void record_weight_stats(NetworkSpec& spec, const NetworkWeights& weights);

/// Throws DimensionError unless every tensor matches the spec.
void check_weights(const NetworkSpec& spec, const NetworkWeights& weights);

/// Logits of shape {N, classes}. With an assignment, each layer's weights are
/// fake-quantized at its bitwidth before use. ReLU follows every layer but
/// the last.
Tensor forward(const NetworkSpec& spec, const NetworkWeights& weights, const Tensor& batch,
               const std::optional<QuantAssignment>& assignment = std::nullopt);

/// Mean softmax cross-entropy over the batch.
double cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean cross-entropy of the batch and its gradient with respect to the
/// master weights. Quantization uses the straight-through estimator, so the
/// gradient reaching a master weight is the gradient at its quantized value.
double loss_and_gradient(const NetworkSpec& spec, const NetworkWeights& weights,
                         const Tensor& batch, std::span<const int> labels,
                         const std::optional<QuantAssignment>& assignment,
                         NetworkWeights& grad);

}  // namespace bitsearch
