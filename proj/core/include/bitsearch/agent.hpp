#pragma once

#include "bitsearch/network.hpp"
#include "bitsearch/rng.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace bitsearch {

inline constexpr std::size_t kEmbeddingSize = 7;

/// Observation for one layer step, in fixed order:
/// layer index / L, log10(n_weights) / 7, log10(n_macc) / 7, weight std,
/// bits / max_bits, state of quantization, state of relative accuracy.
struct StateEmbedding {
  std::array<double, kEmbeddingSize> values{};

  double operator[](std::size_t i) const { return values[i]; }
  friend bool operator==(const StateEmbedding&, const StateEmbedding&) = default;
};

StateEmbedding embed_state(const LayerSpec& layer, int bits_now, double quant_state,
                           double acc_state, std::size_t layer_count, int max_bits);

struct AgentArch {
  std::size_t input = kEmbeddingSize;
  std::size_t lstm_hidden = 64;
  std::size_t policy_hidden1 = 128;
  std::size_t policy_hidden2 = 128;
  std::size_t value_hidden1 = 128;
  std::size_t value_hidden2 = 64;
  std::size_t actions = 7;
  /// false replaces each LSTM with a feed-forward tanh layer of the same
  /// width (no state carried between steps).
  bool recurrent = true;

  friend bool operator==(const AgentArch&, const AgentArch&) = default;
};

/// Offsets of every parameter block inside the flat parameter vector.
struct AgentLayout {
  struct Block {
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
  };
  struct Lstm {
    Block w_in;   // {4H, D}, gate order i, f, g, o
    Block w_rec;  // {4H, H}
    Block bias;   // {4H, 1}
  };
  struct Dense {
    Block weight;  // {out, in}
    Block bias;    // {out, 1}
  };
  Lstm policy_lstm;
  Dense policy_fc1, policy_fc2, policy_out;
  Lstm value_lstm;
  Dense value_fc1, value_fc2, value_out;
  std::size_t total = 0;

  explicit AgentLayout(const AgentArch& arch);
};

/// Policy and value network weights stored in one flat vector.
class AgentParams {
 public:
  explicit AgentParams(const AgentArch& arch);

  /// Glorot-uniform weights, zero biases except a forget-gate bias of 1; the
  /// policy output layer is scaled down so the initial policy is near uniform.
  static AgentParams initialized(const AgentArch& arch, Rng& rng);

  const AgentArch& arch() const noexcept { return arch_; }
  const AgentLayout& layout() const noexcept { return layout_; }
  std::span<double> flat() noexcept { return flat_; }
  std::span<const double> flat() const noexcept { return flat_; }

  std::span<const double> block(const AgentLayout::Block& b) const {
    return std::span<const double>(flat_).subspan(b.offset, b.size());
  }
  std::span<double> block(const AgentLayout::Block& b) {
    return std::span<double>(flat_).subspan(b.offset, b.size());
  }

  friend bool operator==(const AgentParams& a, const AgentParams& b) {
    return a.arch_ == b.arch_ && a.flat_ == b.flat_;
  }

 private:
  AgentArch arch_;
  AgentLayout layout_;
  std::vector<double> flat_;
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;

  static LstmState zeros(std::size_t hidden) {
    return {std::vector<double>(hidden, 0.0), std::vector<double>(hidden, 0.0)};
  }
};

/// Which actions are available at a step; empty means all.
using ActionMask = std::vector<std::uint8_t>;

struct PolicyOutput {
  std::vector<double> probs;
  LstmState hidden;
};

/// One policy step: embedding plus carried LSTM state in, softmax over the
/// (masked) action set and the next LSTM state out.
PolicyOutput policy_forward(const AgentParams& params, const StateEmbedding& embedding,
                            const LstmState& hidden, const ActionMask& mask = {});

/// Runs a whole sequence from a zero LSTM state; one distribution per step.
std::vector<std::vector<double>> policy_forward(const AgentParams& params,
                                                std::span<const StateEmbedding> sequence);

struct ValueOutput {
  double value = 0.0;
  LstmState hidden;
};

ValueOutput value_forward(const AgentParams& params, const StateEmbedding& embedding,
                          const LstmState& hidden);

/// Numerically stable softmax; masked entries get probability zero.
std::vector<double> softmax(std::span<const double> logits, const ActionMask& mask = {});

/// Inverse-CDF draw from `dist`.
std::size_t sample_action(std::span<const double> dist, Rng& rng);

enum class ActionMode { flexible, restricted };

std::string to_string(ActionMode mode);
ActionMode parse_action_mode(const std::string& text);

/// Actions reachable from `current_index` (index into the bitwidth set):
/// everything in flexible mode, the +-1 neighbourhood in restricted mode.
ActionMask action_mask(std::size_t actions, std::size_t current_index, ActionMode mode);

/// Flexible mode returns `dist`; restricted mode keeps only the +-1
/// neighbourhood of `current_index` and renormalizes.
std::vector<double> restrict_actions(std::span<const double> dist, std::size_t current_index,
                                     ActionMode mode);

/// Per-step output of a full forward/backward pass over one sequence.
struct SequenceForward {
  std::vector<std::vector<double>> logits;  // masked entries hold -inf
  std::vector<std::vector<double>> probs;
  std::vector<double> values;
};

/// Forward pass over a sequence from zero state with per-step action masks
/// (`masks` may be empty). When `grad` is non-empty, back-propagates the
/// supplied loss derivatives with respect to the logits and values (through
/// time) and accumulates into `grad`.
class SequenceEvaluator {
 public:
  explicit SequenceEvaluator(const AgentParams& params);

  SequenceForward forward(std::span<const StateEmbedding> sequence,
                          std::span<const ActionMask> masks = {});

  /// Must follow forward(); `dlogits[t]` and `dvalues[t]` are the loss
  /// derivatives at step t.
  void backward(std::span<const std::vector<double>> dlogits, std::span<const double> dvalues,
                std::span<double> grad);

 private:
  const AgentParams& params_;
  std::vector<StateEmbedding> inputs_;
  std::vector<std::vector<double>> policy_gates_, policy_c_, policy_h_;
  std::vector<std::vector<double>> value_gates_, value_c_, value_h_;
  std::vector<std::vector<double>> policy_a1_, policy_a2_;
  std::vector<std::vector<double>> value_a1_, value_a2_;
};

inline constexpr std::uint32_t kAgentFormatVersion = 1;

/// Layout: "QFAG", u32 version, architecture (8 x u32), u64 parameter count,
/// then little-endian f64 parameters.
void save_checkpoint(const AgentParams& params, const std::filesystem::path& path);
AgentParams load_checkpoint(const std::filesystem::path& path);

}  // namespace bitsearch

namespace bitsearch {

/// Carries policy and value LSTM state through one episode.
class PolicyRunner {
 public:
  explicit PolicyRunner(const AgentParams& params);

  struct Decision {
    std::size_t action = 0;
    double log_prob = 0.0;
    double value = 0.0;
    std::vector<double> probs;
  };

  /// Zeroes both LSTM states; call at every episode start.
  void reset();

  /// Samples an action when `rng` is given, otherwise picks the most likely
  /// one (lowest index on ties).
  Decision act(const StateEmbedding& embedding, const ActionMask& mask, Rng* rng);

 private:
  const AgentParams& params_;
  LstmState policy_state_;
  LstmState value_state_;
};

}  // namespace bitsearch
