#include "bitsearch/agent.hpp"

#include "bitsearch/error.hpp"
#include "detail/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace bitsearch {

StateEmbedding embed_state(const LayerSpec& layer, int bits_now, double quant_state, double acc_state,
                           std::size_t layer_count, int max_bits) {
  auto log_norm = [](std::uint64_t count) {
    // log10(count) / log10(1e7), clamped to [0, 1.2]
    return std::clamp(std::log10(static_cast<double>(std::max<std::uint64_t>(count, 1))) / 7.0, 0.0, 1.2);
  };
  StateEmbedding e;
  e.values = {static_cast<double>(layer.index) / static_cast<double>(layer_count),
              log_norm(layer.n_weights),
              log_norm(layer.n_macc),
              layer.weight_std,
              static_cast<double>(bits_now) / static_cast<double>(max_bits),
              quant_state,
              acc_state};
  return e;
}

AgentLayout::AgentLayout(const AgentArch& arch) {
  std::size_t offset = 0;
  auto block = [&](std::size_t rows, std::size_t cols) {
    Block b{offset, rows, cols};
    offset += rows * cols;
    return b;
  };
  auto lstm = [&](std::size_t in, std::size_t hidden) {
    Lstm l;
    l.w_in = block(4 * hidden, in);
    l.w_rec = block(4 * hidden, hidden);
    l.bias = block(4 * hidden, 1);
    return l;
  };
  auto dense = [&](std::size_t in, std::size_t out) {
    Dense d;
    d.weight = block(out, in);
    d.bias = block(out, 1);
    return d;
  };
  policy_lstm = lstm(arch.input, arch.lstm_hidden);
  policy_fc1 = dense(arch.lstm_hidden, arch.policy_hidden1);
  policy_fc2 = dense(arch.policy_hidden1, arch.policy_hidden2);
  policy_out = dense(arch.policy_hidden2, arch.actions);
  value_lstm = lstm(arch.input, arch.lstm_hidden);
  value_fc1 = dense(arch.lstm_hidden, arch.value_hidden1);
  value_fc2 = dense(arch.value_hidden1, arch.value_hidden2);
  value_out = dense(arch.value_hidden2, 1);
  total = offset;
}

AgentParams::AgentParams(const AgentArch& arch) : arch_(arch), layout_(arch), flat_(layout_.total, 0.0) {
  if (arch.actions < 1 || arch.lstm_hidden < 1 || arch.input < 1) {
    throw ConfigError("agent architecture needs at least one input, hidden unit, and action");
  }
}

AgentParams AgentParams::initialized(const AgentArch& arch, Rng& rng) {
  AgentParams p(arch);
  const auto& L = p.layout_;
  auto glorot = [&](const AgentLayout::Block& b, double gain = 1.0) {
    const double limit = gain * std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
    for (auto& v : p.block(b)) v = rng.uniform(-limit, limit);
  };
  for (const auto* lstm : {&L.policy_lstm, &L.value_lstm}) {
    glorot(lstm->w_in);
    glorot(lstm->w_rec);
    auto bias = p.block(lstm->bias);
    const std::size_t h = arch.lstm_hidden;
    std::fill(bias.begin() + static_cast<std::ptrdiff_t>(h), bias.begin() + static_cast<std::ptrdiff_t>(2 * h), 1.0);
  }
  glorot(L.policy_fc1.weight);
  glorot(L.policy_fc2.weight);
  glorot(L.policy_out.weight, 0.01);
  glorot(L.value_fc1.weight);
  glorot(L.value_fc2.weight);
  glorot(L.value_out.weight);
  return p;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y = W x + b for a {rows, cols} block.
std::vector<double> affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                           std::size_t rows, std::size_t cols) {
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w.data() + r * cols;
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

std::vector<double> dense_tanh(const AgentParams& p, const AgentLayout::Dense& d, std::span<const double> x) {
  auto y = affine(p.block(d.weight), p.block(d.bias), x, d.weight.rows, d.weight.cols);
  for (auto& v : y) v = std::tanh(v);
  return y;
}

std::vector<double> dense_linear(const AgentParams& p, const AgentLayout::Dense& d, std::span<const double> x) {
  return affine(p.block(d.weight), p.block(d.bias), x, d.weight.rows, d.weight.cols);
}

// One cell step. `gates` receives the activated i, f, g, o blocks.
LstmState lstm_step(const AgentParams& p, const AgentLayout::Lstm& l, std::span<const double> x,
                    const LstmState& prev, std::vector<double>* gates_out) {
  const std::size_t h = p.arch().lstm_hidden;
  const std::size_t d = p.arch().input;
  std::vector<double> z = affine(p.block(l.w_in), p.block(l.bias), x, 4 * h, d);
  LstmState next = LstmState::zeros(h);
  if (!p.arch().recurrent) {
    for (std::size_t j = 0; j < h; ++j) next.h[j] = std::tanh(z[2 * h + j]);
    if (gates_out) {
      gates_out->assign(4 * h, 0.0);
      std::copy(next.h.begin(), next.h.end(), gates_out->begin() + static_cast<std::ptrdiff_t>(2 * h));
    }
    return next;
  }
  const auto w_rec = p.block(l.w_rec);
  for (std::size_t r = 0; r < 4 * h; ++r) {
    const double* row = w_rec.data() + r * h;
    double acc = 0.0;
    for (std::size_t c = 0; c < h; ++c) acc += row[c] * prev.h[c];
    z[r] += acc;
  }
  for (std::size_t j = 0; j < h; ++j) {
    z[j] = sigmoid(z[j]);
    z[h + j] = sigmoid(z[h + j]);
    z[2 * h + j] = std::tanh(z[2 * h + j]);
    z[3 * h + j] = sigmoid(z[3 * h + j]);
    next.c[j] = z[h + j] * prev.c[j] + z[j] * z[2 * h + j];
    next.h[j] = z[3 * h + j] * std::tanh(next.c[j]);
  }
  if (gates_out) *gates_out = std::move(z);
  return next;
}

LstmState checked_state(const LstmState& s, std::size_t hidden) {
  if (s.h.empty() && s.c.empty()) return LstmState::zeros(hidden);
  if (s.h.size() != hidden || s.c.size() != hidden) {
    throw DimensionError(fmt::format("LSTM state of size {} for hidden size {}", s.h.size(), hidden));
  }
  return s;
}

std::vector<double> masked_logits(std::vector<double> logits, const ActionMask& mask) {
  if (mask.empty()) return logits;
  if (mask.size() != logits.size()) throw DimensionError("action mask size differs from the action count");
  for (std::size_t a = 0; a < logits.size(); ++a) {
    if (!mask[a]) logits[a] = -std::numeric_limits<double>::infinity();
  }
  return logits;
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits, const ActionMask& mask) {
  if (!mask.empty() && mask.size() != logits.size()) throw DimensionError("action mask size differs from the action count");
  std::vector<double> p(logits.size(), 0.0);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < logits.size(); ++a) {
    if (mask.empty() || mask[a]) m = std::max(m, logits[a]);
  }
  if (!std::isfinite(m)) throw Error("softmax over an empty action set");
  double z = 0.0;
  for (std::size_t a = 0; a < logits.size(); ++a) {
    if (mask.empty() || mask[a]) {
      p[a] = std::exp(logits[a] - m);
      z += p[a];
    }
  }
  for (auto& v : p) v /= z;
  return p;
}

PolicyOutput policy_forward(const AgentParams& params, const StateEmbedding& embedding, const LstmState& hidden,
                            const ActionMask& mask) {
  const auto& L = params.layout();
  PolicyOutput out;
  out.hidden = lstm_step(params, L.policy_lstm, embedding.values, checked_state(hidden, params.arch().lstm_hidden),
                         nullptr);
  const auto a1 = dense_tanh(params, L.policy_fc1, out.hidden.h);
  const auto a2 = dense_tanh(params, L.policy_fc2, a1);
  out.probs = softmax(dense_linear(params, L.policy_out, a2), mask);
  return out;
}

std::vector<std::vector<double>> policy_forward(const AgentParams& params, std::span<const StateEmbedding> sequence) {
  std::vector<std::vector<double>> dists;
  LstmState state = LstmState::zeros(params.arch().lstm_hidden);
  for (const auto& e : sequence) {
    auto out = policy_forward(params, e, state);
    dists.push_back(std::move(out.probs));
    state = std::move(out.hidden);
  }
  return dists;
}

ValueOutput value_forward(const AgentParams& params, const StateEmbedding& embedding, const LstmState& hidden) {
  const auto& L = params.layout();
  ValueOutput out;
  out.hidden = lstm_step(params, L.value_lstm, embedding.values, checked_state(hidden, params.arch().lstm_hidden),
                         nullptr);
  const auto v1 = dense_tanh(params, L.value_fc1, out.hidden.h);
  const auto v2 = dense_tanh(params, L.value_fc2, v1);
  out.value = dense_linear(params, L.value_out, v2)[0];
  return out;
}

std::size_t sample_action(std::span<const double> dist, Rng& rng) {
  if (dist.empty()) throw Error("cannot sample from an empty distribution");
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    if (dist[a] > 0.0) last_positive = a;
    cumulative += dist[a];
    if (u < cumulative && dist[a] > 0.0) return a;
  }
  return last_positive;  // rounding left u above the final cumulative sum
}

std::string to_string(ActionMode mode) { return mode == ActionMode::flexible ? "flexible" : "restricted"; }

ActionMode parse_action_mode(const std::string& text) {
  if (text == "flexible") return ActionMode::flexible;
  if (text == "restricted") return ActionMode::restricted;
  throw ConfigError(fmt::format("unknown action mode '{}' (expected flexible or restricted)", text));
}

ActionMask action_mask(std::size_t actions, std::size_t current_index, ActionMode mode) {
  if (mode == ActionMode::flexible) return {};
  if (current_index >= actions) throw DimensionError("current action index outside the action set");
  ActionMask mask(actions, 0);
  const std::size_t lo = current_index == 0 ? 0 : current_index - 1;
  const std::size_t hi = std::min(actions - 1, current_index + 1);
  for (std::size_t a = lo; a <= hi; ++a) mask[a] = 1;
  return mask;
}

std::vector<double> restrict_actions(std::span<const double> dist, std::size_t current_index, ActionMode mode) {
  std::vector<double> out(dist.begin(), dist.end());
  if (mode == ActionMode::flexible) return out;
  const auto mask = action_mask(dist.size(), current_index, mode);
  double total = 0.0;
  for (std::size_t a = 0; a < out.size(); ++a) {
    if (!mask[a]) out[a] = 0.0;
    total += out[a];
  }
  if (total <= 0.0) {
    // All neighbourhood mass vanished; fall back to uniform over it.
    std::size_t count = 0;
    for (auto m : mask) count += m;
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = mask[a] ? 1.0 / static_cast<double>(count) : 0.0;
    return out;
  }
  for (auto& v : out) v /= total;
  return out;
}

SequenceEvaluator::SequenceEvaluator(const AgentParams& params) : params_(params) {}

SequenceForward SequenceEvaluator::forward(std::span<const StateEmbedding> sequence,
                                           std::span<const ActionMask> masks) {
  if (!masks.empty() && masks.size() != sequence.size()) throw DimensionError("one action mask per step expected");
  const auto& L = params_.layout();
  const std::size_t hidden = params_.arch().lstm_hidden;
  inputs_.assign(sequence.begin(), sequence.end());
  for (auto* v : {&policy_gates_, &policy_c_, &policy_h_, &value_gates_, &value_c_, &value_h_, &policy_a1_,
                  &policy_a2_, &value_a1_, &value_a2_}) {
    v->clear();
  }
  SequenceForward out;
  LstmState ps = LstmState::zeros(hidden), vs = LstmState::zeros(hidden);
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    std::vector<double> gates;
    ps = lstm_step(params_, L.policy_lstm, sequence[t].values, ps, &gates);
    policy_gates_.push_back(std::move(gates));
    policy_c_.push_back(ps.c);
    policy_h_.push_back(ps.h);
    policy_a1_.push_back(dense_tanh(params_, L.policy_fc1, ps.h));
    policy_a2_.push_back(dense_tanh(params_, L.policy_fc2, policy_a1_.back()));
    const ActionMask& mask = masks.empty() ? ActionMask{} : masks[t];
    auto logits = masked_logits(dense_linear(params_, L.policy_out, policy_a2_.back()), mask);
    out.probs.push_back(softmax(logits, mask));
    out.logits.push_back(std::move(logits));

    vs = lstm_step(params_, L.value_lstm, sequence[t].values, vs, &gates);
    value_gates_.push_back(std::move(gates));
    value_c_.push_back(vs.c);
    value_h_.push_back(vs.h);
    value_a1_.push_back(dense_tanh(params_, L.value_fc1, vs.h));
    value_a2_.push_back(dense_tanh(params_, L.value_fc2, value_a1_.back()));
    out.values.push_back(dense_linear(params_, L.value_out, value_a2_.back())[0]);
  }
  return out;
}

namespace {

// Back-propagates dy through y = W x + b, accumulating dW, db, and returning dx.
std::vector<double> affine_backward(const AgentParams& p, const AgentLayout::Dense& d, std::span<const double> x,
                                    std::span<const double> dy, std::span<double> grad) {
  const std::size_t rows = d.weight.rows, cols = d.weight.cols;
  const auto w = p.block(d.weight);
  double* dw = grad.data() + d.weight.offset;
  double* db = grad.data() + d.bias.offset;
  std::vector<double> dx(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    db[r] += g;
    const double* wr = w.data() + r * cols;
    double* dwr = dw + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      dwr[c] += g * x[c];
      dx[c] += g * wr[c];
    }
  }
  return dx;
}

// Tanh layer backward: dy is with respect to the activated output `y`.
std::vector<double> tanh_backward(const AgentParams& p, const AgentLayout::Dense& d, std::span<const double> x,
                                  std::span<const double> y, std::vector<double> dy, std::span<double> grad) {
  for (std::size_t i = 0; i < dy.size(); ++i) dy[i] *= 1.0 - y[i] * y[i];
  return affine_backward(p, d, x, dy, grad);
}

void lstm_backward(const AgentParams& p, const AgentLayout::Lstm& l, std::span<const StateEmbedding> inputs,
                   const std::vector<std::vector<double>>& gates, const std::vector<std::vector<double>>& cs,
                   const std::vector<std::vector<double>>& hs, const std::vector<std::vector<double>>& dh_head,
                   std::span<double> grad) {
  const std::size_t h = p.arch().lstm_hidden;
  const std::size_t d = p.arch().input;
  const auto w_rec = p.block(l.w_rec);
  double* dw_in = grad.data() + l.w_in.offset;
  double* dw_rec = grad.data() + l.w_rec.offset;
  double* db = grad.data() + l.bias.offset;
  std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), dz(4 * h);
  const std::vector<double> zeros(h, 0.0);
  for (std::size_t t = inputs.size(); t-- > 0;) {
    const auto& g = gates[t];
    std::fill(dz.begin(), dz.end(), 0.0);
    if (p.arch().recurrent) {
      const auto& c_prev = t ? cs[t - 1] : zeros;
      for (std::size_t j = 0; j < h; ++j) {
        const double dh = dh_head[t][j] + dh_next[j];
        const double i = g[j], f = g[h + j], gg = g[2 * h + j], o = g[3 * h + j];
        const double tc = std::tanh(cs[t][j]);
        const double dc = dc_next[j] + dh * o * (1.0 - tc * tc);
        dz[j] = dc * gg * i * (1.0 - i);
        dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
        dz[2 * h + j] = dc * i * (1.0 - gg * gg);
        dz[3 * h + j] = dh * tc * o * (1.0 - o);
        dc_next[j] = dc * f;
      }
    } else {
      for (std::size_t j = 0; j < h; ++j) {
        const double y = g[2 * h + j];
        dz[2 * h + j] = dh_head[t][j] * (1.0 - y * y);
      }
    }
    const auto& x = inputs[t].values;
    const auto& h_prev = t ? hs[t - 1] : zeros;
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      const double gz = dz[r];
      if (gz == 0.0) continue;
      db[r] += gz;
      for (std::size_t c = 0; c < d; ++c) dw_in[r * d + c] += gz * x[c];
      if (p.arch().recurrent) {
        const double* wr = w_rec.data() + r * h;
        for (std::size_t c = 0; c < h; ++c) {
          dw_rec[r * h + c] += gz * h_prev[c];
          dh_next[c] += gz * wr[c];
        }
      }
    }
  }
}

}  // namespace

void SequenceEvaluator::backward(std::span<const std::vector<double>> dlogits, std::span<const double> dvalues,
                                 std::span<double> grad) {
  const std::size_t steps = inputs_.size();
  if (dlogits.size() != steps || dvalues.size() != steps) throw DimensionError("backward needs one gradient per step");
  if (grad.size() != params_.layout().total) throw DimensionError("gradient buffer has the wrong size");
  const auto& L = params_.layout();
  std::vector<std::vector<double>> dh_policy(steps), dh_value(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> dl(dlogits[t].begin(), dlogits[t].end());
    for (auto& v : dl) {
      if (!std::isfinite(v)) v = 0.0;
    }
    auto da2 = affine_backward(params_, L.policy_out, policy_a2_[t], dl, grad);
    auto da1 = tanh_backward(params_, L.policy_fc2, policy_a1_[t], policy_a2_[t], std::move(da2), grad);
    dh_policy[t] = tanh_backward(params_, L.policy_fc1, policy_h_[t], policy_a1_[t], std::move(da1), grad);

    const std::vector<double> dv{dvalues[t]};
    auto dv2 = affine_backward(params_, L.value_out, value_a2_[t], dv, grad);
    auto dv1 = tanh_backward(params_, L.value_fc2, value_a1_[t], value_a2_[t], std::move(dv2), grad);
    dh_value[t] = tanh_backward(params_, L.value_fc1, value_h_[t], value_a1_[t], std::move(dv1), grad);
  }
  lstm_backward(params_, L.policy_lstm, inputs_, policy_gates_, policy_c_, policy_h_, dh_policy, grad);
  lstm_backward(params_, L.value_lstm, inputs_, value_gates_, value_c_, value_h_, dh_value, grad);
}

PolicyRunner::PolicyRunner(const AgentParams& params) : params_(params) { reset(); }

void PolicyRunner::reset() {
  policy_state_ = LstmState::zeros(params_.arch().lstm_hidden);
  value_state_ = LstmState::zeros(params_.arch().lstm_hidden);
}

PolicyRunner::Decision PolicyRunner::act(const StateEmbedding& embedding, const ActionMask& mask, Rng* rng) {
  auto pol = policy_forward(params_, embedding, policy_state_, mask);
  auto val = value_forward(params_, embedding, value_state_);
  policy_state_ = std::move(pol.hidden);
  value_state_ = std::move(val.hidden);
  Decision d;
  if (rng) {
    d.action = sample_action(pol.probs, *rng);
  } else {
    d.action = static_cast<std::size_t>(std::max_element(pol.probs.begin(), pol.probs.end()) - pol.probs.begin());
  }
  d.log_prob = std::log(pol.probs[d.action]);
  d.value = val.value;
  d.probs = std::move(pol.probs);
  return d;
}

namespace {
constexpr char kAgentMagic[4] = {'Q', 'F', 'A', 'G'};
}

void save_checkpoint(const AgentParams& params, const std::filesystem::path& path) {
  const auto& a = params.arch();
  detail::BinaryWriter out;
  out.bytes(kAgentMagic, 4);
  out.u32(kAgentFormatVersion);
  for (std::size_t v : {a.input, a.lstm_hidden, a.policy_hidden1, a.policy_hidden2, a.value_hidden1, a.value_hidden2,
                        a.actions}) {
    out.u32(static_cast<std::uint32_t>(v));
  }
  out.u32(a.recurrent ? 1 : 0);
  out.u64(params.flat().size());
  for (double v : params.flat()) out.f64(v);
  out.save(path);
}

AgentParams load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::BinaryReader::open(path);
  in.expect_magic(kAgentMagic);
  const std::uint32_t version = in.u32();
  if (version != kAgentFormatVersion) {
    throw CheckpointVersionError(fmt::format("'{}': agent format version {}, expected {}", path.string(), version,
                                             kAgentFormatVersion));
  }
  AgentArch arch;
  for (std::size_t* v : {&arch.input, &arch.lstm_hidden, &arch.policy_hidden1, &arch.policy_hidden2,
                         &arch.value_hidden1, &arch.value_hidden2, &arch.actions}) {
    *v = in.u32();
    if (*v == 0 || *v > 4096) throw CorruptCheckpointError(fmt::format("'{}': implausible layer width {}", path.string(), *v));
  }
  const std::uint32_t recurrent = in.u32();
  if (recurrent > 1) throw CorruptCheckpointError(fmt::format("'{}': bad recurrent flag", path.string()));
  arch.recurrent = recurrent == 1;
  AgentParams params(arch);
  const std::uint64_t count = in.u64();
  if (count != params.flat().size()) {
    throw CorruptCheckpointError(fmt::format("'{}': {} parameters for an architecture of {}", path.string(), count,
                                             params.flat().size()));
  }
  for (auto& v : params.flat()) v = in.f64();
  in.expect_end();
  return params;
}

}  // namespace bitsearch
