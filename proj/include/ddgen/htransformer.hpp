#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ddgen/ad/graph.hpp"
#include "ddgen/ad/matrix.hpp"

namespace ddgen::model {

struct ModelConfig {
  std::size_t d_model = 512;
  std::size_t heads = 8;
  std::size_t layers = 2;  // encoder, decoder and BiLSTM stacks alike
  std::size_t ff_dim = 512;
  std::size_t low_rank = 64;
  std::size_t bilstm_hidden = 128;
  std::size_t lag = 100;     // L
  std::size_t window = 200;  // P
  std::size_t n_paths = 26;
  double dropout = 0.1;

  std::size_t feature_dim() const { return 4 + 7 * n_paths; }
  std::size_t head_dim() const { return d_model / heads; }
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// Encoder series decomposition: row l = [x_l, x_l - mean(x)].
ad::Var sdb_encode(ad::Var history);
ad::Matrix sdb_encode(const ad::Matrix& history);

/// Decoder series decomposition producing exactly `window` rows. With
/// window >= L the L decomposed rows are followed by window - L copies of
/// [mean(x), var(x)]; otherwise the last `window` inputs are decomposed
/// around their own mean.
ad::Var sdb_decode(ad::Var history, std::size_t window);
ad::Matrix sdb_decode(const ad::Matrix& history, std::size_t window);

/// Sinusoidal encoding; d_model must be even.
ad::Matrix positional_encoding(std::size_t length, std::size_t d_model);

/// Counts stored context-matrix entries across attention calls.
struct AttentionTrace {
  std::size_t context_entries = 0;
  std::size_t calls = 0;
};

/// Weights of one low-rank projected attention block. Each head has its own
/// E (key) and F (value) compression of shape B x (key length).
struct AttentionWeights {
  ad::Var wq, wk, wv, wo;
  std::vector<ad::Var> e, f;
};

/// Multi-head attention with keys and values compressed along the sequence
/// axis: head_i = softmax(Q_i (E_i K_i)^T / sqrt(d_model)) (F_i V_i), heads
/// concatenated and mapped by W_O. With `causal`, compressed slot b only
/// summarizes key positions <= pos(b) = floor(b (n-1) / (B-1)), and query t
/// only attends to slots with pos(b) <= t, so no output row depends on later
/// positions. Throws std::invalid_argument when B exceeds the key length.
ad::Var projected_mha(ad::Var query_src, ad::Var kv_src, const AttentionWeights& w,
                      std::size_t heads, bool causal, AttentionTrace* trace = nullptr);

/// Key positions summarized by each compressed slot in causal mode.
std::vector<std::size_t> causal_slot_positions(std::size_t slots, std::size_t length);

struct LstmWeights {
  ad::Var wx;  // d_in x 4H, gate order i, f, g, o
  ad::Var wh;  // H x 4H
  ad::Var b;   // 1 x 4H
};

/// One LSTM direction over the rows of x (T x d_in) -> T x H. With `reverse`
/// the recurrence runs from the last row to the first; output row t still
/// corresponds to input row t.
ad::Var lstm_direction(ad::Var x, const LstmWeights& w, bool reverse);

/// [forward(t), backward(t)] per row: T x 2H.
ad::Var bilstm_forward(ad::Var x, const LstmWeights& forward, const LstmWeights& backward);

struct ForwardOptions {
  bool training = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
  bool use_bilstm = true;
  AttentionTrace* trace = nullptr;
};

/// Encoder/decoder Transformer with projected attention whose decoder output
/// is summed with a projected BiLSTM branch before the output head.
class HybridTransformer {
 public:
  HybridTransformer(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  /// history: L x feature_dim (scaled) -> window x feature_dim.
  /// Backward through the result accumulates into params().
  ad::Var forward(ad::Graph& graph, ad::Var history, const ForwardOptions& options = {});
  ad::Matrix generate(const ad::Matrix& history);

  /// Layer names, shapes and the total parameter count.
  std::string summary() const;

 private:
  ModelConfig config_;
  ad::ParameterStore params_;
};

}  // namespace ddgen::model
