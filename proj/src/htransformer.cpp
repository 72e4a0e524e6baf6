#include "ddgen/htransformer.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ddgen/ad/ops.hpp"

namespace ddgen::model {

using ad::Graph;
using ad::Matrix;
using ad::Var;

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ModelConfig: " + msg); };
  if (d_model == 0 || heads == 0) fail("d_model and heads must be positive");
  if (d_model % heads != 0) fail("d_model must be divisible by heads");
  if (d_model % 2 != 0) fail("d_model must be even for the positional encoding");
  if (layers == 0) fail("layers must be >= 1");
  if (ff_dim == 0 || bilstm_hidden == 0) fail("ff_dim and bilstm_hidden must be positive");
  if (lag == 0 || window == 0) fail("lag and window must be >= 1");
  if (n_paths == 0) fail("n_paths must be >= 1");
  if (low_rank == 0) fail("low_rank must be >= 1");
  if (low_rank > lag) fail("low_rank must not exceed the lag");
  if (low_rank > window) fail("low_rank must not exceed the generation window");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
}

Var sdb_encode(Var history) {
  const std::size_t rows = history.rows();
  if (rows == 0) throw ad::ShapeError("sdb_encode: empty history");
  Var mean = ad::col_mean(history);
  return ad::concat_cols(history, ad::sub(history, ad::repeat_row(mean, rows)));
}

Matrix sdb_encode(const Matrix& history) {
  Graph g;
  return sdb_encode(g.constant(history)).value();
}

Var sdb_decode(Var history, std::size_t window) {
  const std::size_t rows = history.rows();
  if (rows == 0) throw ad::ShapeError("sdb_decode: empty history");
  if (window == 0) throw ad::ShapeError("sdb_decode: window must be >= 1");
  if (window < rows) return sdb_encode(ad::slice_rows(history, rows - window, window));
  Var mean = ad::col_mean(history);
  Var dev = ad::sub(history, ad::repeat_row(mean, rows));
  Var top = ad::concat_cols(history, dev);
  if (window == rows) return top;
  Var var = ad::col_mean(ad::square(dev));
  Var placeholder = ad::concat_cols(mean, var);
  const Var parts[] = {top, ad::repeat_row(placeholder, window - rows)};
  return ad::concat_rows(parts);
}

Matrix sdb_decode(const Matrix& history, std::size_t window) {
  Graph g;
  return sdb_decode(g.constant(history), window).value();
}

Matrix positional_encoding(std::size_t length, std::size_t d_model) {
  if (d_model % 2 != 0) throw std::invalid_argument("positional_encoding: d_model must be even");
  Matrix pe(length, d_model);
  for (std::size_t p = 0; p < length; ++p) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double freq =
          std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      const double arg = static_cast<double>(p) / freq;
      pe(p, 2 * i) = std::sin(arg);
      pe(p, 2 * i + 1) = std::cos(arg);
    }
  }
  return pe;
}

std::vector<std::size_t> causal_slot_positions(std::size_t slots, std::size_t length) {
  std::vector<std::size_t> pos(slots, 0);
  if (slots > 1) {
    for (std::size_t b = 0; b < slots; ++b) pos[b] = b * (length - 1) / (slots - 1);
  }
  return pos;
}

Var projected_mha(Var query_src, Var kv_src, const AttentionWeights& w, std::size_t heads,
                  bool causal, AttentionTrace* trace) {
  Graph& g = *query_src.graph();
  const std::size_t d_model = w.wq.cols();
  if (heads == 0 || d_model % heads != 0) {
    throw std::invalid_argument("projected_mha: d_model not divisible by heads");
  }
  if (w.e.size() != heads || w.f.size() != heads) {
    throw std::invalid_argument("projected_mha: need one E and one F per head");
  }
  const std::size_t dk = d_model / heads;
  const std::size_t lq = query_src.rows();
  const std::size_t lk = kv_src.rows();
  const std::size_t rank = w.e[0].rows();
  if (rank > lk) {
    throw std::invalid_argument("projected_mha: low rank " + std::to_string(rank) +
                                " exceeds key length " + std::to_string(lk));
  }
  if (causal && lq != lk) throw ad::ShapeError("projected_mha: causal attention needs lq == lk");

  Var q = ad::matmul(query_src, w.wq);
  Var k = ad::matmul(kv_src, w.wk);
  Var v = ad::matmul(kv_src, w.wv);

  Matrix slot_mask, logit_mask;
  Var slot_mask_var;
  if (causal) {
    const auto pos = causal_slot_positions(rank, lk);
    slot_mask = Matrix(rank, lk);
    logit_mask = Matrix(lq, rank);
    for (std::size_t b = 0; b < rank; ++b) {
      for (std::size_t s = 0; s <= pos[b]; ++s) slot_mask(b, s) = 1.0;
      for (std::size_t t = pos[b]; t < lq; ++t) logit_mask(t, b) = 1.0;
    }
    slot_mask_var = g.constant(slot_mask);
  }

  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_model));
  Var concat;
  for (std::size_t h = 0; h < heads; ++h) {
    Var e = w.e[h];
    Var f = w.f[h];
    if (e.rows() != rank || f.rows() != rank || e.cols() != lk || f.cols() != lk) {
      throw ad::ShapeError("projected_mha: E/F of head " + std::to_string(h) + " must be " +
                           std::to_string(rank) + "x" + std::to_string(lk));
    }
    if (causal) {
      e = ad::mul(e, slot_mask_var);
      f = ad::mul(f, slot_mask_var);
    }
    Var qh = ad::slice_cols(q, h * dk, dk);
    Var k_low = ad::matmul(e, ad::slice_cols(k, h * dk, dk));  // B x dk
    Var v_low = ad::matmul(f, ad::slice_cols(v, h * dk, dk));  // B x dk
    Var logits = ad::scale(ad::matmul_nt(qh, k_low), inv_scale);
    Var context = ad::softmax_rows(logits, causal ? &logit_mask : nullptr);  // lq x B
    if (trace) {
      trace->context_entries += context.value().size();
      ++trace->calls;
    }
    Var head = ad::matmul(context, v_low);
    concat = h == 0 ? head : ad::concat_cols(concat, head);
  }
  return ad::matmul(concat, w.wo);
}

Var lstm_direction(Var x, const LstmWeights& w, bool reverse) {
  Graph& g = *x.graph();
  const std::size_t steps = x.rows();
  const std::size_t hidden = w.wh.rows();
  if (w.wx.cols() != 4 * hidden || w.wh.cols() != 4 * hidden || w.b.cols() != 4 * hidden) {
    throw ad::ShapeError("lstm_direction: gate weights must have 4*H columns");
  }
  Var xw = ad::add_row(ad::matmul(x, w.wx), w.b);  // T x 4H
  Var h = g.constant(Matrix(1, hidden));
  Var c = g.constant(Matrix(1, hidden));
  std::vector<Var> outputs(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = reverse ? steps - 1 - i : i;
    Var z = ad::add(ad::slice_rows(xw, t, 1), ad::matmul(h, w.wh));
    Var in_gate = ad::sigmoid(ad::slice_cols(z, 0, hidden));
    Var forget = ad::sigmoid(ad::slice_cols(z, hidden, hidden));
    Var cell_in = ad::tanh(ad::slice_cols(z, 2 * hidden, hidden));
    Var out_gate = ad::sigmoid(ad::slice_cols(z, 3 * hidden, hidden));
    c = ad::add(ad::mul(forget, c), ad::mul(in_gate, cell_in));
    h = ad::mul(out_gate, ad::tanh(c));
    outputs[t] = h;
  }
  return ad::concat_rows(outputs);
}

Var bilstm_forward(Var x, const LstmWeights& forward, const LstmWeights& backward) {
  if (x.rows() == 0) throw ad::ShapeError("bilstm_forward: empty sequence");
  return ad::concat_cols(lstm_direction(x, forward, false), lstm_direction(x, backward, true));
}

namespace {

Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in,
                    std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
  return m;
}

std::string layer_name(const char* stack, std::size_t i, const char* part) {
  return std::string(stack) + "." + std::to_string(i) + "." + part;
}

}  // namespace

HybridTransformer::HybridTransformer(ModelConfig config, std::uint64_t init_seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const std::size_t d = config_.d_model;
  const std::size_t feat = config_.feature_dim();
  const std::size_t rank = config_.low_rank;
  const std::size_t hid = config_.bilstm_hidden;

  auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    params_.add(name + ".W", uniform_init(in, out, in, rng));
    params_.add(name + ".b", uniform_init(1, out, in, rng));
  };
  auto norm = [&](const std::string& name, std::size_t width) {
    params_.add(name + ".gamma", Matrix(1, width, 1.0));
    params_.add(name + ".beta", Matrix(1, width, 0.0));
  };
  auto attention = [&](const std::string& name, std::size_t key_len) {
    params_.add(name + ".Wq", uniform_init(d, d, d, rng));
    params_.add(name + ".Wk", uniform_init(d, d, d, rng));
    params_.add(name + ".Wv", uniform_init(d, d, d, rng));
    params_.add(name + ".Wo", uniform_init(d, d, d, rng));
    for (std::size_t h = 0; h < config_.heads; ++h) {
      params_.add(name + ".E" + std::to_string(h), uniform_init(rank, key_len, key_len, rng));
      params_.add(name + ".F" + std::to_string(h), uniform_init(rank, key_len, key_len, rng));
    }
  };
  auto feed_forward = [&](const std::string& name) {
    linear(name + ".ff1", d, config_.ff_dim);
    linear(name + ".ff2", config_.ff_dim, d);
  };

  linear("enc.in", 2 * feat, d);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    attention(layer_name("enc", i, "attn"), config_.lag);
    norm(layer_name("enc", i, "norm1"), d);
    feed_forward(layer_name("enc", i, "ffn"));
    norm(layer_name("enc", i, "norm2"), d);
  }
  linear("dec.in", 2 * feat, d);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    attention(layer_name("dec", i, "self"), config_.window);
    norm(layer_name("dec", i, "norm1"), d);
    attention(layer_name("dec", i, "cross"), config_.lag);
    norm(layer_name("dec", i, "norm2"), d);
    feed_forward(layer_name("dec", i, "ffn"));
    norm(layer_name("dec", i, "norm3"), d);
  }
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::size_t in = i == 0 ? 2 * feat : 2 * hid;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string base = layer_name("lstm", i, dir);
      params_.add(base + ".Wx", uniform_init(in, 4 * hid, hid, rng));
      params_.add(base + ".Wh", uniform_init(hid, 4 * hid, hid, rng));
      Matrix bias = uniform_init(1, 4 * hid, hid, rng);
      for (std::size_t j = hid; j < 2 * hid; ++j) bias[j] = 1.0;
      params_.add(base + ".b", std::move(bias));
    }
  }
  linear("lstm.proj", 2 * hid, d);
  linear("head", d, feat);
}

Var HybridTransformer::forward(Graph& g, Var history, const ForwardOptions& options) {
  const ModelConfig& cfg = config_;
  if (history.rows() != cfg.lag || history.cols() != cfg.feature_dim()) {
    throw ad::ShapeError("HybridTransformer::forward: history must be " +
                         std::to_string(cfg.lag) + "x" + std::to_string(cfg.feature_dim()) +
                         ", got " + history.value().shape_string());
  }
  auto p = [&](const std::string& name) { return g.parameter(params_.get(name)); };
  std::uint64_t dropout_site = 0;
  auto drop = [&](Var x) {
    if (!options.training || cfg.dropout <= 0.0) return x;
    const std::uint64_t seed = options.dropout_seed * 0x9E3779B97F4A7C15ULL + (++dropout_site);
    return ad::dropout(x, cfg.dropout, seed);
  };
  auto linear = [&](Var x, const std::string& name) {
    return ad::affine(x, p(name + ".W"), p(name + ".b"));
  };
  auto norm = [&](Var x, const std::string& name) {
    return ad::layer_norm(x, p(name + ".gamma"), p(name + ".beta"));
  };
  auto attention_weights = [&](const std::string& name) {
    AttentionWeights w{p(name + ".Wq"), p(name + ".Wk"), p(name + ".Wv"), p(name + ".Wo"), {}, {}};
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      w.e.push_back(p(name + ".E" + std::to_string(h)));
      w.f.push_back(p(name + ".F" + std::to_string(h)));
    }
    return w;
  };
  auto feed_forward = [&](Var x, const std::string& name) {
    return linear(ad::relu(linear(x, name + ".ff1")), name + ".ff2");
  };

  // Encoder.
  Var enc = linear(sdb_encode(history), "enc.in");
  enc = drop(ad::add(enc, g.constant(positional_encoding(cfg.lag, cfg.d_model))));
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    Var attn = projected_mha(enc, enc, attention_weights(layer_name("enc", i, "attn")), cfg.heads,
                             false, options.trace);
    enc = norm(ad::add(enc, drop(attn)), layer_name("enc", i, "norm1"));
    enc = norm(ad::add(enc, drop(feed_forward(enc, layer_name("enc", i, "ffn")))),
               layer_name("enc", i, "norm2"));
  }

  // Decoder.
  Var dec_in = sdb_decode(history, cfg.window);
  Var dec = linear(dec_in, "dec.in");
  dec = drop(ad::add(dec, g.constant(positional_encoding(cfg.window, cfg.d_model))));
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    Var self = projected_mha(dec, dec, attention_weights(layer_name("dec", i, "self")), cfg.heads,
                             true, options.trace);
    dec = norm(ad::add(dec, drop(self)), layer_name("dec", i, "norm1"));
    Var cross = projected_mha(dec, enc, attention_weights(layer_name("dec", i, "cross")),
                              cfg.heads, false, options.trace);
    dec = norm(ad::add(dec, drop(cross)), layer_name("dec", i, "norm2"));
    dec = norm(ad::add(dec, drop(feed_forward(dec, layer_name("dec", i, "ffn")))),
               layer_name("dec", i, "norm3"));
  }

  // BiLSTM branch over the decoder-side decomposition.
  Var agg = dec;
  if (options.use_bilstm) {
    Var seq = dec_in;
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      auto weights = [&](const char* dir) {
        const std::string base = layer_name("lstm", i, dir);
        return LstmWeights{p(base + ".Wx"), p(base + ".Wh"), p(base + ".b")};
      };
      seq = bilstm_forward(seq, weights("fwd"), weights("bwd"));
    }
    agg = ad::add(dec, linear(seq, "lstm.proj"));
  }
  return linear(agg, "head");
}

Matrix HybridTransformer::generate(const Matrix& history) {
  Graph g;
  return forward(g, g.constant(history)).value();
}

std::string HybridTransformer::summary() const {
  std::ostringstream out;
  out << "HybridTransformer d_model=" << config_.d_model << " heads=" << config_.heads
      << " layers=" << config_.layers << " ff_dim=" << config_.ff_dim
      << " low_rank=" << config_.low_rank << " bilstm_hidden=" << config_.bilstm_hidden
      << " lag=" << config_.lag << " window=" << config_.window
      << " feature_dim=" << config_.feature_dim() << '\n';
  for (const auto& prm : params_) {
    out << prm.name << ' ' << prm.value.rows() << 'x' << prm.value.cols() << '\n';
  }
  out << "total_parameters " << params_.scalar_count() << '\n';
  return out.str();
}

}  // namespace ddgen::model
