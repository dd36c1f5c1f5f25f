#pragma once

// Graph-convolutional transformer. Encoder heads turn the input sequence into
// queries/keys/values via causal temporal convolutions followed by graph
// convolutions, attend over time per node, and a linear map fuses the heads.
// The decoder embeds the known future channels without any graph convolution,
// attends against the encoder output, and reads out through a linear layer on
// [attention ; embedding ; attention ⊗ embedding].

#include <random>
#include <string>
#include <vector>

#include "pvgnn/datagen.hpp"
#include "pvgnn/errors.hpp"
#include "pvgnn/gclstm.hpp"
#include "pvgnn/graph.hpp"
#include "pvgnn/graphconv.hpp"
#include "pvgnn/tensor.hpp"

namespace pvgnn {

struct GCTrafoConfig {
  int n_nodes = 0;
  int f_in = 3;
  int lat = 8;      // per-head latent width
  int embed = 8;    // temporal-conv output channels
  int order = 2;    // Chebyshev order K
  int n_heads = 8;
  int kernel = 4;   // temporal conv taps
  int M = 16;
  int H = 24;
  bool scale_attention = false;  // 1/sqrt(lat) score scaling, off by default
};

// Per-node softmax attention over time. q is (T_q, N, lat), k and v are
// (T_k, N, lat) and (T_k, N, d_v); the result is (T_q, N, d_v). If att_out is
// given it receives the (N, T_q, T_k) weight tensor.
inline Tensor attention(Tape& tape, Tensor q, Tensor k, Tensor v, bool scale = false,
                        Tensor* att_out = nullptr) {
  const Shape qs = q.shape();
  const Shape ks = k.shape();
  const Shape vs = v.shape();
  check_shape(qs.rank == 3 && ks.rank == 3 && vs.rank == 3,
              "attention expects rank-3 (time, node, feature) tensors");
  check_shape(qs[2] == ks[2], "attention: query/key widths differ");
  check_shape(ks[0] == vs[0] && ks[1] == vs[1] && qs[1] == ks[1],
              "attention: key/value shapes do not line up");
  Tensor scores = bmm(swap01(q), swap01(k), true);  // (N, T_q, T_k)
  if (scale) scores = pvgnn::scale(scores, 1.0 / std::sqrt(static_cast<double>(qs[2])));
  Tensor att = softmax(scores, 2);
  if (att_out != nullptr) *att_out = att;
  (void)tape;
  return swap01(bmm(att, swap01(v)));
}

struct GCTrafoEncoderHead {
  Parameter* conv_q_k = nullptr;  // (embed, f_in, kernel) temporal conv taps
  Parameter* conv_q_b = nullptr;
  Parameter* conv_k_k = nullptr;
  Parameter* conv_k_b = nullptr;
  Parameter* conv_v_k = nullptr;
  Parameter* conv_v_b = nullptr;
  ChebConvWeights w_q, w_k, w_v;  // embed → lat, no bias
  SparsePattern pattern;
  Parameter* lap_values = nullptr;
};

struct GCTrafoDecoderHead {
  Parameter* conv_k = nullptr;  // (embed, f_in, kernel)
  Parameter* conv_b = nullptr;
  Parameter* emb_w = nullptr;   // embed → lat
  Parameter* emb_b = nullptr;
  Parameter* key_w = nullptr;   // lat → lat, applied to the encoder output
  Parameter* key_b = nullptr;
};

struct GCTrafoModel {
  GCTrafoConfig config;
  std::vector<GCTrafoEncoderHead> enc_heads;
  Parameter* enc_out_w = nullptr;  // n_heads·lat → lat
  Parameter* enc_out_b = nullptr;
  std::vector<GCTrafoDecoderHead> dec_heads;
  Parameter* out_w = nullptr;      // 3·lat·n_heads → 1
  Parameter* out_b = nullptr;
};

inline Parameter* add_conv_kernel(ParamStore& store, const std::string& name, int c_out,
                                  int c_in, int taps, std::mt19937_64& gen) {
  Parameter& p = store.add(name, Shape{c_out, c_in, taps});
  double bound = 1.0 / std::sqrt(static_cast<double>(c_in) * taps);
  fill_param_uniform(p, gen, -bound, bound);
  return &p;
}

inline GCTrafoModel make_gctrafo(ParamStore& store, const GCTrafoConfig& config,
                                 const ScaledLaplacian& lap, std::mt19937_64& gen) {
  check_arg(config.n_nodes == lap.pattern.n, "config node count does not match the Laplacian");
  check_arg(config.n_heads >= 1, "need at least one head");
  check_arg(config.lat >= 1 && config.embed >= 1 && config.kernel >= 1,
            "latent, embedding, and kernel sizes must be >= 1");
  GCTrafoModel m;
  m.config = config;
  m.enc_heads.reserve(static_cast<size_t>(config.n_heads));
  m.dec_heads.reserve(static_cast<size_t>(config.n_heads));
  for (int h = 0; h < config.n_heads; ++h) {
    std::string base = "gctrafo.enc.h" + std::to_string(h);
    GCTrafoEncoderHead head;
    head.conv_q_k = add_conv_kernel(store, base + ".tq.weight", config.embed, config.f_in,
                                    config.kernel, gen);
    head.conv_q_b = &store.add(base + ".tq.bias", Shape{config.embed});
    head.conv_k_k = add_conv_kernel(store, base + ".tk.weight", config.embed, config.f_in,
                                    config.kernel, gen);
    head.conv_k_b = &store.add(base + ".tk.bias", Shape{config.embed});
    head.conv_v_k = add_conv_kernel(store, base + ".tv.weight", config.embed, config.f_in,
                                    config.kernel, gen);
    head.conv_v_b = &store.add(base + ".tv.bias", Shape{config.embed});
    head.w_q = make_cheb_conv_weights(store, base + ".q", config.order, config.embed,
                                      config.lat, false, gen);
    head.w_k = make_cheb_conv_weights(store, base + ".k", config.order, config.embed,
                                      config.lat, false, gen);
    head.w_v = make_cheb_conv_weights(store, base + ".v", config.order, config.embed,
                                      config.lat, false, gen);
    head.pattern = lap.pattern;
    head.lap_values = add_laplacian_values(store, base + ".laplacian", lap);
    m.enc_heads.push_back(std::move(head));
  }
  m.enc_out_w = add_linear_weight(store, "gctrafo.enc.out.weight",
                                  config.n_heads * config.lat, config.lat, gen);
  m.enc_out_b = &store.add("gctrafo.enc.out.bias", Shape{config.lat});
  for (int h = 0; h < config.n_heads; ++h) {
    std::string base = "gctrafo.dec.h" + std::to_string(h);
    GCTrafoDecoderHead head;
    head.conv_k = add_conv_kernel(store, base + ".ty.weight", config.embed, config.f_in,
                                  config.kernel, gen);
    head.conv_b = &store.add(base + ".ty.bias", Shape{config.embed});
    head.emb_w = add_linear_weight(store, base + ".emb.weight", config.embed, config.lat, gen);
    head.emb_b = &store.add(base + ".emb.bias", Shape{config.lat});
    head.key_w = add_linear_weight(store, base + ".key.weight", config.lat, config.lat, gen);
    head.key_b = &store.add(base + ".key.bias", Shape{config.lat});
    m.dec_heads.push_back(std::move(head));
  }
  m.out_w = add_linear_weight(store, "gctrafo.out.weight", 3 * config.lat * config.n_heads, 1,
                              gen);
  m.out_b = &store.add("gctrafo.out.bias", Shape{1});
  return m;
}

// Encoder: x (M, N, f_in) → x′ (M, N, lat).
inline Tensor gctrafo_encode(Tape& tape, const GCTrafoModel& m, Tensor x) {
  const Shape xs = x.shape();
  check_shape(xs.rank == 3 && xs[1] == m.config.n_nodes && xs[2] == m.config.f_in,
              "encoder input " + xs.str() + " does not match the model");
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(m.enc_heads.size());
  for (const GCTrafoEncoderHead& head : m.enc_heads) {
    Tensor xt_q = add_bias(temporal_conv1d(x, tape.leaf(*head.conv_q_k)),
                           tape.leaf(*head.conv_q_b));
    Tensor xt_k = add_bias(temporal_conv1d(x, tape.leaf(*head.conv_k_k)),
                           tape.leaf(*head.conv_k_b));
    Tensor xt_v = add_bias(temporal_conv1d(x, tape.leaf(*head.conv_v_k)),
                           tape.leaf(*head.conv_v_b));
    Tensor lapv = tape.leaf(*head.lap_values);
    Tensor q = graph_conv(tape, head.w_q, head.pattern, lapv, xt_q);
    Tensor k = graph_conv(tape, head.w_k, head.pattern, lapv, xt_k);
    Tensor v = graph_conv(tape, head.w_v, head.pattern, lapv, xt_v);
    head_outputs.push_back(attention(tape, q, k, v, m.config.scale_attention));
  }
  Tensor merged = head_outputs.size() == 1
                      ? head_outputs[0]
                      : concat(std::span<const Tensor>(head_outputs), 2);
  return add_bias(matmul(merged, tape.leaf(*m.enc_out_w)), tape.leaf(*m.enc_out_b));
}

// Decoder: x′ (M, N, lat) and y (H, N, f_in) → (H, N) predictions. The value
// stream is x′ itself; queries come from an embedding of y with no graph
// convolution anywhere on this side.
inline Tensor gctrafo_decode(Tape& tape, const GCTrafoModel& m, Tensor x_prime, Tensor y) {
  const Shape ps = x_prime.shape();
  const Shape ds = y.shape();
  check_shape(ps.rank == 3 && ps[1] == m.config.n_nodes && ps[2] == m.config.lat,
              "encoder output " + ps.str() + " does not match the model");
  check_shape(ds.rank == 3 && ds[1] == m.config.n_nodes && ds[2] == m.config.f_in,
              "decoder input " + ds.str() + " does not match the model");
  std::vector<Tensor> blocks;
  blocks.reserve(m.dec_heads.size());
  for (const GCTrafoDecoderHead& head : m.dec_heads) {
    Tensor yt = add_bias(temporal_conv1d(y, tape.leaf(*head.conv_k)), tape.leaf(*head.conv_b));
    Tensor emb = add_bias(matmul(yt, tape.leaf(*head.emb_w)), tape.leaf(*head.emb_b));
    Tensor keys = add_bias(matmul(x_prime, tape.leaf(*head.key_w)), tape.leaf(*head.key_b));
    Tensor att = attention(tape, emb, keys, x_prime, m.config.scale_attention);
    Tensor pieces[3] = {att, emb, mul(att, emb)};
    blocks.push_back(concat(std::span<const Tensor>(pieces, 3), 2));
  }
  Tensor merged =
      blocks.size() == 1 ? blocks[0] : concat(std::span<const Tensor>(blocks), 2);
  Tensor out = add_bias(matmul(merged, tape.leaf(*m.out_w)), tape.leaf(*m.out_b));
  return reshape(out, Shape{ds[0], ds[1]});
}

// Sequence lengths follow the input shapes; causal convolutions and row-wise
// attention make both sides length-agnostic.
inline Tensor gctrafo_forward(Tape& tape, const GCTrafoModel& m, Tensor enc_x, Tensor dec_y) {
  return gctrafo_decode(tape, m, gctrafo_encode(tape, m, enc_x), dec_y);
}

inline Tensor gctrafo_forward(Tape& tape, const GCTrafoModel& m, const FeatureFrame& frame) {
  check_arg(frame.M == m.config.M && frame.H == m.config.H &&
                frame.n_nodes == m.config.n_nodes,
            "feature frame does not match the model configuration");
  Tensor enc_x = tape.constant(Shape{frame.M, frame.n_nodes, 3}, frame.encoder_x);
  Tensor dec_y = tape.constant(Shape{frame.H, frame.n_nodes, 3}, frame.decoder_y);
  return gctrafo_forward(tape, m, enc_x, dec_y);
}

}  // namespace pvgnn
