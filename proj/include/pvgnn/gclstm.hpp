#pragma once

// Encoder–decoder LSTM whose gate transforms are spectral graph convolutions.
// One cell per side; the decoder starts from the encoder's final state and a
// small per-node MLP turns each decoder hidden vector into a power value.

#include <random>
#include <string>
#include <vector>

#include "pvgnn/datagen.hpp"
#include "pvgnn/errors.hpp"
#include "pvgnn/graph.hpp"
#include "pvgnn/graphconv.hpp"
#include "pvgnn/tensor.hpp"

namespace pvgnn {

// Registers a trainable copy of the scaled Laplacian's non-zero values; the
// sparsity pattern itself stays fixed.
inline Parameter* add_laplacian_values(ParamStore& store, const std::string& name,
                                       const ScaledLaplacian& lap) {
  Parameter& p = store.add(name, Shape{lap.pattern.nnz()});
  std::copy(lap.values.begin(), lap.values.end(), p.value.begin());
  return &p;
}

struct GCLSTMConfig {
  int n_nodes = 0;
  int f_in = 3;
  int lat = 32;
  int order = 4;  // Chebyshev order K
  int M = 16;     // encoder steps
  int H = 24;     // decoder steps
};

// Eight convolutions (hidden- and input-driven halves of the four gates),
// four gate biases, and one trainable Laplacian shared by all eight.
struct GCLSTMCell {
  int lat = 0, f_in = 0, order = 0;
  ChebConvWeights w_fh, w_fx, w_ih, w_ix, w_oh, w_ox, w_ch, w_cx;
  Parameter* b_f = nullptr;
  Parameter* b_i = nullptr;
  Parameter* b_o = nullptr;
  Parameter* b_c = nullptr;
  SparsePattern pattern;
  Parameter* lap_values = nullptr;
};

inline GCLSTMCell make_gclstm_cell(ParamStore& store, const std::string& name, int lat, int f_in,
                                   int order, const ScaledLaplacian& lap, std::mt19937_64& gen) {
  check_arg(lat >= 1, "latent size must be >= 1");
  GCLSTMCell cell;
  cell.lat = lat;
  cell.f_in = f_in;
  cell.order = order;
  cell.pattern = lap.pattern;
  cell.w_fh = make_cheb_conv_weights(store, name + ".f.h", order, lat, lat, false, gen);
  cell.w_fx = make_cheb_conv_weights(store, name + ".f.x", order, f_in, lat, false, gen);
  cell.w_ih = make_cheb_conv_weights(store, name + ".i.h", order, lat, lat, false, gen);
  cell.w_ix = make_cheb_conv_weights(store, name + ".i.x", order, f_in, lat, false, gen);
  cell.w_oh = make_cheb_conv_weights(store, name + ".o.h", order, lat, lat, false, gen);
  cell.w_ox = make_cheb_conv_weights(store, name + ".o.x", order, f_in, lat, false, gen);
  cell.w_ch = make_cheb_conv_weights(store, name + ".c.h", order, lat, lat, false, gen);
  cell.w_cx = make_cheb_conv_weights(store, name + ".c.x", order, f_in, lat, false, gen);
  cell.b_f = &store.add(name + ".b_f", Shape{lat});
  cell.b_i = &store.add(name + ".b_i", Shape{lat});
  cell.b_o = &store.add(name + ".b_o", Shape{lat});
  cell.b_c = &store.add(name + ".b_c", Shape{lat});
  cell.lap_values = add_laplacian_values(store, name + ".laplacian", lap);
  return cell;
}

struct CellState {
  Tensor c;  // N × lat
  Tensor h;  // N × lat
};

inline CellState zero_state(Tape& tape, int n_nodes, int lat) {
  std::vector<double> zeros(static_cast<size_t>(n_nodes) * static_cast<size_t>(lat), 0.0);
  return {tape.constant(Shape{n_nodes, lat}, zeros), tape.constant(Shape{n_nodes, lat}, zeros)};
}

// Per-tape bindings of a cell: weight slices transposed once, biases and
// Laplacian values placed on the tape once, reused by every step.
struct GCLSTMCellCtx {
  const GCLSTMCell* cell = nullptr;
  std::vector<Tensor> fh, fx, ih, ix, oh, ox, ch, cx;  // transposed weight slices
  Tensor b_f, b_i, b_o, b_c, lap_values;
};

inline GCLSTMCellCtx bind_cell(Tape& tape, const GCLSTMCell& cell) {
  GCLSTMCellCtx ctx;
  ctx.cell = &cell;
  ctx.fh = transposed_weight_slices(tape, cell.w_fh);
  ctx.fx = transposed_weight_slices(tape, cell.w_fx);
  ctx.ih = transposed_weight_slices(tape, cell.w_ih);
  ctx.ix = transposed_weight_slices(tape, cell.w_ix);
  ctx.oh = transposed_weight_slices(tape, cell.w_oh);
  ctx.ox = transposed_weight_slices(tape, cell.w_ox);
  ctx.ch = transposed_weight_slices(tape, cell.w_ch);
  ctx.cx = transposed_weight_slices(tape, cell.w_cx);
  ctx.b_f = tape.leaf(*cell.b_f);
  ctx.b_i = tape.leaf(*cell.b_i);
  ctx.b_o = tape.leaf(*cell.b_o);
  ctx.b_c = tape.leaf(*cell.b_c);
  ctx.lap_values = tape.leaf(*cell.lap_values);
  return ctx;
}

// One gated step. The Chebyshev basis of h and of x is built once and shared
// by the four gates:
//   f = σ(conv(h) + conv(x) + b_f)        i, o likewise
//   c = i ⊗ tanh(conv(h) + conv(x) + b_c) + f ⊗ c_prev
//   h = o ⊗ tanh(c)
inline CellState cell_step(Tape& tape, const GCLSTMCellCtx& ctx, const CellState& prev,
                           Tensor x) {
  const GCLSTMCell& cell = *ctx.cell;
  const Shape xs = x.shape();
  check_shape(xs.rank == 2 && xs[0] == cell.pattern.n && xs[1] == cell.f_in,
              "cell_step: input shape " + xs.str() + " does not match the cell");
  std::vector<Tensor> sh = cheb_slices(cell.pattern, ctx.lap_values, prev.h, cell.order);
  std::vector<Tensor> sx = cheb_slices(cell.pattern, ctx.lap_values, x, cell.order);

  Tensor f = sigmoid(add_bias(add(cheb_linear(sh, ctx.fh, nullptr),
                                  cheb_linear(sx, ctx.fx, nullptr)), ctx.b_f));
  Tensor i = sigmoid(add_bias(add(cheb_linear(sh, ctx.ih, nullptr),
                                  cheb_linear(sx, ctx.ix, nullptr)), ctx.b_i));
  Tensor o = sigmoid(add_bias(add(cheb_linear(sh, ctx.oh, nullptr),
                                  cheb_linear(sx, ctx.ox, nullptr)), ctx.b_o));
  Tensor g = tanh(add_bias(add(cheb_linear(sh, ctx.ch, nullptr),
                               cheb_linear(sx, ctx.cx, nullptr)), ctx.b_c));
  CellState next;
  next.c = add(mul(i, g), mul(f, prev.c));
  next.h = mul(o, tanh(next.c));
  return next;
}

struct GCLSTMModel {
  GCLSTMConfig config;
  GCLSTMCell encoder;
  GCLSTMCell decoder;
  // Per-node readout lat → 8 → 48 → 48 → 1 with tanh hidden activations.
  static constexpr int kHidden[3] = {8, 48, 48};
  Parameter* mlp_w[4] = {nullptr, nullptr, nullptr, nullptr};
  Parameter* mlp_b[4] = {nullptr, nullptr, nullptr, nullptr};
};

inline Parameter* add_linear_weight(ParamStore& store, const std::string& name, int f_in,
                                    int f_out, std::mt19937_64& gen) {
  Parameter& w = store.add(name, Shape{f_in, f_out});
  double bound = 1.0 / std::sqrt(static_cast<double>(f_in));
  fill_param_uniform(w, gen, -bound, bound);
  return &w;
}

inline GCLSTMModel make_gclstm(ParamStore& store, const GCLSTMConfig& config,
                               const ScaledLaplacian& lap, std::mt19937_64& gen) {
  check_arg(config.n_nodes == lap.pattern.n, "config node count does not match the Laplacian");
  check_arg(config.M >= 1 && config.H >= 1, "window lengths must be >= 1");
  GCLSTMModel m;
  m.config = config;
  m.encoder = make_gclstm_cell(store, "gclstm.encoder", config.lat, config.f_in, config.order,
                               lap, gen);
  m.decoder = make_gclstm_cell(store, "gclstm.decoder", config.lat, config.f_in, config.order,
                               lap, gen);
  int widths[5] = {config.lat, GCLSTMModel::kHidden[0], GCLSTMModel::kHidden[1],
                   GCLSTMModel::kHidden[2], 1};
  for (int l = 0; l < 4; ++l) {
    m.mlp_w[l] = add_linear_weight(store, "gclstm.mlp.w" + std::to_string(l), widths[l],
                                   widths[l + 1], gen);
    m.mlp_b[l] = &store.add("gclstm.mlp.b" + std::to_string(l), Shape{widths[l + 1]});
  }
  return m;
}

// Readout applied to the stacked decoder outputs (H, N, lat) → (H, N).
inline Tensor gclstm_readout(Tape& tape, const GCLSTMModel& m, Tensor h_seq) {
  Tensor z = h_seq;
  for (int l = 0; l < 4; ++l) {
    z = add_bias(matmul(z, tape.leaf(*m.mlp_w[l])), tape.leaf(*m.mlp_b[l]));
    if (l < 3) z = tanh(z);
  }
  const Shape zs = z.shape();
  return reshape(z, Shape{zs[0], zs[1]});
}

// enc_x is (M, N, f_in), dec_y is (H, N, f_in); returns (H, N) normalized
// power predictions. Sequence lengths follow the input shapes — the decoder
// is non-autoregressive, so any horizon works with the same parameters.
inline Tensor gclstm_forward(Tape& tape, const GCLSTMModel& m, Tensor enc_x, Tensor dec_y) {
  const Shape es = enc_x.shape();
  const Shape ds = dec_y.shape();
  check_shape(es.rank == 3 && es[0] >= 1 && es[1] == m.config.n_nodes &&
                  es[2] == m.config.f_in,
              "encoder input " + es.str() + " does not match the model");
  check_shape(ds.rank == 3 && ds[0] >= 1 && ds[1] == m.config.n_nodes &&
                  ds[2] == m.config.f_in,
              "decoder input " + ds.str() + " does not match the model");
  GCLSTMCellCtx enc = bind_cell(tape, m.encoder);
  GCLSTMCellCtx dec = bind_cell(tape, m.decoder);

  CellState state = zero_state(tape, m.config.n_nodes, m.config.lat);
  for (int t = 0; t < static_cast<int>(es[0]); ++t) {
    Tensor x = reshape(slice0(enc_x, t, t + 1), Shape{m.config.n_nodes, m.config.f_in});
    state = cell_step(tape, enc, state, x);
  }
  std::vector<Tensor> outputs;
  outputs.reserve(static_cast<size_t>(ds[0]));
  for (int t = 0; t < static_cast<int>(ds[0]); ++t) {
    Tensor y = reshape(slice0(dec_y, t, t + 1), Shape{m.config.n_nodes, m.config.f_in});
    state = cell_step(tape, dec, state, y);
    outputs.push_back(reshape(state.h, Shape{1, m.config.n_nodes, m.config.lat}));
  }
  Tensor h_seq = concat(std::span<const Tensor>(outputs), 0);
  return gclstm_readout(tape, m, h_seq);
}

inline Tensor gclstm_forward(Tape& tape, const GCLSTMModel& m, const FeatureFrame& frame) {
  check_arg(frame.M == m.config.M && frame.H == m.config.H &&
                frame.n_nodes == m.config.n_nodes,
            "feature frame does not match the model configuration");
  Tensor enc_x = tape.constant(Shape{frame.M, frame.n_nodes, 3}, frame.encoder_x);
  Tensor dec_y = tape.constant(Shape{frame.H, frame.n_nodes, 3}, frame.decoder_y);
  return gclstm_forward(tape, m, enc_x, dec_y);
}

}  // namespace pvgnn
