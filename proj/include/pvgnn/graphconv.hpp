#pragma once

// Chebyshev-basis spectral graph convolution on the differentiation tape.
// The filter acts in K hops: T_0 = I, T_1 = L', T_k = 2 L' T_{k-1} - T_{k-2}
// on the scaled Laplacian L', and every output feature mixes all input
// features through a (K, f_out, f_in) weight tensor.

#include <random>
#include <string>
#include <vector>

#include "pvgnn/errors.hpp"
#include "pvgnn/graph.hpp"
#include "pvgnn/tensor.hpp"

namespace pvgnn {

struct ChebConvWeights {
  int order = 0;
  int in_features = 0;
  int out_features = 0;
  Parameter* weights = nullptr;  // (K, f_out, f_in)
  Parameter* bias = nullptr;     // (f_out), optional
};

// Registers convolution weights in the store. Weights start uniform in
// ±1/sqrt(K·f_in); the bias starts at zero.
inline ChebConvWeights make_cheb_conv_weights(ParamStore& store, const std::string& name, int K,
                                              int f_in, int f_out, bool with_bias,
                                              std::mt19937_64& gen) {
  check_arg(K >= 1, "Chebyshev order must be >= 1");
  check_arg(f_in >= 1 && f_out >= 1, "feature counts must be >= 1");
  ChebConvWeights w;
  w.order = K;
  w.in_features = f_in;
  w.out_features = f_out;
  w.weights = &store.add(name + ".weight", Shape{K, f_out, f_in});
  double bound = 1.0 / std::sqrt(static_cast<double>(K) * f_in);
  fill_param_uniform(*w.weights, gen, -bound, bound);
  if (with_bias) w.bias = &store.add(name + ".bias", Shape{f_out});
  return w;
}

// [T_0 x, ..., T_{K-1} x] as separate tensors. x is (n, f) or (T, n, f); the
// recursion is differentiable with respect to both x and the Laplacian
// values, which lets training adjust the non-zero Laplacian entries.
inline std::vector<Tensor> cheb_slices(const SparsePattern& pattern, Tensor lap_values, Tensor x,
                                       int order) {
  check_arg(order >= 1, "Chebyshev order must be >= 1");
  std::vector<Tensor> slices;
  slices.reserve(static_cast<size_t>(order));
  slices.push_back(x);
  if (order >= 2) slices.push_back(sparse_dense_matmul(pattern, lap_values, x));
  for (int k = 2; k < order; ++k)
    slices.push_back(sub(scale(sparse_dense_matmul(pattern, lap_values, slices[k - 1]), 2.0),
                         slices[k - 2]));
  return slices;
}

// Stacked Chebyshev basis (K, n, f) for a rank-2 input.
inline Tensor cheb_apply(const SparsePattern& pattern, Tensor lap_values, Tensor x, int order) {
  const Shape xs = x.shape();
  check_shape(xs.rank == 2, "cheb_apply expects a rank-2 input, got " + xs.str());
  std::vector<Tensor> slices = cheb_slices(pattern, lap_values, x, order);
  std::vector<Tensor> rows;
  rows.reserve(slices.size());
  for (Tensor s : slices) rows.push_back(reshape(s, Shape{1, xs[0], xs[1]}));
  return concat(std::span<const Tensor>(rows), 0);
}

inline Tensor cheb_apply(Tape& tape, const ScaledLaplacian& lap, Tensor x, int order) {
  Tensor vals = tape.constant(Shape{lap.pattern.nnz()}, lap.values);
  return cheb_apply(lap.pattern, vals, x, order);
}

// Weight slices transposed to (f_in, f_out), ready to right-multiply basis
// tensors. Callers that apply one convolution many times on a tape build
// these once and reuse them.
inline std::vector<Tensor> transposed_weight_slices(Tape& tape, const ChebConvWeights& w) {
  Tensor wt = tape.leaf(*w.weights);
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(w.order));
  for (int k = 0; k < w.order; ++k)
    out.push_back(transpose2d(
        reshape(slice0(wt, k, k + 1), Shape{w.out_features, w.in_features})));
  return out;
}

// sum_k slices[k] · w_t[k] (+ bias). Shapes: slices (.., n, f_in), w_t
// (f_in, f_out).
inline Tensor cheb_linear(const std::vector<Tensor>& slices, const std::vector<Tensor>& w_t,
                          const Tensor* bias) {
  check_arg(!slices.empty() && slices.size() == w_t.size(),
            "cheb_linear: basis and weight slice counts differ");
  Tensor acc = matmul(slices[0], w_t[0]);
  for (size_t k = 1; k < slices.size(); ++k) acc = add(acc, matmul(slices[k], w_t[k]));
  if (bias != nullptr) acc = add_bias(acc, *bias);
  return acc;
}

// Full graph convolution with trainable Laplacian values on the tape.
inline Tensor graph_conv(Tape& tape, const ChebConvWeights& w, const SparsePattern& pattern,
                         Tensor lap_values, Tensor x) {
  const Shape xs = x.shape();
  check_shape(xs[xs.rank - 1] == w.in_features,
              "graph_conv: input features " + xs.str() + " do not match f_in=" +
                  std::to_string(w.in_features));
  std::vector<Tensor> slices = cheb_slices(pattern, lap_values, x, w.order);
  std::vector<Tensor> wt = transposed_weight_slices(tape, w);
  Tensor b;
  bool with_bias = w.bias != nullptr;
  if (with_bias) b = tape.leaf(*w.bias);
  return cheb_linear(slices, wt, with_bias ? &b : nullptr);
}

// Convenience overload with fixed (non-trainable) Laplacian values.
inline Tensor graph_conv(Tape& tape, const ChebConvWeights& w, const ScaledLaplacian& lap,
                         Tensor x) {
  Tensor vals = tape.constant(Shape{lap.pattern.nnz()}, lap.values);
  return graph_conv(tape, w, lap.pattern, vals, x);
}

}  // namespace pvgnn
