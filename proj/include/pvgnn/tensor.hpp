#pragma once

// Reverse-mode differentiation over dense 64-bit tensors plus the
// sparse-dense product used by graph convolutions. A Tape records operations
// in topological order as they are built; backward() replays them in reverse
// and accumulates vector-Jacobian products into Parameter gradients.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pvgnn/errors.hpp"

namespace pvgnn {

struct Shape {
  int rank = 0;
  std::array<int, 4> d{1, 1, 1, 1};

  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    check_arg(dims.size() <= 4, "tensor rank > 4 not supported");
    for (int v : dims) {
      check_arg(v >= 0, "negative dimension");
      d[rank++] = v;
    }
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank; ++i) n *= d[i];
    return n;
  }
  int operator[](int i) const { return d[i]; }
  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
      if (d[i] != o.d[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < rank; ++i) s += (i ? "," : "") + std::to_string(d[i]);
    return s + ")";
  }
};

inline Shape scalar_shape() { return Shape{1}; }

// A named trainable tensor. Values and gradients persist across tapes; the
// Adam moments live here too so optimizer state follows the parameter.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;

  int64_t numel() const { return shape.numel(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

inline void fill_param_uniform(Parameter& p, std::mt19937_64& gen, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : p.value) v = dist(gen);
}

class ParamStore {
 public:
  Parameter& add(const std::string& name, Shape shape) {
    check_arg(find(name) == nullptr, "duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->shape = shape;
    size_t n = static_cast<size_t>(shape.numel());
    p->value.assign(n, 0.0);
    p->grad.assign(n, 0.0);
    p->m.assign(n, 0.0);
    p->v.assign(n, 0.0);
    items_.push_back(std::move(p));
    return *items_.back();
  }

  Parameter* find(const std::string& name) {
    for (auto& p : items_)
      if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter* find(const std::string& name) const {
    for (auto& p : items_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : items_) p->zero_grad();
  }

  size_t size() const { return items_.size(); }
  Parameter& operator[](size_t i) { return *items_[i]; }
  const Parameter& operator[](size_t i) const { return *items_[i]; }

  int64_t total_elements() const {
    int64_t n = 0;
    for (auto& p : items_) n += p->numel();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
};

// Fixed CSR sparsity structure shared by a scaled Laplacian and every tensor
// of values laid over it. The structure never changes after construction.
struct SparsePattern {
  int n = 0;
  std::vector<int> row_ptr;  // size n+1
  std::vector<int> col;      // ascending within each row

  int nnz() const { return static_cast<int>(col.size()); }
  bool operator==(const SparsePattern& o) const {
    return n == o.n && row_ptr == o.row_ptr && col == o.col;
  }
};

class Tape;

// Lightweight handle to a tape node.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  int64_t numel() const { return shape().numel(); }
};

namespace detail {

enum class Op : uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddBias,
  kMatMul,
  kBmm,
  kSparseMul,
  kConcat,
  kSlice0,
  kReshape,
  kSwap01,
  kTranspose2d,
  kSumAxis,
  kSumAll,
  kMeanAll,
  kSigmoid,
  kTanh,
  kRelu,
  kExp,
  kSoftmax,
  kTemporalConv,
  kMseLoss,
};

}  // namespace detail

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Clears recorded nodes but keeps arena capacity for reuse.
  void reset() {
    nodes_.clear();
    extra_.clear();
    val_used_ = 0;
    grads_valid_ = false;
  }

  size_t size() const { return nodes_.size(); }

  Tensor leaf(Parameter& p) {
    int id = new_node(detail::Op::kLeaf, p.shape, -1, -1, true);
    nodes_[id].param = &p;
    std::memcpy(val_ptr(id), p.value.data(), sizeof(double) * p.value.size());
    return {this, id};
  }

  Tensor constant(Shape shape, std::span<const double> data) {
    check_shape(static_cast<int64_t>(data.size()) == shape.numel(),
                "constant data length does not match shape " + shape.str());
    int id = new_node(detail::Op::kLeaf, shape, -1, -1, false);
    std::memcpy(val_ptr(id), data.data(), sizeof(double) * data.size());
    return {this, id};
  }

  Tensor scalar(double v) { return constant(scalar_shape(), std::span<const double>(&v, 1)); }

  const Shape& shape(Tensor t) const { return nodes_[t.id].shape; }

  std::span<const double> value(Tensor t) const {
    const Node& n = nodes_[t.id];
    return {val_.data() + n.val_off, static_cast<size_t>(n.shape.numel())};
  }

  // Gradient computed by the most recent backward(). Zero if untouched.
  std::span<const double> grad(Tensor t) const {
    check_arg(grads_valid_, "grad() called before backward()");
    const Node& n = nodes_[t.id];
    return {grd_.data() + n.val_off, static_cast<size_t>(n.shape.numel())};
  }

  // Accumulates dLoss/dp into p.grad for every parameter leaf on the tape.
  // Calling twice without zeroing doubles the accumulated gradients.
  void backward(Tensor loss) {
    check_arg(loss.tape == this, "loss tensor belongs to a different tape");
    check_arg(loss.numel() == 1, "backward() requires a scalar loss");
    grd_.assign(val_used_, 0.0);
    grads_valid_ = true;
    if (!nodes_[loss.id].requires_grad) return;
    grd_[nodes_[loss.id].val_off] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
      const Node& n = nodes_[id];
      if (!n.requires_grad || n.op == detail::Op::kLeaf) continue;
      backward_node(id);
    }
    for (int id = 0; id <= loss.id; ++id) {
      const Node& n = nodes_[id];
      if (n.op == detail::Op::kLeaf && n.param != nullptr) {
        const double* g = grd_.data() + n.val_off;
        for (size_t i = 0; i < n.param->grad.size(); ++i) n.param->grad[i] += g[i];
      }
    }
  }

 private:
  friend Tensor add(Tensor, Tensor);
  friend Tensor sub(Tensor, Tensor);
  friend Tensor mul(Tensor, Tensor);
  friend Tensor scale(Tensor, double);
  friend Tensor add_bias(Tensor, Tensor);
  friend Tensor matmul(Tensor, Tensor);
  friend Tensor bmm(Tensor, Tensor, bool);
  friend Tensor sparse_dense_matmul(const SparsePattern&, Tensor, Tensor);
  friend Tensor concat(std::span<const Tensor>, int);
  friend Tensor slice0(Tensor, int, int);
  friend Tensor reshape(Tensor, Shape);
  friend Tensor swap01(Tensor);
  friend Tensor transpose2d(Tensor);
  friend Tensor sum_axis(Tensor, int);
  friend Tensor sum_all(Tensor);
  friend Tensor mean_all(Tensor);
  friend Tensor sigmoid(Tensor);
  friend Tensor tanh(Tensor);
  friend Tensor relu(Tensor);
  friend Tensor exp(Tensor);
  friend Tensor softmax(Tensor, int);
  friend Tensor temporal_conv1d(Tensor, Tensor);
  friend Tensor mse_loss(Tensor, Tensor);

  struct Node {
    detail::Op op;
    bool requires_grad = false;
    Shape shape;
    int a = -1;
    int b = -1;
    int i0 = 0;  // axis / slice begin / transpose_b flag
    int i1 = 0;  // slice end
    int extra_begin = 0;
    int extra_count = 0;
    double s0 = 0.0;  // scale factor
    const SparsePattern* pat = nullptr;
    Parameter* param = nullptr;
    size_t val_off = 0;
  };

  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<double> grd_;
  std::vector<int> extra_;
  size_t val_used_ = 0;
  bool grads_valid_ = false;

  int new_node(detail::Op op, Shape shape, int a, int b, bool requires_grad) {
    Node n;
    n.op = op;
    n.shape = shape;
    n.a = a;
    n.b = b;
    n.requires_grad = requires_grad;
    n.val_off = val_used_;
    val_used_ += static_cast<size_t>(shape.numel());
    if (val_.size() < val_used_) val_.resize(val_used_);
    grads_valid_ = false;
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }

  double* val_ptr(int id) { return val_.data() + nodes_[id].val_off; }
  const double* cval(int id) const { return val_.data() + nodes_[id].val_off; }
  double* gptr(int id) { return grd_.data() + nodes_[id].val_off; }
  bool needs(int id) const { return id >= 0 && nodes_[id].requires_grad; }

  static void axis_split(const Shape& s, int axis, int64_t* outer, int64_t* mid,
                         int64_t* inner) {
    *outer = 1;
    *inner = 1;
    for (int i = 0; i < axis; ++i) *outer *= s.d[i];
    *mid = s.d[axis];
    for (int i = axis + 1; i < s.rank; ++i) *inner *= s.d[i];
  }

  void backward_node(int id);
};

inline const Shape& Tensor::shape() const { return tape->shape(*this); }

// ---------------------------------------------------------------------------
// Op builders (forward runs eagerly at construction).
// ---------------------------------------------------------------------------

inline Tensor add(Tensor a, Tensor b) {
  Tape& t = *a.tape;
  check_shape(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " +
                                          b.shape().str());
  int id = t.new_node(detail::Op::kAdd, a.shape(), a.id, b.id, t.needs(a.id) || t.needs(b.id));
  const double* pa = t.cval(a.id);
  const double* pb = t.cval(b.id);
  double* out = t.val_ptr(id);
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
  return {&t, id};
}

inline Tensor sub(Tensor a, Tensor b) {
  Tape& t = *a.tape;
  check_shape(a.shape() == b.shape(), "sub: shape mismatch " + a.shape().str() + " vs " +
                                          b.shape().str());
  int id = t.new_node(detail::Op::kSub, a.shape(), a.id, b.id, t.needs(a.id) || t.needs(b.id));
  const double* pa = t.cval(a.id);
  const double* pb = t.cval(b.id);
  double* out = t.val_ptr(id);
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
  return {&t, id};
}

// Hadamard product.
inline Tensor mul(Tensor a, Tensor b) {
  Tape& t = *a.tape;
  check_shape(a.shape() == b.shape(), "mul: shape mismatch " + a.shape().str() + " vs " +
                                          b.shape().str());
  int id = t.new_node(detail::Op::kMul, a.shape(), a.id, b.id, t.needs(a.id) || t.needs(b.id));
  const double* pa = t.cval(a.id);
  const double* pb = t.cval(b.id);
  double* out = t.val_ptr(id);
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
  return {&t, id};
}

inline Tensor scale(Tensor a, double c) {
  Tape& t = *a.tape;
  int id = t.new_node(detail::Op::kScale, a.shape(), a.id, -1, t.needs(a.id));
  t.nodes_[id].s0 = c;
  const double* pa = t.cval(a.id);
  double* out = t.val_ptr(id);
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = c * pa[i];
  return {&t, id};
}

// x + b with b broadcast over all leading dimensions; b must be a vector
// whose length equals the trailing dimension of x.
inline Tensor add_bias(Tensor x, Tensor b) {
  Tape& t = *x.tape;
  const Shape xs = x.shape();
  check_shape(b.shape().rank == 1 && b.shape()[0] == xs[xs.rank - 1],
              "add_bias: bias length must match trailing dim of " + xs.str());
  int id = t.new_node(detail::Op::kAddBias, xs, x.id, b.id, t.needs(x.id) || t.needs(b.id));
  const double* px = t.cval(x.id);
  const double* pb = t.cval(b.id);
  double* out = t.val_ptr(id);
  int64_t rows = xs.numel() / xs[xs.rank - 1];
  int64_t c = xs[xs.rank - 1];
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) out[r * c + j] = px[r * c + j] + pb[j];
  return {&t, id};
}

// a (.., k) × b (k, m) -> (.., m); leading dimensions of a are flattened.
inline Tensor matmul(Tensor a, Tensor b) {
  Tape& t = *a.tape;
  const Shape as = a.shape();
  const Shape bs = b.shape();
  check_shape(as.rank >= 2 && bs.rank == 2, "matmul: need rank>=2 × rank2");
  check_shape(as[as.rank - 1] == bs[0], "matmul: inner dims differ: " + as.str() + " × " +
                                            bs.str());
  Shape os = as;
  os.d[os.rank - 1] = bs[1];
  int id = t.new_node(detail::Op::kMatMul, os, a.id, b.id, t.needs(a.id) || t.needs(b.id));
  const double* pa = t.cval(a.id);
  const double* pb = t.cval(b.id);
  double* out = t.val_ptr(id);
  int64_t rows = as.numel() / as[as.rank - 1];
  int64_t k = as[as.rank - 1];
  int64_t m = bs[1];
  std::fill(out, out + rows * m, 0.0);
  for (int64_t i = 0; i < rows; ++i) {
    const double* ai = pa + i * k;
    double* oi = out + i * m;
    for (int64_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = pb + p * m;
      for (int64_t j = 0; j < m; ++j) oi[j] += av * bp[j];
    }
  }
  return {&t, id};
}

// Batched matmul: a (B,n,k) × b (B,k,m) -> (B,n,m); with transpose_b,
// b is (B,m,k) and out[g,i,j] = sum_p a[g,i,p] * b[g,j,p].
inline Tensor bmm(Tensor a, Tensor b, bool transpose_b = false) {
  Tape& t = *a.tape;
  const Shape as = a.shape();
  const Shape bs = b.shape();
  check_shape(as.rank == 3 && bs.rank == 3 && as[0] == bs[0], "bmm: need matching rank-3 batches");
  int64_t B = as[0], n = as[1], k = as[2];
  int64_t m = transpose_b ? bs[1] : bs[2];
  check_shape(transpose_b ? bs[2] == k : bs[1] == k,
              "bmm: inner dims differ: " + as.str() + " × " + bs.str());
  Shape os{static_cast<int>(B), static_cast<int>(n), static_cast<int>(m)};
  int id = t.new_node(detail::Op::kBmm, os, a.id, b.id, t.needs(a.id) || t.needs(b.id));
  t.nodes_[id].i0 = transpose_b ? 1 : 0;
  const double* pa = t.cval(a.id);
  const double* pb = t.cval(b.id);
  double* out = t.val_ptr(id);
  std::fill(out, out + B * n * m, 0.0);
  for (int64_t g = 0; g < B; ++g) {
    const double* ag = pa + g * n * k;
    const double* bg = pb + g * (transpose_b ? m * k : k * m);
    double* og = out + g * n * m;
    if (transpose_b) {
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) {
          double s = 0.0;
          const double* ai = ag + i * k;
          const double* bj = bg + j * k;
          for (int64_t p = 0; p < k; ++p) s += ai[p] * bj[p];
          og[i * m + j] = s;
        }
    } else {
      for (int64_t i = 0; i < n; ++i) {
        const double* ai = ag + i * k;
        double* oi = og + i * m;
        for (int64_t p = 0; p < k; ++p) {
          double av = ai[p];
          const double* bp = bg + p * m;
          for (int64_t j = 0; j < m; ++j) oi[j] += av * bp[j];
        }
      }
    }
  }
  return {&t, id};
}

// Sparse (n×n, CSR pattern with values on the tape) × dense x. x may be
// (n, f) or (T, n, f); the product is applied along the node dimension.
// Differentiable with respect to both the values and x.
inline Tensor sparse_dense_matmul(const SparsePattern& pat, Tensor values, Tensor x) {
  Tape& t = *x.tape;
  const Shape xs = x.shape();
  check_shape(values.shape().rank == 1 && values.shape()[0] == pat.nnz(),
              "sparse_dense_matmul: values length must equal pattern nnz");
  check_shape(xs.rank >= 2 && xs[xs.rank - 2] == pat.n,
              "sparse_dense_matmul: node dim of " + xs.str() + " must be " +
                  std::to_string(pat.n));
  int id = t.new_node(detail::Op::kSparseMul, xs, values.id, x.id,
                      t.needs(values.id) || t.needs(x.id));
  t.nodes_[id].pat = &pat;
  const double* pv = t.cval(values.id);
  const double* px = t.cval(x.id);
  double* out = t.val_ptr(id);
  int64_t f = xs[xs.rank - 1];
  int64_t batch = xs.numel() / (static_cast<int64_t>(pat.n) * f);
  for (int64_t g = 0; g < batch; ++g) {
    const double* xg = px + g * pat.n * f;
    double* og = out + g * pat.n * f;
    for (int i = 0; i < pat.n; ++i) {
      double* oi = og + i * f;
      std::fill(oi, oi + f, 0.0);
      for (int e = pat.row_ptr[i]; e < pat.row_ptr[i + 1]; ++e) {
        double w = pv[e];
        const double* xj = xg + static_cast<int64_t>(pat.col[e]) * f;
        for (int64_t c = 0; c < f; ++c) oi[c] += w * xj[c];
      }
    }
  }
  return {&t, id};
}

inline Tensor concat(std::span<const Tensor> parts, int axis) {
  check_arg(!parts.empty(), "concat: empty input list");
  Tape& t = *parts[0].tape;
  const Shape s0 = parts[0].shape();
  check_arg(axis >= 0 && axis < s0.rank, "concat: axis out of range");
  Shape os = s0;
  bool rg = false;
  int total = 0;
  for (const Tensor& p : parts) {
    const Shape ps = p.shape();
    check_shape(ps.rank == s0.rank, "concat: rank mismatch");
    for (int i = 0; i < s0.rank; ++i)
      check_shape(i == axis || ps.d[i] == s0.d[i], "concat: dim mismatch off-axis");
    total += ps.d[axis];
    rg = rg || t.needs(p.id);
  }
  os.d[axis] = total;
  int id = t.new_node(detail::Op::kConcat, os, -1, -1, rg);
  t.nodes_[id].i0 = axis;
  t.nodes_[id].extra_begin = static_cast<int>(t.extra_.size());
  t.nodes_[id].extra_count = static_cast<int>(parts.size());
  for (const Tensor& p : parts) t.extra_.push_back(p.id);
  int64_t outer, mid, inner;
  Tape::axis_split(os, axis, &outer, &mid, &inner);
  double* out = t.val_ptr(id);
  int64_t at = 0;
  for (const Tensor& p : parts) {
    const double* src = t.cval(p.id);
    int64_t pm = p.shape().d[axis];
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out + (o * mid + at) * inner, src + o * pm * inner,
                  sizeof(double) * pm * inner);
    at += pm;
  }
  return {&t, id};
}

inline Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v), axis);
}

// Rows [begin, end) along axis 0.
inline Tensor slice0(Tensor x, int begin, int end) {
  Tape& t = *x.tape;
  const Shape xs = x.shape();
  check_arg(begin >= 0 && begin < end && end <= xs[0], "slice0: invalid range");
  Shape os = xs;
  os.d[0] = end - begin;
  int id = t.new_node(detail::Op::kSlice0, os, x.id, -1, t.needs(x.id));
  t.nodes_[id].i0 = begin;
  t.nodes_[id].i1 = end;
  int64_t row = xs.numel() / xs[0];
  std::memcpy(t.val_ptr(id), t.cval(x.id) + begin * row, sizeof(double) * (end - begin) * row);
  return {&t, id};
}

inline Tensor reshape(Tensor x, Shape s) {
  Tape& t = *x.tape;
  check_shape(s.numel() == x.numel(),
              "reshape: element count mismatch " + x.shape().str() + " -> " + s.str());
  int id = t.new_node(detail::Op::kReshape, s, x.id, -1, t.needs(x.id));
  std::memcpy(t.val_ptr(id), t.cval(x.id), sizeof(double) * x.numel());
  return {&t, id};
}

// (A,B,...) -> (B,A,...): swaps the two leading axes of a rank-3 tensor.
inline Tensor swap01(Tensor x) {
  Tape& t = *x.tape;
  const Shape xs = x.shape();
  check_shape(xs.rank == 3, "swap01: rank-3 tensor required");
  Shape os{xs[1], xs[0], xs[2]};
  int id = t.new_node(detail::Op::kSwap01, os, x.id, -1, t.needs(x.id));
  const double* px = t.cval(x.id);
  double* out = t.val_ptr(id);
  int64_t A = xs[0], B = xs[1], C = xs[2];
  for (int64_t i = 0; i < A; ++i)
    for (int64_t j = 0; j < B; ++j)
      std::memcpy(out + (j * A + i) * C, px + (i * B + j) * C, sizeof(double) * C);
  return {&t, id};
}

inline Tensor transpose2d(Tensor x) {
  Tape& t = *x.tape;
  const Shape xs = x.shape();
  check_shape(xs.rank == 2, "transpose2d: rank-2 tensor required");
  Shape os{xs[1], xs[0]};
  int id = t.new_node(detail::Op::kTranspose2d, os, x.id, -1, t.needs(x.id));
  const double* px = t.cval(x.id);
  double* out = t.val_ptr(id);
  for (int i = 0; i < xs[0]; ++i)
    for (int j = 0; j < xs[1]; ++j) out[j * xs[0] + i] = px[i * xs[1] + j];
  return {&t, id};
}

// Sums out one axis (the result has rank-1).
inline Tensor sum_axis(Tensor x, int axis) {
  Tape& t = *x.tape;
  const Shape xs = x.shape();
  check_arg(axis >= 0 && axis < xs.rank, "sum_axis: axis out of range");
  check_arg(xs.rank >= 2, "sum_axis: use sum_all for rank-1 tensors");
  Shape os;
  for (int i = 0; i < xs.rank; ++i)
    if (i != axis) os.d[os.rank++] = xs.d[i];
  int id = t.new_node(detail::Op::kSumAxis, os, x.id, -1, t.needs(x.id));
  t.nodes_[id].i0 = axis;
  int64_t outer, mid, inner;
  Tape::axis_split(xs, axis, &outer, &mid, &inner);
  const double* px = t.cval(x.id);
  double* out = t.val_ptr(id);
  std::fill(out, out + outer * inner, 0.0);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t a = 0; a < mid; ++a) {
      const double* row = px + (o * mid + a) * inner;
      double* orow = out + o * inner;
      for (int64_t i = 0; i < inner; ++i) orow[i] += row[i];
    }
  return {&t, id};
}

inline Tensor sum_all(Tensor x) {
  Tape& t = *x.tape;
  int id = t.new_node(detail::Op::kSumAll, scalar_shape(), x.id, -1, t.needs(x.id));
  const double* px = t.cval(x.id);
  double s = 0.0;
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) s += px[i];
  *t.val_ptr(id) = s;
  return {&t, id};
}

inline Tensor mean_all(Tensor x) {
  Tape& t = *x.tape;
  check_arg(x.numel() > 0, "mean_all: empty tensor");
  int id = t.new_node(detail::Op::kMeanAll, scalar_shape(), x.id, -1, t.needs(x.id));
  const double* px = t.cval(x.id);
  double s = 0.0;
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) s += px[i];
  *t.val_ptr(id) = s / static_cast<double>(n);
  return {&t, id};
}

inline Tensor sigmoid(Tensor x) {
  Tape& t = *x.tape;
  int id = t.new_node(detail::Op::kSigmoid, x.shape(), x.id, -1, t.needs(x.id));
  const double* px = t.cval(x.id);
  double* out = t.val_ptr(id);
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-px[i]));
  return {&t, id};
}

inline Tensor tanh(Tensor x) {
  Tape& t = *x.tape;
  int id = t.new_node(detail::Op::kTanh, x.shape(), x.id, -1, t.needs(x.id));
  const double* px = t.cval(x.id);
  double* out = t.val_ptr(id);
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(px[i]);
  return {&t, id};
}

inline Tensor relu(Tensor x) {
  Tape& t = *x.tape;
  int id = t.new_node(detail::Op::kRelu, x.shape(), x.id, -1, t.needs(x.id));
  const double* px = t.cval(x.id);
  double* out = t.val_ptr(id);
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = px[i] > 0.0 ? px[i] : 0.0;
  return {&t, id};
}

inline Tensor exp(Tensor x) {
  Tape& t = *x.tape;
  int id = t.new_node(detail::Op::kExp, x.shape(), x.id, -1, t.needs(x.id));
  const double* px = t.cval(x.id);
  double* out = t.val_ptr(id);
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = std::exp(px[i]);
  return {&t, id};
}

inline Tensor softmax(Tensor x, int axis) {
  Tape& t = *x.tape;
  const Shape xs = x.shape();
  check_arg(axis >= 0 && axis < xs.rank, "softmax: axis out of range");
  check_arg(xs.d[axis] > 0, "softmax: empty axis");
  int id = t.new_node(detail::Op::kSoftmax, xs, x.id, -1, t.needs(x.id));
  t.nodes_[id].i0 = axis;
  int64_t outer, mid, inner;
  Tape::axis_split(xs, axis, &outer, &mid, &inner);
  const double* px = t.cval(x.id);
  double* out = t.val_ptr(id);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      const double* lx = px + o * mid * inner + i;
      double* lo = out + o * mid * inner + i;
      double mx = lx[0];
      for (int64_t a = 1; a < mid; ++a) mx = std::max(mx, lx[a * inner]);
      double sum = 0.0;
      for (int64_t a = 0; a < mid; ++a) {
        double e = std::exp(lx[a * inner] - mx);
        lo[a * inner] = e;
        sum += e;
      }
      double inv = 1.0 / sum;
      for (int64_t a = 0; a < mid; ++a) lo[a * inner] *= inv;
    }
  return {&t, id};
}

// Causal 1-D convolution along the leading (time) axis. x is (T, N, Cin),
// kernel is (Cout, Cin, ks); output (T, N, Cout). Left zero-padding keeps the
// output length equal to the input length.
inline Tensor temporal_conv1d(Tensor x, Tensor kernel) {
  Tape& t = *x.tape;
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();
  check_shape(xs.rank == 3 && ks.rank == 3, "temporal_conv1d: x (T,N,Cin), kernel (Cout,Cin,ks)");
  check_shape(ks[1] == xs[2], "temporal_conv1d: channel mismatch " + xs.str() + " vs " +
                                  ks.str());
  int64_t T = xs[0], N = xs[1], Cin = xs[2], Cout = ks[0], K = ks[2];
  Shape os{static_cast<int>(T), static_cast<int>(N), static_cast<int>(Cout)};
  int id = t.new_node(detail::Op::kTemporalConv, os, x.id, kernel.id,
                      t.needs(x.id) || t.needs(kernel.id));
  const double* px = t.cval(x.id);
  const double* pk = t.cval(kernel.id);
  double* out = t.val_ptr(id);
  std::fill(out, out + T * N * Cout, 0.0);
  for (int64_t ti = 0; ti < T; ++ti)
    for (int64_t j = 0; j < K; ++j) {
      int64_t src = ti - (K - 1) + j;
      if (src < 0) continue;
      for (int64_t ni = 0; ni < N; ++ni) {
        const double* xr = px + (src * N + ni) * Cin;
        double* orow = out + (ti * N + ni) * Cout;
        for (int64_t o = 0; o < Cout; ++o) {
          const double* kr = pk + (o * Cin) * K + j;
          double s = 0.0;
          for (int64_t c = 0; c < Cin; ++c) s += kr[c * K] * xr[c];
          orow[o] += s;
        }
      }
    }
  return {&t, id};
}

// Mean of squared elementwise differences; scalar output.
inline Tensor mse_loss(Tensor a, Tensor b) {
  Tape& t = *a.tape;
  check_shape(a.shape() == b.shape(), "mse_loss: shape mismatch");
  int id = t.new_node(detail::Op::kMseLoss, scalar_shape(), a.id, b.id,
                      t.needs(a.id) || t.needs(b.id));
  const double* pa = t.cval(a.id);
  const double* pb = t.cval(b.id);
  int64_t n = a.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = pa[i] - pb[i];
    s += d * d;
  }
  *t.val_ptr(id) = s / static_cast<double>(n);
  return {&t, id};
}

// ---------------------------------------------------------------------------
// Backward rules.
// ---------------------------------------------------------------------------

inline void Tape::backward_node(int id) {
  const Node& n = nodes_[id];
  const double* g = grd_.data() + n.val_off;
  const int64_t cnt = n.shape.numel();
  using detail::Op;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd: {
      if (needs(n.a)) {
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += g[i];
      }
      if (needs(n.b)) {
        double* gb = gptr(n.b);
        for (int64_t i = 0; i < cnt; ++i) gb[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      if (needs(n.a)) {
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += g[i];
      }
      if (needs(n.b)) {
        double* gb = gptr(n.b);
        for (int64_t i = 0; i < cnt; ++i) gb[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      const double* va = cval(n.a);
      const double* vb = cval(n.b);
      if (needs(n.a)) {
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += g[i] * vb[i];
      }
      if (needs(n.b)) {
        double* gb = gptr(n.b);
        for (int64_t i = 0; i < cnt; ++i) gb[i] += g[i] * va[i];
      }
      break;
    }
    case Op::kScale: {
      if (needs(n.a)) {
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += n.s0 * g[i];
      }
      break;
    }
    case Op::kAddBias: {
      int64_t c = n.shape.d[n.shape.rank - 1];
      int64_t rows = cnt / c;
      if (needs(n.a)) {
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += g[i];
      }
      if (needs(n.b)) {
        double* gb = gptr(n.b);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
      }
      break;
    }
    case Op::kMatMul: {
      const Shape& as = nodes_[n.a].shape;
      const Shape& bs = nodes_[n.b].shape;
      int64_t k = as.d[as.rank - 1];
      int64_t rows = as.numel() / k;
      int64_t m = bs.d[1];
      const double* va = cval(n.a);
      const double* vb = cval(n.b);
      if (needs(n.a)) {
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < rows; ++i) {
          const double* gi = g + i * m;
          double* gai = ga + i * k;
          for (int64_t j = 0; j < m; ++j) {
            double gv = gi[j];
            const double* brow = vb + j;  // column j of b, stride m
            for (int64_t p = 0; p < k; ++p) gai[p] += gv * brow[p * m];
          }
        }
      }
      if (needs(n.b)) {
        double* gb = gptr(n.b);
        for (int64_t i = 0; i < rows; ++i) {
          const double* ai = va + i * k;
          const double* gi = g + i * m;
          for (int64_t p = 0; p < k; ++p) {
            double av = ai[p];
            double* gbp = gb + p * m;
            for (int64_t j = 0; j < m; ++j) gbp[j] += av * gi[j];
          }
        }
      }
      break;
    }
    case Op::kBmm: {
      const Shape& as = nodes_[n.a].shape;
      bool tb = n.i0 != 0;
      int64_t B = as.d[0], rows = as.d[1], k = as.d[2];
      int64_t m = n.shape.d[2];
      const double* va = cval(n.a);
      const double* vb = cval(n.b);
      for (int64_t gidx = 0; gidx < B; ++gidx) {
        const double* ag = va + gidx * rows * k;
        const double* bg = vb + gidx * (tb ? m * k : k * m);
        const double* gg = g + gidx * rows * m;
        double* gag = needs(n.a) ? gptr(n.a) + gidx * rows * k : nullptr;
        double* gbg = needs(n.b) ? gptr(n.b) + gidx * (tb ? m * k : k * m) : nullptr;
        if (tb) {
          // out[i,j] = sum_p a[i,p] b[j,p]
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < m; ++j) {
              double gv = gg[i * m + j];
              if (gv == 0.0) continue;
              if (gag)
                for (int64_t p = 0; p < k; ++p) gag[i * k + p] += gv * bg[j * k + p];
              if (gbg)
                for (int64_t p = 0; p < k; ++p) gbg[j * k + p] += gv * ag[i * k + p];
            }
        } else {
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* gi = gg + i * m;
              const double* bp = bg + p * m;
              if (gag) {
                for (int64_t j = 0; j < m; ++j) acc += gi[j] * bp[j];
                gag[i * k + p] += acc;
              }
              if (gbg) {
                double av = ag[i * k + p];
                double* gbp = gbg + p * m;
                for (int64_t j = 0; j < m; ++j) gbp[j] += av * gi[j];
              }
            }
        }
      }
      break;
    }
    case Op::kSparseMul: {
      const SparsePattern& pat = *n.pat;
      const Shape& xs = nodes_[n.b].shape;
      int64_t f = xs.d[xs.rank - 1];
      int64_t batch = xs.numel() / (static_cast<int64_t>(pat.n) * f);
      const double* vv = cval(n.a);
      const double* vx = cval(n.b);
      double* gv = needs(n.a) ? gptr(n.a) : nullptr;
      double* gx = needs(n.b) ? gptr(n.b) : nullptr;
      for (int64_t gi = 0; gi < batch; ++gi) {
        const double* xg = vx + gi * pat.n * f;
        const double* og = g + gi * pat.n * f;
        double* gxg = gx ? gx + gi * pat.n * f : nullptr;
        for (int i = 0; i < pat.n; ++i) {
          const double* grow = og + static_cast<int64_t>(i) * f;
          for (int e = pat.row_ptr[i]; e < pat.row_ptr[i + 1]; ++e) {
            int j = pat.col[e];
            const double* xj = xg + static_cast<int64_t>(j) * f;
            if (gv) {
              double acc = 0.0;
              for (int64_t c = 0; c < f; ++c) acc += grow[c] * xj[c];
              gv[e] += acc;
            }
            if (gxg) {
              double w = vv[e];
              double* gxj = gxg + static_cast<int64_t>(j) * f;
              for (int64_t c = 0; c < f; ++c) gxj[c] += w * grow[c];
            }
          }
        }
      }
      break;
    }
    case Op::kConcat: {
      int axis = n.i0;
      int64_t outer, mid, inner;
      axis_split(n.shape, axis, &outer, &mid, &inner);
      int64_t at = 0;
      for (int pi = 0; pi < n.extra_count; ++pi) {
        int src = extra_[n.extra_begin + pi];
        int64_t pm = nodes_[src].shape.d[axis];
        if (needs(src)) {
          double* gs = gptr(src);
          for (int64_t o = 0; o < outer; ++o) {
            const double* grow = g + (o * mid + at) * inner;
            double* srow = gs + o * pm * inner;
            for (int64_t i = 0; i < pm * inner; ++i) srow[i] += grow[i];
          }
        }
        at += pm;
      }
      break;
    }
    case Op::kSlice0: {
      if (needs(n.a)) {
        const Shape& xs = nodes_[n.a].shape;
        int64_t row = xs.numel() / xs.d[0];
        double* ga = gptr(n.a) + n.i0 * row;
        for (int64_t i = 0; i < cnt; ++i) ga[i] += g[i];
      }
      break;
    }
    case Op::kReshape: {
      if (needs(n.a)) {
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += g[i];
      }
      break;
    }
    case Op::kSwap01: {
      if (needs(n.a)) {
        const Shape& xs = nodes_[n.a].shape;
        int64_t A = xs.d[0], B = xs.d[1], C = xs.d[2];
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < A; ++i)
          for (int64_t j = 0; j < B; ++j) {
            const double* grow = g + (j * A + i) * C;
            double* arow = ga + (i * B + j) * C;
            for (int64_t c = 0; c < C; ++c) arow[c] += grow[c];
          }
      }
      break;
    }
    case Op::kTranspose2d: {
      if (needs(n.a)) {
        const Shape& xs = nodes_[n.a].shape;
        double* ga = gptr(n.a);
        for (int i = 0; i < xs.d[0]; ++i)
          for (int j = 0; j < xs.d[1]; ++j) ga[i * xs.d[1] + j] += g[j * xs.d[0] + i];
      }
      break;
    }
    case Op::kSumAxis: {
      if (needs(n.a)) {
        const Shape& xs = nodes_[n.a].shape;
        int64_t outer, mid, inner;
        axis_split(xs, n.i0, &outer, &mid, &inner);
        double* ga = gptr(n.a);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t a = 0; a < mid; ++a) {
            double* arow = ga + (o * mid + a) * inner;
            const double* grow = g + o * inner;
            for (int64_t i = 0; i < inner; ++i) arow[i] += grow[i];
          }
      }
      break;
    }
    case Op::kSumAll: {
      if (needs(n.a)) {
        double gv = g[0];
        double* ga = gptr(n.a);
        int64_t an = nodes_[n.a].shape.numel();
        for (int64_t i = 0; i < an; ++i) ga[i] += gv;
      }
      break;
    }
    case Op::kMeanAll: {
      if (needs(n.a)) {
        int64_t an = nodes_[n.a].shape.numel();
        double gv = g[0] / static_cast<double>(an);
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < an; ++i) ga[i] += gv;
      }
      break;
    }
    case Op::kSigmoid: {
      if (needs(n.a)) {
        const double* y = cval(id);
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      }
      break;
    }
    case Op::kTanh: {
      if (needs(n.a)) {
        const double* y = cval(id);
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      }
      break;
    }
    case Op::kRelu: {
      if (needs(n.a)) {
        const double* x = cval(n.a);
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
      }
      break;
    }
    case Op::kExp: {
      if (needs(n.a)) {
        const double* y = cval(id);
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < cnt; ++i) ga[i] += g[i] * y[i];
      }
      break;
    }
    case Op::kSoftmax: {
      if (needs(n.a)) {
        const Shape& xs = nodes_[n.a].shape;
        int64_t outer, mid, inner;
        axis_split(xs, n.i0, &outer, &mid, &inner);
        const double* y = cval(id);
        double* ga = gptr(n.a);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < inner; ++i) {
            const double* ly = y + o * mid * inner + i;
            const double* lg = g + o * mid * inner + i;
            double* la = ga + o * mid * inner + i;
            double dot = 0.0;
            for (int64_t a = 0; a < mid; ++a) dot += lg[a * inner] * ly[a * inner];
            for (int64_t a = 0; a < mid; ++a)
              la[a * inner] += ly[a * inner] * (lg[a * inner] - dot);
          }
      }
      break;
    }
    case Op::kTemporalConv: {
      const Shape& xs = nodes_[n.a].shape;
      const Shape& ks = nodes_[n.b].shape;
      int64_t T = xs.d[0], N = xs.d[1], Cin = xs.d[2], Cout = ks.d[0], K = ks.d[2];
      const double* vx = cval(n.a);
      const double* vk = cval(n.b);
      double* gx = needs(n.a) ? gptr(n.a) : nullptr;
      double* gk = needs(n.b) ? gptr(n.b) : nullptr;
      for (int64_t ti = 0; ti < T; ++ti)
        for (int64_t j = 0; j < K; ++j) {
          int64_t src = ti - (K - 1) + j;
          if (src < 0) continue;
          for (int64_t ni = 0; ni < N; ++ni) {
            const double* grow = g + (ti * N + ni) * Cout;
            const double* xr = vx + (src * N + ni) * Cin;
            double* gxr = gx ? gx + (src * N + ni) * Cin : nullptr;
            for (int64_t o = 0; o < Cout; ++o) {
              double gv = grow[o];
              if (gv == 0.0) continue;
              for (int64_t c = 0; c < Cin; ++c) {
                if (gk) gk[(o * Cin + c) * K + j] += gv * xr[c];
                if (gxr) gxr[c] += gv * vk[(o * Cin + c) * K + j];
              }
            }
          }
        }
      break;
    }
    case Op::kMseLoss: {
      const double* va = cval(n.a);
      const double* vb = cval(n.b);
      int64_t an = nodes_[n.a].shape.numel();
      double c = 2.0 * g[0] / static_cast<double>(an);
      if (needs(n.a)) {
        double* ga = gptr(n.a);
        for (int64_t i = 0; i < an; ++i) ga[i] += c * (va[i] - vb[i]);
      }
      if (needs(n.b)) {
        double* gb = gptr(n.b);
        for (int64_t i = 0; i < an; ++i) gb[i] -= c * (va[i] - vb[i]);
      }
      break;
    }
  }
}

}  // namespace pvgnn
