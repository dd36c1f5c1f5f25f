#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pvgnn/optimizer.hpp"
#include "pvgnn/tensor.hpp"
#include "testutil.hpp"

using namespace pvgnn;

namespace {

// Checks analytic gradients of an op against central finite differences.
// `build` constructs the op output on a fresh tape from the store's
// parameters; the loss is a fixed random projection of the output so every
// output element contributes to the scalar.
template <typename Build>
void check_op_grad(ParamStore& store, Build build, double tol = 2e-6) {
  std::vector<double> proj;
  auto forward = [&]() {
    Tape tape;
    Tensor out = build(tape);
    if (proj.empty()) {
      proj.resize(static_cast<size_t>(out.numel()));
      auto gen = testutil::rng(777);
      testutil::fill_uniform(proj, gen, 0.25, 1.0);
    }
    Tensor c = tape.constant(out.shape(), proj);
    Tensor loss = sum_all(mul(out, c));
    return tape.value(loss)[0];
  };
  forward();  // fixes the projection before any perturbation
  store.zero_grad();
  {
    Tape tape;
    Tensor out = build(tape);
    Tensor c = tape.constant(out.shape(), proj);
    Tensor loss = sum_all(mul(out, c));
    tape.backward(loss);
  }
  double err = testutil::max_grad_rel_err(store, forward);
  CAPTURE(err);
  REQUIRE(err < tol);
}

SparsePattern make_test_pattern() {
  // 4-node chain plus self loops:
  // row 0: {0,1}, row 1: {0,1,2}, row 2: {1,2,3}, row 3: {2,3}
  SparsePattern pat;
  pat.n = 4;
  pat.row_ptr = {0, 2, 5, 8, 10};
  pat.col = {0, 1, 0, 1, 2, 1, 2, 3, 2, 3};
  return pat;
}

}  // namespace

TEST_CASE("elementwise ops compute correct values") {
  Tape tape;
  std::vector<double> av = {1.0, -2.0, 3.0, 0.5};
  std::vector<double> bv = {0.5, 4.0, -1.0, 2.0};
  Tensor a = tape.constant(Shape{2, 2}, av);
  Tensor b = tape.constant(Shape{2, 2}, bv);
  auto s = tape.value(add(a, b));
  REQUIRE(s[0] == 1.5);
  REQUIRE(s[1] == 2.0);
  auto d = tape.value(sub(a, b));
  REQUIRE(d[2] == 4.0);
  auto m = tape.value(mul(a, b));
  REQUIRE(m[1] == -8.0);
  REQUIRE(m[3] == 1.0);
  auto sc = tape.value(scale(a, -2.0));
  REQUIRE(sc[0] == -2.0);
}

TEST_CASE("matmul matches a hand-computed product") {
  Tape tape;
  std::vector<double> av = {1, 2, 3, 4, 5, 6};      // 2x3
  std::vector<double> bv = {7, 8, 9, 10, 11, 12};   // 3x2
  Tensor c = matmul(tape.constant(Shape{2, 3}, av), tape.constant(Shape{3, 2}, bv));
  auto v = tape.value(c);
  REQUIRE(v[0] == 58.0);
  REQUIRE(v[1] == 64.0);
  REQUIRE(v[2] == 139.0);
  REQUIRE(v[3] == 154.0);
}

TEST_CASE("matmul flattens leading dimensions of a rank-3 lhs") {
  Tape tape;
  auto gen = testutil::rng(11);
  std::vector<double> xv(2 * 3 * 4), wv(4 * 5);
  testutil::fill_uniform(xv, gen);
  testutil::fill_uniform(wv, gen);
  Tensor x3 = tape.constant(Shape{2, 3, 4}, xv);
  Tensor x2 = tape.constant(Shape{6, 4}, xv);
  Tensor w = tape.constant(Shape{4, 5}, wv);
  auto v3 = tape.value(matmul(x3, w));
  auto v2 = tape.value(matmul(x2, w));
  for (size_t i = 0; i < v2.size(); ++i) REQUIRE(v3[i] == v2[i]);
}

TEST_CASE("bmm with transpose_b equals bmm against explicitly transposed batches") {
  Tape tape;
  auto gen = testutil::rng(12);
  std::vector<double> av(2 * 3 * 4), bv(2 * 5 * 4), bt(2 * 4 * 5);
  testutil::fill_uniform(av, gen);
  testutil::fill_uniform(bv, gen);
  for (int g = 0; g < 2; ++g)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) bt[g * 20 + j * 5 + i] = bv[g * 20 + i * 4 + j];
  Tensor a = tape.constant(Shape{2, 3, 4}, av);
  auto v1 = tape.value(bmm(a, tape.constant(Shape{2, 5, 4}, bv), true));
  auto v2 = tape.value(bmm(a, tape.constant(Shape{2, 4, 5}, bt), false));
  for (size_t i = 0; i < v1.size(); ++i) REQUIRE_THAT(v1[i], Catch::Matchers::WithinAbs(v2[i], 1e-14));
}

TEST_CASE("sparse_dense_matmul matches a dense multiply over the same entries") {
  SparsePattern pat = make_test_pattern();
  auto gen = testutil::rng(13);
  std::vector<double> vals(static_cast<size_t>(pat.nnz())), xv(4 * 3);
  testutil::fill_uniform(vals, gen);
  testutil::fill_uniform(xv, gen);
  double dense[4][4] = {};
  for (int i = 0; i < 4; ++i)
    for (int e = pat.row_ptr[i]; e < pat.row_ptr[i + 1]; ++e) dense[i][pat.col[e]] = vals[e];
  Tape tape;
  Tensor v = tape.constant(Shape{pat.nnz()}, vals);
  Tensor x = tape.constant(Shape{4, 3}, xv);
  auto out = tape.value(sparse_dense_matmul(pat, v, x));
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 3; ++c) {
      double want = 0.0;
      for (int j = 0; j < 4; ++j) want += dense[i][j] * xv[j * 3 + c];
      REQUIRE_THAT(out[i * 3 + c], Catch::Matchers::WithinAbs(want, 1e-14));
    }
}

TEST_CASE("concat and slice0 round-trip blocks along axis 0") {
  Tape tape;
  std::vector<double> av = {1, 2, 3, 4}, bv = {5, 6};
  Tensor a = tape.constant(Shape{2, 2}, av);
  Tensor b = tape.constant(Shape{1, 2}, bv);
  Tensor c = concat({a, b}, 0);
  REQUIRE(c.shape() == Shape{3, 2});
  auto v = tape.value(c);
  REQUIRE(v[4] == 5.0);
  auto back = tape.value(slice0(c, 2, 3));
  REQUIRE(back[0] == 5.0);
  REQUIRE(back[1] == 6.0);
}

TEST_CASE("concat along the trailing axis interleaves feature blocks") {
  Tape tape;
  std::vector<double> av = {1, 2, 3, 4}, bv = {10, 20};
  Tensor a = tape.constant(Shape{2, 2}, av);
  Tensor b = tape.constant(Shape{2, 1}, bv);
  auto v = tape.value(concat({a, b}, 1));
  std::vector<double> want = {1, 2, 10, 3, 4, 20};
  for (size_t i = 0; i < want.size(); ++i) REQUIRE(v[i] == want[i]);
}

TEST_CASE("swap01 and transpose2d move elements where expected") {
  Tape tape;
  std::vector<double> xv(2 * 3 * 4);
  for (size_t i = 0; i < xv.size(); ++i) xv[i] = static_cast<double>(i);
  auto v = tape.value(swap01(tape.constant(Shape{2, 3, 4}, xv)));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      for (int c = 0; c < 4; ++c) REQUIRE(v[(j * 2 + i) * 4 + c] == xv[(i * 3 + j) * 4 + c]);
  std::vector<double> mv = {1, 2, 3, 4, 5, 6};
  auto tv = tape.value(transpose2d(tape.constant(Shape{2, 3}, mv)));
  REQUIRE(tv[0] == 1.0);
  REQUIRE(tv[1] == 4.0);
  REQUIRE(tv[5] == 6.0);
}

TEST_CASE("sum and mean reductions") {
  Tape tape;
  std::vector<double> xv = {1, 2, 3, 4, 5, 6};
  Tensor x = tape.constant(Shape{2, 3}, xv);
  auto s0 = tape.value(sum_axis(x, 0));
  REQUIRE(s0[0] == 5.0);
  REQUIRE(s0[2] == 9.0);
  auto s1 = tape.value(sum_axis(x, 1));
  REQUIRE(s1[0] == 6.0);
  REQUIRE(s1[1] == 15.0);
  REQUIRE(tape.value(sum_all(x))[0] == 21.0);
  REQUIRE(tape.value(mean_all(x))[0] == 3.5);
}

TEST_CASE("softmax lines are positive and sum to one") {
  Tape tape;
  auto gen = testutil::rng(14);
  std::vector<double> xv(3 * 5 * 4);
  testutil::fill_uniform(xv, gen, -30.0, 30.0);
  Tensor y = softmax(tape.constant(Shape{3, 5, 4}, xv), 1);
  auto v = tape.value(y);
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 4; ++i) {
      double s = 0.0;
      for (int a = 0; a < 5; ++a) {
        double e = v[(o * 5 + a) * 4 + i];
        REQUIRE(e > 0.0);
        s += e;
      }
      REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("softmax is stable under large-magnitude inputs") {
  Tape tape;
  std::vector<double> xv = {1000.0, 1001.0, 999.0};
  auto v = tape.value(softmax(tape.constant(Shape{1, 3}, xv), 1));
  double s = v[0] + v[1] + v[2];
  REQUIRE(std::isfinite(s));
  REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
  REQUIRE(v[1] > v[0]);
  REQUIRE(v[0] > v[2]);
}

TEST_CASE("temporal_conv1d is causal with left zero padding") {
  // Cin=Cout=1, N=1, kernel (k0,k1): out[t] = k0*x[t-1] + k1*x[t].
  Tape tape;
  std::vector<double> xv = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> kv = {0.5, 2.0};
  Tensor out = temporal_conv1d(tape.constant(Shape{4, 1, 1}, xv),
                               tape.constant(Shape{1, 1, 2}, kv));
  auto v = tape.value(out);
  REQUIRE(v[0] == 2.0);   // pad*0.5 + 1*2
  REQUIRE(v[1] == 4.5);   // 1*0.5 + 2*2
  REQUIRE(v[2] == 7.0);
  REQUIRE(v[3] == 9.5);
}

TEST_CASE("temporal_conv1d output at t ignores inputs after t") {
  auto gen = testutil::rng(15);
  std::vector<double> xv(6 * 2 * 3), kv(4 * 3 * 4);
  testutil::fill_uniform(xv, gen);
  testutil::fill_uniform(kv, gen);
  auto run = [&](const std::vector<double>& x) {
    Tape tape;
    Tensor out = temporal_conv1d(tape.constant(Shape{6, 2, 3}, x),
                                 tape.constant(Shape{4, 3, 4}, kv));
    auto v = tape.value(out);
    return std::vector<double>(v.begin(), v.end());
  };
  auto base = run(xv);
  std::vector<double> bumped = xv;
  for (size_t i = 4 * 2 * 3; i < bumped.size(); ++i) bumped[i] += 100.0;  // t >= 4
  auto after = run(bumped);
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 2 * 4; ++i) REQUIRE(base[t * 8 + i] == after[t * 8 + i]);
  REQUIRE(base[5 * 8] != after[5 * 8]);
}

TEST_CASE("mse_loss equals the mean squared difference") {
  Tape tape;
  std::vector<double> av = {1, 2, 3, 4}, bv = {2, 2, 0, 8};
  Tensor l = mse_loss(tape.constant(Shape{2, 2}, av), tape.constant(Shape{2, 2}, bv));
  REQUIRE_THAT(tape.value(l)[0], Catch::Matchers::WithinAbs((1.0 + 0.0 + 9.0 + 16.0) / 4.0, 1e-15));
}

TEST_CASE("shape violations are rejected") {
  Tape tape;
  std::vector<double> a4(4, 1.0), a6(6, 1.0);
  Tensor a = tape.constant(Shape{2, 2}, a4);
  Tensor b = tape.constant(Shape{2, 3}, a6);
  REQUIRE_THROWS_AS(add(a, b), ShapeError);
  REQUIRE_THROWS_AS(matmul(b, a), ShapeError);
  REQUIRE_THROWS_AS(reshape(a, Shape{5}), ShapeError);
  REQUIRE_THROWS_AS(tape.constant(Shape{3}, a4), ShapeError);
}

TEST_CASE("backward requires a scalar loss and grad() requires a backward pass") {
  Tape tape;
  ParamStore store;
  auto gen = testutil::rng(16);
  Parameter& p = testutil::add_random_param(store, "p", Shape{2, 2}, gen);
  Tensor x = tape.leaf(p);
  Tensor y = mul(x, x);
  REQUIRE_THROWS_AS(tape.backward(y), std::invalid_argument);
  REQUIRE_THROWS_AS(tape.grad(y), std::invalid_argument);
  Tensor loss = sum_all(y);
  tape.backward(loss);
  REQUIRE(tape.grad(x).size() == 4);
}

TEST_CASE("gradients do not flow into constants") {
  Tape tape;
  ParamStore store;
  auto gen = testutil::rng(17);
  Parameter& p = testutil::add_random_param(store, "p", Shape{3}, gen);
  std::vector<double> cv = {1.0, 2.0, 3.0};
  Tensor c = tape.constant(Shape{3}, cv);
  Tensor x = tape.leaf(p);
  Tensor loss = sum_all(mul(x, c));
  tape.backward(loss);
  for (double g : tape.grad(c)) REQUIRE(g == 0.0);
  auto gx = tape.grad(x);
  REQUIRE(gx[0] == 1.0);
  REQUIRE(gx[2] == 3.0);
}

TEST_CASE("repeated backward accumulates parameter gradients") {
  ParamStore store;
  auto gen = testutil::rng(18);
  Parameter& p = testutil::add_random_param(store, "p", Shape{4}, gen);
  Tape tape;
  Tensor loss = sum_all(mul(tape.leaf(p), tape.leaf(p)));
  tape.backward(loss);
  std::vector<double> once = p.grad;
  tape.backward(loss);
  for (size_t i = 0; i < once.size(); ++i)
    REQUIRE_THAT(p.grad[i], Catch::Matchers::WithinAbs(2.0 * once[i], 1e-15));
}

TEST_CASE("tape reset reuses the arena and reproduces values") {
  Tape tape;
  std::vector<double> xv = {1, 2, 3, 4, 5, 6};
  auto build = [&]() {
    Tensor x = tape.constant(Shape{2, 3}, xv);
    return tape.value(sum_all(sigmoid(x)))[0];
  };
  double v1 = build();
  size_t nodes = tape.size();
  tape.reset();
  REQUIRE(tape.size() == 0);
  double v2 = build();
  REQUIRE(tape.size() == nodes);
  REQUIRE(v1 == v2);
}

TEST_CASE("leaf copies parameter values at creation time") {
  ParamStore store;
  Parameter& p = store.add("p", Shape{2});
  p.value = {1.0, 2.0};
  Tape tape;
  Tensor x = tape.leaf(p);
  p.value[0] = 99.0;
  REQUIRE(tape.value(x)[0] == 1.0);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks, one per differentiable op.
// ---------------------------------------------------------------------------

TEST_CASE("gradcheck: add / sub / mul / scale") {
  auto gen = testutil::rng(100);
  ParamStore store;
  testutil::add_random_param(store, "a", Shape{2, 3}, gen);
  testutil::add_random_param(store, "b", Shape{2, 3}, gen);
  check_op_grad(store, [&](Tape& t) {
    Tensor a = t.leaf(*store.find("a"));
    Tensor b = t.leaf(*store.find("b"));
    return scale(add(mul(a, b), sub(a, b)), 1.7);
  });
}

TEST_CASE("gradcheck: add_bias") {
  auto gen = testutil::rng(101);
  ParamStore store;
  testutil::add_random_param(store, "x", Shape{2, 3, 4}, gen);
  testutil::add_random_param(store, "b", Shape{4}, gen);
  check_op_grad(store, [&](Tape& t) {
    return add_bias(t.leaf(*store.find("x")), t.leaf(*store.find("b")));
  });
}

TEST_CASE("gradcheck: matmul rank-2 and rank-3") {
  auto gen = testutil::rng(102);
  ParamStore store;
  testutil::add_random_param(store, "a2", Shape{4, 3}, gen);
  testutil::add_random_param(store, "a3", Shape{2, 4, 3}, gen);
  testutil::add_random_param(store, "w", Shape{3, 5}, gen);
  check_op_grad(store, [&](Tape& t) {
    Tensor w = t.leaf(*store.find("w"));
    Tensor y2 = matmul(t.leaf(*store.find("a2")), w);
    Tensor y3 = matmul(t.leaf(*store.find("a3")), w);
    return add(y3, reshape(concat({y2, y2}, 0), Shape{2, 4, 5}));
  });
}

TEST_CASE("gradcheck: bmm plain and transposed") {
  auto gen = testutil::rng(103);
  ParamStore store;
  testutil::add_random_param(store, "a", Shape{2, 3, 4}, gen);
  testutil::add_random_param(store, "b", Shape{2, 4, 5}, gen);
  testutil::add_random_param(store, "bt", Shape{2, 5, 4}, gen);
  check_op_grad(store, [&](Tape& t) {
    Tensor a = t.leaf(*store.find("a"));
    Tensor p = bmm(a, t.leaf(*store.find("b")));
    Tensor q = bmm(a, t.leaf(*store.find("bt")), true);
    return add(p, q);
  });
}

TEST_CASE("gradcheck: sparse_dense_matmul w.r.t. values and input") {
  auto gen = testutil::rng(104);
  SparsePattern pat = make_test_pattern();
  ParamStore store;
  testutil::add_random_param(store, "vals", Shape{pat.nnz()}, gen);
  testutil::add_random_param(store, "x2", Shape{4, 3}, gen);
  testutil::add_random_param(store, "x3", Shape{2, 4, 3}, gen);
  check_op_grad(store, [&](Tape& t) {
    Tensor v = t.leaf(*store.find("vals"));
    Tensor y2 = sparse_dense_matmul(pat, v, t.leaf(*store.find("x2")));
    Tensor y3 = sparse_dense_matmul(pat, v, t.leaf(*store.find("x3")));
    return add(y3, reshape(concat({y2, y2}, 0), Shape{2, 4, 3}));
  });
}

TEST_CASE("gradcheck: concat and slice0") {
  auto gen = testutil::rng(105);
  ParamStore store;
  testutil::add_random_param(store, "a", Shape{2, 2, 3}, gen);
  testutil::add_random_param(store, "b", Shape{2, 2, 3}, gen);
  check_op_grad(store, [&](Tape& t) {
    Tensor a = t.leaf(*store.find("a"));
    Tensor b = t.leaf(*store.find("b"));
    Tensor c0 = concat({a, b}, 0);
    Tensor c1 = concat({a, b}, 1);
    Tensor c2 = concat({a, b}, 2);
    return concat({slice0(c0, 1, 3), reshape(c1, Shape{4, 2, 3}),
                   reshape(c2, Shape{4, 2, 3})},
                  0);
  });
}

TEST_CASE("gradcheck: reshape, swap01, transpose2d") {
  auto gen = testutil::rng(106);
  ParamStore store;
  testutil::add_random_param(store, "x", Shape{2, 3, 4}, gen);
  testutil::add_random_param(store, "m", Shape{3, 4}, gen);
  check_op_grad(store, [&](Tape& t) {
    Tensor x = t.leaf(*store.find("x"));
    Tensor m = t.leaf(*store.find("m"));
    Tensor y = swap01(reshape(x, Shape{4, 3, 2}));
    return add(reshape(y, Shape{3, 4, 2}),
               reshape(concat({transpose2d(m), transpose2d(m)}, 0), Shape{3, 4, 2}));
  });
}

TEST_CASE("gradcheck: reductions") {
  auto gen = testutil::rng(107);
  ParamStore store;
  testutil::add_random_param(store, "x", Shape{2, 3, 4}, gen);
  check_op_grad(store, [&](Tape& t) {
    Tensor x = t.leaf(*store.find("x"));
    Tensor s0 = sum_axis(x, 0);  // (3,4)
    Tensor s1 = sum_axis(x, 1);  // (2,4)
    Tensor s2 = sum_axis(x, 2);  // (2,3)
    Tensor parts = concat({reshape(s0, Shape{12}), reshape(s1, Shape{8}),
                           reshape(s2, Shape{6})},
                          0);
    return concat({parts, scale(sum_all(x), 0.3), mean_all(x)}, 0);
  });
}

TEST_CASE("gradcheck: pointwise nonlinearities") {
  auto gen = testutil::rng(108);
  ParamStore store;
  testutil::add_random_param(store, "x", Shape{3, 4}, gen, 0.15);
  check_op_grad(store, [&](Tape& t) {
    Tensor x = t.leaf(*store.find("x"));
    return concat({sigmoid(x), pvgnn::tanh(x), relu(x), pvgnn::exp(scale(x, 0.5))}, 0);
  });
}

TEST_CASE("gradcheck: softmax over middle and trailing axes") {
  auto gen = testutil::rng(109);
  ParamStore store;
  testutil::add_random_param(store, "x", Shape{2, 3, 4}, gen);
  check_op_grad(store, [&](Tape& t) {
    Tensor x = t.leaf(*store.find("x"));
    return add(softmax(x, 1), softmax(x, 2));
  });
}

TEST_CASE("gradcheck: temporal_conv1d") {
  auto gen = testutil::rng(110);
  ParamStore store;
  testutil::add_random_param(store, "x", Shape{6, 2, 3}, gen);
  testutil::add_random_param(store, "k", Shape{4, 3, 4}, gen);
  check_op_grad(store, [&](Tape& t) {
    return temporal_conv1d(t.leaf(*store.find("x")), t.leaf(*store.find("k")));
  });
}

TEST_CASE("gradcheck: mse_loss") {
  auto gen = testutil::rng(111);
  ParamStore store;
  testutil::add_random_param(store, "a", Shape{3, 4}, gen);
  testutil::add_random_param(store, "b", Shape{3, 4}, gen);
  check_op_grad(store, [&](Tape& t) {
    return mse_loss(t.leaf(*store.find("a")), t.leaf(*store.find("b")));
  });
}

TEST_CASE("gradcheck: composite graph mixing most ops") {
  auto gen = testutil::rng(112);
  ParamStore store;
  testutil::add_random_param(store, "x", Shape{5, 3, 2}, gen, 0.15);
  testutil::add_random_param(store, "w", Shape{2, 4}, gen);
  testutil::add_random_param(store, "b", Shape{4}, gen);
  check_op_grad(store, [&](Tape& t) {
    Tensor h = add_bias(matmul(t.leaf(*store.find("x")), t.leaf(*store.find("w"))),
                        t.leaf(*store.find("b")));
    Tensor act = pvgnn::tanh(h);
    Tensor att = softmax(bmm(act, act, true), 2);
    return bmm(att, act);
  });
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

TEST_CASE("adam first step moves a parameter by about the learning rate") {
  ParamStore store;
  Parameter& p = store.add("p", Shape{1});
  p.value[0] = 5.0;
  p.grad[0] = 123.0;  // magnitude should not matter on step one
  AdamState state;
  state.config.lr = 0.01;
  adam_step(store, state);
  REQUIRE_THAT(p.value[0], Catch::Matchers::WithinAbs(5.0 - 0.01, 1e-6));
  REQUIRE(state.step == 1);
}

TEST_CASE("adam with zero learning rate leaves parameters bit-identical") {
  auto gen = testutil::rng(120);
  ParamStore store;
  Parameter& p = testutil::add_random_param(store, "p", Shape{8}, gen);
  std::vector<double> before = p.value;
  testutil::fill_uniform(p.grad, gen);
  AdamState state;
  state.config.lr = 0.0;
  adam_step(store, state);
  REQUIRE(p.value == before);
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
  ParamStore store;
  Parameter& p = store.add("p", Shape{2});
  p.value = {1.0, 2.0};
  p.grad = {0.5, std::numeric_limits<double>::quiet_NaN()};
  AdamState state;
  REQUIRE_THROWS_AS(adam_step(store, state), NumericError);
  REQUIRE(p.value[0] == 1.0);
  REQUIRE(p.value[1] == 2.0);
  REQUIRE(state.step == 0);
}

TEST_CASE("adam minimises a quadratic") {
  ParamStore store;
  Parameter& p = store.add("x", Shape{1});
  p.value[0] = -4.0;
  AdamState state;
  state.config.lr = 0.1;
  for (int it = 0; it < 800; ++it) {
    store.zero_grad();
    Tape tape;
    Tensor x = tape.leaf(p);
    Tensor target = tape.scalar(3.0);
    Tensor loss = mse_loss(x, target);
    tape.backward(loss);
    adam_step(store, state);
  }
  REQUIRE_THAT(p.value[0], Catch::Matchers::WithinAbs(3.0, 1e-3));
}
