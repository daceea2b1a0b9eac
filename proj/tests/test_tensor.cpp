#include "tvq/tensor.hpp"

#include <cmath>
#include <cstring>

#include "doctest.h"
#include "oracles.hpp"
#include "tvq/rng.hpp"

using namespace tvq;

TEST_CASE("matmul identity-padded") {
  // third column of A multiplies the zero row of the identity padding
  Tensor a = make_tensor({2, 3}, {1, 2, 7, 3, 4, -5});
  Tensor b = make_tensor({3, 2}, {1, 0, 0, 1, 0, 0});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.values()[0] == 1);
  CHECK(c.values()[1] == 2);
  CHECK(c.values()[2] == 3);
  CHECK(c.values()[3] == 4);
}

TEST_CASE("relu clamps negatives") {
  Tensor x = make_tensor({3}, {-1, 0, 2});
  Tensor y = relu(x);
  CHECK(y.values()[0] == 0);
  CHECK(y.values()[1] == 0);
  CHECK(y.values()[2] == 2);
}

TEST_CASE("conv2d ones image, ones 3x3 kernel, pad 1") {
  Tensor x = full({1, 1, 4, 4}, 1.0);
  Tensor w = full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, w, 1, 1);
  REQUIRE(y.shape() == Shape{1, 1, 4, 4});
  auto v = y.values();
  // corners see 4 taps, edges 6, interior 9
  CHECK(v[0] == 4);
  CHECK(v[1] == 6);
  CHECK(v[5] == 9);
  CHECK(v[15] == 4);
}

TEST_CASE("shape errors name the op and extents") {
  Tensor a = make_tensor({2, 3}, std::vector<scalar>(6, 1));
  Tensor b = make_tensor({2, 3}, std::vector<scalar>(6, 1));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(2,3)"), std::invalid_argument);
  Tensor img = zeros({1, 2, 4, 4});
  Tensor k = zeros({1, 3, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(img, k, 1, 1), doctest::Contains("conv2d"), std::invalid_argument);
}

TEST_CASE("unknown op_kind rejected") {
  CHECK_THROWS_AS(op_from_name("frobnicate"), std::invalid_argument);
  CHECK_THROWS_AS(apply_primitive(static_cast<OpKind>(9999), {}), std::invalid_argument);
  CHECK(op_from_name("conv2d") == OpKind::Conv2d);
}

TEST_CASE("backward: sum and sum of squares") {
  Tensor x = make_tensor({3}, {1, 2, 3}, true);
  {
    Tape tape;
    Tape::Scope scope(tape);
    backward(reduce_sum(x));
    CHECK(x.grad()[0] == 1);
    CHECK(x.grad()[1] == 1);
    CHECK(x.grad()[2] == 1);
  }
  Tensor z = make_tensor({2}, {1, 2}, true);
  {
    Tape tape;
    Tape::Scope scope(tape);
    backward(reduce_sum(mul(z, z)));
    CHECK(z.grad()[0] == doctest::Approx(2));
    CHECK(z.grad()[1] == doctest::Approx(4));
  }
}

TEST_CASE("backward rejects non-scalar loss and empty tape") {
  Tensor x = make_tensor({3}, {1, 2, 3}, true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
  Tape empty;
  Tape::Scope scope2(empty);
  CHECK_THROWS_AS(backward(reduce_sum(detach(y))), std::runtime_error);
}

TEST_CASE("repeated backward accumulates leaf grads") {
  Tensor x = make_tensor({2}, {1, 2}, true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor loss = reduce_sum(x);
  backward(loss);
  backward(loss);
  CHECK(x.grad()[0] == 2);
}

TEST_CASE("random 3-layer network gradients vs central finite differences") {
  Rng rng(7);
  Tensor x = oracles::random_tensor(rng, {2, 3, 8, 8}, true);
  Tensor w1 = oracles::random_tensor(rng, {6, 3, 3, 3}, true, -0.5, 0.5);
  Tensor b1 = oracles::random_tensor(rng, {6}, true, -0.1, 0.1);
  Tensor w2 = oracles::random_tensor(rng, {8, 6, 4, 4}, true, -0.3, 0.3);
  Tensor b2 = oracles::random_tensor(rng, {8}, true, -0.1, 0.1);
  Tensor w3 = oracles::random_tensor(rng, {8 * 4 * 4, 5}, true, -0.2, 0.2);
  auto loss_fn = [&]() {
    Tensor h1 = leaky_relu(conv2d(x, w1, b1, 1, 1), 0.2);
    Tensor h2 = sigmoid(conv2d(h1, w2, b2, 2, 1));
    Tensor flat = reshape(h2, {2, 8 * 4 * 4});
    Tensor out = softmax(matmul(flat, w3), -1);
    return reduce_mean(mul(out, out));
  };
  auto rep = oracles::fd_check(loss_fn, {x, w1, b1, w2, b2, w3});
  CHECK(rep.checked > 50);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("every primitive passes a randomized finite-difference check") {
  Rng rng(123);
  auto check = [&](const char* name, std::function<Tensor()> fn, std::vector<Tensor> inputs) {
    auto rep = oracles::fd_check(fn, inputs);
    INFO(name);
    CHECK(rep.max_rel_err <= 1e-4);
  };

  Tensor a = oracles::random_tensor(rng, {3, 4});
  Tensor b = oracles::random_tensor(rng, {3, 4});
  check("add", [&] { return reduce_mean(mul(add(a, b), add(a, b))); }, {a, b});
  check("sub", [&] { return reduce_mean(mul(sub(a, b), sub(a, b))); }, {a, b});
  check("mul", [&] { return reduce_sum(mul(a, b)); }, {a, b});
  check("scalar_mul+add", [&] { return reduce_sum(mul(scalar_add(scalar_mul(a, 1.7), 0.3), b)); }, {a, b});

  Tensor m1 = oracles::random_tensor(rng, {3, 5});
  Tensor m2 = oracles::random_tensor(rng, {5, 2});
  check("matmul", [&] { return reduce_mean(mul(matmul(m1, m2), matmul(m1, m2))); }, {m1, m2});

  Tensor bm1 = oracles::random_tensor(rng, {2, 3, 4});
  Tensor bm2 = oracles::random_tensor(rng, {2, 4, 3});
  check("bmm", [&] { return reduce_mean(mul(bmm(bm1, bm2), bmm(bm1, bm2))); }, {bm1, bm2});
  check("transpose_last2", [&] { return reduce_mean(mul(transpose_last2(bm1), transpose_last2(bm1))); },
        {bm1});

  Tensor img = oracles::random_tensor(rng, {2, 3, 6, 6});
  Tensor cw = oracles::random_tensor(rng, {4, 3, 3, 3}, true, -0.4, 0.4);
  Tensor cb = oracles::random_tensor(rng, {4}, true, -0.1, 0.1);
  check("conv2d_s1", [&] { return reduce_mean(mul(conv2d(img, cw, cb, 1, 1), conv2d(img, cw, cb, 1, 1))); },
        {img, cw, cb});
  Tensor cw2 = oracles::random_tensor(rng, {4, 3, 4, 4}, true, -0.4, 0.4);
  check("conv2d_s2", [&] { return reduce_mean(mul(conv2d(img, cw2, 2, 1), conv2d(img, cw2, 2, 1))); },
        {img, cw2});
  Tensor tw = oracles::random_tensor(rng, {3, 2, 4, 4}, true, -0.4, 0.4);
  Tensor tb = oracles::random_tensor(rng, {2}, true, -0.1, 0.1);
  check("transposed_conv2d",
        [&] {
          Tensor y = transposed_conv2d(img, tw, tb, 2, 1);
          return reduce_mean(mul(y, y));
        },
        {img, tw, tb});
  check("nearest_upsample",
        [&] { return reduce_mean(mul(nearest_upsample(img, 2), nearest_upsample(img, 2))); }, {img});
  check("avg_downsample",
        [&] { return reduce_mean(mul(avg_downsample(img, 2), avg_downsample(img, 2))); }, {img});

  // keep values away from the relu kink
  Tensor far = make_tensor({6}, {-2.0, -0.7, -0.2, 0.3, 1.1, 2.5}, true);
  check("relu", [&] { return reduce_sum(mul(relu(far), relu(far))); }, {far});
  check("leaky_relu", [&] { return reduce_sum(mul(leaky_relu(far, 0.2), leaky_relu(far, 0.2))); }, {far});
  check("sigmoid", [&] { return reduce_sum(mul(sigmoid(far), sigmoid(far))); }, {far});

  Tensor pos = oracles::random_tensor(rng, {7}, true, 0.5, 2.0);
  check("log", [&] { return reduce_sum(mul(log_op(pos), log_op(pos))); }, {pos});

  Tensor sm = oracles::random_tensor(rng, {3, 5});
  check("softmax_axis1", [&] { return reduce_mean(mul(softmax(sm, 1), softmax(sm, 1))); }, {sm});
  Tensor sm4 = oracles::random_tensor(rng, {2, 4, 3, 3});
  check("softmax_axis_channel", [&] { return reduce_mean(mul(softmax(sm4, 1), softmax(sm4, 1))); }, {sm4});

  check("reshape", [&] { return reduce_mean(mul(reshape(img, {2, 27, 4}), reshape(img, {2, 27, 4}))); },
        {img});
  Tensor c1 = oracles::random_tensor(rng, {2, 3});
  Tensor c2 = oracles::random_tensor(rng, {2, 2});
  check("concat",
        [&] {
          Tensor cc = concat({c1, c2}, 1);
          return reduce_mean(mul(cc, cc));
        },
        {c1, c2});
  check("slice",
        [&] {
          Tensor s = slice(img, 2, 1, 4);
          return reduce_mean(mul(s, s));
        },
        {img});
  check("reduce_sum", [&] { return mul(reduce_sum(a), reduce_sum(a)); }, {a});
  check("reduce_mean", [&] { return mul(reduce_mean(a), reduce_mean(a)); }, {a});

  Tensor table = oracles::random_tensor(rng, {5, 3});
  check("gather_rows",
        [&] {
          Tensor g = gather_rows(table, {0, 2, 2, 4});
          return reduce_mean(mul(g, g));
        },
        {table});
  check("nchw_nhwc_roundtrip",
        [&] {
          Tensor t = nhwc_to_nchw(nchw_to_nhwc(img));
          return reduce_mean(mul(t, t));
        },
        {img});
}

TEST_CASE("detach: stop-gradient and value sharing") {
  Tensor x = make_tensor({3}, {1, 2, 3}, true);
  Tensor y = make_tensor({3}, {4, 5, 6}, true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor d = detach(x);
  CHECK_FALSE(d.requires_grad());
  CHECK(std::memcmp(d.values().data(), x.values().data(), 3 * sizeof(scalar)) == 0);

  backward(reduce_sum(mul(d, y)));
  CHECK_FALSE(x.has_grad());
  CHECK(y.grad()[0] == 1);
  CHECK(y.grad()[1] == 2);
  CHECK(y.grad()[2] == 3);
}

TEST_CASE("backward through detach contributes exactly zero upstream") {
  Rng rng(5);
  Tensor x = oracles::random_tensor(rng, {4, 4}, true);
  Tape tape;
  Tape::Scope scope(tape);
  // loss = sum(x * detach(x^2)): gradient must be exactly detach(x^2)
  Tensor x2 = mul(x, x);
  backward(reduce_sum(mul(x, detach(x2))));
  auto g = x.grad();
  auto v = x2.values();
  for (int i = 0; i < 16; i++) CHECK(g[i] == v[i]);
}

TEST_CASE("tape replay determinism: identical seeds give bit-identical grads") {
  auto run = [] {
    Rng rng(99);
    Tensor x = oracles::random_tensor(rng, {2, 3, 8, 8}, true);
    Tensor w = oracles::random_tensor(rng, {4, 3, 3, 3}, true);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = conv2d(x, w, 2, 1);
    Tensor loss = reduce_mean(mul(y, sigmoid(y)));
    backward(loss);
    std::vector<scalar> out(w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(scalar)) == 0);
}

TEST_CASE("eval without tape records nothing") {
  Tensor x = make_tensor({2}, {1, 2}, true);
  Tensor y = mul(x, x);  // no active tape
  CHECK(y.requires_grad());
  CHECK(y.impl()->node == -1);
}
