// Finite-difference validation of every differentiable primitive, plus the
// composed network blocks. Primitive threshold 1e-6, composite threshold
// 1e-4 (error compounds through longer chains).

#include <vector>

#include "doctest.h"
#include "qrestore/gradcheck.hpp"
#include "qrestore/ops.hpp"
#include "qrestore/rng.hpp"

using namespace qrestore;

namespace {
constexpr double kPrimTol = 1e-6;

Tensor rand_t(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(s), lo, hi, rng);
}
}  // namespace

TEST_CASE("gradients: elementwise binary ops") {
  Rng rng(101);
  Tensor b = rand_t({2, 3}, rng, 0.5, 1.5);  // safe divisor
  Tensor brow = rand_t({3}, rng, 0.5, 1.5);

  auto check_both = [&](const char* name, Tensor (*op)(const Tensor&, const Tensor&),
                        const Tensor& other) {
    CAPTURE(name);
    // w.r.t. the left operand
    CHECK(grad_check([&](const Tensor& t) { return sum(op(t, other)); },
                     rand_t({2, 3}, rng)) < kPrimTol);
    // w.r.t. the right operand (kept away from zero for div)
    CHECK(grad_check([&](const Tensor& t) { return sum(op(other, t)); },
                     rand_t({2, 3}, rng, 0.5, 1.5)) < kPrimTol);
  };
  check_both("add", &add, b);
  check_both("sub", &sub, b);
  check_both("mul", &mul, b);
  check_both("div", &div, b);

  // broadcast: grads must reduce over the repeated axes
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(t, b)); },
                   rand_t({3}, rng)) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return sum(div(b, t)); },
                   rand_t({2, 1}, rng, 0.5, 1.5)) < kPrimTol);
}

TEST_CASE("gradients: scalar and unary ops") {
  Rng rng(103);
  CHECK(grad_check([](const Tensor& t) { return sum(add(t, 2.5)); },
                   rand_t({4}, rng)) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return sum(mul(t, -1.5)); },
                   rand_t({4}, rng)) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return sum(neg(t)); },
                   rand_t({4}, rng)) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return sum(pow(t, 1.5)); },
                   rand_t({4}, rng, 0.2, 1.0)) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return sum(pow(t, 0.7)); },
                   rand_t({4}, rng, 0.2, 1.0)) < kPrimTol);
  // keep x away from the relu/abs kink so the numeric derivative is valid
  CHECK(grad_check([](const Tensor& t) { return sum(relu(t)); },
                   Tensor::from_data({4}, {-1.0, -0.3, 0.4, 2.0})) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return sum(qrestore::abs(t)); },
                   Tensor::from_data({4}, {-1.0, -0.3, 0.4, 2.0})) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return sum(gelu(t)); },
                   rand_t({6}, rng, -2.0, 2.0)) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return sum(sigmoid(t)); },
                   rand_t({6}, rng, -3.0, 3.0)) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return sum(softplus(t)); },
                   rand_t({6}, rng, -3.0, 3.0)) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return sum(qrestore::sqrt(t)); },
                   rand_t({4}, rng, 0.3, 2.0)) < kPrimTol);
  // clamp: interior points only (kink at the bounds)
  CHECK(grad_check([](const Tensor& t) { return sum(clamp(t, -0.5, 0.5)); },
                   Tensor::from_data({4}, {-0.9, -0.2, 0.3, 0.8})) < kPrimTol);
  CHECK(grad_check([](const Tensor& t) { return mean(t); },
                   rand_t({5}, rng)) < kPrimTol);
}

TEST_CASE("gradients: shape ops") {
  Rng rng(107);
  Tensor w = rand_t({2, 3}, rng);
  CHECK(grad_check(
            [&](const Tensor& t) { return sum(mul(reshape(t, {3, 2}), reshape(w, {3, 2}))); },
            rand_t({2, 3}, rng)) < kPrimTol);
  CHECK(grad_check(
            [&](const Tensor& t) { return sum(mul(transpose2d(t), transpose2d(w))); },
            rand_t({2, 3}, rng)) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(slice(t, 1, 1, 2), slice(w, 1, 0, 2))); },
                   rand_t({2, 3}, rng)) < kPrimTol);
  CHECK(grad_check(
            [&](const Tensor& t) {
              Tensor c = concat({t, mul(t, 2.0)}, 0);
              return sum(mul(c, c));
            },
            rand_t({2, 3}, rng)) < kPrimTol);
}

TEST_CASE("gradients: spatial ops") {
  Rng rng(109);
  Tensor w4 = rand_t({1, 2, 4, 4}, rng);
  CHECK(grad_check(
            [&](const Tensor& t) { return sum(mul(upsample_nearest(t, 2), w4)); },
            rand_t({1, 2, 2, 2}, rng)) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(avgpool(t, 2), avgpool(w4, 2))); },
                   rand_t({1, 2, 4, 4}, rng)) < kPrimTol);
}

TEST_CASE("gradients: matmul, linear, conv2d") {
  Rng rng(113);
  Tensor a = rand_t({3, 4}, rng);
  Tensor b = rand_t({4, 2}, rng);
  Tensor bn = rand_t({2, 4}, rng);
  CHECK(grad_check([&](const Tensor& t) { return sum(matmul(t, b)); }, a) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return sum(matmul(a, t)); }, b) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return sum(matmul_nt(t, bn)); }, a) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return sum(matmul_nt(a, t)); }, bn) < kPrimTol);

  Tensor lw = rand_t({2, 4}, rng);
  Tensor lb = rand_t({2}, rng);
  CHECK(grad_check([&](const Tensor& t) { return sum(linear(t, lw, lb)); }, a) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return sum(linear(a, t, lb)); }, lw) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return sum(linear(a, lw, t)); }, lb) < kPrimTol);

  // conv: x, w, bias; with stride, pad and groups in play
  Tensor cx = rand_t({1, 4, 5, 5}, rng);
  Tensor cw = rand_t({4, 2, 3, 3}, rng);
  Tensor cb = rand_t({4}, rng);
  auto cnv = [&](const Tensor& x, const Tensor& w, const Tensor& b) {
    return sum(conv2d(x, w, b, 2, 1, 2));
  };
  CHECK(grad_check([&](const Tensor& t) { return cnv(t, cw, cb); }, cx) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return cnv(cx, t, cb); }, cw) < kPrimTol);
  CHECK(grad_check([&](const Tensor& t) { return cnv(cx, cw, t); }, cb) < kPrimTol);

  // depthwise
  Tensor dw = rand_t({4, 1, 3, 3}, rng);
  CHECK(grad_check(
            [&](const Tensor& t) { return sum(conv2d(t, dw, {}, 1, 1, 4)); },
            rand_t({1, 4, 4, 4}, rng)) < kPrimTol);
}

TEST_CASE("gradients: softmax") {
  Rng rng(127);
  Tensor w = rand_t({3, 5}, rng);
  CHECK(grad_check(
            [&](const Tensor& t) { return sum(mul(softmax(t, 1), w)); },
            rand_t({3, 5}, rng, -2.0, 2.0)) < kPrimTol);
  CHECK(grad_check(
            [&](const Tensor& t) { return sum(mul(softmax(t, 0), w)); },
            rand_t({3, 5}, rng, -2.0, 2.0)) < kPrimTol);
}

// ---- composed blocks (threshold 1e-4) -----------------------------------

#include "qrestore/decomp.hpp"
#include "qrestore/fnet.hpp"
#include "qrestore/metrics.hpp"
#include "qrestore/qlayers.hpp"

namespace {
constexpr double kCompTol = 1e-4;

Tensor rand_q(int64_t qc, int64_t hw, Rng& rng, double lo = -1.0,
              double hi = 1.0) {
  return Tensor::uniform({1, 4 * qc, hw, hw}, lo, hi, rng, true);
}
}  // namespace

TEST_CASE("gradients: quaternion convolution (both flavours)") {
  Rng rng(131);
  for (bool quaternion : {true, false}) {
    QConv2d conv(2, 3, 3, 1, 1, quaternion, rng);
    CHECK(grad_check(
              [&](const Tensor& t) {
                return sum(conv.forward(QTensor(t)).t);
              },
              rand_q(2, 5, rng)) < kCompTol);
    // w.r.t. the weight components
    Tensor x = rand_q(2, 5, rng).detach();
    for (Tensor& wt : conv.w) {
      CHECK(grad_check(
                [&](const Tensor&) {
                  return sum(conv.forward(QTensor(x)).t);
                },
                wt) < kCompTol);
    }
  }
}

TEST_CASE("gradients: attention block") {
  Rng rng(137);
  QMsa msa(2, 2, true, rng);
  CHECK(grad_check(
            [&](const Tensor& t) { return sum(msa.forward(QTensor(t)).t); },
            rand_q(2, 4, rng)) < kCompTol);
}

TEST_CASE("gradients: feed-forward and full transformer block") {
  Rng rng(139);
  QFfn ffn(2, 2, true, rng);
  CHECK(grad_check(
            [&](const Tensor& t) { return sum(ffn.forward(QTensor(t)).t); },
            rand_q(2, 4, rng)) < kCompTol);
  QTransformerBlock blk(2, 2, 2, true, rng);
  CHECK(grad_check(
            [&](const Tensor& t) { return sum(blk.forward(QTensor(t)).t); },
            rand_q(2, 4, rng)) < kCompTol);
}

TEST_CASE("gradients: component refinement net") {
  Rng rng(149);
  DNet net(2, true, rng);
  CHECK(grad_check([&](const Tensor& t) { return sum(net.forward(t)); },
                   Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, true)) <
        kCompTol);
}

TEST_CASE("gradients: fusion attention gate and projection head") {
  Rng rng(151);
  AttentionGate gate(2, true, rng);
  const Tensor damaged = Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, false);
  CHECK(grad_check(
            [&](const Tensor& t) {
              return sum(gate.forward(QTensor(t), QTensor(damaged)).t);
            },
            Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, true)) < kCompTol);
  // gradient also flows through the damaged-image operand
  const Tensor comp = Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, false);
  CHECK(grad_check(
            [&](const Tensor& t) {
              return sum(gate.forward(QTensor(comp), QTensor(t)).t);
            },
            Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, true)) < kCompTol);
  ProjectionHead head(true, rng);
  CHECK(grad_check(
            [&](const Tensor& t) {
              return sum(head.forward(QTensor(t), QTensor(damaged)).t);
            },
            Tensor::uniform({1, 4, 6, 6}, 0.0, 1.0, rng, true)) < kCompTol);
}

TEST_CASE("gradients: gamma correction and recomposition") {
  Rng rng(157);
  CHECK(grad_check([&](const Tensor& t) { return sum(gamma_correct_t(t, 0.7)); },
                   Tensor::uniform({1, 4, 5, 5}, 0.1, 0.9, rng, true)) <
        kCompTol);
  const Tensor other = Tensor::uniform({1, 4, 5, 5}, 0.1, 0.9, rng, false);
  CHECK(grad_check([&](const Tensor& t) { return sum(recompose_t(t, other)); },
                   Tensor::uniform({1, 4, 5, 5}, 0.1, 0.9, rng, true)) <
        kCompTol);
}

TEST_CASE("gradients: qssim training loss") {
  Rng rng(163);
  const Tensor gt = Tensor::uniform({1, 4, 16, 16}, 0.1, 0.9, rng, false);
  CHECK(grad_check([&](const Tensor& t) { return qssim_loss(gt, t); },
                   Tensor::uniform({1, 4, 16, 16}, 0.1, 0.9, rng, true)) <
        kCompTol);
}
