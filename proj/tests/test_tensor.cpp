#include <stdexcept>

#include "doctest.h"
#include "qrestore/ops.hpp"
#include "qrestore/rng.hpp"
#include "qrestore/tensor.hpp"

using namespace qrestore;

TEST_CASE("factories and element access") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.dim() == 2);
  for (double v : z.data()) CHECK(v == 0.0);

  Tensor f = Tensor::full({2}, 1.5);
  CHECK(f.data()[0] == 1.5);
  CHECK(f.data()[1] == 1.5);

  Tensor s = Tensor::scalar(4.0);
  CHECK(s.dim() == 0);
  CHECK(s.item() == 4.0);
  CHECK_THROWS_AS(z.item(), std::invalid_argument);

  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}),
                  std::invalid_argument);

  Rng rng(3);
  Tensor u = Tensor::uniform({100}, -1.0, 1.0, rng);
  for (double v : u.data()) {
    CHECK(v >= -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("backward through a product accumulates both partials") {
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  Tensor y = Tensor::from_data({3}, {4.0, 5.0, 6.0}, true);
  Tensor loss = sum(mul(x, y));
  CHECK(loss.item() == doctest::Approx(32.0));
  backward(loss);
  for (int i = 0; i < 3; ++i) {
    CHECK(x.grad()[i] == y.data()[i]);
    CHECK(y.grad()[i] == x.data()[i]);
  }
}

TEST_CASE("gradient accumulates across a diamond") {
  // f = x*x + x  =>  df/dx = 2x + 1
  Tensor x = Tensor::from_data({2}, {3.0, -1.5}, true);
  Tensor loss = sum(add(mul(x, x), x));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(7.0));
  CHECK(x.grad()[1] == doctest::Approx(-2.0));
}

TEST_CASE("a value consumed twice gets both gradient contributions") {
  Tensor x = Tensor::from_data({}, {2.0}, true);
  Tensor y = mul(x, x);          // x^2
  Tensor z = add(mul(y, x), y);  // x^3 + x^2 -> d/dx = 3x^2 + 2x = 16
  backward(z);
  CHECK(x.grad()[0] == doctest::Approx(16.0));
}

TEST_CASE("backward validates its root") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);  // not scalar
  Tensor z = Tensor::scalar(1.0);                       // no grad
  CHECK_THROWS_AS(backward(z), std::logic_error);
}

TEST_CASE("NoGradGuard suppresses recording") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  {
    NoGradGuard ng;
    CHECK_FALSE(grad_enabled());
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
  Tensor y2 = mul(x, x);
  CHECK(y2.requires_grad());
}

TEST_CASE("detach cuts the graph") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y = mul(x, x).detach();
  CHECK_FALSE(y.requires_grad());
  CHECK(y.data()[1] == 4.0);
}

TEST_CASE("zero_grad resets accumulation between steps") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));  // not 4.0
}

TEST_CASE("tape trace is ordered by descending creation sequence") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor a = mul(x, x);
  Tensor b = add(a, x);
  Tensor loss = sum(b);
  Tape tape = Tape::trace(loss);
  REQUIRE(tape.nodes.size() == 4);  // x, a, b, loss
  for (size_t i = 1; i < tape.nodes.size(); ++i)
    CHECK(tape.nodes[i - 1]->seq > tape.nodes[i]->seq);
  CHECK(tape.nodes.front().get() == loss.node().get());
  CHECK(tape.nodes.back().get() == x.node().get());
}

TEST_CASE("nodes without requires_grad stay out of the tape") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor c = Tensor::from_data({2}, {5.0, 5.0});  // constant
  Tensor loss = sum(mul(x, c));
  Tape tape = Tape::trace(loss);
  CHECK(tape.nodes.size() == 3);  // loss, mul, x
  backward(loss);
  CHECK(x.grad()[0] == 5.0);
  CHECK_FALSE(c.has_grad());
}
