#pragma once

#include <vector>

#include "qrestore/tensor.hpp"

namespace qrestore {

// All ops are pure: they allocate a fresh output tensor and, when autodiff
// is enabled and an input requires grad, record a backward closure.
// Broadcasting follows the usual right-aligned rules (a missing or size-1
// axis repeats).

Shape broadcast_shape(const Shape& a, const Shape& b);

// -- elementwise, broadcasting ------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Throws std::domain_error if any element of b has |b| < 1e-12.
Tensor div(const Tensor& a, const Tensor& b);

// -- elementwise, scalar -------------------------------------------------
Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);
// a^p. Requires a >= 0 when p is not an integer (throws std::domain_error).
Tensor pow(const Tensor& a, double p);

// -- elementwise, unary --------------------------------------------------
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);     // subgradient 0 at x == 0
Tensor gelu(const Tensor& a);     // exact erf form
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);      // subgradient 0 at x == 0
// Clamp to [lo, hi]; gradient passes where lo <= x <= hi, else 0.
Tensor clamp(const Tensor& a, double lo, double hi);

// -- reductions ----------------------------------------------------------
Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

// -- shape ---------------------------------------------------------------
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose2d(const Tensor& a);  // [M,N] -> [N,M]
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len);
Tensor concat(const std::vector<Tensor>& parts, int axis);

// -- spatial (NCHW) ------------------------------------------------------
// Nearest-neighbour upsampling by an integer factor.
Tensor upsample_nearest(const Tensor& a, int factor);
// Non-overlapping window mean; H and W must be divisible by win.
Tensor avgpool(const Tensor& a, int win);

// -- linear algebra ------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);     // [M,K]x[K,N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [M,K]x[N,K]^T -> [M,N]
// x [T,K], w [N,K], optional bias [N]; returns [T,N].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});

// Cross-correlation conv. x [B,Cin,H,W], w [Cout,Cin/groups,k,k], optional
// bias [Cout]. Zero padding. Cin and Cout must be divisible by groups.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b = {},
              int stride = 1, int pad = 0, int groups = 1);

// Softmax along one axis. Throws std::domain_error on non-finite input.
Tensor softmax(const Tensor& a, int axis);

// -- convenience ---------------------------------------------------------
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add(a, -s); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, s); }

}  // namespace qrestore
