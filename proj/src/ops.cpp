#include "qrestore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qrestore {

namespace {

// ---------------------------------------------------------------- helpers

constexpr double kDivFloor = 1e-12;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

// Strides of `in` aligned to `out` (right-aligned), 0 on repeated axes.
std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  const int off = static_cast<int>(out.size()) - static_cast<int>(in.size());
  std::vector<int64_t> st(out.size(), 0);
  int64_t s = 1;
  for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
    if (in[i] != 1) st[i + off] = s;
    s *= in[i];
  }
  return st;
}

// Calls f(out_index, a_offset, b_offset) for every element of `out`.
template <class F>
void for_each_bcast(const Shape& out, const std::vector<int64_t>& sa,
                    const std::vector<int64_t>& sb, F&& f) {
  const int nd = static_cast<int>(out.size());
  const int64_t total = shape_numel(out);
  if (nd == 0) {
    f(int64_t{0}, int64_t{0}, int64_t{0});
    return;
  }
  std::vector<int64_t> idx(nd, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t lin = 0; lin < total; ++lin) {
    f(lin, oa, ob);
    for (int d = nd - 1; d >= 0; --d) {
      oa += sa[d];
      ob += sb[d];
      if (++idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

// Shared skeleton for broadcasting binary ops. fwd(a,b) computes the value;
// bwd(a, b, g, ga, gb) adds the two partials into ga/gb.
template <class Fwd, class Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd,
                 Bwd bwd) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const int64_t n = shape_numel(out_shape);
  std::vector<double> out(n);
  const double* av = a.data().data();
  const double* bv = b.data().data();
  const bool same = a.shape() == b.shape();
  if (same) {
    for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    auto sa = bcast_strides(a.shape(), out_shape);
    auto sb = bcast_strides(b.shape(), out_shape);
    for_each_bcast(out_shape, sa, sb,
                   [&](int64_t o, int64_t ia, int64_t ib) {
                     out[o] = fwd(av[ia], bv[ib]);
                   });
  }
  Shape shape_copy = out_shape;
  return make_op_result(
      std::move(out_shape), std::move(out), {a, b},
      [a, b, bwd, same, shape_copy](TensorNode& node) {
        const double* g = node.grad.data();
        const double* av = a.data().data();
        const double* bv = b.data().data();
        const bool ga_on = a.requires_grad();
        const bool gb_on = b.requires_grad();
        double* ga = ga_on ? a.node()->grad_buffer().data() : nullptr;
        double* gb = gb_on ? b.node()->grad_buffer().data() : nullptr;
        double dump = 0.0;
        if (same) {
          const int64_t n = node.numel();
          for (int64_t i = 0; i < n; ++i)
            bwd(av[i], bv[i], g[i], ga_on ? ga[i] : dump, gb_on ? gb[i] : dump);
        } else {
          auto sa = bcast_strides(a.shape(), shape_copy);
          auto sb = bcast_strides(b.shape(), shape_copy);
          for_each_bcast(shape_copy, sa, sb,
                         [&](int64_t o, int64_t ia, int64_t ib) {
                           bwd(av[ia], bv[ib], g[o], ga_on ? ga[ia] : dump,
                               gb_on ? gb[ib] : dump);
                         });
        }
      });
}

// Unary skeleton: fwd(x) value, dfdx(x, y) local derivative.
template <class Fwd, class Dfdx>
Tensor unary_op(const Tensor& a, Fwd fwd, Dfdx dfdx) {
  const int64_t n = a.numel();
  std::vector<double> out(n);
  const double* av = a.data().data();
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  return make_op_result(a.shape(), std::move(out), {a},
                        [a, dfdx](TensorNode& node) {
                          if (!a.requires_grad()) return;
                          const double* g = node.grad.data();
                          const double* av = a.data().data();
                          const double* yv = node.value.data();
                          double* ga = a.node()->grad_buffer().data();
                          const int64_t n = node.numel();
                          for (int64_t i = 0; i < n; ++i)
                            ga[i] += g[i] * dfdx(av[i], yv[i]);
                        });
}

// ------------------------------------------------------------------ gemm

// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(int64_t M, int64_t K, int64_t N, const double* A, const double* B,
             double* C, bool acc) {
  if (!acc) std::fill(C, C + M * N, 0.0);
  for (int64_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (int64_t k = 0; k < K; ++k) {
      const double av = a[k];
      const double* b = B + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_tn(int64_t M, int64_t K, int64_t N, const double* A, const double* B,
             double* C, bool acc) {
  if (!acc) std::fill(C, C + M * N, 0.0);
  for (int64_t k = 0; k < K; ++k) {
    const double* a = A + k * M;
    const double* b = B + k * N;
    for (int64_t i = 0; i < M; ++i) {
      const double av = a[i];
      double* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] (+)= A[M,K] * B[N,K]^T. Transposes B once so the hot loop streams.
void gemm_nt(int64_t M, int64_t K, int64_t N, const double* A, const double* B,
             double* C, bool acc) {
  std::vector<double> bt(static_cast<size_t>(K) * N);
  for (int64_t j = 0; j < N; ++j)
    for (int64_t k = 0; k < K; ++k) bt[k * N + j] = B[j * K + k];
  gemm_nn(M, K, N, A, bt.data(), C, acc);
}

// -------------------------------------------------------------- im2col

void im2col(const double* x, int64_t Cg, int64_t H, int64_t W, int64_t k,
            int stride, int pad, int64_t Ho, int64_t Wo, double* col) {
  int64_t row = 0;
  for (int64_t c = 0; c < Cg; ++c) {
    const double* src = x + c * H * W;
    for (int64_t ky = 0; ky < k; ++ky)
      for (int64_t kx = 0; kx < k; ++kx, ++row) {
        double* dst = col + row * Ho * Wo;
        int64_t o = 0;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            for (int64_t ox = 0; ox < Wo; ++ox) dst[o++] = 0.0;
            continue;
          }
          const double* srow = src + iy * W;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            dst[o++] = (ix < 0 || ix >= W) ? 0.0 : srow[ix];
          }
        }
      }
  }
}

// Scatter-add of a column buffer back into an image gradient.
void col2im_add(const double* col, int64_t Cg, int64_t H, int64_t W, int64_t k,
                int stride, int pad, int64_t Ho, int64_t Wo, double* gx) {
  int64_t row = 0;
  for (int64_t c = 0; c < Cg; ++c) {
    double* dst = gx + c * H * W;
    for (int64_t ky = 0; ky < k; ++ky)
      for (int64_t kx = 0; kx < k; ++kx, ++row) {
        const double* src = col + row * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          double* drow = dst + iy * W;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) drow[ix] += src[oy * Wo + ox];
          }
        }
      }
  }
}

void check_finite_for_softmax(const Tensor& a) {
  for (double v : a.data())
    if (!std::isfinite(v))
      throw std::domain_error("softmax: non-finite input");
}

}  // namespace

// ------------------------------------------------------------ broadcast

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (size_t i = 0; i < nd; ++i) {
    const int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da == db)
      out[i] = da;
    else if (da == 1)
      out[i] = db;
    else if (db == 1)
      out[i] = da;
    else
      shape_error("broadcast", a, b);
  }
  return out;
}

// ----------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& ga, double& gb) {
        ga += g;
        gb += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& ga, double& gb) {
        ga += g;
        gb -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga += g * y;
        gb += g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data())
    if (std::fabs(v) < kDivFloor)
      throw std::domain_error("div: divisor magnitude below 1e-12");
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga += g / y;
        gb -= g * x / (y * y);
      });
}

Tensor add(const Tensor& a, double s) {
  return unary_op(
      a, [s](double x) { return x + s; },
      [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double s) {
  return unary_op(
      a, [s](double x) { return x * s; },
      [s](double, double) { return s; });
}

Tensor pow(const Tensor& a, double p) {
  const bool integral = p == std::nearbyint(p);
  if (!integral)
    for (double v : a.data())
      if (v < 0.0)
        throw std::domain_error("pow: negative base with fractional exponent");
  return unary_op(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) {
        if (x == 0.0) return p == 1.0 ? 1.0 : 0.0;
        return p * std::pow(x, p - 1.0);
      });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_op(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a,
      [](double x) { return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0); },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
      });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data())
    if (v < 0.0) throw std::domain_error("sqrt: negative input");
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  return unary_op(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ------------------------------------------------------------ reductions

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_op_result(Shape{}, {acc}, {a}, [a](TensorNode& node) {
    if (!a.requires_grad()) return;
    const double g = node.grad[0];
    double* ga = a.node()->grad_buffer().data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Tensor mean(const Tensor& a) {
  const int64_t n = a.numel();
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_op_result(Shape{}, {acc / n}, {a}, [a, n](TensorNode& node) {
    if (!a.requires_grad()) return;
    const double g = node.grad[0] / n;
    double* ga = a.node()->grad_buffer().data();
    for (int64_t i = 0; i < n; ++i) ga[i] += g;
  });
}

// ----------------------------------------------------------------- shape

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: cannot view " +
                                shape_str(a.shape()) + " as " +
                                shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op_result(std::move(shape), std::move(out), {a},
                        [a](TensorNode& node) {
                          if (!a.requires_grad()) return;
                          a.node()->accumulate_grad(node.grad.data(),
                                                    node.grad.size());
                        });
}

Tensor transpose2d(const Tensor& a) {
  if (a.dim() != 2)
    throw std::invalid_argument("transpose2d: expected rank 2, got " +
                                shape_str(a.shape()));
  const int64_t M = a.size(0), N = a.size(1);
  std::vector<double> out(static_cast<size_t>(M) * N);
  const double* av = a.data().data();
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) out[j * M + i] = av[i * N + j];
  return make_op_result(Shape{N, M}, std::move(out), {a},
                        [a, M, N](TensorNode& node) {
                          if (!a.requires_grad()) return;
                          double* ga = a.node()->grad_buffer().data();
                          const double* g = node.grad.data();
                          for (int64_t j = 0; j < N; ++j)
                            for (int64_t i = 0; i < M; ++i)
                              ga[i * N + j] += g[j * M + i];
                        });
}

namespace {
void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
  if (axis < 0 || axis >= a.dim())
    throw std::invalid_argument("slice: axis out of range");
  const int64_t mid = a.size(axis);
  if (start < 0 || len <= 0 || start + len > mid)
    throw std::invalid_argument("slice: range [" + std::to_string(start) +
                                ", " + std::to_string(start + len) +
                                ") outside axis of size " +
                                std::to_string(mid));
  int64_t outer, inner;
  axis_split(a.shape(), axis, outer, inner);
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<double> out(static_cast<size_t>(outer) * len * inner);
  const double* av = a.data().data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(av + (o * mid + start) * inner, len * inner,
                out.data() + o * len * inner);
  return make_op_result(
      std::move(out_shape), std::move(out), {a},
      [a, axis, start, len, outer, inner, mid](TensorNode& node) {
        if (!a.requires_grad()) return;
        double* ga = a.node()->grad_buffer().data();
        const double* g = node.grad.data();
        for (int64_t o = 0; o < outer; ++o) {
          double* dst = ga + (o * mid + start) * inner;
          const double* src = g + o * len * inner;
          for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(first.size()))
    throw std::invalid_argument("concat: axis out of range");
  int64_t total_mid = 0;
  for (const auto& p : parts) {
    if (p.dim() != static_cast<int>(first.size()))
      shape_error("concat", first, p.shape());
    for (int i = 0; i < p.dim(); ++i)
      if (i != axis && p.size(i) != first[i])
        shape_error("concat", first, p.shape());
    total_mid += p.size(axis);
  }
  Shape out_shape = first;
  out_shape[axis] = total_mid;
  int64_t outer, inner;
  axis_split(out_shape, axis, outer, inner);
  std::vector<double> out(shape_numel(out_shape));
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t mid = p.size(axis);
    const double* pv = p.data().data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(pv + o * mid * inner, mid * inner,
                  out.data() + (o * total_mid + off) * inner);
    off += mid;
  }
  return make_op_result(
      std::move(out_shape), std::move(out), parts,
      [parts, axis, outer, inner, total_mid](TensorNode& node) {
        const double* g = node.grad.data();
        int64_t off = 0;
        for (const auto& p : parts) {
          const int64_t mid = p.shape()[axis];
          if (p.requires_grad()) {
            double* gp = p.node()->grad_buffer().data();
            for (int64_t o = 0; o < outer; ++o) {
              const double* src = g + (o * total_mid + off) * inner;
              double* dst = gp + o * mid * inner;
              for (int64_t i = 0; i < mid * inner; ++i) dst[i] += src[i];
            }
          }
          off += mid;
        }
      });
}

// --------------------------------------------------------------- spatial

Tensor upsample_nearest(const Tensor& a, int factor) {
  if (a.dim() != 4)
    throw std::invalid_argument("upsample_nearest: expected NCHW, got " +
                                shape_str(a.shape()));
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor < 1");
  const int64_t B = a.size(0), C = a.size(1), H = a.size(2), W = a.size(3);
  const int64_t Ho = H * factor, Wo = W * factor;
  std::vector<double> out(static_cast<size_t>(B) * C * Ho * Wo);
  const double* av = a.data().data();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = av + bc * H * W;
    double* dst = out.data() + bc * Ho * Wo;
    for (int64_t y = 0; y < Ho; ++y) {
      const double* srow = src + (y / factor) * W;
      for (int64_t x = 0; x < Wo; ++x) dst[y * Wo + x] = srow[x / factor];
    }
  }
  return make_op_result(
      Shape{B, C, Ho, Wo}, std::move(out), {a},
      [a, factor, B, C, H, W, Ho, Wo](TensorNode& node) {
        if (!a.requires_grad()) return;
        double* ga = a.node()->grad_buffer().data();
        const double* g = node.grad.data();
        for (int64_t bc = 0; bc < B * C; ++bc) {
          double* dst = ga + bc * H * W;
          const double* src = g + bc * Ho * Wo;
          for (int64_t y = 0; y < Ho; ++y)
            for (int64_t x = 0; x < Wo; ++x)
              dst[(y / factor) * W + x / factor] += src[y * Wo + x];
        }
      });
}

Tensor avgpool(const Tensor& a, int win) {
  if (a.dim() != 4)
    throw std::invalid_argument("avgpool: expected NCHW, got " +
                                shape_str(a.shape()));
  const int64_t B = a.size(0), C = a.size(1), H = a.size(2), W = a.size(3);
  if (win < 1 || H % win != 0 || W % win != 0)
    throw std::invalid_argument("avgpool: window " + std::to_string(win) +
                                " does not tile " + shape_str(a.shape()));
  const int64_t Ho = H / win, Wo = W / win;
  const double scale = 1.0 / (static_cast<double>(win) * win);
  std::vector<double> out(static_cast<size_t>(B) * C * Ho * Wo);
  const double* av = a.data().data();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = av + bc * H * W;
    double* dst = out.data() + bc * Ho * Wo;
    for (int64_t oy = 0; oy < Ho; ++oy)
      for (int64_t ox = 0; ox < Wo; ++ox) {
        double acc = 0.0;
        for (int64_t ky = 0; ky < win; ++ky)
          for (int64_t kx = 0; kx < win; ++kx)
            acc += src[(oy * win + ky) * W + ox * win + kx];
        dst[oy * Wo + ox] = acc * scale;
      }
  }
  return make_op_result(
      Shape{B, C, Ho, Wo}, std::move(out), {a},
      [a, win, B, C, H, W, Ho, Wo, scale](TensorNode& node) {
        if (!a.requires_grad()) return;
        double* ga = a.node()->grad_buffer().data();
        const double* g = node.grad.data();
        for (int64_t bc = 0; bc < B * C; ++bc) {
          double* dst = ga + bc * H * W;
          const double* src = g + bc * Ho * Wo;
          for (int64_t oy = 0; oy < Ho; ++oy)
            for (int64_t ox = 0; ox < Wo; ++ox) {
              const double gv = src[oy * Wo + ox] * scale;
              for (int64_t ky = 0; ky < win; ++ky)
                for (int64_t kx = 0; kx < win; ++kx)
                  dst[(oy * win + ky) * W + ox * win + kx] += gv;
            }
        }
      });
}

// -------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0))
    shape_error("matmul", a.shape(), b.shape());
  const int64_t M = a.size(0), K = a.size(1), N = b.size(1);
  std::vector<double> out(static_cast<size_t>(M) * N);
  gemm_nn(M, K, N, a.data().data(), b.data().data(), out.data(), false);
  return make_op_result(Shape{M, N}, std::move(out), {a, b},
                        [a, b, M, K, N](TensorNode& node) {
                          const double* g = node.grad.data();
                          if (a.requires_grad())
                            gemm_nt(M, N, K, g, b.data().data(),
                                    a.node()->grad_buffer().data(), true);
                          if (b.requires_grad())
                            gemm_tn(K, M, N, a.data().data(), g,
                                    b.node()->grad_buffer().data(), true);
                        });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(1))
    shape_error("matmul_nt", a.shape(), b.shape());
  const int64_t M = a.size(0), K = a.size(1), N = b.size(0);
  std::vector<double> out(static_cast<size_t>(M) * N);
  gemm_nt(M, K, N, a.data().data(), b.data().data(), out.data(), false);
  return make_op_result(Shape{M, N}, std::move(out), {a, b},
                        [a, b, M, K, N](TensorNode& node) {
                          const double* g = node.grad.data();
                          if (a.requires_grad())
                            gemm_nn(M, N, K, g, b.data().data(),
                                    a.node()->grad_buffer().data(), true);
                          if (b.requires_grad())
                            gemm_tn(N, M, K, g, a.data().data(),
                                    b.node()->grad_buffer().data(), true);
                        });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.dim() != 2 || w.dim() != 2 || x.size(1) != w.size(1))
    shape_error("linear", x.shape(), w.shape());
  const int64_t T = x.size(0), K = x.size(1), N = w.size(0);
  if (b.defined() && (b.dim() != 1 || b.size(0) != N))
    shape_error("linear: bias", w.shape(), b.shape());
  std::vector<double> out(static_cast<size_t>(T) * N);
  gemm_nt(T, K, N, x.data().data(), w.data().data(), out.data(), false);
  if (b.defined()) {
    const double* bv = b.data().data();
    for (int64_t t = 0; t < T; ++t)
      for (int64_t j = 0; j < N; ++j) out[t * N + j] += bv[j];
  }
  std::vector<Tensor> inputs = b.defined() ? std::vector<Tensor>{x, w, b}
                                           : std::vector<Tensor>{x, w};
  return make_op_result(
      Shape{T, N}, std::move(out), inputs, [x, w, b, T, K, N](TensorNode& node) {
        const double* g = node.grad.data();
        if (x.requires_grad())
          gemm_nn(T, N, K, g, w.data().data(),
                  x.node()->grad_buffer().data(), true);
        if (w.requires_grad())
          gemm_tn(N, T, K, g, x.data().data(),
                  w.node()->grad_buffer().data(), true);
        if (b.defined() && b.requires_grad()) {
          double* gb = b.node()->grad_buffer().data();
          for (int64_t t = 0; t < T; ++t)
            for (int64_t j = 0; j < N; ++j) gb[j] += g[t * N + j];
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad, int groups) {
  if (x.dim() != 4 || w.dim() != 4)
    throw std::invalid_argument("conv2d: expected rank-4 input and weight, got " +
                                shape_str(x.shape()) + " and " +
                                shape_str(w.shape()));
  const int64_t B = x.size(0), Cin = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Cout = w.size(0), Cg = w.size(1), k = w.size(2);
  if (w.size(3) != k)
    throw std::invalid_argument("conv2d: kernel must be square, got " +
                                shape_str(w.shape()));
  if (groups < 1 || Cin % groups != 0 || Cout % groups != 0 ||
      Cg != Cin / groups)
    throw std::invalid_argument(
        "conv2d: groups=" + std::to_string(groups) + " incompatible with " +
        shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (stride < 1 || pad < 0)
    throw std::invalid_argument("conv2d: bad stride/pad");
  if (H + 2 * pad < k || W + 2 * pad < k)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  if (b.defined() && (b.dim() != 1 || b.size(0) != Cout))
    throw std::invalid_argument("conv2d: bias shape " + shape_str(b.shape()) +
                                " does not match Cout=" + std::to_string(Cout));
  const int64_t Ho = (H + 2 * pad - k) / stride + 1;
  const int64_t Wo = (W + 2 * pad - k) / stride + 1;
  const int64_t Cog = Cout / groups;
  const int64_t K2 = Cg * k * k;
  const int64_t P = Ho * Wo;

  std::vector<double> out(static_cast<size_t>(B) * Cout * P);
  std::vector<double> col(static_cast<size_t>(K2) * P);
  const double* xv = x.data().data();
  const double* wv = w.data().data();
  for (int64_t bi = 0; bi < B; ++bi)
    for (int g = 0; g < groups; ++g) {
      im2col(xv + (bi * Cin + g * Cg) * H * W, Cg, H, W, k, stride, pad, Ho,
             Wo, col.data());
      gemm_nn(Cog, K2, P, wv + g * Cog * K2, col.data(),
              out.data() + (bi * Cout + g * Cog) * P, false);
    }
  if (b.defined()) {
    const double* bv = b.data().data();
    for (int64_t bi = 0; bi < B; ++bi)
      for (int64_t oc = 0; oc < Cout; ++oc) {
        double* dst = out.data() + (bi * Cout + oc) * P;
        const double bias = bv[oc];
        for (int64_t p = 0; p < P; ++p) dst[p] += bias;
      }
  }
  std::vector<Tensor> inputs = b.defined() ? std::vector<Tensor>{x, w, b}
                                           : std::vector<Tensor>{x, w};
  const int groups_c = groups;
  const int stride_c = stride;
  const int pad_c = pad;
  return make_op_result(
      Shape{B, Cout, Ho, Wo}, std::move(out), inputs,
      [x, w, b, B, Cin, H, W, Cout, Cg, k, Ho, Wo, Cog, K2, P, groups_c,
       stride_c, pad_c](TensorNode& node) {
        const double* g = node.grad.data();
        const double* xv = x.data().data();
        const double* wv = w.data().data();
        const bool need_x = x.requires_grad();
        const bool need_w = w.requires_grad();
        double* gx = need_x ? x.node()->grad_buffer().data() : nullptr;
        double* gw = need_w ? w.node()->grad_buffer().data() : nullptr;
        std::vector<double> col;
        std::vector<double> dcol;
        if (need_w) col.resize(static_cast<size_t>(K2) * P);
        if (need_x) dcol.resize(static_cast<size_t>(K2) * P);
        for (int64_t bi = 0; bi < B; ++bi)
          for (int gr = 0; gr < groups_c; ++gr) {
            const double* gy = g + (bi * Cout + gr * Cog) * P;
            if (need_w) {
              im2col(xv + (bi * Cin + gr * Cg) * H * W, Cg, H, W, k, stride_c,
                     pad_c, Ho, Wo, col.data());
              gemm_nt(Cog, P, K2, gy, col.data(), gw + gr * Cog * K2, true);
            }
            if (need_x) {
              gemm_tn(K2, Cog, P, wv + gr * Cog * K2, gy, dcol.data(), false);
              col2im_add(dcol.data(), Cg, H, W, k, stride_c, pad_c, Ho, Wo,
                         gx + (bi * Cin + gr * Cg) * H * W);
            }
          }
        if (b.defined() && b.requires_grad()) {
          double* gb = b.node()->grad_buffer().data();
          for (int64_t bi = 0; bi < B; ++bi)
            for (int64_t oc = 0; oc < Cout; ++oc) {
              const double* src = g + (bi * Cout + oc) * P;
              double acc = 0.0;
              for (int64_t p = 0; p < P; ++p) acc += src[p];
              gb[oc] += acc;
            }
        }
      });
}

Tensor softmax(const Tensor& a, int axis) {
  if (axis < 0 || axis >= a.dim())
    throw std::invalid_argument("softmax: axis out of range for " +
                                shape_str(a.shape()));
  check_finite_for_softmax(a);
  int64_t outer, inner;
  axis_split(a.shape(), axis, outer, inner);
  const int64_t mid = a.size(axis);
  std::vector<double> out(a.numel());
  const double* av = a.data().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * mid * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t m = 0; m < mid; ++m) mx = std::max(mx, av[base + m * inner]);
      double denom = 0.0;
      for (int64_t m = 0; m < mid; ++m) {
        const double e = std::exp(av[base + m * inner] - mx);
        out[base + m * inner] = e;
        denom += e;
      }
      for (int64_t m = 0; m < mid; ++m) out[base + m * inner] /= denom;
    }
  return make_op_result(
      a.shape(), std::move(out), {a},
      [a, outer, inner, mid](TensorNode& node) {
        if (!a.requires_grad()) return;
        double* ga = a.node()->grad_buffer().data();
        const double* g = node.grad.data();
        const double* y = node.value.data();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * mid * inner + in;
            double dot = 0.0;
            for (int64_t m = 0; m < mid; ++m)
              dot += g[base + m * inner] * y[base + m * inner];
            for (int64_t m = 0; m < mid; ++m)
              ga[base + m * inner] +=
                  y[base + m * inner] * (g[base + m * inner] - dot);
          }
      });
}

}  // namespace qrestore
