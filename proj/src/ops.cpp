// SPDX-License-Identifier: Apache-2.0

#include "datprl/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace datprl {

using detail::make_result;
using detail::Node;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Eigen only ever sees its own (consistently aligned) storage: vectorized
// kernels peel differently on unaligned maps, which changes summation order
// from one allocation to the next and breaks bit-exact reruns.
RowMat owned(const double *p, std::size_t rows, std::size_t cols) {
  RowMat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::copy(p, p + rows * cols, m.data());
  return m;
}
RowMat owned(const std::vector<double> &v, std::size_t rows, std::size_t cols) {
  return owned(v.data(), rows, cols);
}
void store(const RowMat &m, double *dst) { std::copy(m.data(), m.data() + m.size(), dst); }
void accumulate(const RowMat &m, double *dst) {
  const double *src = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) dst[i] += src[i];
}

bool is_suffix(const Shape &small, const Shape &big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const Tensor &a, const Tensor &b, std::string_view op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1 && a.numel() >= 1) return a.shape();
  if (a.numel() == 1) return b.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " are not broadcast-compatible");
}

// Both scalar and trailing-suffix broadcasting reduce to index i % n in
// row-major order.
template <class F, class DA, class DB>
Tensor binary(const Tensor &a, const Tensor &b, std::string_view op, F f, DA da, DB db) {
  Shape out_shape = broadcast_shape(a, b, op);
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel(), nb = b.numel();
  const auto &av = a.node()->value;
  const auto &bv = b.node()->value;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);
  return make_result(std::move(out_shape), std::move(out), op, {a, b},
                     [da, db](Node &self) {
                       auto &A = *self.inputs[0];
                       auto &B = *self.inputs[1];
                       const std::size_t n = self.value.size();
                       const std::size_t na = A.value.size(), nb = B.value.size();
                       if (A.requires_grad) {
                         auto ga = A.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           ga[i % na] += self.grad[i] *
                                         da(A.value[i % na], B.value[i % nb], self.value[i]);
                       }
                       if (B.requires_grad) {
                         auto gb = B.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           gb[i % nb] += self.grad[i] *
                                         db(A.value[i % na], B.value[i % nb], self.value[i]);
                       }
                     });
}

// df(x, y) is the derivative given input x and output y.
template <class F, class DF>
Tensor unary(const Tensor &x, std::string_view op, F f, DF df) {
  const auto &xv = x.node()->value;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), op, {x}, [df](Node &self) {
    auto &X = *self.inputs[0];
    auto gx = X.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += self.grad[i] * df(X.value[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

void accumulate(Node &node, const std::vector<double> &g) {
  auto buf = node.grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

std::size_t last_dim(const Tensor &x) { return x.shape().back(); }

} // namespace

Tensor add(const Tensor &a, const Tensor &b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; },
                [](double, double, double) { return 1.0; },
                [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; },
                [](double, double, double) { return 1.0; },
                [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; },
                [](double, double y, double) { return y; },
                [](double x, double, double) { return x; });
}

Tensor div(const Tensor &a, const Tensor &b) {
  for (double v : b.data())
    if (v == 0.0) throw std::domain_error("div: division by zero");
  return binary(a, b, "div", [](double x, double y) { return x / y; },
                [](double, double y, double) { return 1.0 / y; },
                [](double x, double y, double) { return -x / (y * y); });
}

Tensor add(const Tensor &a, double b) {
  return unary(a, "add_scalar", [b](double x) { return x + b; },
               [](double, double) { return 1.0; });
}

Tensor mul(const Tensor &a, double b) {
  return unary(a, "mul_scalar", [b](double x) { return x * b; },
               [b](double, double) { return b; });
}

Tensor max_scalar(const Tensor &x, double floor) {
  return unary(x, "max_scalar", [floor](double v) { return v > floor ? v : floor; },
               [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Tensor neg(const Tensor &x) {
  return unary(x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor &x) {
  return unary(x, "exp", [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor &x) {
  for (double v : x.data())
    if (!(v > 0.0)) throw std::domain_error("log: input must be positive");
  return unary(x, "log", [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor &x) {
  for (double v : x.data())
    if (v < 0.0) throw std::domain_error("sqrt: negative input");
  return unary(x, "sqrt", [](double v) { return std::sqrt(v); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor abs(const Tensor &x) {
  return unary(x, "abs", [](double v) { return std::abs(v); },
               [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor &x) {
  return unary(x, "square", [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Tensor sigmoid(const Tensor &x) {
  return unary(x, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor &x) {
  return unary(x, "silu", [](double v) { return v * stable_sigmoid(v); },
               [](double v, double) {
                 double s = stable_sigmoid(v);
                 return s * (1.0 + v * (1.0 - s));
               });
}

Tensor xlogx(const Tensor &x) {
  for (double v : x.data())
    if (v < 0.0) throw std::domain_error("xlogx: negative input");
  return unary(x, "xlogx", [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; },
               [](double v, double) { return v > 0.0 ? std::log(v) + 1.0 : 0.0; });
}

Tensor matmul(const Tensor &a, const Tensor &b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expected two matrices, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  // Plain loops: every output entry accumulates over k in order, independent of
  // its row, so equal rows give bitwise equal results (exact ties in top-k).
  std::vector<double> out(m * n, 0.0);
  const double *av = a.node()->value.data(), *bv = b.node()->value.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node &self) {
    auto &A = *self.inputs[0];
    auto &B = *self.inputs[1];
    const double *g = self.grad.data();
    if (A.requires_grad) {
      auto ga = A.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B.value[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (B.requires_grad) {
      std::vector<double> gb(k * n, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = A.value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
        }
      auto dst = B.grad_buffer();
      for (std::size_t i = 0; i < k * n; ++i) dst[i] += gb[i];
    }
  });
}

Tensor transpose(const Tensor &x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  const auto &v = x.node()->value;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return make_result({c, r}, std::move(out), "transpose", {x}, [r, c](Node &self) {
    auto gx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor &x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  return make_result(std::move(shape), x.node()->value, "reshape", {x},
                     [](Node &self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor flatten(const Tensor &x) { return reshape(x, {x.numel()}); }

Tensor sum(const Tensor &x) {
  const auto &v = x.node()->value;
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  return make_result({1}, {s}, "sum", {x}, [](Node &self) {
    auto gx = self.inputs[0]->grad_buffer();
    for (auto &g : gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor &x) { return mul(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum(const Tensor &x, std::size_t axis) {
  if (axis >= x.rank())
    throw ShapeError("sum: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  const auto &s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(outer * inner, 0.0);
  const auto &v = x.node()->value;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * n + j) * inner + i];
  return make_result(std::move(out_shape), std::move(out), "sum_axis", {x},
                     [outer, inner, n](Node &self) {
                       auto gx = self.inputs[0]->grad_buffer();
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t j = 0; j < n; ++j)
                           for (std::size_t i = 0; i < inner; ++i)
                             gx[(o * n + j) * inner + i] += self.grad[o * inner + i];
                     });
}

Tensor mean(const Tensor &x, std::size_t axis) {
  return mul(sum(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor concat(const std::vector<Tensor> &parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape &first = parts.front().shape();
  if (axis >= first.size())
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  std::size_t total = 0;
  for (const auto &p : parts) {
    const Shape &s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok)
      throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(s) +
                       " differ off the concat axis");
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto &p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    widths.push_back(w);
    const auto &v = p.node()->value;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total * inner + offset));
    offset += w;
  }
  return make_result(std::move(out_shape), std::move(out), "concat", parts,
                     [widths, outer, row = total * inner](Node &self) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < widths.size(); ++p) {
                         auto &in = *self.inputs[p];
                         const std::size_t w = widths[p];
                         if (in.requires_grad) {
                           auto g = in.grad_buffer();
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < w; ++i)
                               g[o * w + i] += self.grad[o * row + offset + i];
                         }
                         offset += w;
                       }
                     });
}

Tensor index_select(const Tensor &x, const std::vector<std::size_t> &indices) {
  if (indices.empty()) throw ShapeError("index_select: empty index list");
  const std::size_t rows = x.dim(0);
  const std::size_t inner = x.numel() / rows;
  for (auto i : indices)
    if (i >= rows)
      throw std::out_of_range("index_select: index " + std::to_string(i) + " >= " +
                              std::to_string(rows));
  Shape out_shape = x.shape();
  out_shape[0] = indices.size();
  std::vector<double> out(indices.size() * inner);
  const auto &v = x.node()->value;
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(indices[r] * inner), inner,
                out.begin() + static_cast<std::ptrdiff_t>(r * inner));
  return make_result(std::move(out_shape), std::move(out), "index_select", {x},
                     [indices, inner](Node &self) {
                       auto g = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < indices.size(); ++r)
                         for (std::size_t i = 0; i < inner; ++i)
                           g[indices[r] * inner + i] += self.grad[r * inner + i];
                     });
}

Tensor softmax(const Tensor &x, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be positive");
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.numel() / n;
  const auto &v = x.node()->value;
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double *in = v.data() + r * n;
    double *o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (o[i] = std::exp((in[i] - mx) / temperature));
    for (std::size_t i = 0; i < n; ++i) o[i] /= z;
  }
  return make_result(x.shape(), std::move(out), "softmax", {x},
                     [n, rows, temperature](Node &self) {
                       auto gx = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double *y = self.value.data() + r * n;
                         const double *g = self.grad.data() + r * n;
                         double dot = 0.0;
                         for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
                         for (std::size_t i = 0; i < n; ++i)
                           gx[r * n + i] += y[i] * (g[i] - dot) / temperature;
                       }
                     });
}

Tensor logsumexp(const Tensor &x) {
  const auto &v = x.node()->value;
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double e : v) z += std::exp(e - mx);
  const double lse = mx + std::log(z);
  return make_result({1}, {lse}, "logsumexp", {x}, [](Node &self) {
    auto &X = *self.inputs[0];
    auto gx = X.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += self.grad[0] * std::exp(X.value[i] - self.value[0]);
  });
}

Tensor l2_normalize_rows(const Tensor &x) {
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.numel() / n;
  const auto &v = x.node()->value;
  std::vector<double> out(v.size(), 0.0);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[r * n + i] * v[r * n + i];
    norms[r] = std::sqrt(s);
    if (norms[r] > 0.0)
      for (std::size_t i = 0; i < n; ++i) out[r * n + i] = v[r * n + i] / norms[r];
  }
  return make_result(x.shape(), std::move(out), "l2_normalize", {x},
                     [n, rows, norms](Node &self) {
                       auto gx = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (norms[r] == 0.0) continue;
                         const double *y = self.value.data() + r * n;
                         const double *g = self.grad.data() + r * n;
                         double dot = 0.0;
                         for (std::size_t i = 0; i < n; ++i) dot += y[i] * g[i];
                         for (std::size_t i = 0; i < n; ++i)
                           gx[r * n + i] += (g[i] - y[i] * dot) / norms[r];
                       }
                     });
}

Tensor cosine_similarity(const Tensor &a, const Tensor &b, bool *degenerate) {
  if (a.numel() != b.numel())
    throw ShapeError("cosine_similarity: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ in size");
  auto an = l2_normalize_rows(flatten(a));
  auto bn = l2_normalize_rows(flatten(b));
  if (degenerate) {
    auto zero = [](const Tensor &t) {
      return std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; });
    };
    *degenerate = zero(a) || zero(b);
  }
  return sum(mul(an, bn));
}

Tensor cosine_rows(const Tensor &rows, const Tensor &query) {
  if (rows.rank() != 2 || query.numel() != rows.dim(1))
    throw ShapeError("cosine_rows: rows " + shape_str(rows.shape()) + " vs query " +
                     shape_str(query.shape()));
  auto rn = l2_normalize_rows(rows);
  auto qn = l2_normalize_rows(reshape(query, {1, query.numel()}));
  return reshape(matmul(rn, transpose(qn)), {rows.dim(0)});
}

namespace {

struct DftTables {
  RowMat cos_h, sin_h, cos_w, sin_w;
};

RowMat twiddle(std::size_t n, bool use_sin) {
  RowMat m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t x = 0; x < n; ++x) {
      // Reduce u*x mod n first so large products keep full angle precision.
      double angle = 2.0 * std::numbers::pi * static_cast<double>((u * x) % n) /
                     static_cast<double>(n);
      m(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(x)) =
          use_sin ? std::sin(angle) : std::cos(angle);
    }
  return m;
}

} // namespace

Spectrum dft2(const Tensor &image) {
  if (image.rank() != 2 && image.rank() != 3)
    throw ShapeError("dft2: expected [h,w] or [c,h,w], got " + shape_str(image.shape()));
  const std::size_t c = image.rank() == 3 ? image.dim(0) : 1;
  const std::size_t h = image.shape()[image.rank() - 2];
  const std::size_t w = image.shape()[image.rank() - 1];
  auto tables = std::make_shared<DftTables>(
      DftTables{twiddle(h, false), twiddle(h, true), twiddle(w, false), twiddle(w, true)});
  const auto &v = image.node()->value;
  std::vector<double> re(v.size()), im(v.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const RowMat X = owned(v.data() + ch * h * w, h, w);
    const RowMat cx = tables->cos_h * X;
    const RowMat sx = tables->sin_h * X;
    store(cx * tables->cos_w - sx * tables->sin_w, re.data() + ch * h * w);
    store(-(sx * tables->cos_w + cx * tables->sin_w), im.data() + ch * h * w);
  }
  auto back = [tables, c, h, w](bool imag_part) {
    return [tables, c, h, w, imag_part](Node &self) {
      auto gx = self.inputs[0]->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch) {
        const RowMat G = owned(self.grad.data() + ch * h * w, h, w);
        const RowMat cg = tables->cos_h * G;
        const RowMat sg = tables->sin_h * G;
        if (imag_part)
          accumulate(-(sg * tables->cos_w + cg * tables->sin_w), gx.data() + ch * h * w);
        else
          accumulate(cg * tables->cos_w - sg * tables->sin_w, gx.data() + ch * h * w);
      }
    };
  };
  Spectrum out{make_result(image.shape(), std::move(re), "dft2_real", {image}, back(false)),
               make_result(image.shape(), std::move(im), "dft2_imag", {image}, back(true))};
  return out;
}

namespace {

struct ConvGeometry {
  std::size_t c, h, w, k, stride, pad, ho, wo;
  std::size_t patch() const { return c * k * k; }
  std::size_t positions() const { return ho * wo; }
};

void im2col(const double *x, const ConvGeometry &g, double *cols) {
  const std::size_t P = g.positions();
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double *row = cols + ((ch * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                ix < static_cast<long>(g.w);
            row[oy * g.wo + ox] =
                inside ? x[(ch * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
}

void col2im_add(const double *cols, const ConvGeometry &g, double *gx) {
  const std::size_t P = g.positions();
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double *row = cols + ((ch * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            gx[(ch * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] +=
                row[oy * g.wo + ox];
          }
        }
      }
}

} // namespace

Tensor conv2d(const Tensor &x, const Tensor &weight, const Tensor *bias, Conv2dSpec spec) {
  if (x.rank() != 3 || weight.rank() != 4)
    throw ShapeError("conv2d: expected x [c,h,w] and weight [o,c,k,k], got " +
                     shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  const std::size_t out_ch = weight.dim(0);
  if (weight.dim(1) != x.dim(0))
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(0)) +
                     " channels but weight " + shape_str(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)));
  if (weight.dim(2) != weight.dim(3)) throw ShapeError("conv2d: kernel must be square");
  if (spec.stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), weight.dim(2), spec.stride, spec.padding, 0, 0};
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k)
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (bias && bias->numel() != out_ch)
    throw ShapeError("conv2d: bias " + shape_str(bias->shape()) + " does not match " +
                     std::to_string(out_ch) + " output channels");

  const std::size_t K = g.patch(), P = g.positions();
  auto cols = std::make_shared<RowMat>(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
  im2col(x.node()->value.data(), g, cols->data());
  std::vector<double> out(out_ch * P);
  store(owned(weight.node()->value, out_ch, K) * *cols, out.data());
  if (bias)
    for (std::size_t o = 0; o < out_ch; ++o)
      for (std::size_t p = 0; p < P; ++p) out[o * P + p] += bias->data()[o];

  std::vector<Tensor> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_result({out_ch, g.ho, g.wo}, std::move(out), "conv2d", std::move(inputs),
                     [g, cols, out_ch, K, P](Node &self) {
                       auto &X = *self.inputs[0];
                       auto &W = *self.inputs[1];
                       const RowMat G = owned(self.grad, out_ch, P);
                       if (W.requires_grad) accumulate(G * cols->transpose(), W.grad_buffer().data());
                       if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                         auto gb = self.inputs[2]->grad_buffer();
                         for (std::size_t o = 0; o < out_ch; ++o) {
                           double s = 0.0;
                           for (std::size_t p = 0; p < P; ++p) s += self.grad[o * P + p];
                           gb[o] += s;
                         }
                       }
                       if (X.requires_grad) {
                         const RowMat dcols = owned(W.value, out_ch, K).transpose() * G;
                         col2im_add(dcols.data(), g, X.grad_buffer().data());
                       }
                     });
}

Tensor upsample_nearest2x(const Tensor &x) {
  if (x.rank() != 3) throw ShapeError("upsample_nearest2x: expected [c,h,w], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t H = 2 * h, W = 2 * w;
  std::vector<double> out(c * H * W);
  const auto &v = x.node()->value;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        out[(ch * H + y) * W + xx] = v[(ch * h + y / 2) * w + xx / 2];
  return make_result({c, H, W}, std::move(out), "upsample_nearest2x", {x},
                     [c, h, w, H, W](Node &self) {
                       auto gx = self.inputs[0]->grad_buffer();
                       for (std::size_t ch = 0; ch < c; ++ch)
                         for (std::size_t y = 0; y < H; ++y)
                           for (std::size_t xx = 0; xx < W; ++xx)
                             gx[(ch * h + y / 2) * w + xx / 2] += self.grad[(ch * H + y) * W + xx];
                     });
}

Tensor global_avg_pool(const Tensor &x) {
  if (x.rank() != 3) throw ShapeError("global_avg_pool: expected [c,h,w], got " + shape_str(x.shape()));
  return mean(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}), 1);
}

Tensor linear(const Tensor &x, const Tensor &weight, const Tensor *bias) {
  if (weight.rank() != 2) throw ShapeError("linear: weight must be a matrix, got " + shape_str(weight.shape()));
  const bool vec = x.rank() == 1;
  auto x2 = vec ? reshape(x, {1, x.numel()}) : x;
  if (x2.rank() != 2 || x2.dim(1) != weight.dim(0))
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  auto y = matmul(x2, weight);
  if (bias) {
    if (bias->numel() != weight.dim(1))
      throw ShapeError("linear: bias " + shape_str(bias->shape()) + " does not match weight " +
                       shape_str(weight.shape()));
    y = add(y, *bias);
  }
  return vec ? reshape(y, {weight.dim(1)}) : y;
}

} // namespace datprl
