#include "geoview/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "geoview/common/error.hpp"

namespace geoview::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool any_grad(std::initializer_list<const Tensor*> ts) {
  for (auto* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   const char* op) {
  Tensor out = Tensor::from(std::move(shape), std::move(data), false);
  if (any_grad(inputs)) {
    out.impl()->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->op = op;
    for (auto* t : inputs) node->inputs.push_back(t->impl());
    out.impl()->node = std::move(node);
  }
  return out;
}

void set_backward(Tensor& out, std::function<void(const TensorImpl&)> fn) {
  if (out.impl()->node) out.impl()->node->backward = std::move(fn);
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorKind::Dimension,
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
              " vs " + shape_str(b.shape()));
}

void check_matrix(const Tensor& a, const char* op) {
  require(a.rank() == 2, ErrorKind::Dimension,
          std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

template <class F>
Tensor unary(const Tensor& x, const char* op, F f,
             std::function<double(double x, double y)> dydx) {
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
  Tensor y = make_result(x.shape(), std::move(out), {&x}, op);
  auto xi = x.impl();
  set_backward(y, [xi, dydx](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    double* g = xi->grad_buffer();
    for (std::size_t i = 0; i < o.data.size(); ++i)
      g[i] += o.grad[i] * dydx(xi->data[i], o.data[i]);
  });
  return y;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  require(a.dim(1) == b.dim(0), ErrorKind::Dimension,
          "matmul: inner extents differ " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  {
    ConstMapMat A(a.data().data(), m, k);
    ConstMapMat B(b.data().data(), k, n);
    MapMat C(out.data(), m, n);
    C.noalias() = A * B;
  }
  Tensor c = make_result({m, n}, std::move(out), {&a, &b}, "matmul");
  auto ai = a.impl(), bi = b.impl();
  set_backward(c, [ai, bi, m, k, n](const TensorImpl& o) {
    ConstMapMat dC(o.grad.data(), m, n);
    if (ai->requires_grad) {
      MapMat dA(ai->grad_buffer(), m, k);
      dA.noalias() += dC * ConstMapMat(bi->data.data(), k, n).transpose();
    }
    if (bi->requires_grad) {
      MapMat dB(bi->grad_buffer(), k, n);
      dB.noalias() += ConstMapMat(ai->data.data(), m, k).transpose() * dC;
    }
  });
  return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor c = make_result(a.shape(), std::move(out), {&a, &b}, "add");
  auto ai = a.impl(), bi = b.impl();
  set_backward(c, [ai, bi](const TensorImpl& o) {
    for (auto* t : {ai.get(), bi.get()}) {
      if (!t->requires_grad) continue;
      double* g = t->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor c = make_result(a.shape(), std::move(out), {&a, &b}, "sub");
  auto ai = a.impl(), bi = b.impl();
  set_backward(c, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      double* g = ai->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      double* g = bi->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    }
  });
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor c = make_result(a.shape(), std::move(out), {&a, &b}, "mul");
  auto ai = a.impl(), bi = b.impl();
  set_backward(c, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      double* g = ai->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        g[i] += o.grad[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      double* g = bi->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        g[i] += o.grad[i] * ai->data[i];
    }
  });
  return c;
}

Tensor scale(const Tensor& x, double s) {
  return unary(
      x, "scale", [s](double v) { return v * s; },
      [s](double, double) { return s; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  check_matrix(x, "add_bias");
  require(bias.rank() == 1 && bias.dim(0) == x.dim(1), ErrorKind::Dimension,
          "add_bias: bias " + shape_str(bias.shape()) + " vs input " +
              shape_str(x.shape()));
  const auto m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.numel());
  auto xd = x.data();
  auto bd = bias.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = xd[r * n + c] + bd[c];
  Tensor y = make_result(x.shape(), std::move(out), {&x, &bias}, "add_bias");
  auto xi = x.impl(), bi = bias.impl();
  set_backward(y, [xi, bi, m, n](const TensorImpl& o) {
    if (xi->requires_grad) {
      double* g = xi->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      double* g = bi->grad_buffer();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += o.grad[r * n + c];
    }
  });
  return y;
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = make_result({}, {s}, {&x}, "sum");
  auto xi = x.impl();
  set_backward(y, [xi](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    double* g = xi->grad_buffer();
    for (std::size_t i = 0; i < xi->data.size(); ++i) g[i] += o.grad[0];
  });
  return y;
}

Tensor mean(const Tensor& x) {
  require(x.numel() > 0, ErrorKind::Dimension, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), ErrorKind::Dimension,
          "softmax: axis " + std::to_string(axis) + " invalid for shape " +
              shape_str(x.shape()));
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xd[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  Tensor y = make_result(x.shape(), std::move(out), {&x}, "softmax");
  auto xi = x.impl();
  set_backward(y, [xi, outer, inner, n](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    double* g = xi->grad_buffer();
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = a * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const auto idx = base + j * inner;
          dot += o.grad[idx] * o.data[idx];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const auto idx = base + j * inner;
          g[idx] += o.data[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
  return y;
}

Tensor block_mean(const Tensor& x, std::size_t outer, std::size_t blocks) {
  check_matrix(x, "block_mean");
  require(outer > 0 && blocks > 0 && x.dim(0) % (outer * blocks) == 0,
          ErrorKind::Dimension,
          "block_mean: " + std::to_string(x.dim(0)) + " rows do not split into " +
              std::to_string(outer) + "x" + std::to_string(blocks) + " blocks");
  const std::size_t inner = x.dim(0) / (outer * blocks);
  const std::size_t cols = x.dim(1);
  const double w = 1.0 / static_cast<double>(blocks);
  std::vector<double> out(outer * inner * cols, 0.0);
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t i = 0; i < inner; ++i) {
        const double* src = &xd[((o * blocks + b) * inner + i) * cols];
        double* dst = &out[(o * inner + i) * cols];
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
  for (double& v : out) v *= w;
  Tensor y = make_result({outer * inner, cols}, std::move(out), {&x}, "block_mean");
  auto xi = x.impl();
  set_backward(y, [xi, outer, blocks, inner, cols, w](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    double* g = xi->grad_buffer();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          double* dst = &g[((a * blocks + b) * inner + i) * cols];
          const double* src = &o.grad[(a * inner + i) * cols];
          for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
        }
  });
  return y;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  check_matrix(x, "gather_rows");
  const std::size_t cols = x.dim(1);
  for (std::size_t r : rows)
    require(r < x.dim(0), ErrorKind::Dimension,
            "gather_rows: row " + std::to_string(r) + " of " + shape_str(x.shape()));
  std::vector<double> out(rows.size() * cols);
  auto xd = x.data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(&xd[rows[i] * cols], cols, &out[i * cols]);
  Tensor y = make_result({rows.size(), cols}, std::move(out), {&x}, "gather_rows");
  auto xi = x.impl();
  set_backward(y, [xi, idx = std::vector<std::size_t>(rows.begin(), rows.end()),
                   cols](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    double* g = xi->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) g[idx[i] * cols + c] += o.grad[i * cols + c];
  });
  return y;
}

Tensor segment_mean(const Tensor& x, std::size_t segments,
                    std::span<const double> mask) {
  check_matrix(x, "segment_mean");
  require(segments > 0 && x.dim(0) % segments == 0, ErrorKind::Dimension,
          "segment_mean: " + std::to_string(x.dim(0)) +
              " rows do not split into " + std::to_string(segments) +
              " segments");
  require(mask.empty() || mask.size() == x.dim(0), ErrorKind::Dimension,
          "segment_mean: mask length " + std::to_string(mask.size()) +
              " vs " + std::to_string(x.dim(0)) + " rows");
  const std::size_t len = x.dim(0) / segments;
  const std::size_t cols = x.dim(1);
  std::vector<double> weights(x.dim(0), 1.0);
  if (!mask.empty()) std::copy(mask.begin(), mask.end(), weights.begin());
  for (std::size_t s = 0; s < segments; ++s) {
    double total = 0.0;
    for (std::size_t r = 0; r < len; ++r) total += weights[s * len + r];
    for (std::size_t r = 0; r < len; ++r)
      weights[s * len + r] = total > 0.0 ? weights[s * len + r] / total : 0.0;
  }
  std::vector<double> out(segments * cols, 0.0);
  auto xd = x.data();
  for (std::size_t row = 0; row < x.dim(0); ++row) {
    const double w = weights[row];
    if (w == 0.0) continue;
    double* dst = &out[(row / len) * cols];
    for (std::size_t c = 0; c < cols; ++c) dst[c] += w * xd[row * cols + c];
  }
  Tensor y = make_result({segments, cols}, std::move(out), {&x}, "segment_mean");
  auto xi = x.impl();
  set_backward(y, [xi, weights = std::move(weights), len, cols](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    double* g = xi->grad_buffer();
    for (std::size_t row = 0; row < weights.size(); ++row) {
      const double w = weights[row];
      const double* src = &o.grad[(row / len) * cols];
      for (std::size_t c = 0; c < cols; ++c) g[row * cols + c] += w * src[c];
    }
  });
  return y;
}

namespace {

struct AttentionDims {
  std::size_t groups, nq, nk, channels, heads, head_dim;
};

AttentionDims attention_dims(const Tensor& q, const Tensor& k,
                             std::size_t heads, std::size_t groups) {
  check_matrix(q, "attention");
  check_matrix(k, "attention");
  require(heads > 0 && q.dim(1) % heads == 0, ErrorKind::Dimension,
          "attention: " + std::to_string(q.dim(1)) +
              " channels not divisible by " + std::to_string(heads) + " heads");
  require(q.dim(1) == k.dim(1), ErrorKind::Dimension,
          "attention: query " + shape_str(q.shape()) + " vs key " +
              shape_str(k.shape()));
  require(groups > 0 && q.dim(0) % groups == 0 && k.dim(0) % groups == 0 &&
              k.dim(0) > 0 && q.dim(0) > 0,
          ErrorKind::Dimension,
          "attention: rows " + shape_str(q.shape()) + "/" + shape_str(k.shape()) +
              " do not split into " + std::to_string(groups) + " groups");
  return {groups, q.dim(0) / groups, k.dim(0) / groups, q.dim(1), heads,
          q.dim(1) / heads};
}

using Strided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using StridedMut = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// Head slice [rows, head_dim] of a [G*rows, channels] row-major buffer.
Strided head_block(const double* base, const AttentionDims& d, std::size_t g, std::size_t h,
                   std::size_t rows) {
  return Strided(base + g * rows * d.channels + h * d.head_dim, static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(d.head_dim),
                 Eigen::OuterStride<>(static_cast<Eigen::Index>(d.channels)));
}

StridedMut head_block(double* base, const AttentionDims& d, std::size_t g, std::size_t h,
                      std::size_t rows) {
  return StridedMut(base + g * rows * d.channels + h * d.head_dim,
                    static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d.head_dim),
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(d.channels)));
}

MapMat weight_block(double* w, const AttentionDims& d, std::size_t g, std::size_t h) {
  return MapMat(w + (g * d.heads + h) * d.nq * d.nk, static_cast<Eigen::Index>(d.nq),
                static_cast<Eigen::Index>(d.nk));
}

// weights[g][h][i][j]
std::vector<double> compute_weights(const AttentionDims& d,
                                    std::span<const double> q,
                                    std::span<const double> k) {
  std::vector<double> w(d.groups * d.heads * d.nq * d.nk);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
  for (std::size_t g = 0; g < d.groups; ++g)
    for (std::size_t h = 0; h < d.heads; ++h) {
      auto s = weight_block(w.data(), d, g, h);
      s.noalias() = head_block(q.data(), d, g, h, d.nq) *
                    head_block(k.data(), d, g, h, d.nk).transpose();
      // Scalar loops keep the result independent of buffer alignment.
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        double* row = &s(i, 0);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d.nk; ++j) mx = std::max(mx, row[j] *= inv_sqrt);
        double z = 0.0;
        for (std::size_t j = 0; j < d.nk; ++j) z += (row[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < d.nk; ++j) row[j] /= z;
      }
    }
  return w;
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads,
                         std::size_t groups) {
  const auto d = attention_dims(q, k, heads, groups);
  return Tensor::from({d.groups, d.heads, d.nq, d.nk},
                      compute_weights(d, q.data(), k.data()));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::size_t heads, std::size_t groups) {
  const auto d = attention_dims(q, k, heads, groups);
  check_same(k, v, "attention(k, v)");
  auto weights = std::make_shared<std::vector<double>>(
      compute_weights(d, q.data(), k.data()));
  std::vector<double> out(d.groups * d.nq * d.channels, 0.0);
  for (std::size_t g = 0; g < d.groups; ++g)
    for (std::size_t h = 0; h < d.heads; ++h)
      head_block(out.data(), d, g, h, d.nq).noalias() =
          weight_block(weights->data(), d, g, h) * head_block(v.data().data(), d, g, h, d.nk);
  Tensor y = make_result(q.shape(), std::move(out), {&q, &k, &v}, "attention");
  auto qi = q.impl(), ki = k.impl(), vi = v.impl();
  set_backward(y, [qi, ki, vi, d, weights](const TensorImpl& o) {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
    double* gq = qi->requires_grad ? qi->grad_buffer() : nullptr;
    double* gk = ki->requires_grad ? ki->grad_buffer() : nullptr;
    double* gv = vi->requires_grad ? vi->grad_buffer() : nullptr;
    RowMat dw(d.nq, d.nk);
    for (std::size_t g = 0; g < d.groups; ++g)
      for (std::size_t h = 0; h < d.heads; ++h) {
        const auto w = weight_block(weights->data(), d, g, h);
        const auto dout = head_block(o.grad.data(), d, g, h, d.nq);
        if (gv) head_block(gv, d, g, h, d.nk).noalias() += w.transpose() * dout;
        dw.noalias() = dout * head_block(vi->data.data(), d, g, h, d.nk).transpose();
        // softmax backward, then through the scaled scores
        for (Eigen::Index i = 0; i < dw.rows(); ++i) {
          double dot = 0.0;
          for (Eigen::Index j = 0; j < dw.cols(); ++j) dot += dw(i, j) * w(i, j);
          for (Eigen::Index j = 0; j < dw.cols(); ++j) dw(i, j) = w(i, j) * (dw(i, j) - dot) * inv_sqrt;
        }
        if (gq)
          head_block(gq, d, g, h, d.nq).noalias() += dw * head_block(ki->data.data(), d, g, h, d.nk);
        if (gk)
          head_block(gk, d, g, h, d.nk).noalias() +=
              dw.transpose() * head_block(qi->data.data(), d, g, h, d.nq);
      }
  });
  return y;
}

}  // namespace geoview::nn
