#include "mvhand/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mvhand {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

NodePtr make_leaf(Tensor value, bool requires_grad, bool trainable) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "leaf";
  n->requires_grad = requires_grad;
  n->trainable = trainable;
  return n;
}

Var make_op(const char* op, Tensor value, std::vector<NodePtr> parents,
            std::function<void(const Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Var(std::move(n));
}

void require_rank(const char* op, const Var& a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw ShapeError(op, "expected rank " + std::to_string(rank) + ", got " +
                             a.value().shape_str());
  }
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(op, a.value().shape_str() + " vs " + b.value().shape_str());
  }
}

}  // namespace

Var Var::constant(Tensor value) { return Var(make_leaf(std::move(value), false, false)); }
Var Var::param(Tensor value) { return Var(make_leaf(std::move(value), true, true)); }
Var Var::input(Tensor value) { return Var(make_leaf(std::move(value), true, false)); }

// ---- elementwise and linear ops ---------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.value().dim(0), n = a.value().dim(1), k = b.value().dim(1);
  if (b.value().dim(0) != n) {
    throw ShapeError("matmul", a.value().shape_str() + " vs " + b.value().shape_str());
  }
  std::vector<double> out(m * k);
  {
    CMap am(a.value().data(), m, n), bm(b.value().data(), n, k);
    MMap om(out.data(), m, k);
    om.noalias() = am * bm;
  }
  return make_op("matmul", Tensor::from_vector({m, k}, std::move(out)), {a.node(), b.node()},
                 [m, n, k](const Node& self) {
                   CMap g(self.grad.data(), m, k);
                   const Node& pa = *self.parents[0];
                   const Node& pb = *self.parents[1];
                   if (pa.requires_grad) {
                     self.parents[0]->ensure_grad();
                     MMap ga(self.parents[0]->grad.data(), m, n);
                     CMap bm(pb.value.data(), n, k);
                     ga.noalias() += g * bm.transpose();
                   }
                   if (pb.requires_grad) {
                     self.parents[1]->ensure_grad();
                     MMap gb(self.parents[1]->grad.data(), n, k);
                     CMap am(pa.value.data(), m, n);
                     gb.noalias() += am.transpose() * g;
                   }
                 });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  const std::size_t n = a.value().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op("add", Tensor::from_vector(a.value().shape(), std::move(out)),
                 {a.node(), b.node()}, [n](const Node& self) {
                   if (self.parents[0]->requires_grad)
                     self.parents[0]->add_grad(self.grad.data(), n);
                   if (self.parents[1]->requires_grad)
                     self.parents[1]->add_grad(self.grad.data(), n);
                 });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  const std::size_t n = a.value().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op("sub", Tensor::from_vector(a.value().shape(), std::move(out)),
                 {a.node(), b.node()}, [n](const Node& self) {
                   if (self.parents[0]->requires_grad)
                     self.parents[0]->add_grad(self.grad.data(), n);
                   if (self.parents[1]->requires_grad) {
                     self.parents[1]->ensure_grad();
                     for (std::size_t i = 0; i < n; ++i)
                       self.parents[1]->grad[i] -= self.grad[i];
                   }
                 });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  const std::size_t n = a.value().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op("mul", Tensor::from_vector(a.value().shape(), std::move(out)),
                 {a.node(), b.node()}, [n](const Node& self) {
                   const Node& pa = *self.parents[0];
                   const Node& pb = *self.parents[1];
                   if (pa.requires_grad) {
                     self.parents[0]->ensure_grad();
                     for (std::size_t i = 0; i < n; ++i)
                       self.parents[0]->grad[i] += self.grad[i] * pb.value[i];
                   }
                   if (pb.requires_grad) {
                     self.parents[1]->ensure_grad();
                     for (std::size_t i = 0; i < n; ++i)
                       self.parents[1]->grad[i] += self.grad[i] * pa.value[i];
                   }
                 });
}

Var scalar_mul(const Var& a, double s) {
  const std::size_t n = a.value().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = s * a.value()[i];
  return make_op("scalar_mul", Tensor::from_vector(a.value().shape(), std::move(out)),
                 {a.node()}, [n, s](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t i = 0; i < n; ++i)
                     self.parents[0]->grad[i] += s * self.grad[i];
                 });
}

// ---- data movement ----------------------------------------------------------

Var concat(const std::vector<Var>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat", "no inputs");
  if (axis > 1) throw ShapeError("concat", "axis must be 0 or 1");
  std::vector<NodePtr> parents;
  std::size_t rows = 0, cols = 0;
  for (const auto& x : xs) {
    require_rank("concat", x, 2);
    parents.push_back(x.node());
  }
  if (axis == 0) {
    cols = xs[0].value().dim(1);
    for (const auto& x : xs) {
      if (x.value().dim(1) != cols)
        throw ShapeError("concat", xs[0].value().shape_str() + " vs " + x.value().shape_str());
      rows += x.value().dim(0);
    }
  } else {
    rows = xs[0].value().dim(0);
    for (const auto& x : xs) {
      if (x.value().dim(0) != rows)
        throw ShapeError("concat", xs[0].value().shape_str() + " vs " + x.value().shape_str());
      cols += x.value().dim(1);
    }
  }
  std::vector<double> out(rows * cols);
  if (axis == 0) {
    std::size_t off = 0;
    for (const auto& x : xs) {
      std::copy(x.value().data(), x.value().data() + x.value().size(), out.begin() + off);
      off += x.value().size();
    }
  } else {
    std::size_t coff = 0;
    for (const auto& x : xs) {
      const std::size_t c = x.value().dim(1);
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(x.value().data() + r * c, x.value().data() + (r + 1) * c,
                  out.begin() + r * cols + coff);
      coff += c;
    }
  }
  return make_op("concat", Tensor::from_vector({rows, cols}, std::move(out)), std::move(parents),
                 [axis, rows, cols](const Node& self) {
                   if (axis == 0) {
                     std::size_t off = 0;
                     for (auto& p : self.parents) {
                       const std::size_t sz = p->value.size();
                       if (p->requires_grad) p->add_grad(self.grad.data() + off, sz);
                       off += sz;
                     }
                   } else {
                     std::size_t coff = 0;
                     for (auto& p : self.parents) {
                       const std::size_t c = p->value.dim(1);
                       if (p->requires_grad) {
                         p->ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < c; ++j)
                             p->grad[r * c + j] += self.grad[r * cols + coff + j];
                       }
                       coff += c;
                     }
                   }
                 });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != a.value().size()) {
    throw ShapeError("reshape", a.value().shape_str() + " to " + Tensor::shape_str(shape));
  }
  const std::size_t n = a.value().size();
  return make_op("reshape", a.value().reshaped(std::move(shape)), {a.node()},
                 [n](const Node& self) { self.parents[0]->add_grad(self.grad.data(), n); });
}

Var transpose(const Var& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  return make_op("transpose", Tensor::from_vector({n, m}, std::move(out)), {a.node()},
                 [m, n](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j)
                       self.parents[0]->grad[i * n + j] += self.grad[j * m + i];
                 });
}

Var transpose3(const Var& a, std::vector<std::size_t> perm) {
  require_rank("transpose3", a, 3);
  if (perm.size() != 3) throw ShapeError("transpose3", "perm must have 3 entries");
  const auto& s = a.value().shape();
  std::vector<std::size_t> os = {s[perm[0]], s[perm[1]], s[perm[2]]};
  std::vector<double> out(a.value().size());
  const std::size_t in_stride[3] = {s[1] * s[2], s[2], 1};
  std::size_t flat = 0;
  for (std::size_t i = 0; i < os[0]; ++i)
    for (std::size_t j = 0; j < os[1]; ++j)
      for (std::size_t k = 0; k < os[2]; ++k) {
        std::size_t idx[3];
        idx[perm[0]] = i;
        idx[perm[1]] = j;
        idx[perm[2]] = k;
        out[flat++] =
            a.value()[idx[0] * in_stride[0] + idx[1] * in_stride[1] + idx[2] * in_stride[2]];
      }
  return make_op(
      "transpose3", Tensor::from_vector(os, std::move(out)), {a.node()},
      [s, os, perm, in_stride0 = s[1] * s[2], in_stride1 = s[2]](const Node& self) {
        self.parents[0]->ensure_grad();
        std::size_t flat = 0;
        for (std::size_t i = 0; i < os[0]; ++i)
          for (std::size_t j = 0; j < os[1]; ++j)
            for (std::size_t k = 0; k < os[2]; ++k) {
              std::size_t idx[3];
              idx[perm[0]] = i;
              idx[perm[1]] = j;
              idx[perm[2]] = k;
              self.parents[0]->grad[idx[0] * in_stride0 + idx[1] * in_stride1 + idx[2]] +=
                  self.grad[flat++];
            }
      });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t len) {
  require_rank("slice_cols", a, 2);
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  if (start + len > n) {
    throw ShapeError("slice_cols", "cols [" + std::to_string(start) + "," +
                                       std::to_string(start + len) + ") out of " +
                                       a.value().shape_str());
  }
  std::vector<double> out(m * len);
  for (std::size_t i = 0; i < m; ++i)
    std::copy(a.value().data() + i * n + start, a.value().data() + i * n + start + len,
              out.begin() + i * len);
  return make_op("slice_cols", Tensor::from_vector({m, len}, std::move(out)), {a.node()},
                 [m, n, start, len](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < len; ++j)
                       self.parents[0]->grad[i * n + start + j] += self.grad[i * len + j];
                 });
}

Var gather_rows(const Var& a, std::vector<std::size_t> rows) {
  require_rank("gather_rows", a, 2);
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  for (std::size_t r : rows) {
    if (r >= m) throw ShapeError("gather_rows", "row " + std::to_string(r) + " out of " +
                                                    a.value().shape_str());
  }
  const std::size_t num_rows = rows.size();
  std::vector<double> out(num_rows * n);
  for (std::size_t i = 0; i < num_rows; ++i)
    std::copy(a.value().data() + rows[i] * n, a.value().data() + (rows[i] + 1) * n,
              out.begin() + i * n);
  return make_op("gather_rows", Tensor::from_vector({num_rows, n}, std::move(out)), {a.node()},
                 [rows = std::move(rows), n](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t i = 0; i < rows.size(); ++i)
                     for (std::size_t j = 0; j < n; ++j)
                       self.parents[0]->grad[rows[i] * n + j] += self.grad[i * n + j];
                 });
}

Var broadcast_repeat(const Var& a, std::size_t times) {
  if (times == 0) throw ShapeError("broadcast_repeat", "times must be positive");
  const std::size_t n = a.value().size();
  std::vector<std::size_t> os = a.value().shape();
  os[0] *= times;
  std::vector<double> out(n * times);
  for (std::size_t t = 0; t < times; ++t)
    std::copy(a.value().data(), a.value().data() + n, out.begin() + t * n);
  return make_op("broadcast_repeat", Tensor::from_vector(std::move(os), std::move(out)),
                 {a.node()}, [n, times](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t t = 0; t < times; ++t)
                     for (std::size_t i = 0; i < n; ++i)
                       self.parents[0]->grad[i] += self.grad[t * n + i];
                 });
}

// ---- nonlinearities ----------------------------------------------------------

Var leaky_relu(const Var& a, double slope) {
  const std::size_t n = a.value().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.value()[i];
    out[i] = x >= 0.0 ? x : slope * x;
  }
  return make_op("leaky_relu", Tensor::from_vector(a.value().shape(), std::move(out)), {a.node()},
                 [n, slope](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t i = 0; i < n; ++i) {
                     const double x = self.parents[0]->value[i];
                     self.parents[0]->grad[i] += self.grad[i] * (x >= 0.0 ? 1.0 : slope);
                   }
                 });
}

Var softplus(const Var& a) {
  const std::size_t n = a.value().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.value()[i];
    out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  return make_op("softplus", Tensor::from_vector(a.value().shape(), std::move(out)), {a.node()},
                 [n](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t i = 0; i < n; ++i) {
                     const double x = self.parents[0]->value[i];
                     const double sig =
                         x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                     self.parents[0]->grad[i] += self.grad[i] * sig;
                   }
                 });
}

Var clamp(const Var& a, double lo, double hi) {
  const std::size_t n = a.value().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(a.value()[i], lo), hi);
  return make_op("clamp", Tensor::from_vector(a.value().shape(), std::move(out)), {a.node()},
                 [n, lo, hi](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t i = 0; i < n; ++i) {
                     const double x = self.parents[0]->value[i];
                     if (x >= lo && x <= hi) self.parents[0]->grad[i] += self.grad[i];
                   }
                 });
}

// ---- reductions and normalization ---------------------------------------------

Var softmax(const Var& a, std::size_t axis) {
  require_rank("softmax", a, 2);
  if (axis > 1) throw ShapeError("softmax", "axis must be 0 or 1");
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  const std::size_t slices = axis == 1 ? m : n;
  const std::size_t len = axis == 1 ? n : m;
  const std::size_t sstep = axis == 1 ? n : 1;   // stride between slices
  const std::size_t estep = axis == 1 ? 1 : n;   // stride within a slice
  std::vector<double> out(m * n);
  for (std::size_t s = 0; s < slices; ++s) {
    double mx = -INFINITY;
    for (std::size_t e = 0; e < len; ++e) mx = std::max(mx, a.value()[s * sstep + e * estep]);
    double sum = 0.0;
    for (std::size_t e = 0; e < len; ++e) {
      const double v = std::exp(a.value()[s * sstep + e * estep] - mx);
      out[s * sstep + e * estep] = v;
      sum += v;
    }
    for (std::size_t e = 0; e < len; ++e) out[s * sstep + e * estep] /= sum;
  }
  return make_op("softmax", Tensor::from_vector({m, n}, std::move(out)), {a.node()},
                 [slices, len, sstep, estep](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t s = 0; s < slices; ++s) {
                     double dot = 0.0;
                     for (std::size_t e = 0; e < len; ++e) {
                       const std::size_t idx = s * sstep + e * estep;
                       dot += self.grad[idx] * self.value[idx];
                     }
                     for (std::size_t e = 0; e < len; ++e) {
                       const std::size_t idx = s * sstep + e * estep;
                       self.parents[0]->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
                     }
                   }
                 });
}

namespace {
Var reduce_impl(const Var& a, std::size_t axis, bool mean, const char* op) {
  require_rank(op, a, 2);
  if (axis > 1) throw ShapeError(op, "axis must be 0 or 1");
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  const std::size_t out_len = axis == 0 ? n : m;
  const std::size_t red_len = axis == 0 ? m : n;
  const double w = mean ? 1.0 / static_cast<double>(red_len) : 1.0;
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += a.value()[i * n + j];
  for (double& v : out) v *= w;
  return make_op(op, Tensor::from_vector({out_len}, std::move(out)), {a.node()},
                 [m, n, axis, w](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j)
                       self.parents[0]->grad[i * n + j] += w * self.grad[axis == 0 ? j : i];
                 });
}

Var reduce_all_impl(const Var& a, bool mean, const char* op) {
  const std::size_t n = a.value().size();
  const double w = mean ? 1.0 / static_cast<double>(n) : 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a.value()[i];
  return make_op(op, Tensor::scalar(sum * w), {a.node()}, [n, w](const Node& self) {
    self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) self.parents[0]->grad[i] += w * self.grad[0];
  });
}
}  // namespace

Var reduce_sum(const Var& a, std::size_t axis) { return reduce_impl(a, axis, false, "reduce_sum"); }
Var reduce_mean(const Var& a, std::size_t axis) { return reduce_impl(a, axis, true, "reduce_mean"); }
Var reduce_sum_all(const Var& a) { return reduce_all_impl(a, false, "reduce_sum_all"); }
Var reduce_mean_all(const Var& a) { return reduce_all_impl(a, true, "reduce_mean_all"); }

Var max_over_axis(const Var& a, std::size_t axis) {
  require_rank("max_over_axis", a, 2);
  if (axis > 1) throw ShapeError("max_over_axis", "axis must be 0 or 1");
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  const std::size_t out_len = axis == 0 ? n : m;
  const std::size_t red_len = axis == 0 ? m : n;
  std::vector<double> out(out_len);
  std::vector<std::size_t> argmax(out_len);
  for (std::size_t o = 0; o < out_len; ++o) {
    double best = -INFINITY;
    std::size_t best_i = 0;
    for (std::size_t r = 0; r < red_len; ++r) {
      const double v = axis == 0 ? a.value()[r * n + o] : a.value()[o * n + r];
      if (v > best) {  // strict: ties keep the lowest index
        best = v;
        best_i = r;
      }
    }
    out[o] = best;
    argmax[o] = best_i;
  }
  return make_op("max_over_axis", Tensor::from_vector({out_len}, std::move(out)), {a.node()},
                 [argmax = std::move(argmax), n, axis](const Node& self) {
                   self.parents[0]->ensure_grad();
                   for (std::size_t o = 0; o < argmax.size(); ++o) {
                     const std::size_t idx =
                         axis == 0 ? argmax[o] * n + o : o * n + argmax[o];
                     self.parents[0]->grad[idx] += self.grad[o];
                   }
                 });
}

// ---- sampling ----------------------------------------------------------------

Var bilinear_sample(const Var& map, const Var& coords) {
  require_rank("bilinear_sample", map, 3);
  require_rank("bilinear_sample", coords, 2);
  if (coords.value().dim(1) != 2) {
    throw ShapeError("bilinear_sample", "coords must be m x 2, got " + coords.value().shape_str());
  }
  const std::size_t h = map.value().dim(0), w = map.value().dim(1), c = map.value().dim(2);
  const std::size_t m = coords.value().dim(0);

  struct Corner {
    std::size_t x0, x1, y0, y1;
    double fx, fy;
    bool x_clamped, y_clamped;
  };
  std::vector<Corner> cs(m);
  std::vector<double> out(m * c);
  for (std::size_t i = 0; i < m; ++i) {
    const double xr = coords.value()[i * 2 + 0];
    const double yr = coords.value()[i * 2 + 1];
    Corner cr;
    cr.x_clamped = xr < 0.0 || xr > static_cast<double>(w - 1) || w == 1;
    cr.y_clamped = yr < 0.0 || yr > static_cast<double>(h - 1) || h == 1;
    const double xc = std::min(std::max(xr, 0.0), static_cast<double>(w - 1));
    const double yc = std::min(std::max(yr, 0.0), static_cast<double>(h - 1));
    cr.x0 = w > 1 ? std::min(static_cast<std::size_t>(xc), w - 2) : 0;
    cr.y0 = h > 1 ? std::min(static_cast<std::size_t>(yc), h - 2) : 0;
    cr.x1 = w > 1 ? cr.x0 + 1 : 0;
    cr.y1 = h > 1 ? cr.y0 + 1 : 0;
    cr.fx = xc - static_cast<double>(cr.x0);
    cr.fy = yc - static_cast<double>(cr.y0);
    cs[i] = cr;
    const double* md = map.value().data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v00 = md[(cr.y0 * w + cr.x0) * c + ch];
      const double v01 = md[(cr.y0 * w + cr.x1) * c + ch];
      const double v10 = md[(cr.y1 * w + cr.x0) * c + ch];
      const double v11 = md[(cr.y1 * w + cr.x1) * c + ch];
      out[i * c + ch] = (1 - cr.fy) * ((1 - cr.fx) * v00 + cr.fx * v01) +
                        cr.fy * ((1 - cr.fx) * v10 + cr.fx * v11);
    }
  }
  return make_op(
      "bilinear_sample", Tensor::from_vector({m, c}, std::move(out)),
      {map.node(), coords.node()}, [cs = std::move(cs), h, w, c, m](const Node& self) {
        (void)h;
        const Node& pmap = *self.parents[0];
        const Node& pco = *self.parents[1];
        const double* md = pmap.value.data();
        if (pmap.requires_grad) self.parents[0]->ensure_grad();
        if (pco.requires_grad) self.parents[1]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          const Corner& cr = cs[i];
          double dx = 0.0, dy = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double g = self.grad[i * c + ch];
            if (pmap.requires_grad) {
              self.parents[0]->grad[(cr.y0 * w + cr.x0) * c + ch] += g * (1 - cr.fy) * (1 - cr.fx);
              self.parents[0]->grad[(cr.y0 * w + cr.x1) * c + ch] += g * (1 - cr.fy) * cr.fx;
              self.parents[0]->grad[(cr.y1 * w + cr.x0) * c + ch] += g * cr.fy * (1 - cr.fx);
              self.parents[0]->grad[(cr.y1 * w + cr.x1) * c + ch] += g * cr.fy * cr.fx;
            }
            if (pco.requires_grad) {
              const double v00 = md[(cr.y0 * w + cr.x0) * c + ch];
              const double v01 = md[(cr.y0 * w + cr.x1) * c + ch];
              const double v10 = md[(cr.y1 * w + cr.x0) * c + ch];
              const double v11 = md[(cr.y1 * w + cr.x1) * c + ch];
              dx += g * ((1 - cr.fy) * (v01 - v00) + cr.fy * (v11 - v10));
              dy += g * ((1 - cr.fx) * (v10 - v00) + cr.fx * (v11 - v01));
            }
          }
          if (pco.requires_grad) {
            if (!cr.x_clamped) self.parents[1]->grad[i * 2 + 0] += dx;
            if (!cr.y_clamped) self.parents[1]->grad[i * 2 + 1] += dy;
          }
        }
      });
}

// ---- distances ----------------------------------------------------------------

Var abs_diff(const Var& a, const Var& b) {
  require_same_shape("abs_diff", a, b);
  const std::size_t n = a.value().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(a.value()[i] - b.value()[i]);
  return make_op("abs_diff", Tensor::from_vector(a.value().shape(), std::move(out)),
                 {a.node(), b.node()}, [n](const Node& self) {
                   for (std::size_t i = 0; i < n; ++i) {
                     const double d = self.parents[0]->value[i] - self.parents[1]->value[i];
                     const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                     if (self.parents[0]->requires_grad) {
                       self.parents[0]->ensure_grad();
                       self.parents[0]->grad[i] += s * self.grad[i];
                     }
                     if (self.parents[1]->requires_grad) {
                       self.parents[1]->ensure_grad();
                       self.parents[1]->grad[i] -= s * self.grad[i];
                     }
                   }
                 });
}

Var l1_distance(const Var& a, const Var& b) {
  require_same_shape("l1_distance", a, b);
  const std::size_t n = a.value().size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::abs(a.value()[i] - b.value()[i]);
  return make_op("l1_distance", Tensor::scalar(sum), {a.node(), b.node()},
                 [n](const Node& self) {
                   const double g = self.grad[0];
                   for (std::size_t i = 0; i < n; ++i) {
                     const double d = self.parents[0]->value[i] - self.parents[1]->value[i];
                     const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                     if (self.parents[0]->requires_grad) {
                       self.parents[0]->ensure_grad();
                       self.parents[0]->grad[i] += s * g;
                     }
                     if (self.parents[1]->requires_grad) {
                       self.parents[1]->ensure_grad();
                       self.parents[1]->grad[i] -= s * g;
                     }
                   }
                 });
}

Var l2_squared(const Var& a, const Var& b) {
  require_same_shape("l2_squared", a, b);
  const std::size_t n = a.value().size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    sum += d * d;
  }
  return make_op("l2_squared", Tensor::scalar(sum), {a.node(), b.node()},
                 [n](const Node& self) {
                   const double g = self.grad[0];
                   for (std::size_t i = 0; i < n; ++i) {
                     const double d = self.parents[0]->value[i] - self.parents[1]->value[i];
                     if (self.parents[0]->requires_grad) {
                       self.parents[0]->ensure_grad();
                       self.parents[0]->grad[i] += 2.0 * d * g;
                     }
                     if (self.parents[1]->requires_grad) {
                       self.parents[1]->ensure_grad();
                       self.parents[1]->grad[i] -= 2.0 * d * g;
                     }
                   }
                 });
}

// ---- rotations -----------------------------------------------------------------

namespace {
// sin(t)/t and (1-cos(t))/t^2 with the half-angle form keeping the second
// factor well conditioned near zero.
void rodrigues_coeffs(double theta, double& a, double& b) {
  if (theta < 1e-8) {
    a = 1.0 - theta * theta / 6.0;
    b = 0.5 - theta * theta / 24.0;
    return;
  }
  a = std::sin(theta) / theta;
  const double s2 = std::sin(0.5 * theta);
  b = 2.0 * s2 * s2 / (theta * theta);
}

inline void cross_matrix(const double r[3], double k[9]) {
  k[0] = 0.0;   k[1] = -r[2]; k[2] = r[1];
  k[3] = r[2];  k[4] = 0.0;   k[5] = -r[0];
  k[6] = -r[1]; k[7] = r[0];  k[8] = 0.0;
}
}  // namespace

Var rodrigues(const Var& r) {
  if (r.value().size() != 3) {
    throw ShapeError("rodrigues", "expected 3 elements, got " + r.value().shape_str());
  }
  const double rx = r.value()[0], ry = r.value()[1], rz = r.value()[2];
  const double theta = std::sqrt(rx * rx + ry * ry + rz * rz);
  double a, b;
  rodrigues_coeffs(theta, a, b);
  const double rv[3] = {rx, ry, rz};
  double k[9], k2[9];
  cross_matrix(rv, k);
  // K^2
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int l = 0; l < 3; ++l) s += k[i * 3 + l] * k[l * 3 + j];
      k2[i * 3 + j] = s;
    }
  std::vector<double> out(9);
  for (int i = 0; i < 9; ++i) out[i] = a * k[i] + b * k2[i];
  out[0] += 1.0;
  out[4] += 1.0;
  out[8] += 1.0;
  return make_op(
      "rodrigues", Tensor::from_vector({3, 3}, std::move(out)), {r.node()},
      [theta, a, b, rx, ry, rz](const Node& self) {
        self.parents[0]->ensure_grad();
        const double rv[3] = {rx, ry, rz};
        double k[9], k2[9];
        cross_matrix(rv, k);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int l = 0; l < 3; ++l) s += k[i * 3 + l] * k[l * 3 + j];
            k2[i * 3 + j] = s;
          }
        // d a / d theta and d b / d theta, series below 1e-3 where the closed
        // forms lose precision to cancellation.
        double da, db;
        if (theta < 1e-3) {
          da = -theta / 3.0 + theta * theta * theta / 30.0;
          db = -theta / 12.0 + theta * theta * theta / 180.0;
        } else {
          da = (theta * std::cos(theta) - std::sin(theta)) / (theta * theta);
          db = (theta * std::sin(theta) - 2.0 * (1.0 - std::cos(theta))) /
               (theta * theta * theta);
        }
        for (int comp = 0; comp < 3; ++comp) {
          // dtheta/dr_comp = r_comp/theta; the products below stay finite as
          // theta -> 0 because da, db vanish linearly.
          const double ca = theta < 1e-12 ? -rv[comp] / 3.0 : da * rv[comp] / theta;
          const double cb = theta < 1e-12 ? -rv[comp] / 12.0 : db * rv[comp] / theta;
          double e[3] = {0.0, 0.0, 0.0};
          e[comp] = 1.0;
          double ek[9];
          cross_matrix(e, ek);
          double d = 0.0;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              double ekk = 0.0, kek = 0.0;
              for (int l = 0; l < 3; ++l) {
                ekk += ek[i * 3 + l] * k[l * 3 + j];
                kek += k[i * 3 + l] * ek[l * 3 + j];
              }
              const double dR = ca * k[i * 3 + j] + a * ek[i * 3 + j] + cb * k2[i * 3 + j] +
                                b * (ekk + kek);
              d += self.grad[i * 3 + j] * dR;
            }
          self.parents[0]->grad[comp] += d;
        }
      });
}

Var detach(const Var& a) { return Var::constant(a.value()); }

Var affine(const Var& x, const Var& w, const Var& b) {
  Var y = matmul(x, w);
  return add(y, broadcast_repeat(b, y.value().dim(0)));
}

// ---- execution -------------------------------------------------------------------

namespace {
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS; parents are visited before the node is emitted.
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}
}  // namespace

Tensor forward(const Var& root) { return root.value(); }

void backward(const Var& root) {
  if (root.value().size() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got " +
                                root.value().shape_str());
  }
  auto order = topo_order(root.node().get());
  root.node()->ensure_grad();
  root.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->requires_grad) {
      n->ensure_grad();  // zero grad is valid input for the closures
      n->backprop(*n);
    }
  }
}

std::string graph_to_json(const Var& root) {
  auto order = topo_order(root.node().get());
  std::unordered_map<const Node*, std::size_t> ids;
  for (std::size_t i = 0; i < order.size(); ++i) ids[order[i]] = i;
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Node* n = order[i];
    os << (i ? ",\n" : "\n") << "  {\"id\":" << i << ",\"op\":\"" << n->op << "\",\"shape\":[";
    const auto& s = n->value.shape();
    for (std::size_t d = 0; d < s.size(); ++d) os << (d ? "," : "") << s[d];
    os << "],\"parents\":[";
    for (std::size_t p = 0; p < n->parents.size(); ++p)
      os << (p ? "," : "") << ids.at(n->parents[p].get());
    os << "]}";
  }
  os << "\n]\n";
  return os.str();
}

}  // namespace mvhand
