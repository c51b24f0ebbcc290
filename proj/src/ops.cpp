#include "tagfog/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tagfog/errors.hpp"

namespace tagfog {

namespace {

using detail::Node;
using detail::NodePtr;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor make_op(Shape shape, std::vector<double> values, std::vector<NodePtr> inputs, const char* op,
               detail::BackwardFn backward) {
  auto node = detail::make_node(std::move(shape), std::move(values), false);
  node->op = op;
  if (grad_mode_enabled()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const NodePtr& in) { return in->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

void require_valid(const Tensor& t, const char* op) {
  if (!t.valid()) throw ContractViolation(std::string(op) + ": empty tensor handle");
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape for a leading-axis broadcast, or a dimension error naming both shapes.
Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a.shape()) + " with " +
                       shape_string(b.shape()));
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  return out;
}

template <typename Forward, typename GradA, typename GradB>
Tensor binary_broadcast(const Tensor& a, const Tensor& b, const char* op, Forward f, GradA ga, GradB gb) {
  require_valid(a, op);
  require_valid(b, op);
  Shape shape = broadcast_shape(a, b, op);
  const std::size_t n = shape_numel(shape);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);
  return make_op(std::move(shape), std::move(out), {a.node_ptr(), b.node_ptr()}, op,
                 [ga, gb](Node& self) {
                   Node& an = *self.inputs[0];
                   Node& bn = *self.inputs[1];
                   const std::size_t na = an.values.size();
                   const std::size_t nb = bn.values.size();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     const double g = self.grad[i];
                     const double x = an.values[i % na];
                     const double y = bn.values[i % nb];
                     if (an.requires_grad) an.grad[i % na] += ga(g, x, y);
                     if (bn.requires_grad) bn.grad[i % nb] += gb(g, x, y);
                   }
                 });
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, const char* op, Forward f, Derivative df) {
  require_valid(a, op);
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_op(a.shape(), std::move(out), {a.node_ptr()}, op, [df](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * df(in.values[i], self.values[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_broadcast(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_broadcast(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_broadcast(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; }, [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp_max(const Tensor& a, double ceiling) {
  return unary(
      a, "clamp_max", [ceiling](double x) { return std::min(x, ceiling); },
      [ceiling](double x, double) { return x < ceiling ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  require_valid(a, "sum");
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_op({}, {total}, {a.node_ptr()}, "sum", [](Node& self) {
    Node& in = *self.inputs[0];
    for (double& g : in.grad) g += self.grad[0];
  });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  require_valid(a, "sum");
  const AxisSplit s = split_at(a.shape(), axis, "sum");
  const auto av = a.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.n; ++j) {
      for (std::size_t k = 0; k < s.inner; ++k) out[o * s.inner + k] += av[(o * s.n + j) * s.inner + k];
    }
  }
  return make_op(drop_axis(a.shape(), axis), std::move(out), {a.node_ptr()}, "sum_axis", [s](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.n; ++j) {
        for (std::size_t k = 0; k < s.inner; ++k) in.grad[(o * s.n + j) * s.inner + k] += self.grad[o * s.inner + k];
      }
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, std::size_t axis) {
  return scale(sum(a, axis), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_valid(a, "matmul");
  require_valid(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  Eigen::Map<const RowMatrix> am(a.values().data(), m, k);
  Eigen::Map<const RowMatrix> bm(b.values().data(), k, n);
  Eigen::Map<RowMatrix> cm(out.data(), m, n);
  cm.noalias() = am * bm;
  return make_op({a.dim(0), b.dim(1)}, std::move(out), {a.node_ptr(), b.node_ptr()}, "matmul",
                 [m, k, n](Node& self) {
                   Node& an = *self.inputs[0];
                   Node& bn = *self.inputs[1];
                   Eigen::Map<const RowMatrix> dc(self.grad.data(), m, n);
                   if (an.requires_grad) {
                     Eigen::Map<const RowMatrix> bm(bn.values.data(), k, n);
                     Eigen::Map<RowMatrix> da(an.grad.data(), m, k);
                     da.noalias() += dc * bm.transpose();
                   }
                   if (bn.requires_grad) {
                     Eigen::Map<const RowMatrix> am(an.values.data(), m, k);
                     Eigen::Map<RowMatrix> db(bn.grad.data(), k, n);
                     db.noalias() += am.transpose() * dc;
                   }
                 });
}

Tensor transpose(const Tensor& a) {
  require_valid(a, "transpose");
  if (a.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_string(a.shape()));
  const std::size_t r = a.dim(0);
  const std::size_t c = a.dim(1);
  const auto av = a.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  return make_op({c, r}, std::move(out), {a.node_ptr()}, "transpose", [r, c](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) in.grad[i * c + j] += self.grad[j * r + i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_valid(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_op(std::move(shape), std::move(out), {a.node_ptr()}, "reshape", [](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

double logsumexp(std::span<const double> x) {
  if (x.empty()) throw DomainError("logsumexp over an empty axis");
  const double hi = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
  require_valid(a, "logsumexp");
  const AxisSplit s = split_at(a.shape(), axis, "logsumexp");
  const auto av = a.values();
  std::vector<double> out(s.outer * s.inner);
  std::vector<double> lane(s.n);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.inner; ++k) {
      for (std::size_t j = 0; j < s.n; ++j) lane[j] = av[(o * s.n + j) * s.inner + k];
      out[o * s.inner + k] = logsumexp(lane);
    }
  }
  return make_op(drop_axis(a.shape(), axis), std::move(out), {a.node_ptr()}, "logsumexp", [s](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t k = 0; k < s.inner; ++k) {
        const double g = self.grad[o * s.inner + k];
        const double lse = self.values[o * s.inner + k];
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = (o * s.n + j) * s.inner + k;
          in.grad[idx] += g * std::exp(in.values[idx] - lse);
        }
      }
    }
  });
}

Tensor masked_logsumexp(const Tensor& a, std::span<const unsigned char> keep) {
  require_valid(a, "masked_logsumexp");
  if (a.rank() != 2 || keep.size() != a.numel()) {
    throw DimensionError("masked_logsumexp: mask of " + std::to_string(keep.size()) +
                         " entries does not cover " + shape_string(a.shape()));
  }
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  std::vector<unsigned char> mask(keep.begin(), keep.end());
  const auto av = a.values();
  std::vector<double> out(rows);
  std::vector<double> lane;
  for (std::size_t i = 0; i < rows; ++i) {
    lane.clear();
    for (std::size_t j = 0; j < cols; ++j) {
      if (mask[i * cols + j]) lane.push_back(av[i * cols + j]);
    }
    if (lane.empty()) throw DomainError("masked_logsumexp: row " + std::to_string(i) + " keeps no entries");
    out[i] = logsumexp(lane);
  }
  return make_op({rows}, std::move(out), {a.node_ptr()}, "masked_logsumexp",
                 [rows, cols, mask = std::move(mask)](Node& self) {
                   Node& in = *self.inputs[0];
                   for (std::size_t i = 0; i < rows; ++i) {
                     for (std::size_t j = 0; j < cols; ++j) {
                       const std::size_t idx = i * cols + j;
                       if (mask[idx]) in.grad[idx] += self.grad[i] * std::exp(in.values[idx] - self.values[i]);
                     }
                   }
                 });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  require_valid(a, "softmax");
  const AxisSplit s = split_at(a.shape(), axis, "softmax");
  const auto av = a.values();
  std::vector<double> out(av.size());
  std::vector<double> lane(s.n);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.inner; ++k) {
      for (std::size_t j = 0; j < s.n; ++j) lane[j] = av[(o * s.n + j) * s.inner + k];
      const double lse = logsumexp(lane);
      for (std::size_t j = 0; j < s.n; ++j) out[(o * s.n + j) * s.inner + k] = std::exp(lane[j] - lse);
    }
  }
  return make_op(a.shape(), std::move(out), {a.node_ptr()}, "softmax", [s](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t k = 0; k < s.inner; ++k) {
        double dot = 0.0;
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = (o * s.n + j) * s.inner + k;
          dot += self.grad[idx] * self.values[idx];
        }
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = (o * s.n + j) * s.inner + k;
          in.grad[idx] += self.values[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor softmax(const Tensor& a) {
  require_valid(a, "softmax");
  if (a.rank() == 0) throw DimensionError("softmax of a scalar");
  return softmax(a, a.rank() - 1);
}

Tensor l2_normalize(const Tensor& a) {
  require_valid(a, "l2_normalize");
  if (a.rank() == 0) throw DimensionError("l2_normalize of a scalar");
  const std::size_t d = a.shape().back();
  const std::size_t rows = a.numel() / d;
  const auto av = a.values();
  std::vector<double> out(av.size());
  std::vector<double> sq(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += av[r * d + j] * av[r * d + j];
    sq[r] = s;
    const double inv = 1.0 / std::sqrt(s + kL2NormalizeEps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = av[r * d + j] * inv;
  }
  return make_op(a.shape(), std::move(out), {a.node_ptr()}, "l2_normalize",
                 [d, rows, sq = std::move(sq)](Node& self) {
                   Node& in = *self.inputs[0];
                   for (std::size_t r = 0; r < rows; ++r) {
                     if (sq[r] == 0.0) continue;
                     const double inv = 1.0 / std::sqrt(sq[r] + kL2NormalizeEps);
                     double dot = 0.0;
                     for (std::size_t j = 0; j < d; ++j) dot += self.values[r * d + j] * self.grad[r * d + j];
                     for (std::size_t j = 0; j < d; ++j) {
                       in.grad[r * d + j] += (self.grad[r * d + j] - self.values[r * d + j] * dot) * inv;
                     }
                   }
                 });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  for (const auto& p : parts) require_valid(p, "concat");
  const Shape& first = parts.front().shape();
  split_at(first, axis, "concat");
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) {
      throw DimensionError("concat: rank mismatch between " + shape_string(first) + " and " +
                           shape_string(p.shape()));
    }
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.shape()[i] != first[i]) {
        throw DimensionError("concat: shape mismatch between " + shape_string(first) + " and " +
                             shape_string(p.shape()));
      }
    }
    shape[axis] += p.shape()[axis];
  }
  const AxisSplit out_split = split_at(shape, axis, "concat");
  std::vector<double> out(shape_numel(shape));
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const AxisSplit s = split_at(p.shape(), axis, "concat");
    const auto pv = p.values();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.n; ++j) {
        std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>((o * s.n + j) * s.inner), s.inner,
                    out.begin() + static_cast<std::ptrdiff_t>((o * out_split.n + offset + j) * s.inner));
      }
    }
    inputs.push_back(p.node_ptr());
    offsets.push_back(offset);
    offset += s.n;
  }
  return make_op(std::move(shape), std::move(out), std::move(inputs), "concat",
                 [axis, out_split, offsets = std::move(offsets)](Node& self) {
                   for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                     Node& in = *self.inputs[p];
                     if (!in.requires_grad) continue;
                     const std::size_t n = in.shape[axis];
                     for (std::size_t o = 0; o < out_split.outer; ++o) {
                       for (std::size_t j = 0; j < n; ++j) {
                         for (std::size_t k = 0; k < out_split.inner; ++k) {
                           in.grad[(o * n + j) * out_split.inner + k] +=
                               self.grad[(o * out_split.n + offsets[p] + j) * out_split.inner + k];
                         }
                       }
                     }
                   }
                 });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_valid(a, "slice");
  const AxisSplit s = split_at(a.shape(), axis, "slice");
  if (begin >= end || end > s.n) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis of size " + std::to_string(s.n));
  }
  Shape shape = a.shape();
  shape[axis] = end - begin;
  const std::size_t len = end - begin;
  const auto av = a.values();
  std::vector<double> out(s.outer * len * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < len; ++j) {
      for (std::size_t k = 0; k < s.inner; ++k) {
        out[(o * len + j) * s.inner + k] = av[(o * s.n + begin + j) * s.inner + k];
      }
    }
  }
  return make_op(std::move(shape), std::move(out), {a.node_ptr()}, "slice", [s, begin, len](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < len; ++j) {
        for (std::size_t k = 0; k < s.inner; ++k) {
          in.grad[(o * s.n + begin + j) * s.inner + k] += self.grad[(o * len + j) * s.inner + k];
        }
      }
    }
  });
}

Tensor batch_normalize(const Tensor& a, double eps) {
  require_valid(a, "batch_normalize");
  if (a.rank() != 2) throw DimensionError("batch_normalize: expected [B x H], got " + shape_string(a.shape()));
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  if (rows < 2) throw ContractViolation("batch_normalize needs at least 2 rows to estimate statistics");
  const auto av = a.values();
  std::vector<double> inv_std(cols);
  std::vector<double> out(av.size());
  for (std::size_t j = 0; j < cols; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mu += av[i * cols + j];
    mu /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double c = av[i * cols + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(rows);
    inv_std[j] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < rows; ++i) out[i * cols + j] = (av[i * cols + j] - mu) * inv_std[j];
  }
  return make_op(a.shape(), std::move(out), {a.node_ptr()}, "batch_normalize",
                 [rows, cols, inv_std = std::move(inv_std)](Node& self) {
                   Node& in = *self.inputs[0];
                   const double b = static_cast<double>(rows);
                   for (std::size_t j = 0; j < cols; ++j) {
                     double gsum = 0.0;
                     double gdot = 0.0;
                     for (std::size_t i = 0; i < rows; ++i) {
                       gsum += self.grad[i * cols + j];
                       gdot += self.grad[i * cols + j] * self.values[i * cols + j];
                     }
                     for (std::size_t i = 0; i < rows; ++i) {
                       const std::size_t idx = i * cols + j;
                       in.grad[idx] += inv_std[j] / b * (b * self.grad[idx] - gsum - self.values[idx] * gdot);
                     }
                   }
                 });
}

}  // namespace tagfog
