#include "lpnet/nd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace lpnet::nd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(x.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisView {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative dfdx) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_op(x.shape(), std::move(out), {x}, [dfdx](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() =
      as_matrix(a.node()->value, m, k) * as_matrix(b.node()->value, k, n);
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    auto dc = as_matrix(self.grad, m, n);
    if (pa.requires_grad) {
      as_matrix(pa.grad_buffer(), m, k).noalias() += dc * as_matrix(pb.value, k, n).transpose();
    }
    if (pb.requires_grad) {
      as_matrix(pb.grad_buffer(), k, n).noalias() += as_matrix(pa.value, m, k).transpose() * dc;
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  as_matrix(out, n, m) = as_matrix(x.node()->value, m, n).transpose();
  return make_op({n, m}, std::move(out), {x}, [m, n](Node& self) {
    Node& p = parent(self, 0);
    if (p.requires_grad) as_matrix(p.grad_buffer(), m, n) += as_matrix(self.grad, n, m).transpose();
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op(std::move(shape), std::move(out), {x}, [](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = parent(self, k);
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / pb.value[i];
    }
  });
}

namespace {

// Routes the gradient to `a` where pick_a holds, else to `b`.
Tensor select_binary(const Tensor& a, const Tensor& b, bool take_min) {
  require_same_shape(a, b, take_min ? "minimum" : "maximum");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = take_min ? std::min(a[i], b[i]) : std::max(a[i], b[i]);
  }
  return make_op(a.shape(), std::move(out), {a, b}, [take_min](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      bool pick_a = take_min ? pa.value[i] <= pb.value[i] : pa.value[i] >= pb.value[i];
      Node& target = pick_a ? pa : pb;
      if (target.requires_grad) target.grad_buffer()[i] += self.grad[i];
    }
  });
}

}  // namespace

Tensor minimum(const Tensor& a, const Tensor& b) { return select_binary(a, b, true); }

Tensor maximum(const Tensor& a, const Tensor& b) { return select_binary(a, b, false); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.dim(0);
  if (x.shape().back() != n) {
    throw DimensionError("add_bias: " + to_string(x.shape()) + " vs bias " + to_string(bias.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
  return make_op(x.shape(), std::move(out), {x, bias}, [n](Node& self) {
    Node& px = parent(self, 0);
    Node& pb = parent(self, 1);
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

Tensor mul_columns(const Tensor& x, const Tensor& gate) {
  require_rank(gate, 1, "mul_columns");
  const std::size_t n = gate.dim(0);
  if (x.shape().back() != n) {
    throw DimensionError("mul_columns: " + to_string(x.shape()) + " vs gate " +
                         to_string(gate.shape()));
  }
  std::vector<double> out(x.size());
  const auto in = x.data();
  const auto v = gate.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * v[i % n];
  return make_op(x.shape(), std::move(out), {x, gate}, [n](Node& self) {
    Node& px = parent(self, 0);
    Node& pv = parent(self, 1);
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pv.value[i % n];
    }
    if (pv.requires_grad) {
      auto& g = pv.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i] * px.value[i];
    }
  });
}

Tensor repeat_rows(const Tensor& x, std::size_t times) {
  require_rank(x, 2, "repeat_rows");
  if (times == 0) throw DimensionError("repeat_rows: times must be positive");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * times * n);
  const auto in = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t r = 0; r < times; ++r)
      std::copy_n(in.begin() + i * n, n, out.begin() + (i * times + r) * n);
  return make_op({m * times, n}, std::move(out), {x}, [m, n, times](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t r = 0; r < times; ++r)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[(i * times + r) * n + j];
  });
}

std::vector<double> additive_mask(const std::vector<bool>& keep) {
  std::vector<double> mask(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) mask[i] = keep[i] ? 0.0 : kMaskedLogit;
  return mask;
}

Tensor softmax(const Tensor& x, std::size_t axis, std::span<const double> additive_mask) {
  const AxisView v = axis_view(x.shape(), axis);
  if (!additive_mask.empty() && additive_mask.size() != x.size()) {
    throw DimensionError("softmax: mask has " + std::to_string(additive_mask.size()) +
                         " entries for " + to_string(x.shape()));
  }
  const auto in = x.data();
  std::vector<double> out(x.size());
  auto logit = [&](std::size_t idx) {
    return additive_mask.empty() ? in[idx] : in[idx] + additive_mask[idx];
  };
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.length * v.inner + i;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < v.length; ++t) peak = std::max(peak, logit(base + t * v.inner));
      double total = 0.0;
      for (std::size_t t = 0; t < v.length; ++t) {
        double e = std::exp(logit(base + t * v.inner) - peak);
        out[base + t * v.inner] = e;
        total += e;
      }
      for (std::size_t t = 0; t < v.length; ++t) out[base + t * v.inner] /= total;
    }
  }
  return make_op(x.shape(), std::move(out), {x}, [v](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.length * v.inner + i;
        double dot = 0.0;
        for (std::size_t t = 0; t < v.length; ++t) {
          dot += self.grad[base + t * v.inner] * self.value[base + t * v.inner];
        }
        for (std::size_t t = 0; t < v.length; ++t) {
          const std::size_t idx = base + t * v.inner;
          g[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.length * v.inner + i;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < v.length; ++t) peak = std::max(peak, in[base + t * v.inner]);
      double total = 0.0;
      for (std::size_t t = 0; t < v.length; ++t) total += std::exp(in[base + t * v.inner] - peak);
      const double lse = peak + std::log(total);
      for (std::size_t t = 0; t < v.length; ++t) out[base + t * v.inner] = in[base + t * v.inner] - lse;
    }
  }
  return make_op(x.shape(), std::move(out), {x}, [v](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.length * v.inner + i;
        double total = 0.0;
        for (std::size_t t = 0; t < v.length; ++t) total += self.grad[base + t * v.inner];
        for (std::size_t t = 0; t < v.length; ++t) {
          const std::size_t idx = base + t * v.inner;
          g[idx] += self.grad[idx] - std::exp(self.value[idx]) * total;
        }
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  Shape shape = first;
  axis_view(first, axis);
  shape[axis] = 0;
  for (const auto& part : parts) {
    const Shape& s = part.shape();
    bool compatible = s.size() == first.size();
    for (std::size_t i = 0; compatible && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) compatible = false;
    }
    if (!compatible) {
      throw DimensionError("concat: " + to_string(s) + " incompatible with " + to_string(first) +
                           " along axis " + std::to_string(axis));
    }
    shape[axis] += s[axis];
  }
  const AxisView whole = axis_view(shape, axis);
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> widths;  // contiguous chunk width per part
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& part : parts) {
    const std::size_t w = part.shape()[axis] * whole.inner;
    const auto in = part.data();
    for (std::size_t o = 0; o < whole.outer; ++o) {
      std::copy_n(in.begin() + o * w, w, out.begin() + o * whole.length * whole.inner + offset);
    }
    widths.push_back(w);
    offsets.push_back(offset);
    offset += w;
  }
  const std::size_t row = whole.length * whole.inner;
  return make_op(std::move(shape), std::move(out), parts,
                 [widths, offsets, row, outer = whole.outer](Node& self) {
                   for (std::size_t k = 0; k < self.parents.size(); ++k) {
                     Node& p = parent(self, k);
                     if (!p.requires_grad) continue;
                     auto& g = p.grad_buffer();
                     const std::size_t w = widths[k];
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t j = 0; j < w; ++j) g[o * w + j] += self.grad[o * row + offsets[k] + j];
                   }
                 });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisView v = axis_view(x.shape(), axis);
  if (begin >= end || end > v.length) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for axis " + std::to_string(axis) + " of " +
                         to_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t w = (end - begin) * v.inner;
  const std::size_t row = v.length * v.inner;
  const std::size_t start = begin * v.inner;
  std::vector<double> out(v.outer * w);
  const auto in = x.data();
  for (std::size_t o = 0; o < v.outer; ++o) std::copy_n(in.begin() + o * row + start, w, out.begin() + o * w);
  return make_op(std::move(shape), std::move(out), {x}, [w, row, start, outer = v.outer](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < w; ++j) g[o * row + start + j] += self.grad[o * w + j];
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.shape().back();
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw DimensionError("layernorm: gain/bias must be [" + std::to_string(n) + "], got " +
                         to_string(gain.shape()) + " and " + to_string(bias.shape()));
  }
  const std::size_t rows = x.size() / n;
  const auto in = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<double> out(x.size());
  std::vector<double> normalized(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[r * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double c = in[r * n + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = r * n + j;
      normalized[idx] = (in[idx] - mu) * inv_std[r];
      out[idx] = normalized[idx] * gv[j] + bv[j];
    }
  }
  return make_op(x.shape(), std::move(out), {x, gain, bias},
                 [n, rows, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
                   Node& px = parent(self, 0);
                   Node& pg = parent(self, 1);
                   Node& pb = parent(self, 2);
                   if (pg.requires_grad) {
                     auto& g = pg.grad_buffer();
                     for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i] * normalized[i];
                   }
                   if (pb.requires_grad) {
                     auto& g = pb.grad_buffer();
                     for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
                   }
                   if (!px.requires_grad) return;
                   auto& g = px.grad_buffer();
                   const double inv_n = 1.0 / static_cast<double>(n);
                   for (std::size_t r = 0; r < rows; ++r) {
                     double mean_d = 0.0, mean_dx = 0.0;
                     for (std::size_t j = 0; j < n; ++j) {
                       const std::size_t idx = r * n + j;
                       const double d = self.grad[idx] * pg.value[j];
                       mean_d += d;
                       mean_dx += d * normalized[idx];
                     }
                     mean_d *= inv_n;
                     mean_dx *= inv_n;
                     for (std::size_t j = 0; j < n; ++j) {
                       const std::size_t idx = r * n + j;
                       const double d = self.grad[idx] * pg.value[j];
                       g[idx] += inv_std[r] * (d - mean_d - normalized[idx] * mean_dx);
                     }
                   }
                 });
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("dropout probability must lie in [0, 1]");
  if (!train || p == 0.0) return x;
  std::vector<double> mask(x.size(), 0.0);
  if (p < 1.0) {
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& m : mask) m = uniform01(rng) >= p ? keep_scale : 0.0;
  }
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor weighted_sum(const Tensor& weights, const Tensor& x) {
  require_rank(weights, 1, "weighted_sum");
  require_rank(x, 2, "weighted_sum");
  const std::size_t m = x.dim(0), d = x.dim(1);
  if (weights.dim(0) != m) {
    throw DimensionError("weighted_sum: " + to_string(weights.shape()) + " weights for " +
                         to_string(x.shape()));
  }
  std::vector<double> out(d, 0.0);
  const auto w = weights.data();
  const auto in = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += w[i] * in[i * d + j];
  return make_op({d}, std::move(out), {weights, x}, [m, d](Node& self) {
    Node& pw = parent(self, 0);
    Node& px = parent(self, 1);
    if (pw.requires_grad) {
      auto& g = pw.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) g[i] += self.grad[j] * px.value[i * d + j];
    }
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += pw.value[i] * self.grad[j];
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_op({1}, {total}, {x}, [](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    for (auto& g : p.grad_buffer()) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mse(const Tensor& prediction, const Tensor& target) {
  Tensor diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_rank(x, 2, "conv1d");
  require_rank(kernel, 3, "conv1d");
  const std::size_t T = x.dim(0), d = x.dim(1);
  const std::size_t k = kernel.dim(0), d_out = kernel.dim(2);
  if (k % 2 == 0) throw DimensionError("conv1d: kernel width must be odd, got " + std::to_string(k));
  if (kernel.dim(1) != d) {
    throw DimensionError("conv1d: input " + to_string(x.shape()) + " vs kernel " +
                         to_string(kernel.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{d_out}) {
    throw DimensionError("conv1d: bias " + to_string(bias.shape()) + " for output width " +
                         std::to_string(d_out));
  }
  const std::size_t half = k / 2;
  // im2col: row t holds x[t - half .. t + half] with zeros beyond the ends.
  std::vector<double> columns(T * k * d, 0.0);
  const auto in = x.data();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(half);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      std::copy_n(in.begin() + src * static_cast<std::ptrdiff_t>(d), d, columns.begin() + (t * k + j) * d);
    }
  }
  std::vector<double> out(T * d_out);
  auto out_m = as_matrix(out, T, d_out);
  out_m.noalias() = as_matrix(columns, T, k * d) * as_matrix(kernel.node()->value, k * d, d_out);
  std::vector<Tensor> parents{x, kernel};
  if (bias.defined()) {
    const auto b = bias.data();
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < d_out; ++c) out[t * d_out + c] += b[c];
    parents.push_back(bias);
  }
  return make_op({T, d_out}, std::move(out), std::move(parents),
                 [T, d, k, d_out, half, columns = std::move(columns)](Node& self) {
                   auto dy = as_matrix(self.grad, T, d_out);
                   Node& px = parent(self, 0);
                   Node& pk = parent(self, 1);
                   if (pk.requires_grad) {
                     as_matrix(pk.grad_buffer(), k * d, d_out).noalias() +=
                         as_matrix(columns, T, k * d).transpose() * dy;
                   }
                   if (self.parents.size() > 2 && parent(self, 2).requires_grad) {
                     auto& gb = parent(self, 2).grad_buffer();
                     for (std::size_t t = 0; t < T; ++t)
                       for (std::size_t c = 0; c < d_out; ++c) gb[c] += self.grad[t * d_out + c];
                   }
                   if (!px.requires_grad) return;
                   std::vector<double> dcols(T * k * d);
                   as_matrix(dcols, T, k * d).noalias() =
                       dy * as_matrix(pk.value, k * d, d_out).transpose();
                   auto& gx = px.grad_buffer();
                   for (std::size_t t = 0; t < T; ++t) {
                     for (std::size_t j = 0; j < k; ++j) {
                       const std::ptrdiff_t src =
                           static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(half);
                       if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
                       for (std::size_t c = 0; c < d; ++c) gx[src * d + c] += dcols[(t * k + j) * d + c];
                     }
                   }
                 });
}

}  // namespace lpnet::nd
