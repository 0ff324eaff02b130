#include "voxdiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gemm.hpp"

namespace voxdiff::ops {

namespace {

using detail::make_result;
using detail::Node;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                     " differ");
  }
}

bool wants_grad(const Node& self, std::size_t i) { return self.inputs.size() > i && self.inputs[i]->requires_grad; }

// f maps x -> y, df maps (x, y) -> dy/dx.
template <class F, class D>
Tensor unary(const Tensor& a, F f, D df) {
  const auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(a.shape(), std::move(out), {a}, [df](Node& self) {
    auto& x = *self.inputs[0];
    auto& gx = x.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * df(x.value[i], self.value[i]);
  });
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      auto& g = self.inputs[k]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (wants_grad(self, 0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = self.inputs[0]->value;
    const auto& y = self.inputs[1]->value;
    if (wants_grad(self, 0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor silu(const Tensor& a) {
  return unary(
      a, [](double x) { return x * sigmoid(x); },
      [](double x, double) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor gelu(const Tensor& a, GeluMode mode) {
  if (mode == GeluMode::Erf) {
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
        [](double x, double) {
          const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
          const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
          return cdf + x * pdf;
        });
  }
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(a, [floor](double x) { return std::max(x, floor); },
               [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({}, {s}, {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({}, {s / n}, {a}, [n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double d = self.grad[0] / n;
    for (auto& v : g) v += d;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor gather(const Tensor& a, Shape out_shape, IndexMap index) {
  if (element_count(out_shape) != index->size()) {
    throw ShapeError("gather: index of length " + std::to_string(index->size()) + " does not fill " +
                     to_string(out_shape));
  }
  const auto in = a.values();
  const auto& idx = *index;
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= in.size()) throw ShapeError("gather: index out of range for " + to_string(a.shape()));
    out[i] = in[idx[i]];
  }
  return make_result(std::move(out_shape), std::move(out), {a}, [index](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const auto& idx = *index;
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const auto& s = a.shape();
  const std::size_t r = s.size();
  std::vector<bool> seen(r, false);
  if (axes.size() != r) throw ShapeError("permute: axis list does not match rank of " + to_string(s));
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) throw ShapeError("permute: invalid axis list for " + to_string(s));
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[axes[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * s[i];

  auto map = std::make_shared<std::vector<std::uint32_t>>(a.numel());
  std::vector<std::size_t> counter(r, 0);
  for (std::size_t flat = 0; flat < map->size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += counter[i] * in_strides[axes[i]];
    (*map)[flat] = static_cast<std::uint32_t>(src);
    for (std::size_t i = r; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  return gather(a, std::move(out_shape), std::move(map));
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool ok = sa.size() == sb.size() && axis < sa.size();
  for (std::size_t i = 0; ok && i < sa.size(); ++i) ok = (i == axis) || sa[i] == sb[i];
  if (!ok) {
    throw ShapeError("concat: shapes " + to_string(sa) + " and " + to_string(sb) + " do not align on axis " +
                     std::to_string(axis));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sa[i];
  for (std::size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  const std::size_t ca = sa[axis] * inner, cb = sb[axis] * inner;
  Shape out_shape = sa;
  out_shape[axis] += sb[axis];
  std::vector<double> out(outer * (ca + cb));
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data() + o * ca, ca, out.data() + o * (ca + cb));
    std::copy_n(y.data() + o * cb, cb, out.data() + o * (ca + cb) + ca);
  }
  return make_result(std::move(out_shape), std::move(out), {a, b}, [outer, ca, cb](Node& self) {
    if (wants_grad(self, 0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < ca; ++i) g[o * ca + i] += self.grad[o * (ca + cb) + i];
    }
    if (wants_grad(self, 1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < cb; ++i) g[o * cb + i] += self.grad[o * (ca + cb) + ca + i];
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& s = a.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " invalid for " + to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t full = s[axis] * inner, part = (end - begin) * inner, offset = begin * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  std::vector<double> out(outer * part);
  const auto x = a.values();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.data() + o * full + offset, part, out.data() + o * part);
  return make_result(std::move(out_shape), std::move(out), {a}, [outer, full, part, offset](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < part; ++i) g[o * full + offset + i] += self.grad[o * part + i];
  });
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, cout, h, w, l, k;
  std::size_t spatial() const { return h * w * l; }
  std::size_t taps() const { return k * k * k; }
};

constexpr std::size_t kConvTile = 2048;

// col[(ci * taps + tap), t] for spatial positions [s0, s0 + count).
void im2col(const ConvGeometry& g, const double* x, std::size_t s0, std::size_t count, std::vector<double>& col) {
  const std::size_t taps = g.taps();
  const long r = static_cast<long>(g.k / 2);
  col.assign(g.cin * taps * count, 0.0);
  std::vector<long> xs(count), ys(count), zs(count);
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t s = s0 + t;
    zs[t] = static_cast<long>(s % g.l);
    ys[t] = static_cast<long>((s / g.l) % g.w);
    xs[t] = static_cast<long>(s / (g.l * g.w));
  }
  const long H = static_cast<long>(g.h), W = static_cast<long>(g.w), L = static_cast<long>(g.l);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const double* plane = x + ci * g.spatial();
    std::size_t tap = 0;
    for (long dx = -r; dx <= r; ++dx)
      for (long dy = -r; dy <= r; ++dy)
        for (long dz = -r; dz <= r; ++dz, ++tap) {
          double* row = col.data() + (ci * taps + tap) * count;
          for (std::size_t t = 0; t < count; ++t) {
            const long xx = xs[t] + dx, yy = ys[t] + dy, zz = zs[t] + dz;
            if (xx < 0 || xx >= H || yy < 0 || yy >= W || zz < 0 || zz >= L) continue;
            row[t] = plane[(xx * W + yy) * L + zz];
          }
        }
  }
}

void col2im(const ConvGeometry& g, const std::vector<double>& col, std::size_t s0, std::size_t count, double* gx) {
  const std::size_t taps = g.taps();
  const long r = static_cast<long>(g.k / 2);
  const long H = static_cast<long>(g.h), W = static_cast<long>(g.w), L = static_cast<long>(g.l);
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t s = s0 + t;
    const long z = static_cast<long>(s % g.l);
    const long y = static_cast<long>((s / g.l) % g.w);
    const long x = static_cast<long>(s / (g.l * g.w));
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      double* plane = gx + ci * g.spatial();
      std::size_t tap = 0;
      for (long dx = -r; dx <= r; ++dx)
        for (long dy = -r; dy <= r; ++dy)
          for (long dz = -r; dz <= r; ++dz, ++tap) {
            const long xx = x + dx, yy = y + dy, zz = z + dz;
            if (xx < 0 || xx >= H || yy < 0 || yy >= W || zz < 0 || zz >= L) continue;
            plane[(xx * W + yy) * L + zz] += col[(ci * taps + tap) * count + t];
          }
    }
  }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 5 || ws.size() != 5 || ws[1] != xs[1] || ws[2] != ws[3] || ws[3] != ws[4] || ws[2] % 2 == 0) {
    throw ShapeError("conv3d: input " + to_string(xs) + " and weight " + to_string(ws) + " do not conform");
  }
  if (bias.defined() && bias.shape() != Shape{ws[0]}) {
    throw ShapeError("conv3d: bias " + to_string(bias.shape()) + " does not match weight " + to_string(ws));
  }
  const ConvGeometry g{xs[0], xs[1], ws[0], xs[2], xs[3], xs[4], ws[2]};
  const std::size_t S = g.spatial();
  const std::size_t kc = g.cin * g.taps();
  std::vector<double> out(g.batch * g.cout * S, 0.0);
  const double* xv = x.values().data();
  const double* wv = weight.values().data();
  std::vector<double> col;
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* xb = xv + b * g.cin * S;
    double* ob = out.data() + b * g.cout * S;
    if (g.k == 1) {
      detail::gemm_nn(g.cout, S, g.cin, wv, g.cin, xb, S, ob, S);
    } else {
      for (std::size_t s0 = 0; s0 < S; s0 += kConvTile) {
        const std::size_t count = std::min(kConvTile, S - s0);
        im2col(g, xb, s0, count, col);
        detail::gemm_nn(g.cout, count, kc, wv, kc, col.data(), count, ob + s0, S);
      }
    }
    if (bias.defined()) {
      const auto bv = bias.values();
      for (std::size_t co = 0; co < g.cout; ++co)
        for (std::size_t s = 0; s < S; ++s) ob[co * S + s] += bv[co];
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result({g.batch, g.cout, g.h, g.w, g.l}, std::move(out), std::move(inputs), [g](Node& self) {
    const std::size_t S = g.spatial();
    const std::size_t kc = g.cin * g.taps();
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    const bool gx_on = wants_grad(self, 0), gw_on = wants_grad(self, 1), gb_on = wants_grad(self, 2);
    double* gx = gx_on ? self.inputs[0]->grad_buffer().data() : nullptr;
    double* gw = gw_on ? self.inputs[1]->grad_buffer().data() : nullptr;
    std::vector<double> col, dcol;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const double* go = self.grad.data() + b * g.cout * S;
      const double* xb = xv.data() + b * g.cin * S;
      if (gb_on) {
        auto& gb = self.inputs[2]->grad_buffer();
        for (std::size_t co = 0; co < g.cout; ++co) {
          double s = 0.0;
          for (std::size_t i = 0; i < S; ++i) s += go[co * S + i];
          gb[co] += s;
        }
      }
      if (g.k == 1) {
        if (gw_on) detail::gemm_nt(g.cout, g.cin, S, go, S, xb, S, gw, g.cin);
        if (gx_on) detail::gemm_tn(g.cin, S, g.cout, wv.data(), g.cin, go, S, gx + b * g.cin * S, S);
        continue;
      }
      for (std::size_t s0 = 0; s0 < S; s0 += kConvTile) {
        const std::size_t count = std::min(kConvTile, S - s0);
        if (gw_on) {
          im2col(g, xb, s0, count, col);
          detail::gemm_nt(g.cout, kc, count, go + s0, S, col.data(), count, gw, kc);
        }
        if (gx_on) {
          dcol.assign(kc * count, 0.0);
          detail::gemm_tn(kc, count, g.cout, wv.data(), kc, go + s0, S, dcol.data(), count);
          col2im(g, dcol, s0, count, gx + b * g.cin * S);
        }
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (xs.empty() || ws.size() != 2 || xs.back() != ws[1]) {
    throw ShapeError("linear: input " + to_string(xs) + " and weight " + to_string(ws) + " do not conform");
  }
  if (bias.defined() && bias.shape() != Shape{ws[0]}) {
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " does not match weight " + to_string(ws));
  }
  const std::size_t K = ws[1], N = ws[0], M = x.numel() / K;
  std::vector<double> out(M * N, 0.0);
  detail::gemm_nt(M, N, K, x.values().data(), K, weight.values().data(), K, out.data(), N);
  if (bias.defined()) {
    const auto bv = bias.values();
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) out[i * N + j] += bv[j];
  }
  Shape out_shape = xs;
  out_shape.back() = N;
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out_shape), std::move(out), std::move(inputs), [M, N, K](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    if (wants_grad(self, 0))
      detail::gemm_nn(M, K, N, self.grad.data(), N, wv.data(), K, self.inputs[0]->grad_buffer().data(), K);
    if (wants_grad(self, 1))
      detail::gemm_tn(N, K, M, self.grad.data(), N, xv.data(), K, self.inputs[1]->grad_buffer().data(), K);
    if (wants_grad(self, 2)) {
      auto& gb = self.inputs[2]->grad_buffer();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) gb[j] += self.grad[i * N + j];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const bool ok = sa.size() == 3 && sb.size() == 3 && sa[0] == sb[0] && (transpose_b ? sb[2] : sb[1]) == sa[2];
  if (!ok) throw ShapeError("matmul: shapes " + to_string(sa) + " and " + to_string(sb) + " do not conform");
  const std::size_t B = sa[0], M = sa[1], K = sa[2], N = transpose_b ? sb[1] : sb[2];
  std::vector<double> out(B * M * N, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < B; ++i) {
    if (transpose_b)
      detail::gemm_nt(M, N, K, av + i * M * K, K, bv + i * N * K, K, out.data() + i * M * N, N);
    else
      detail::gemm_nn(M, N, K, av + i * M * K, K, bv + i * K * N, N, out.data() + i * M * N, N);
  }
  return make_result({B, M, N}, std::move(out), {a, b}, [B, M, K, N, transpose_b](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const bool ga = wants_grad(self, 0), gb = wants_grad(self, 1);
    double* gav = ga ? self.inputs[0]->grad_buffer().data() : nullptr;
    double* gbv = gb ? self.inputs[1]->grad_buffer().data() : nullptr;
    for (std::size_t i = 0; i < B; ++i) {
      const double* go = self.grad.data() + i * M * N;
      if (transpose_b) {
        // C = A B^T: dA = dC B, dB = dC^T A
        if (ga) detail::gemm_nn(M, K, N, go, N, bv.data() + i * N * K, K, gav + i * M * K, K);
        if (gb) detail::gemm_tn(N, K, M, go, N, av.data() + i * M * K, K, gbv + i * N * K, K);
      } else {
        // C = A B: dA = dC B^T, dB = A^T dC
        if (ga) detail::gemm_nt(M, K, N, go, N, bv.data() + i * K * N, N, gav + i * M * K, K);
        if (gb) detail::gemm_tn(K, N, M, av.data() + i * M * K, K, go, N, gbv + i * K * N, N);
      }
    }
  });
}

Tensor softmax_last(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax_last: scalar input");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  const auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = out.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (yr[i] = std::exp(xr[i] - mx));
    for (std::size_t i = 0; i < n; ++i) yr[i] /= z;
  }
  return make_result(a.shape(), std::move(out), {a}, [rows, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* gy = self.grad.data() + r * n;
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += gy[i] * y[i];
      for (std::size_t i = 0; i < n; ++i) g[r * n + i] += y[i] * (gy[i] - d);
    }
  });
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t groups, double eps) {
  const auto& s = x.shape();
  if (s.size() < 2 || groups == 0 || s[1] % groups != 0 || gamma.shape() != Shape{s[1]} ||
      beta.shape() != Shape{s[1]}) {
    throw ShapeError("group_norm: input " + to_string(s) + " with " + std::to_string(groups) + " groups, gamma " +
                     to_string(gamma.shape()) + ", beta " + to_string(beta.shape()) + " do not conform");
  }
  const std::size_t B = s[0], C = s[1], S = x.numel() / (B * C), cpg = C / groups, block = cpg * S;
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<double> out(xv.size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(B * groups);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = (b * C + g * cpg) * S;
      double m = 0.0;
      for (std::size_t i = 0; i < block; ++i) m += xv[base + i];
      m /= static_cast<double>(block);
      double v = 0.0;
      for (std::size_t i = 0; i < block; ++i) v += (xv[base + i] - m) * (xv[base + i] - m);
      v /= static_cast<double>(block);
      const double rs = 1.0 / std::sqrt(v + eps);
      (*rstd)[b * groups + g] = rs;
      for (std::size_t c = 0; c < cpg; ++c) {
        const std::size_t ch = g * cpg + c;
        for (std::size_t i = 0; i < S; ++i) {
          const std::size_t idx = base + c * S + i;
          const double xh = (xv[idx] - m) * rs;
          (*xhat)[idx] = xh;
          out[idx] = xh * gv[ch] + bv[ch];
        }
      }
    }
  }
  return make_result(s, std::move(out), {x, gamma, beta}, [B, C, S, groups, cpg, block, xhat, rstd](Node& self) {
    const auto& gv = self.inputs[1]->value;
    const bool gx_on = wants_grad(self, 0), gg_on = wants_grad(self, 1), gb_on = wants_grad(self, 2);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t base = (b * C + g * cpg) * S;
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t c = 0; c < cpg; ++c) {
          const std::size_t ch = g * cpg + c;
          double sg = 0.0, sb = 0.0;
          for (std::size_t i = 0; i < S; ++i) {
            const std::size_t idx = base + c * S + i;
            const double gy = self.grad[idx];
            sg += gy * (*xhat)[idx];
            sb += gy;
            const double d = gy * gv[ch];
            sum_d += d;
            sum_dx += d * (*xhat)[idx];
          }
          if (gg_on) self.inputs[1]->grad_buffer()[ch] += sg;
          if (gb_on) self.inputs[2]->grad_buffer()[ch] += sb;
        }
        if (!gx_on) continue;
        auto& gx = self.inputs[0]->grad_buffer();
        const double rs = (*rstd)[b * groups + g];
        const double md = sum_d / static_cast<double>(block), mdx = sum_dx / static_cast<double>(block);
        for (std::size_t c = 0; c < cpg; ++c) {
          const std::size_t ch = g * cpg + c;
          for (std::size_t i = 0; i < S; ++i) {
            const std::size_t idx = base + c * S + i;
            gx[idx] += rs * (self.grad[idx] * gv[ch] - md - (*xhat)[idx] * mdx);
          }
        }
      }
    }
  });
}

Tensor scale_shift(const Tensor& h, const Tensor& sc, const Tensor& sh) {
  const auto& s = h.shape();
  if (s.size() < 2 || sc.shape() != Shape{s[0], s[1]} || sh.shape() != Shape{s[0], s[1]}) {
    throw ShapeError("scale_shift: features " + to_string(s) + " with scale " + to_string(sc.shape()) +
                     " and shift " + to_string(sh.shape()) + " do not conform");
  }
  const std::size_t BC = s[0] * s[1], S = h.numel() / BC;
  const auto hv = h.values();
  const auto scv = sc.values();
  const auto shv = sh.values();
  std::vector<double> out(hv.size());
  for (std::size_t bc = 0; bc < BC; ++bc) {
    const double f = 1.0 + scv[bc], o = shv[bc];
    for (std::size_t i = 0; i < S; ++i) out[bc * S + i] = hv[bc * S + i] * f + o;
  }
  return make_result(s, std::move(out), {h, sc, sh}, [BC, S](Node& self) {
    const auto& hv = self.inputs[0]->value;
    const auto& scv = self.inputs[1]->value;
    const bool g0 = wants_grad(self, 0), g1 = wants_grad(self, 1), g2 = wants_grad(self, 2);
    for (std::size_t bc = 0; bc < BC; ++bc) {
      const double f = 1.0 + scv[bc];
      double ssc = 0.0, ssh = 0.0;
      for (std::size_t i = 0; i < S; ++i) {
        const double gy = self.grad[bc * S + i];
        ssc += gy * hv[bc * S + i];
        ssh += gy;
      }
      if (g0) {
        auto& gh = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < S; ++i) gh[bc * S + i] += self.grad[bc * S + i] * f;
      }
      if (g1) self.inputs[1]->grad_buffer()[bc] += ssc;
      if (g2) self.inputs[2]->grad_buffer()[bc] += ssh;
    }
  });
}

Tensor resample_axis(const Tensor& x, std::size_t axis, std::size_t length) {
  const auto& s = x.shape();
  if (axis >= s.size() || length == 0) {
    throw ShapeError("resample_axis: axis " + std::to_string(axis) + " to length " + std::to_string(length) +
                     " invalid for " + to_string(s));
  }
  const std::size_t in_len = s[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

  struct Tap {
    std::size_t i0, i1;
    double w0, w1;
  };
  auto taps = std::make_shared<std::vector<Tap>>(length);
  const double ratio = static_cast<double>(in_len) / static_cast<double>(length);
  for (std::size_t j = 0; j < length; ++j) {
    double src = (static_cast<double>(j) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_len - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in_len - 1);
    const double w1 = src - static_cast<double>(i0);
    (*taps)[j] = {i0, i1, 1.0 - w1, w1};
  }
  Shape out_shape = s;
  out_shape[axis] = length;
  const auto xv = x.values();
  std::vector<double> out(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < length; ++j) {
      const Tap& t = (*taps)[j];
      const double* a = xv.data() + (o * in_len + t.i0) * inner;
      const double* b = xv.data() + (o * in_len + t.i1) * inner;
      double* y = out.data() + (o * length + j) * inner;
      for (std::size_t i = 0; i < inner; ++i) y[i] = t.w0 * a[i] + t.w1 * b[i];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [taps, outer, inner, in_len, length](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < length; ++j) {
        const Tap& t = (*taps)[j];
        const double* gy = self.grad.data() + (o * length + j) * inner;
        double* a = g.data() + (o * in_len + t.i0) * inner;
        double* b = g.data() + (o * in_len + t.i1) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          a[i] += t.w0 * gy[i];
          b[i] += t.w1 * gy[i];
        }
      }
    }
  });
}

Tensor resample_trilinear(const Tensor& x, const std::array<std::size_t, 3>& extents) {
  if (x.rank() != 5) throw ShapeError("resample_trilinear: expected [B, C, H, W, L], got " + to_string(x.shape()));
  Tensor y = x;
  for (std::size_t a = 0; a < 3; ++a) {
    if (y.dim(a + 2) != extents[a]) y = resample_axis(y, a + 2, extents[a]);
  }
  return y;
}

}  // namespace voxdiff::ops
