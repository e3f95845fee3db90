#include "redsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "redsr/errors.hpp"

namespace redsr::ops {
namespace {

using detail::Node;

bool wants_grad(const Node& out, std::size_t i) { return out.parents[i]->requires_grad; }
std::vector<double>& parent_grad(Node& out, std::size_t i) { return out.parents[i]->ensure_grad(); }
const std::vector<double>& parent_data(const Node& out, std::size_t i) {
  return out.parents[i]->data;
}

enum class Broadcast { kSame, kScalarA, kScalarB };

Broadcast check_binary(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalarB;
  if (a.size() == 1) return Broadcast::kScalarA;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

// Shared driver for add/sub/mul. `da`/`db` give the local partials given the
// two operand values.
template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  const Broadcast mode = check_binary(a, b, name);
  const Shape shape = mode == Broadcast::kScalarA ? b.shape() : a.shape();
  const std::size_t n = numel(shape);
  auto av = a.data();
  auto bv = b.data();
  auto ai = [&](std::size_t i) { return mode == Broadcast::kScalarA ? av[0] : av[i]; };
  auto bi = [&](std::size_t i) { return mode == Broadcast::kScalarB ? bv[0] : bv[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ai(i), bi(i));
  return Tensor::make_result(shape, std::move(out), {a, b}, [mode, n, da, db](Node& o) {
    const auto& A = parent_data(o, 0);
    const auto& B = parent_data(o, 1);
    auto at = [&](std::size_t i) { return mode == Broadcast::kScalarA ? A[0] : A[i]; };
    auto bt = [&](std::size_t i) { return mode == Broadcast::kScalarB ? B[0] : B[i]; };
    if (wants_grad(o, 0)) {
      auto& g = parent_grad(o, 0);
      for (std::size_t i = 0; i < n; ++i) {
        g[mode == Broadcast::kScalarA ? 0 : i] += o.grad[i] * da(at(i), bt(i));
      }
    }
    if (wants_grad(o, 1)) {
      auto& g = parent_grad(o, 1);
      for (std::size_t i = 0; i < n; ++i) {
        g[mode == Broadcast::kScalarB ? 0 : i] += o.grad[i] * db(at(i), bt(i));
      }
    }
  });
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [df](Node& o) {
    const auto& A = parent_data(o, 0);
    auto& g = parent_grad(o, 0);
    for (std::size_t i = 0; i < A.size(); ++i) g[i] += o.grad[i] * df(A[i], o.data[i]);
  });
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_nonempty(const Tensor& t, const char* op) {
  if (t.size() == 0) throw ParameterError(std::string(op) + ": empty tensor");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, [slope](double x) { return std::max(x, 0.0) + slope * std::min(x, 0.0); },
      [slope](double x, double) { return slope + (1.0 - slope) * static_cast<double>(x > 0.0); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear");
  require_rank(weight, 2, "linear");
  require_rank(bias, 1, "linear");
  const std::size_t n = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din || bias.dim(0) != dout) {
    throw DimensionError("linear: input " + shape_str(input.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  auto X = input.data();
  auto Wt = weight.data();
  auto B = bias.data();
  std::vector<double> out(n * dout);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = B[o];
      for (std::size_t i = 0; i < din; ++i) acc += Wt[o * din + i] * X[r * din + i];
      out[r * dout + o] = acc;
    }
  }
  return Tensor::make_result({n, dout}, std::move(out), {input, weight, bias},
                             [n, din, dout](Node& o) {
                               const auto& X = parent_data(o, 0);
                               const auto& W = parent_data(o, 1);
                               const auto& G = o.grad;
                               if (wants_grad(o, 0)) {
                                 auto& g = parent_grad(o, 0);
                                 for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t k = 0; k < dout; ++k)
                                     for (std::size_t i = 0; i < din; ++i)
                                       g[r * din + i] += G[r * dout + k] * W[k * din + i];
                               }
                               if (wants_grad(o, 1)) {
                                 auto& g = parent_grad(o, 1);
                                 for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t k = 0; k < dout; ++k)
                                     for (std::size_t i = 0; i < din; ++i)
                                       g[k * din + i] += G[r * dout + k] * X[r * din + i];
                               }
                               if (wants_grad(o, 2)) {
                                 auto& g = parent_grad(o, 2);
                                 for (std::size_t r = 0; r < n; ++r)
                                   for (std::size_t k = 0; k < dout; ++k) g[k] += G[r * dout + k];
                               }
                             });
}

Tensor sum(const Tensor& a) {
  require_nonempty(a, "sum");
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({1}, {s}, {a}, [](Node& o) {
    auto& g = parent_grad(o, 0);
    for (auto& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_nonempty(a, "mean");
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  return Tensor::make_result({1}, {s * inv}, {a}, [inv](Node& o) {
    auto& g = parent_grad(o, 0);
    for (auto& v : g) v += o.grad[0] * inv;
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_nonempty(x, "global_avg_pool");
  require_rank(x, 4, "global_avg_pool");
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(hw);
  auto X = x.data();
  std::vector<double> out(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += X[i * hw + j];
    out[i] = s * inv;
  }
  return Tensor::make_result({x.dim(0), x.dim(1)}, std::move(out), {x}, [nc, hw, inv](Node& o) {
    auto& g = parent_grad(o, 0);
    for (std::size_t i = 0; i < nc; ++i) {
      const double gi = o.grad[i] * inv;
      for (std::size_t j = 0; j < hw; ++j) g[i * hw + j] += gi;
    }
  });
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void l1_backward(Node& o, std::size_t rows, std::size_t cols, double inv) {
  const auto& A = parent_data(o, 0);
  const auto& B = parent_data(o, 1);
  for (std::size_t side = 0; side < 2; ++side) {
    if (!wants_grad(o, side)) continue;
    auto& g = parent_grad(o, side);
    const double dir = side == 0 ? 1.0 : -1.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double gr = o.grad[o.grad.size() == 1 ? 0 : r] * inv * dir;
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        g[i] += gr * sign(A[i] - B[i]);
      }
    }
  }
}

}  // namespace

Tensor l1_mean(const Tensor& a, const Tensor& b) {
  require_nonempty(a, "l1_mean");
  if (a.shape() != b.shape()) {
    throw DimensionError("l1_mean: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  auto A = a.data();
  auto B = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += std::abs(A[i] - B[i]);
  const double inv = 1.0 / static_cast<double>(A.size());
  const std::size_t n = A.size();
  return Tensor::make_result({1}, {s * inv}, {a, b},
                             [n, inv](Node& o) { l1_backward(o, 1, n, inv); });
}

Tensor l1_per_sample(const Tensor& a, const Tensor& b) {
  require_nonempty(a, "l1_per_sample");
  if (a.shape() != b.shape()) {
    throw DimensionError("l1_per_sample: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  if (a.rank() < 2) throw DimensionError("l1_per_sample: need a leading batch dimension");
  const std::size_t rows = a.dim(0), cols = a.size() / rows;
  const double inv = 1.0 / static_cast<double>(cols);
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::abs(A[r * cols + c] - B[r * cols + c]);
    out[r] = s * inv;
  }
  return Tensor::make_result({rows}, std::move(out), {a, b},
                             [rows, cols, inv](Node& o) { l1_backward(o, rows, cols, inv); });
}

Tensor pairwise_l2(const Tensor& a, const Tensor& b) {
  require_nonempty(a, "pairwise_l2");
  require_nonempty(b, "pairwise_l2");
  require_rank(a, 2, "pairwise_l2");
  require_rank(b, 2, "pairwise_l2");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("pairwise_l2: feature dims " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t na = a.dim(0), nb = b.dim(0), c = a.dim(1);
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(na * nb);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = A[i * c + k] - B[j * c + k];
        s += d * d;
      }
      out[i * nb + j] = std::sqrt(s);
    }
  }
  return Tensor::make_result({na, nb}, std::move(out), {a, b}, [na, nb, c](Node& o) {
    const auto& A = parent_data(o, 0);
    const auto& B = parent_data(o, 1);
    const bool ga = wants_grad(o, 0), gb = wants_grad(o, 1);
    // Resolve grad references up front: a and b may be the same node.
    std::vector<double>* GA = ga ? &parent_grad(o, 0) : nullptr;
    std::vector<double>* GB = gb ? &parent_grad(o, 1) : nullptr;
    for (std::size_t i = 0; i < na; ++i) {
      for (std::size_t j = 0; j < nb; ++j) {
        const double d = o.data[i * nb + j];
        if (d == 0.0) continue;
        const double coef = o.grad[i * nb + j] / d;
        for (std::size_t k = 0; k < c; ++k) {
          const double diff = coef * (A[i * c + k] - B[j * c + k]);
          if (GA) (*GA)[i * c + k] += diff;
          if (GB) (*GB)[j * c + k] -= diff;
        }
      }
    }
  });
}

Tensor decimate(const Tensor& x, std::size_t s) {
  require_rank(x, 4, "decimate");
  if (s == 0) throw ParameterError("decimate: factor must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % s || W % s) {
    throw DimensionError("decimate: spatial dims " + shape_str(x.shape()) +
                         " not divisible by " + std::to_string(s));
  }
  const std::size_t h = H / s, w = W / s;
  auto X = x.data();
  std::vector<double> out(N * C * h * w);
  for (std::size_t p = 0; p < N * C; ++p)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t q = 0; q < w; ++q) out[(p * h + r) * w + q] = X[(p * H + r * s) * W + q * s];
  return Tensor::make_result({N, C, h, w}, std::move(out), {x}, [N, C, H, W, h, w, s](Node& o) {
    auto& g = parent_grad(o, 0);
    for (std::size_t p = 0; p < N * C; ++p)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t q = 0; q < w; ++q)
          g[(p * H + r * s) * W + q * s] += o.grad[(p * h + r) * w + q];
  });
}

Tensor nn_upsample(const Tensor& x, std::size_t s) {
  require_rank(x, 4, "nn_upsample");
  if (s == 0) throw ParameterError("nn_upsample: factor must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t H = h * s, W = w * s;
  auto X = x.data();
  std::vector<double> out(N * C * H * W);
  for (std::size_t p = 0; p < N * C; ++p)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t q = 0; q < W; ++q) out[(p * H + r) * W + q] = X[(p * h + r / s) * w + q / s];
  return Tensor::make_result({N, C, H, W}, std::move(out), {x}, [N, C, H, W, h, w, s](Node& o) {
    auto& g = parent_grad(o, 0);
    for (std::size_t p = 0; p < N * C; ++p)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t q = 0; q < W; ++q)
          g[(p * h + r / s) * w + q / s] += o.grad[(p * H + r) * W + q];
  });
}

Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  require_rank(x, 4, "channel_affine");
  const Shape nc{x.dim(0), x.dim(1)};
  if (gamma.shape() != nc || beta.shape() != nc) {
    throw DimensionError("channel_affine: features " + shape_str(x.shape()) + ", gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  const std::size_t planes = nc[0] * nc[1], hw = x.dim(2) * x.dim(3);
  auto X = x.data();
  auto G = gamma.data();
  auto B = beta.data();
  std::vector<double> out(X.size());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t j = 0; j < hw; ++j) out[p * hw + j] = X[p * hw + j] * G[p] + B[p];
  return Tensor::make_result(x.shape(), std::move(out), {x, gamma, beta}, [planes, hw](Node& o) {
    const auto& X = parent_data(o, 0);
    const auto& G = parent_data(o, 1);
    if (wants_grad(o, 0)) {
      auto& g = parent_grad(o, 0);
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t j = 0; j < hw; ++j) g[p * hw + j] += o.grad[p * hw + j] * G[p];
    }
    if (wants_grad(o, 1)) {
      auto& g = parent_grad(o, 1);
      for (std::size_t p = 0; p < planes; ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < hw; ++j) s += o.grad[p * hw + j] * X[p * hw + j];
        g[p] += s;
      }
    }
    if (wants_grad(o, 2)) {
      auto& g = parent_grad(o, 2);
      for (std::size_t p = 0; p < planes; ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < hw; ++j) s += o.grad[p * hw + j];
        g[p] += s;
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& o) {
    auto& g = parent_grad(o, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

}  // namespace redsr::ops
