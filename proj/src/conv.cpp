#include <Eigen/Core>
#include <algorithm>
#include <string>
#include <utility>

#include "redsr/errors.hpp"
#include "redsr/ops.hpp"

// conv2d as im2col + GEMM, one image at a time. Columns are rebuilt in the
// backward pass instead of being cached; at training sizes a cached column
// buffer per layer would dominate memory.
namespace redsr::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeom {
  std::size_t n, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  std::size_t k() const { return cin * kh * kw; }
  std::size_t opix() const { return oh * ow; }
};

// Columns for output pixels [p0, p1): row k of `cols` holds (p1 - p0) values.
void im2col(const double* img, const ConvGeom& g, std::size_t p0, std::size_t p1, double* cols) {
  const std::size_t T = p1 - p0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* dst = cols + ((c * g.kh + ki) * g.kw + kj) * T;
        std::size_t p = p0;
        while (p < p1) {
          const std::size_t oy = p / g.ow, ox0 = p % g.ow;
          const std::size_t run = std::min(g.ow - ox0, p1 - p);
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill_n(dst, run, 0.0);
          } else {
            const double* src = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
            for (std::size_t t = 0; t < run; ++t) {
              const long ix =
                  static_cast<long>((ox0 + t) * g.stride + kj) - static_cast<long>(g.pad);
              dst[t] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
            }
          }
          dst += run;
          p += run;
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeom& g, std::size_t p0, std::size_t p1, double* img) {
  const std::size_t T = p1 - p0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* src = cols + ((c * g.kh + ki) * g.kw + kj) * T;
        std::size_t p = p0;
        while (p < p1) {
          const std::size_t oy = p / g.ow, ox0 = p % g.ow;
          const std::size_t run = std::min(g.ow - ox0, p1 - p);
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy >= 0 && iy < static_cast<long>(g.h)) {
            double* dst = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
            for (std::size_t t = 0; t < run; ++t) {
              const long ix =
                  static_cast<long>((ox0 + t) * g.stride + kj) - static_cast<long>(g.pad);
              if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[t];
            }
          }
          src += run;
          p += run;
        }
      }
    }
  }
}

// Output pixels per column tile; keeps a K x T tile around 256 KiB.
std::size_t tile_width(std::size_t K, std::size_t P) {
  const std::size_t t = std::max<std::size_t>(64, (std::size_t{1} << 15) / K);
  return std::min(t, P);
}

ConvGeom geometry(const Tensor& input, const Tensor& weight, std::size_t stride,
                  std::size_t padding) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw DimensionError("conv2d: expected rank-4 input and weight, got " +
                         shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  }
  if (stride == 0) throw ParameterError("conv2d: stride must be positive");
  ConvGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0),
             weight.dim(2), weight.dim(3), stride, padding, 0, 0};
  if (weight.dim(1) != g.cin) {
    throw DimensionError("conv2d: input channels " + std::to_string(g.cin) +
                         " do not match weight " + shape_str(weight.shape()));
  }
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) +
                         " larger than padded input " + shape_str(input.shape()));
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;
  return g;
}

Tensor conv_impl(const Tensor& input, const Tensor& weight, const Tensor* bias,
                 std::size_t stride, std::size_t padding) {
  const ConvGeom g = geometry(input, weight, stride, padding);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias " + shape_str(bias->shape()) + " for " +
                         std::to_string(g.cout) + " output channels");
  }
  const std::size_t K = g.k(), P = g.opix();
  const std::size_t in_stride = g.cin * g.h * g.w, out_stride = g.cout * P;
  const std::size_t T = tile_width(K, P);
  std::vector<double> out(g.n * out_stride);
  std::vector<double> cols(K * T);
  ConstMapMat Wm(weight.data().data(), g.cout, K);
  for (std::size_t b = 0; b < g.n; ++b) {
    const double* img = input.data().data() + b * in_stride;
    MapMat O(out.data() + b * out_stride, g.cout, P);
    for (std::size_t p0 = 0; p0 < P; p0 += T) {
      const std::size_t t = std::min(T, P - p0);
      im2col(img, g, p0, p0 + t, cols.data());
      O.middleCols(p0, t).noalias() = Wm * ConstMapMat(cols.data(), K, t);
    }
    if (bias) {
      for (std::size_t c = 0; c < g.cout; ++c) O.row(c).array() += (*bias)[c];
    }
  }

  std::vector<Tensor> parents{input, weight};
  if (bias) parents.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return Tensor::make_result(
      {g.n, g.cout, g.oh, g.ow}, std::move(out), std::move(parents), [g, has_bias](detail::Node& o) {
        const std::size_t K = g.k(), P = g.opix();
        const std::size_t in_stride = g.cin * g.h * g.w, out_stride = g.cout * P;
        const detail::Node& in = *o.parents[0];
        const detail::Node& wt = *o.parents[1];
        const bool g_in = in.requires_grad, g_w = wt.requires_grad;
        const bool g_b = has_bias && o.parents[2]->requires_grad;
        if (g_b) {
          auto& gb = o.parents[2]->ensure_grad();
          for (std::size_t b = 0; b < g.n; ++b)
            for (std::size_t c = 0; c < g.cout; ++c) {
              const double* row = o.grad.data() + b * out_stride + c * P;
              double s = 0.0;
              for (std::size_t p = 0; p < P; ++p) s += row[p];
              gb[c] += s;
            }
        }
        if (!g_in && !g_w) return;
        const std::size_t T = tile_width(K, P);
        std::vector<double> cols(K * T);
        std::vector<double> dcols(g_in ? K * T : 0);
        ConstMapMat Wm(wt.data.data(), g.cout, K);
        double* gw_ptr = g_w ? o.parents[1]->ensure_grad().data() : nullptr;
        double* gi_ptr = g_in ? o.parents[0]->ensure_grad().data() : nullptr;
        for (std::size_t b = 0; b < g.n; ++b) {
          ConstMapMat G(o.grad.data() + b * out_stride, g.cout, P);
          for (std::size_t p0 = 0; p0 < P; p0 += T) {
            const std::size_t t = std::min(T, P - p0);
            if (g_w) {
              im2col(in.data.data() + b * in_stride, g, p0, p0 + t, cols.data());
              MapMat GW(gw_ptr, g.cout, K);
              GW.noalias() += G.middleCols(p0, t) * ConstMapMat(cols.data(), K, t).transpose();
            }
            if (g_in) {
              MapMat DC(dcols.data(), K, t);
              DC.noalias() = Wm.transpose() * G.middleCols(p0, t);
              col2im(dcols.data(), g, p0, p0 + t, gi_ptr + b * in_stride);
            }
          }
        }
      });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding) {
  return conv_impl(input, weight, nullptr, stride, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  return conv_impl(input, weight, &bias, stride, padding);
}

}  // namespace redsr::ops
