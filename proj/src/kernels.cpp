#include "noisnn/kernels.hpp"

#include <algorithm>

#include <Eigen/Core>

#include "noisnn/error.hpp"

namespace noisnn::kernels {
namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using Index = Eigen::Index;

CMapR as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return CMapR(t.data(), static_cast<Index>(rows), static_cast<Index>(cols));
}

MapR as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapR(t.data(), static_cast<Index>(rows), static_cast<Index>(cols));
}

}  // namespace

void check_fc_shapes(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || input.dim(1) != weights.dim(0) ||
      (!bias.empty() && bias.shape() != Shape{weights.dim(1)})) {
    throw DimensionError("fc: input " + shape_str(input.shape()) + " does not conform to weights " +
                         shape_str(weights.shape()) + " / bias " + shape_str(bias.shape()));
  }
}

Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  check_fc_shapes(input, weights, bias);
  const std::size_t batch = input.dim(0), in = input.dim(1), out = weights.dim(1);
  Tensor result({batch, out});
  auto y = as_matrix(result, batch, out);
  y.noalias() = as_matrix(input, batch, in) * as_matrix(weights, in, out);
  if (!bias.empty()) {
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.data(), static_cast<Index>(out));
  }
  return result;
}

FcGrads fc_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                    bool want_input, bool want_bias) {
  const std::size_t batch = input.dim(0), in = input.dim(1), out = weights.dim(1);
  auto dy = as_matrix(grad_out, batch, out);
  FcGrads g;
  g.weights = Tensor({in, out});
  as_matrix(g.weights, in, out).noalias() = as_matrix(input, batch, in).transpose() * dy;
  if (want_bias) {
    // Plain loops here and below: Eigen's reductions peel by pointer
    // alignment, which makes the summation order depend on the heap.
    g.bias = Tensor({out});
    float* gb = g.bias.data();
    for (std::size_t b = 0; b < batch; ++b) {
      const float* row = grad_out.data() + b * out;
      for (std::size_t j = 0; j < out; ++j) gb[j] += row[j];
    }
  }
  if (want_input) {
    g.input = Tensor({batch, in});
    as_matrix(g.input, batch, in).noalias() = dy * as_matrix(weights, in, out).transpose();
  }
  return g;
}

void check_conv_shapes(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  if (input.rank() != 4 || kernels.rank() != 4 || kernels.dim(2) != 3 || kernels.dim(3) != 3) {
    throw DimensionError("conv2d: expected input [B,C,H,W] and kernels [Cout,Cin,3,3], got " +
                         shape_str(input.shape()) + " and " + shape_str(kernels.shape()));
  }
  if (input.dim(1) != kernels.dim(1)) {
    throw DimensionError("conv2d: channel mismatch, input " + shape_str(input.shape()) +
                         " vs kernels " + shape_str(kernels.shape()));
  }
  if (!bias.empty() && bias.shape() != Shape{kernels.dim(0)}) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " vs kernels " +
                         shape_str(kernels.shape()));
  }
}

Tensor im2col3x3(const Tensor& input) {
  const std::size_t batch = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t hw = h * w, ncols = batch * hw;
  Tensor cols({ch * 9, ncols});
  float* dst = cols.data();
  const float* src = input.data();
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        float* row = dst + ((c * 9) + ky * 3 + kx) * ncols;
        for (std::size_t b = 0; b < batch; ++b) {
          const float* plane = src + (b * ch + c) * hw;
          float* out = row + b * hw;
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;  // already zero
            const float* srow = plane + sy * w;
            float* orow = out + y * w;
            // valid x satisfy 0 <= x + kx - 1 < w
            const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? w - 1 : w;
            std::copy(srow + x0 + kx - 1, srow + x1 + kx - 1, orow + x0);
          }
        }
      }
    }
  }
  return cols;
}

Tensor conv3x3_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                       Tensor* cols_out) {
  check_conv_shapes(input, kernels, bias);
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernels.dim(0), hw = h * w;
  Tensor cols = im2col3x3(input);

  Tensor prod({cout, batch * hw});
  as_matrix(prod, cout, batch * hw).noalias() =
      as_matrix(kernels, cout, cin * 9) * as_matrix(cols, cin * 9, batch * hw);

  Tensor out({batch, cout, h, w});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const float* src = prod.data() + co * batch * hw + b * hw;
      float* dst = out.data() + (b * cout + co) * hw;
      const float bv = bias.empty() ? 0.0f : bias[co];
      for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p] + bv;
    }
  }
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

ConvGrads conv3x3_backward(const Tensor& grad_out, const Tensor& cols, const Tensor& kernels,
                           const Shape& input_shape, bool want_input, bool want_bias) {
  const std::size_t batch = input_shape[0], cin = input_shape[1], h = input_shape[2],
                    w = input_shape[3];
  const std::size_t cout = kernels.dim(0), hw = h * w, ncols = batch * hw;

  // [B, Cout, HW] -> [Cout, B*HW]
  Tensor dy({cout, ncols});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const float* src = grad_out.data() + (b * cout + co) * hw;
      std::copy(src, src + hw, dy.data() + co * ncols + b * hw);
    }
  }
  auto dy_m = as_matrix(dy, cout, ncols);

  ConvGrads g;
  g.kernels = Tensor(kernels.shape());
  as_matrix(g.kernels, cout, cin * 9).noalias() =
      dy_m * as_matrix(cols, cin * 9, ncols).transpose();
  if (want_bias) {
    g.bias = Tensor({cout});
    for (std::size_t co = 0; co < cout; ++co) {
      const float* row = dy.data() + co * ncols;
      float lanes[8] = {};
      std::size_t i = 0;
      for (; i + 8 <= ncols; i += 8) {
        for (std::size_t l = 0; l < 8; ++l) lanes[l] += row[i + l];
      }
      float total = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) +
                    ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
      for (; i < ncols; ++i) total += row[i];
      g.bias[co] = total;
    }
  }
  if (want_input) {
    Tensor dcols({cin * 9, ncols});
    as_matrix(dcols, cin * 9, ncols).noalias() =
        as_matrix(kernels, cout, cin * 9).transpose() * dy_m;
    g.input = Tensor(input_shape);
    float* dx = g.input.data();
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const float* row = dcols.data() + ((c * 9) + ky * 3 + kx) * ncols;
          for (std::size_t b = 0; b < batch; ++b) {
            float* plane = dx + (b * cin + c) * hw;
            const float* src = row + b * hw;
            for (std::size_t y = 0; y < h; ++y) {
              const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
              float* prow = plane + sy * w + kx;
              const float* srow = src + y * w;
              const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? w - 1 : w;
              for (std::size_t x = x0; x < x1; ++x) prow[x - 1] += srow[x];
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor avgpool2_forward(const Tensor& input) {
  if (input.rank() != 4 || input.dim(2) < 2 || input.dim(3) < 2) {
    throw DimensionError("avgpool2: input must be [B,C,H,W] with H,W >= 2, got " +
                         shape_str(input.shape()));
  }
  const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({input.dim(0), input.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = input.data() + p * h * w;
    float* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const float* r0 = src + (2 * y) * w;
      const float* r1 = r0 + w;
      for (std::size_t x = 0; x < ow; ++x) {
        dst[y * ow + x] = 0.25f * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
      }
    }
  }
  return out;
}

Tensor avgpool2_backward(const Tensor& grad_out, const Shape& input_shape) {
  const std::size_t planes = input_shape[0] * input_shape[1], h = input_shape[2],
                    w = input_shape[3];
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor dx(input_shape);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = grad_out.data() + p * oh * ow;
    float* dst = dx.data() + p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const float g = 0.25f * src[y * ow + x];
        dst[(2 * y) * w + 2 * x] = g;
        dst[(2 * y) * w + 2 * x + 1] = g;
        dst[(2 * y + 1) * w + 2 * x] = g;
        dst[(2 * y + 1) * w + 2 * x + 1] = g;
      }
    }
  }
  return dx;
}

}  // namespace noisnn::kernels
