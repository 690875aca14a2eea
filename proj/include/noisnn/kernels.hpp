#pragma once

// Graph-free compute kernels shared by the autodiff ops and the inference
// runtime. Layouts: activations NCHW, fc weights [in, out], conv kernels
// [cout, cin, 3, 3]. Convolutions are 3x3, stride 1, zero padding 1.

#include "noisnn/tensor.hpp"

namespace noisnn::kernels {

/// input [B, in] . weights [in, out] + bias [out]. An empty bias is skipped.
Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct FcGrads {
  Tensor input;  // empty unless requested
  Tensor weights;
  Tensor bias;
};
FcGrads fc_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                    bool want_input, bool want_bias);

/// Unfolded 3x3 patches: [cin * 9, B * H * W].
Tensor im2col3x3(const Tensor& input);

/// Writes the unfolded patch matrix to `cols_out` when non-null.
Tensor conv3x3_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                       Tensor* cols_out = nullptr);

struct ConvGrads {
  Tensor input;  // empty unless requested
  Tensor kernels;
  Tensor bias;
};
ConvGrads conv3x3_backward(const Tensor& grad_out, const Tensor& cols, const Tensor& kernels,
                           const Shape& input_shape, bool want_input, bool want_bias);

Tensor avgpool2_forward(const Tensor& input);
Tensor avgpool2_backward(const Tensor& grad_out, const Shape& input_shape);

void check_conv_shapes(const Tensor& input, const Tensor& kernels, const Tensor& bias);
void check_fc_shapes(const Tensor& input, const Tensor& weights, const Tensor& bias);

}  // namespace noisnn::kernels
