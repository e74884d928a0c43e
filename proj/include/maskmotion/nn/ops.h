#ifndef MASKMOTION_NN_OPS_H_
#define MASKMOTION_NN_OPS_H_

#include <array>
#include <vector>

#include "maskmotion/nn/autograd.h"

namespace maskmotion::nn {

// Convolutions use im2col + GEMM. Shapes:
//   Conv2d          x [C,H,W],   w [O,C,k,k],       b [O]
//   Conv3d          x [C,D,H,W], w [O,C,kd,kh,kw],  b [O]
//   ConvTranspose2d x [C,H,W],   w [C,O,k,k],       b [O]
// `bias` may be null.
Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int pad);
Var Conv3d(const Var& x, const Var& weight, const Var& bias,
           std::array<int, 3> stride, std::array<int, 3> pad);
Var ConvTranspose2d(const Var& x, const Var& weight, const Var& bias,
                    int stride, int pad, int output_pad = 0);

Var Relu(const Var& x);
Var Sigmoid(const Var& x);
Var Tanh(const Var& x);
Var Add(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);

// Concatenate along axis 0; trailing dimensions must agree.
Var Concat(const std::vector<Var>& parts);
// Rows [begin, begin + count) of axis 0.
Var Slice(const Var& x, int begin, int count);
Var Reshape(const Var& x, std::vector<int> shape);

// v [L] -> [L,H,W], each channel constant.
Var BroadcastSpatial(const Var& v, int height, int width);
// x [C,...] -> [C], mean over all trailing axes.
Var GlobalAvgPool(const Var& x);
// x [in] -> weight [out,in] * x + bias [out].
Var Linear(const Var& x, const Var& weight, const Var& bias);
// x [C,H,W] -> [C,2H,2W].
Var UpsampleNearest2x(const Var& x);

}  // namespace maskmotion::nn

#endif  // MASKMOTION_NN_OPS_H_
