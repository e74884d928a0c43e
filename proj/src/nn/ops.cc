#include "maskmotion/nn/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "maskmotion/error.h"

namespace maskmotion::nn {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Error ShapeError(const std::string& op, const std::string& what) {
  return Error(ErrorCategory::kShapeMismatch, op + ": " + what);
}

// Sliding-window geometry over a [C, D, H, W] volume.
struct Geometry {
  int channels, depth, height, width;
  int kd, kh, kw;
  int sd, sh, sw;
  int pd, ph, pw;
  int out_d, out_h, out_w;

  int64_t Rows() const { return static_cast<int64_t>(channels) * kd * kh * kw; }
  int64_t Cols() const { return static_cast<int64_t>(out_d) * out_h * out_w; }
};

Geometry MakeGeometry(int c, int d, int h, int w, int kd, int kh, int kw,
                      std::array<int, 3> stride, std::array<int, 3> pad) {
  Geometry g{c, d, h, w, kd, kh, kw, stride[0], stride[1], stride[2],
             pad[0], pad[1], pad[2], 0, 0, 0};
  g.out_d = (d + 2 * g.pd - kd) / g.sd + 1;
  g.out_h = (h + 2 * g.ph - kh) / g.sh + 1;
  g.out_w = (w + 2 * g.pw - kw) / g.sw + 1;
  if (g.out_d < 1 || g.out_h < 1 || g.out_w < 1) {
    throw Error(ErrorCategory::kShapeMismatch,
                "convolution window larger than padded input");
  }
  return g;
}

void Im2Col(const float* src, const Geometry& g, float* col) {
  int64_t row = 0;
  const int64_t plane = static_cast<int64_t>(g.height) * g.width;
  for (int c = 0; c < g.channels; ++c) {
    for (int a = 0; a < g.kd; ++a) {
      for (int b = 0; b < g.kh; ++b) {
        for (int e = 0; e < g.kw; ++e, ++row) {
          float* out = col + row * g.Cols();
          for (int od = 0; od < g.out_d; ++od) {
            const int id = od * g.sd - g.pd + a;
            for (int oh = 0; oh < g.out_h; ++oh) {
              const int ih = oh * g.sh - g.ph + b;
              if (id < 0 || id >= g.depth || ih < 0 || ih >= g.height) {
                std::fill(out, out + g.out_w, 0.0f);
                out += g.out_w;
                continue;
              }
              const float* in_row =
                  src + ((static_cast<int64_t>(c) * g.depth + id) * plane +
                         static_cast<int64_t>(ih) * g.width);
              for (int ow = 0; ow < g.out_w; ++ow) {
                const int iw = ow * g.sw - g.pw + e;
                *out++ = (iw >= 0 && iw < g.width) ? in_row[iw] : 0.0f;
              }
            }
          }
        }
      }
    }
  }
}

// Scatter-add adjoint of Im2Col.
void Col2Im(const float* col, const Geometry& g, float* dst) {
  int64_t row = 0;
  const int64_t plane = static_cast<int64_t>(g.height) * g.width;
  for (int c = 0; c < g.channels; ++c) {
    for (int a = 0; a < g.kd; ++a) {
      for (int b = 0; b < g.kh; ++b) {
        for (int e = 0; e < g.kw; ++e, ++row) {
          const float* in = col + row * g.Cols();
          for (int od = 0; od < g.out_d; ++od) {
            const int id = od * g.sd - g.pd + a;
            for (int oh = 0; oh < g.out_h; ++oh) {
              const int ih = oh * g.sh - g.ph + b;
              if (id < 0 || id >= g.depth || ih < 0 || ih >= g.height) {
                in += g.out_w;
                continue;
              }
              float* out_row =
                  dst + ((static_cast<int64_t>(c) * g.depth + id) * plane +
                         static_cast<int64_t>(ih) * g.width);
              for (int ow = 0; ow < g.out_w; ++ow, ++in) {
                const int iw = ow * g.sw - g.pw + e;
                if (iw >= 0 && iw < g.width) out_row[iw] += *in;
              }
            }
          }
        }
      }
    }
  }
}

void AddBias(const float* bias, int channels, int64_t plane, float* y) {
  for (int o = 0; o < channels; ++o) {
    float* p = y + o * plane;
    for (int64_t i = 0; i < plane; ++i) p[i] += bias[o];
  }
}

void AccumulateBiasGrad(const float* dy, int channels, int64_t plane,
                        Tensor& db) {
  for (int o = 0; o < channels; ++o) {
    const float* p = dy + o * plane;
    double s = 0.0;
    for (int64_t i = 0; i < plane; ++i) s += p[i];
    db[o] += static_cast<float>(s);
  }
}

// Shared forward/backward for Conv2d and Conv3d on a [C,D,H,W] view.
Var ConvCore(const Var& x, const Var& weight, const Var& bias, const Geometry& g,
             std::vector<int> out_shape) {
  const int out_ch = weight->value.dim(0);
  if (bias && bias->value.numel() != out_ch) {
    throw ShapeError("conv", "bias " + bias->value.ShapeString() +
                                 " does not match " + std::to_string(out_ch) +
                                 " output channels");
  }
  auto col = std::make_shared<std::vector<float>>(
      static_cast<size_t>(g.Rows() * g.Cols()));
  Im2Col(x->value.data(), g, col->data());

  Tensor y(std::move(out_shape));
  ConstMatMap w(weight->value.data(), out_ch, g.Rows());
  ConstMatMap cm(col->data(), g.Rows(), g.Cols());
  MatMap ym(y.data(), out_ch, g.Cols());
  ym.noalias() = w * cm;
  if (bias) AddBias(bias->value.data(), out_ch, g.Cols(), y.data());

  return MakeResult(std::move(y), {x, weight, bias},
                    [g, col, out_ch](Node& self) {
    const Var& x = self.inputs[0];
    const Var& weight = self.inputs[1];
    const Var& bias = self.inputs[2];
    ConstMatMap dy(self.grad.data(), out_ch, g.Cols());
    if (weight->requires_grad) {
      MatMap dw(weight->EnsureGrad().data(), out_ch, g.Rows());
      ConstMatMap cm(col->data(), g.Rows(), g.Cols());
      dw.noalias() += dy * cm.transpose();
    }
    if (bias && bias->requires_grad) {
      AccumulateBiasGrad(self.grad.data(), out_ch, g.Cols(), bias->EnsureGrad());
    }
    if (x->requires_grad) {
      std::vector<float> dcol(static_cast<size_t>(g.Rows() * g.Cols()));
      ConstMatMap w(weight->value.data(), out_ch, g.Rows());
      MatMap dc(dcol.data(), g.Rows(), g.Cols());
      dc.noalias() = w.transpose() * dy;
      Col2Im(dcol.data(), g, x->EnsureGrad().data());
    }
  });
}

void CheckSameNumel(const std::string& op, const Var& a, const Var& b) {
  if (a->value.shape() != b->value.shape()) {
    throw ShapeError(op, a->value.ShapeString() + " vs " +
                             b->value.ShapeString());
  }
}

template <typename Fwd, typename Deriv>
Var Elementwise(const Var& x, Fwd fwd, Deriv deriv_from_output) {
  Tensor y(x->value.shape());
  const float* in = x->value.data();
  float* out = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) out[i] = fwd(in[i]);
  return MakeResult(std::move(y), {x}, [deriv_from_output](Node& self) {
    const Var& x = self.inputs[0];
    float* dx = x->EnsureGrad().data();
    const float* dy = self.grad.data();
    const float* yv = self.value.data();
    const float* xv = x->value.data();
    for (int64_t i = 0; i < self.value.numel(); ++i) {
      dx[i] += dy[i] * deriv_from_output(xv[i], yv[i]);
    }
  });
}

}  // namespace

Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int pad) {
  const auto& xs = x->value.shape();
  const auto& ws = weight->value.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0] || ws[2] != ws[3]) {
    throw ShapeError("conv2d", "input " + x->value.ShapeString() +
                                   ", weight " + weight->value.ShapeString());
  }
  Geometry g = MakeGeometry(xs[0], 1, xs[1], xs[2], 1, ws[2], ws[3],
                            {1, stride, stride}, {0, pad, pad});
  return ConvCore(x, weight, bias, g, {ws[0], g.out_h, g.out_w});
}

Var Conv3d(const Var& x, const Var& weight, const Var& bias,
           std::array<int, 3> stride, std::array<int, 3> pad) {
  const auto& xs = x->value.shape();
  const auto& ws = weight->value.shape();
  if (xs.size() != 4 || ws.size() != 5 || ws[1] != xs[0]) {
    throw ShapeError("conv3d", "input " + x->value.ShapeString() +
                                   ", weight " + weight->value.ShapeString());
  }
  Geometry g = MakeGeometry(xs[0], xs[1], xs[2], xs[3], ws[2], ws[3], ws[4],
                            stride, pad);
  return ConvCore(x, weight, bias, g, {ws[0], g.out_d, g.out_h, g.out_w});
}

Var ConvTranspose2d(const Var& x, const Var& weight, const Var& bias,
                    int stride, int pad, int output_pad) {
  const auto& xs = x->value.shape();
  const auto& ws = weight->value.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[0] != xs[0] || ws[2] != ws[3]) {
    throw ShapeError("conv_transpose2d",
                     "input " + x->value.ShapeString() + ", weight " +
                         weight->value.ShapeString());
  }
  const int in_ch = xs[0];
  const int out_ch = ws[1];
  const int k = ws[2];
  const int out_h = (xs[1] - 1) * stride - 2 * pad + k + output_pad;
  const int out_w = (xs[2] - 1) * stride - 2 * pad + k + output_pad;
  // Geometry of the adjoint convolution mapping [O,out_h,out_w] -> [C,H,W].
  Geometry g{out_ch, 1, out_h, out_w, 1, k, k, 1, stride, stride,
             0, pad, pad, 1, xs[1], xs[2]};
  if (bias && bias->value.numel() != out_ch) {
    throw ShapeError("conv_transpose2d", "bias size mismatch");
  }
  const int64_t in_plane = static_cast<int64_t>(xs[1]) * xs[2];

  std::vector<float> col(static_cast<size_t>(g.Rows() * in_plane));
  ConstMatMap w(weight->value.data(), in_ch, g.Rows());
  ConstMatMap xm(x->value.data(), in_ch, in_plane);
  MatMap cm(col.data(), g.Rows(), in_plane);
  cm.noalias() = w.transpose() * xm;
  Tensor y({out_ch, out_h, out_w});
  Col2Im(col.data(), g, y.data());
  if (bias) {
    AddBias(bias->value.data(), out_ch,
            static_cast<int64_t>(out_h) * out_w, y.data());
  }

  return MakeResult(std::move(y), {x, weight, bias},
                    [g, in_ch, in_plane, out_ch](Node& self) {
    const Var& x = self.inputs[0];
    const Var& weight = self.inputs[1];
    const Var& bias = self.inputs[2];
    if (bias && bias->requires_grad) {
      AccumulateBiasGrad(self.grad.data(), out_ch,
                         static_cast<int64_t>(g.height) * g.width,
                         bias->EnsureGrad());
    }
    if (!x->requires_grad && !weight->requires_grad) return;
    std::vector<float> dcol(static_cast<size_t>(g.Rows() * in_plane));
    Im2Col(self.grad.data(), g, dcol.data());
    ConstMatMap dc(dcol.data(), g.Rows(), in_plane);
    if (weight->requires_grad) {
      MatMap dw(weight->EnsureGrad().data(), in_ch, g.Rows());
      ConstMatMap xm(x->value.data(), in_ch, in_plane);
      dw.noalias() += xm * dc.transpose();
    }
    if (x->requires_grad) {
      ConstMatMap w(weight->value.data(), in_ch, g.Rows());
      MatMap dx(x->EnsureGrad().data(), in_ch, in_plane);
      dx.noalias() += w * dc;
    }
  });
}

Var Relu(const Var& x) {
  return Elementwise(
      x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float in, float) { return in > 0.0f ? 1.0f : 0.0f; });
}

Var Sigmoid(const Var& x) {
  return Elementwise(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float out) { return out * (1.0f - out); });
}

Var Tanh(const Var& x) {
  return Elementwise(
      x, [](float v) { return std::tanh(v); },
      [](float, float out) { return 1.0f - out * out; });
}

Var Add(const Var& a, const Var& b) {
  CheckSameNumel("add", a, b);
  Tensor y = a->value;
  y.AddInPlace(b->value);
  return MakeResult(std::move(y), {a, b}, [](Node& self) {
    for (int i = 0; i < 2; ++i) {
      if (self.inputs[i]->requires_grad) {
        self.inputs[i]->EnsureGrad().AddInPlace(self.grad);
      }
    }
  });
}

Var Mul(const Var& a, const Var& b) {
  CheckSameNumel("mul", a, b);
  Tensor y(a->value.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] * b->value[i];
  return MakeResult(std::move(y), {a, b}, [](Node& self) {
    const Var& a = self.inputs[0];
    const Var& b = self.inputs[1];
    if (a->requires_grad) {
      Tensor& da = a->EnsureGrad();
      for (int64_t i = 0; i < da.numel(); ++i) da[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor& db = b->EnsureGrad();
      for (int64_t i = 0; i < db.numel(); ++i) db[i] += self.grad[i] * a->value[i];
    }
  });
}

Var Concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  std::vector<int> shape = parts[0]->value.shape();
  int total = 0;
  for (const auto& p : parts) {
    const auto& s = p->value.shape();
    if (s.size() != shape.size() ||
        !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw ShapeError("concat", p->value.ShapeString() + " vs " +
                                     parts[0]->value.ShapeString());
    }
    total += s[0];
  }
  shape[0] = total;
  Tensor y(shape);
  int64_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data(), p->value.data() + p->value.numel(),
              y.data() + offset);
    offset += p->value.numel();
  }
  return MakeResult(std::move(y), parts, [](Node& self) {
    int64_t offset = 0;
    for (const auto& p : self.inputs) {
      const int64_t n = p->value.numel();
      if (p->requires_grad) {
        float* dst = p->EnsureGrad().data();
        const float* src = self.grad.data() + offset;
        for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
      }
      offset += n;
    }
  });
}

Var Slice(const Var& x, int begin, int count) {
  const auto& s = x->value.shape();
  if (begin < 0 || count < 1 || begin + count > s[0]) {
    throw ShapeError("slice", "rows [" + std::to_string(begin) + ", " +
                                  std::to_string(begin + count) + ") of " +
                                  x->value.ShapeString());
  }
  std::vector<int> shape = s;
  shape[0] = count;
  const int64_t inner = x->value.numel() / s[0];
  Tensor y(shape);
  std::copy(x->value.data() + begin * inner,
            x->value.data() + (begin + count) * inner, y.data());
  return MakeResult(std::move(y), {x}, [begin, inner](Node& self) {
    float* dst = self.inputs[0]->EnsureGrad().data() + begin * inner;
    for (int64_t i = 0; i < self.grad.numel(); ++i) dst[i] += self.grad[i];
  });
}

Var Reshape(const Var& x, std::vector<int> shape) {
  if (NumElements(shape) != x->value.numel()) {
    throw ShapeError("reshape", "cannot view " + x->value.ShapeString() +
                                    " with " + std::to_string(NumElements(shape)) +
                                    " elements");
  }
  Tensor y(std::move(shape), std::vector<float>(x->value.values().begin(),
                                                x->value.values().end()));
  return MakeResult(std::move(y), {x}, [](Node& self) {
    self.inputs[0]->EnsureGrad().AddInPlace(self.grad);
  });
}

Var BroadcastSpatial(const Var& v, int height, int width) {
  const int channels = static_cast<int>(v->value.numel());
  const int64_t plane = static_cast<int64_t>(height) * width;
  Tensor y({channels, height, width});
  for (int c = 0; c < channels; ++c) {
    std::fill(y.data() + c * plane, y.data() + (c + 1) * plane, v->value[c]);
  }
  return MakeResult(std::move(y), {v}, [channels, plane](Node& self) {
    Tensor& dv = self.inputs[0]->EnsureGrad();
    for (int c = 0; c < channels; ++c) {
      double s = 0.0;
      for (int64_t i = 0; i < plane; ++i) s += self.grad[c * plane + i];
      dv[c] += static_cast<float>(s);
    }
  });
}

Var GlobalAvgPool(const Var& x) {
  const int channels = x->value.dim(0);
  const int64_t inner = x->value.numel() / channels;
  Tensor y({channels});
  for (int c = 0; c < channels; ++c) {
    double s = 0.0;
    for (int64_t i = 0; i < inner; ++i) s += x->value[c * inner + i];
    y[c] = static_cast<float>(s / inner);
  }
  return MakeResult(std::move(y), {x}, [channels, inner](Node& self) {
    Tensor& dx = self.inputs[0]->EnsureGrad();
    for (int c = 0; c < channels; ++c) {
      const float g = self.grad[c] / static_cast<float>(inner);
      for (int64_t i = 0; i < inner; ++i) dx[c * inner + i] += g;
    }
  });
}

Var Linear(const Var& x, const Var& weight, const Var& bias) {
  const auto& ws = weight->value.shape();
  if (ws.size() != 2 || ws[1] != x->value.numel() ||
      (bias && bias->value.numel() != ws[0])) {
    throw ShapeError("linear", "input " + x->value.ShapeString() +
                                   ", weight " + weight->value.ShapeString());
  }
  const int out = ws[0];
  const int in = ws[1];
  Tensor y({out});
  ConstMatMap w(weight->value.data(), out, in);
  Eigen::Map<const Eigen::VectorXf> xv(x->value.data(), in);
  Eigen::Map<Eigen::VectorXf> yv(y.data(), out);
  yv.noalias() = w * xv;
  if (bias) {
    for (int i = 0; i < out; ++i) y[i] += bias->value[i];
  }
  return MakeResult(std::move(y), {x, weight, bias}, [out, in](Node& self) {
    const Var& x = self.inputs[0];
    const Var& weight = self.inputs[1];
    const Var& bias = self.inputs[2];
    Eigen::Map<const Eigen::VectorXf> dy(self.grad.data(), out);
    if (weight->requires_grad) {
      MatMap dw(weight->EnsureGrad().data(), out, in);
      Eigen::Map<const Eigen::VectorXf> xv(x->value.data(), in);
      dw.noalias() += dy * xv.transpose();
    }
    if (bias && bias->requires_grad) {
      Tensor& db = bias->EnsureGrad();
      for (int i = 0; i < out; ++i) db[i] += self.grad[i];
    }
    if (x->requires_grad) {
      ConstMatMap w(weight->value.data(), out, in);
      Eigen::Map<Eigen::VectorXf> dx(x->EnsureGrad().data(), in);
      dx.noalias() += w.transpose() * dy;
    }
  });
}

Var UpsampleNearest2x(const Var& x) {
  const auto& s = x->value.shape();
  if (s.size() != 3) throw ShapeError("upsample", x->value.ShapeString());
  const int c = s[0], h = s[1], w = s[2];
  Tensor y({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    for (int r = 0; r < 2 * h; ++r) {
      for (int col = 0; col < 2 * w; ++col) {
        y[(static_cast<int64_t>(ch) * 2 * h + r) * 2 * w + col] =
            x->value[(static_cast<int64_t>(ch) * h + r / 2) * w + col / 2];
      }
    }
  }
  return MakeResult(std::move(y), {x}, [c, h, w](Node& self) {
    Tensor& dx = self.inputs[0]->EnsureGrad();
    for (int ch = 0; ch < c; ++ch) {
      for (int r = 0; r < 2 * h; ++r) {
        for (int col = 0; col < 2 * w; ++col) {
          dx[(static_cast<int64_t>(ch) * h + r / 2) * w + col / 2] +=
              self.grad[(static_cast<int64_t>(ch) * 2 * h + r) * 2 * w + col];
        }
      }
    }
  });
}

}  // namespace maskmotion::nn
