#include "splitwing/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splitwing {
namespace {

int64_t pad_begin(int64_t in, int64_t kernel, int64_t stride, Padding padding,
                  int64_t out) {
  if (padding == Padding::Valid) return 0;
  int64_t total = std::max<int64_t>((out - 1) * stride + kernel - in, 0);
  return total / 2;
}

template <typename S>
void check_conv_args(const Tensor<S>& input, const LayerParams<S>& params, int stride,
                     Padding padding) {
  if (input.rank() != 4)
    throw DimensionError("conv2d input must be rank 4, got " + shape_str(input.shape));
  if (params.kernels.rank() != 4)
    throw DimensionError("conv2d kernels must be rank 4, got " +
                         shape_str(params.kernels.shape));
  if (params.kernels.shape[2] != input.shape[3])
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape) +
                         " vs kernels " + shape_str(params.kernels.shape));
  if (params.bias.rank() != 1 || params.bias.shape[0] != params.kernels.shape[3])
    throw DimensionError("conv2d bias " + shape_str(params.bias.shape) +
                         " does not match kernels " + shape_str(params.kernels.shape));
  if (stride < 1) throw ValidationError("conv2d stride must be >= 1");
  if (padding == Padding::Valid &&
      (input.shape[1] < params.kernels.shape[0] || input.shape[2] < params.kernels.shape[1]))
    throw DimensionError("conv2d valid padding needs input " + shape_str(input.shape) +
                         " at least kernel " + shape_str(params.kernels.shape));
  require_finite(input, "conv2d input");
}

}  // namespace

int64_t conv_out_dim(int64_t in, int64_t kernel, int64_t stride, Padding padding) {
  if (padding == Padding::Same) return (in + stride - 1) / stride;
  return (in - kernel) / stride + 1;
}

template <typename S>
LayerParams<S> he_uniform_conv(int kh, int kw, int cin, int cout, Rng rng) {
  if (kh < 1 || kw < 1 || cin < 1 || cout < 1)
    throw ValidationError("conv layer dims must be positive");
  double limit = std::sqrt(6.0 / (static_cast<double>(kh) * kw * cin));
  LayerParams<S> p;
  p.kernels = Tensor<S>::zeros({kh, kw, cin, cout});
  for (S& v : p.kernels.data) v = static_cast<S>(rng.uniform(-limit, limit));
  p.bias = Tensor<S>::zeros({cout});
  return p;
}

template <typename S>
LayerParams<S> he_uniform_dense(int in, int out, Rng rng) {
  if (in < 1 || out < 1) throw ValidationError("dense layer dims must be positive");
  double limit = std::sqrt(6.0 / in);
  LayerParams<S> p;
  p.kernels = Tensor<S>::zeros({in, out});
  for (S& v : p.kernels.data) v = static_cast<S>(rng.uniform(-limit, limit));
  p.bias = Tensor<S>::zeros({out});
  return p;
}

template <typename S>
LayerParams<S> xavier_uniform_dense(int in, int out, Rng rng) {
  if (in < 1 || out < 1) throw ValidationError("dense layer dims must be positive");
  double limit = std::sqrt(6.0 / (static_cast<double>(in) + out));
  LayerParams<S> p;
  p.kernels = Tensor<S>::zeros({in, out});
  for (S& v : p.kernels.data) v = static_cast<S>(rng.uniform(-limit, limit));
  p.bias = Tensor<S>::zeros({out});
  return p;
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const LayerParams<S>& params, int stride,
                 Padding padding) {
  check_conv_args(input, params, stride, padding);
  const int64_t batch = input.shape[0], in_h = input.shape[1], in_w = input.shape[2],
                cin = input.shape[3];
  const int64_t kh = params.kernels.shape[0], kw = params.kernels.shape[1],
                cout = params.kernels.shape[3];
  const int64_t out_h = conv_out_dim(in_h, kh, stride, padding);
  const int64_t out_w = conv_out_dim(in_w, kw, stride, padding);
  const int64_t pad_top = pad_begin(in_h, kh, stride, padding, out_h);
  const int64_t pad_left = pad_begin(in_w, kw, stride, padding, out_w);

  Tensor<S> out = Tensor<S>::zeros({batch, out_h, out_w, cout});
  const S* __restrict__ in = input.data.data();
  const S* __restrict__ ker = params.kernels.data.data();
  const S* __restrict__ bias = params.bias.data.data();
  S* __restrict__ dst = out.data.data();
  std::vector<S> acc_buf(static_cast<size_t>(cout));
  S* __restrict__ acc = acc_buf.data();

  for (int64_t n = 0; n < batch; ++n) {
    const S* in_n = in + n * in_h * in_w * cin;
    for (int64_t oh = 0; oh < out_h; ++oh) {
      const int64_t ih0 = oh * stride - pad_top;
      const int64_t kh_lo = std::max<int64_t>(0, -ih0);
      const int64_t kh_hi = std::min<int64_t>(kh, in_h - ih0);
      for (int64_t ow = 0; ow < out_w; ++ow) {
        const int64_t iw0 = ow * stride - pad_left;
        const int64_t kw_lo = std::max<int64_t>(0, -iw0);
        const int64_t kw_hi = std::min<int64_t>(kw, in_w - iw0);
        for (int64_t co = 0; co < cout; ++co) acc[co] = bias[co];
        for (int64_t k = kh_lo; k < kh_hi; ++k) {
          const S* in_row = in_n + ((ih0 + k) * in_w + iw0) * cin;
          const S* ker_row = ker + k * kw * cin * cout;
          for (int64_t l = kw_lo; l < kw_hi; ++l) {
            const S* px = in_row + l * cin;
            const S* kr = ker_row + l * cin * cout;
            for (int64_t ci = 0; ci < cin; ++ci) {
              const S v = px[ci];
              const S* kc = kr + ci * cout;
              for (int64_t co = 0; co < cout; ++co) acc[co] += v * kc[co];
            }
          }
        }
        S* out_px = dst + ((n * out_h + oh) * out_w + ow) * cout;
        for (int64_t co = 0; co < cout; ++co) out_px[co] = acc[co];
      }
    }
  }
  require_finite(out, "conv2d output");
  return out;
}

template <typename S>
ConvGrads<S> conv2d_backward(const Tensor<S>& input, const LayerParams<S>& params,
                             const Tensor<S>& upstream, int stride, Padding padding) {
  check_conv_args(input, params, stride, padding);
  const int64_t batch = input.shape[0], in_h = input.shape[1], in_w = input.shape[2],
                cin = input.shape[3];
  const int64_t kh = params.kernels.shape[0], kw = params.kernels.shape[1],
                cout = params.kernels.shape[3];
  const int64_t out_h = conv_out_dim(in_h, kh, stride, padding);
  const int64_t out_w = conv_out_dim(in_w, kw, stride, padding);
  const Shape expect{batch, out_h, out_w, cout};
  if (upstream.shape != expect)
    throw DimensionError("conv2d_backward upstream " + shape_str(upstream.shape) +
                         " does not match output " + shape_str(expect));
  require_finite(upstream, "conv2d_backward upstream");
  const int64_t pad_top = pad_begin(in_h, kh, stride, padding, out_h);
  const int64_t pad_left = pad_begin(in_w, kw, stride, padding, out_w);

  ConvGrads<S> g;
  g.input = Tensor<S>::zeros(input.shape);
  g.params.kernels = Tensor<S>::zeros(params.kernels.shape);
  g.params.bias = Tensor<S>::zeros(params.bias.shape);

  const S* __restrict__ in = input.data.data();
  const S* __restrict__ ker = params.kernels.data.data();
  const S* __restrict__ up = upstream.data.data();
  S* __restrict__ gin = g.input.data.data();
  S* __restrict__ gk = g.params.kernels.data.data();
  S* __restrict__ gb = g.params.bias.data.data();

  for (int64_t n = 0; n < batch; ++n) {
    const S* in_n = in + n * in_h * in_w * cin;
    S* gin_n = gin + n * in_h * in_w * cin;
    for (int64_t oh = 0; oh < out_h; ++oh) {
      const int64_t ih0 = oh * stride - pad_top;
      const int64_t kh_lo = std::max<int64_t>(0, -ih0);
      const int64_t kh_hi = std::min<int64_t>(kh, in_h - ih0);
      for (int64_t ow = 0; ow < out_w; ++ow) {
        const int64_t iw0 = ow * stride - pad_left;
        const int64_t kw_lo = std::max<int64_t>(0, -iw0);
        const int64_t kw_hi = std::min<int64_t>(kw, in_w - iw0);
        const S* up_px = up + ((n * out_h + oh) * out_w + ow) * cout;
        for (int64_t co = 0; co < cout; ++co) gb[co] += up_px[co];
        for (int64_t k = kh_lo; k < kh_hi; ++k) {
          const S* in_row = in_n + ((ih0 + k) * in_w + iw0) * cin;
          S* gin_row = gin_n + ((ih0 + k) * in_w + iw0) * cin;
          const int64_t k_base = k * kw * cin * cout;
          for (int64_t l = kw_lo; l < kw_hi; ++l) {
            const S* px = in_row + l * cin;
            S* gpx = gin_row + l * cin;
            const int64_t kl_base = k_base + l * cin * cout;
            for (int64_t ci = 0; ci < cin; ++ci) {
              const S v = px[ci];
              const S* kc = ker + kl_base + ci * cout;
              S* gkc = gk + kl_base + ci * cout;
              S gi = 0;
              for (int64_t co = 0; co < cout; ++co) {
                const S u = up_px[co];
                gkc[co] += v * u;
                gi += kc[co] * u;
              }
              gpx[ci] += gi;
            }
          }
        }
      }
    }
  }
  return g;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& input) {
  Tensor<S> out = input;
  out.grad.clear();
  for (S& v : out.data)
    if (!(v > S(0))) v = S(0);
  return out;
}

template <typename S>
Tensor<S> relu_backward(const Tensor<S>& input, const Tensor<S>& upstream) {
  if (input.shape != upstream.shape)
    throw DimensionError("relu_backward shapes differ: " + shape_str(input.shape) +
                         " vs " + shape_str(upstream.shape));
  Tensor<S> g = Tensor<S>::zeros(input.shape);
  for (size_t i = 0; i < input.data.size(); ++i)
    g.data[i] = input.data[i] > S(0) ? upstream.data[i] : S(0);
  return g;
}

template <typename S>
MaxPool<S> maxpool2(const Tensor<S>& input) {
  if (input.rank() != 4)
    throw DimensionError("maxpool2 input must be rank 4, got " + shape_str(input.shape));
  const int64_t batch = input.shape[0], in_h = input.shape[1], in_w = input.shape[2],
                ch = input.shape[3];
  const int64_t out_h = (in_h + 1) / 2;
  const int64_t out_w = (in_w + 1) / 2;

  MaxPool<S> r;
  r.input_shape = input.shape;
  r.output = Tensor<S>::zeros({batch, out_h, out_w, ch});
  r.argmax.assign(r.output.data.size(), 0);

  const S* in = input.data.data();
  S* out = r.output.data.data();
  int64_t* arg = r.argmax.data();
  std::vector<S> best(static_cast<size_t>(ch));
  std::vector<int64_t> best_at(static_cast<size_t>(ch));

  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t oh = 0; oh < out_h; ++oh) {
      for (int64_t ow = 0; ow < out_w; ++ow) {
        // (2*oh, 2*ow) is always in range; the other window taps may be
        // clipped at an odd bottom/right edge (sentinel padding semantics).
        const int64_t first = ((n * in_h + oh * 2) * in_w + ow * 2) * ch;
        for (int64_t c = 0; c < ch; ++c) {
          best[c] = in[first + c];
          best_at[c] = first + c;
        }
        for (int64_t dh = 0; dh < 2; ++dh) {
          const int64_t ih = oh * 2 + dh;
          if (ih >= in_h) break;
          for (int64_t dw = (dh == 0 ? 1 : 0); dw < 2; ++dw) {
            const int64_t iw = ow * 2 + dw;
            if (iw >= in_w) break;
            const int64_t base = ((n * in_h + ih) * in_w + iw) * ch;
            const S* px = in + base;
            for (int64_t c = 0; c < ch; ++c) {
              if (px[c] > best[c]) {  // strict: first window position wins ties
                best[c] = px[c];
                best_at[c] = base + c;
              }
            }
          }
        }
        const int64_t out_base = ((n * out_h + oh) * out_w + ow) * ch;
        for (int64_t c = 0; c < ch; ++c) {
          out[out_base + c] = best[c];
          arg[out_base + c] = best_at[c];
        }
      }
    }
  }
  return r;
}

template <typename S>
Tensor<S> maxpool2_backward(const MaxPool<S>& pooled, const Tensor<S>& upstream) {
  if (upstream.shape != pooled.output.shape)
    throw DimensionError("maxpool2_backward upstream " + shape_str(upstream.shape) +
                         " does not match pooled output " + shape_str(pooled.output.shape));
  Tensor<S> g = Tensor<S>::zeros(pooled.input_shape);
  for (size_t i = 0; i < upstream.data.size(); ++i)
    g.data[pooled.argmax[i]] += upstream.data[i];
  return g;
}

namespace {

template <typename S>
void check_dense_args(const Tensor<S>& input, const LayerParams<S>& params) {
  if (input.rank() != 2)
    throw DimensionError("dense input must be rank 2, got " + shape_str(input.shape));
  if (params.kernels.rank() != 2 || params.kernels.shape[0] != input.shape[1])
    throw DimensionError("dense weight " + shape_str(params.kernels.shape) +
                         " does not accept input " + shape_str(input.shape));
  if (params.bias.rank() != 1 || params.bias.shape[0] != params.kernels.shape[1])
    throw DimensionError("dense bias " + shape_str(params.bias.shape) +
                         " does not match weight " + shape_str(params.kernels.shape));
  require_finite(input, "dense input");
}

}  // namespace

template <typename S>
Tensor<S> dense(const Tensor<S>& input, const LayerParams<S>& params) {
  check_dense_args(input, params);
  const int64_t batch = input.shape[0], in_f = input.shape[1], out_f = params.kernels.shape[1];

  Tensor<S> out = Tensor<S>::zeros({batch, out_f});
  const S* __restrict__ in = input.data.data();
  const S* __restrict__ w = params.kernels.data.data();
  const S* __restrict__ bias = params.bias.data.data();
  S* __restrict__ dst = out.data.data();

  for (int64_t n = 0; n < batch; ++n) {
    S* row = dst + n * out_f;
    for (int64_t g = 0; g < out_f; ++g) row[g] = bias[g];
    const S* in_row = in + n * in_f;
    for (int64_t f = 0; f < in_f; ++f) {
      const S v = in_row[f];
      const S* wr = w + f * out_f;
      for (int64_t g = 0; g < out_f; ++g) row[g] += v * wr[g];
    }
  }
  require_finite(out, "dense output");
  return out;
}

template <typename S>
DenseGrads<S> dense_backward(const Tensor<S>& input, const LayerParams<S>& params,
                             const Tensor<S>& upstream) {
  check_dense_args(input, params);
  const int64_t batch = input.shape[0], in_f = input.shape[1], out_f = params.kernels.shape[1];
  const Shape expect{batch, out_f};
  if (upstream.shape != expect)
    throw DimensionError("dense_backward upstream " + shape_str(upstream.shape) +
                         " does not match output " + shape_str(expect));
  require_finite(upstream, "dense_backward upstream");
  DenseGrads<S> g;
  g.input = Tensor<S>::zeros(input.shape);
  g.params.kernels = Tensor<S>::zeros(params.kernels.shape);
  g.params.bias = Tensor<S>::zeros(params.bias.shape);

  const S* __restrict__ in = input.data.data();
  const S* __restrict__ w = params.kernels.data.data();
  const S* __restrict__ up = upstream.data.data();
  S* __restrict__ gin = g.input.data.data();
  S* __restrict__ gw = g.params.kernels.data.data();
  S* __restrict__ gb = g.params.bias.data.data();

  for (int64_t n = 0; n < batch; ++n) {
    const S* up_row = up + n * out_f;
    const S* in_row = in + n * in_f;
    S* gin_row = gin + n * in_f;
    for (int64_t k = 0; k < out_f; ++k) gb[k] += up_row[k];
    for (int64_t f = 0; f < in_f; ++f) {
      const S v = in_row[f];
      const S* wr = w + f * out_f;
      S* gwr = gw + f * out_f;
      S gi = 0;
      for (int64_t k = 0; k < out_f; ++k) {
        const S u = up_row[k];
        gwr[k] += v * u;
        gi += wr[k] * u;
      }
      gin_row[f] = gi;
    }
  }
  return g;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& input) {
  Tensor<S> out = Tensor<S>::zeros(input.shape);
  for (size_t i = 0; i < input.data.size(); ++i) {
    const double x = static_cast<double>(input.data[i]);
    double y;
    if (x >= 0) {
      const double e = std::exp(-x);
      y = 1.0 / (1.0 + e);
    } else {
      const double e = std::exp(x);
      y = e / (1.0 + e);
    }
    out.data[i] = static_cast<S>(y);
  }
  return out;
}

template <typename S>
Tensor<S> sigmoid_backward(const Tensor<S>& output, const Tensor<S>& upstream) {
  if (output.shape != upstream.shape)
    throw DimensionError("sigmoid_backward shapes differ: " + shape_str(output.shape) +
                         " vs " + shape_str(upstream.shape));
  Tensor<S> g = Tensor<S>::zeros(output.shape);
  for (size_t i = 0; i < output.data.size(); ++i) {
    const S y = output.data[i];
    g.data[i] = upstream.data[i] * y * (S(1) - y);
  }
  return g;
}

namespace {

template <typename S>
void check_bce_args(const Tensor<S>& pred, const Tensor<S>& labels) {
  if (pred.rank() != 2 || pred.shape[1] != 1)
    throw DimensionError("bce expects predictions [n,1], got " + shape_str(pred.shape));
  if (labels.shape != pred.shape)
    throw DimensionError("bce labels " + shape_str(labels.shape) +
                         " do not match predictions " + shape_str(pred.shape));
  if (pred.shape[0] < 1) throw ValidationError("bce on an empty batch");
  require_finite(pred, "bce predictions");
  for (S y : labels.data)
    if (y != S(0) && y != S(1))
      throw ValidationError("bce label outside {0,1}");
}

}  // namespace

template <typename S>
S bce_loss(const Tensor<S>& pred, const Tensor<S>& labels) {
  check_bce_args(pred, labels);
  const double lo = kBceEpsilon, hi = 1.0 - kBceEpsilon;
  double total = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred.data[i]), lo, hi);
    const double y = static_cast<double>(labels.data[i]);
    total += -(y * std::log(p) + (1.0 - y) * std::log1p(-p));
  }
  return static_cast<S>(total / static_cast<double>(pred.shape[0]));
}

template <typename S>
Tensor<S> bce_backward(const Tensor<S>& pred, const Tensor<S>& labels) {
  check_bce_args(pred, labels);
  const double lo = kBceEpsilon, hi = 1.0 - kBceEpsilon;
  const double inv_n = 1.0 / static_cast<double>(pred.shape[0]);
  Tensor<S> g = Tensor<S>::zeros(pred.shape);
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double p = static_cast<double>(pred.data[i]);
    if (p <= lo || p >= hi) continue;  // clamp region: flat
    const double y = static_cast<double>(labels.data[i]);
    g.data[i] = static_cast<S>((-y / p + (1.0 - y) / (1.0 - p)) * inv_n);
  }
  return g;
}

template <typename S>
Tensor<S> sgd_step(const Tensor<S>& param, const Tensor<S>& grad, S lr) {
  if (param.shape != grad.shape)
    throw DimensionError("sgd_step param " + shape_str(param.shape) +
                         " does not match grad " + shape_str(grad.shape));
  if (!(lr >= S(0))) throw ValidationError("sgd_step learning rate must be >= 0");
  Tensor<S> out = Tensor<S>::zeros(param.shape);
  for (size_t i = 0; i < param.data.size(); ++i)
    out.data[i] = param.data[i] - lr * grad.data[i];
  return out;
}

template <typename S>
void sgd_step_inplace(LayerParams<S>& params, const LayerParams<S>& grads, S lr) {
  params.kernels = sgd_step(params.kernels, grads.kernels, lr);
  params.bias = sgd_step(params.bias, grads.bias, lr);
}

template struct LayerParams<float>;
template struct LayerParams<double>;

#define SPLITWING_INSTANTIATE_OPS(S)                                                  \
  template LayerParams<S> he_uniform_conv<S>(int, int, int, int, Rng);                \
  template LayerParams<S> he_uniform_dense<S>(int, int, Rng);                         \
  template LayerParams<S> xavier_uniform_dense<S>(int, int, Rng);                     \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const LayerParams<S>&, int, Padding);\
  template ConvGrads<S> conv2d_backward<S>(const Tensor<S>&, const LayerParams<S>&,   \
                                           const Tensor<S>&, int, Padding);           \
  template Tensor<S> relu<S>(const Tensor<S>&);                                       \
  template Tensor<S> relu_backward<S>(const Tensor<S>&, const Tensor<S>&);            \
  template MaxPool<S> maxpool2<S>(const Tensor<S>&);                                  \
  template Tensor<S> maxpool2_backward<S>(const MaxPool<S>&, const Tensor<S>&);       \
  template Tensor<S> dense<S>(const Tensor<S>&, const LayerParams<S>&);               \
  template DenseGrads<S> dense_backward<S>(const Tensor<S>&, const LayerParams<S>&,   \
                                           const Tensor<S>&);                         \
  template Tensor<S> sigmoid<S>(const Tensor<S>&);                                    \
  template Tensor<S> sigmoid_backward<S>(const Tensor<S>&, const Tensor<S>&);         \
  template S bce_loss<S>(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> bce_backward<S>(const Tensor<S>&, const Tensor<S>&);             \
  template Tensor<S> sgd_step<S>(const Tensor<S>&, const Tensor<S>&, S);              \
  template void sgd_step_inplace<S>(LayerParams<S>&, const LayerParams<S>&, S);

SPLITWING_INSTANTIATE_OPS(float)
SPLITWING_INSTANTIATE_OPS(double)
#undef SPLITWING_INSTANTIATE_OPS

}  // namespace splitwing
