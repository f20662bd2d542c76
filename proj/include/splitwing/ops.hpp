#pragma once

#include "splitwing/rng.hpp"
#include "splitwing/tensor.hpp"

namespace splitwing {

enum class Padding { Same, Valid };

// Kernel + bias of one conv or dense layer.
//   conv:  kernels [kh, kw, cin, cout], bias [cout]
//   dense: kernels [in, out],           bias [out]
template <typename S>
struct LayerParams {
  Tensor<S> kernels;
  Tensor<S> bias;
};

// He-uniform init (fan_in based); biases start at zero.
template <typename S>
LayerParams<S> he_uniform_conv(int kh, int kw, int cin, int cout, Rng rng);
template <typename S>
LayerParams<S> he_uniform_dense(int in, int out, Rng rng);
// Xavier-uniform init for the output layer.
template <typename S>
LayerParams<S> xavier_uniform_dense(int in, int out, Rng rng);

// Spatial size of a conv output along one axis.
int64_t conv_out_dim(int64_t in, int64_t kernel, int64_t stride, Padding padding);

// 2-D convolution, NHWC. input [n,h,w,cin] -> [n,h',w',cout].
// Direct (naive-loop) algorithm; this is the project's reference convolution.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const LayerParams<S>& params, int stride,
                 Padding padding);

template <typename S>
struct ConvGrads {
  Tensor<S> input;
  LayerParams<S> params;
};

template <typename S>
ConvGrads<S> conv2d_backward(const Tensor<S>& input, const LayerParams<S>& params,
                             const Tensor<S>& upstream, int stride, Padding padding);

template <typename S>
Tensor<S> relu(const Tensor<S>& input);
// Subgradient at exactly 0 is 0.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& input, const Tensor<S>& upstream);

// 2x2 max pooling, stride 2. Odd spatial dims are padded on the bottom/right
// with a lowest-value sentinel, so every input size is accepted. Window ties
// resolve to the first position in row-major order.
template <typename S>
struct MaxPool {
  Tensor<S> output;
  std::vector<int64_t> argmax;  // flat index into the input per output element
  Shape input_shape;
};

template <typename S>
MaxPool<S> maxpool2(const Tensor<S>& input);
template <typename S>
Tensor<S> maxpool2_backward(const MaxPool<S>& pooled, const Tensor<S>& upstream);

// Fully connected layer. input [n,f] -> [n,g].
template <typename S>
Tensor<S> dense(const Tensor<S>& input, const LayerParams<S>& params);

template <typename S>
struct DenseGrads {
  Tensor<S> input;
  LayerParams<S> params;
};

template <typename S>
DenseGrads<S> dense_backward(const Tensor<S>& input, const LayerParams<S>& params,
                             const Tensor<S>& upstream);

// Numerically stable logistic function (branch form).
template <typename S>
Tensor<S> sigmoid(const Tensor<S>& input);
// `output` is the sigmoid *result*; dy/dx = y(1-y).
template <typename S>
Tensor<S> sigmoid_backward(const Tensor<S>& output, const Tensor<S>& upstream);

inline constexpr double kBceEpsilon = 1e-7;  // clamp bound before the log

// Mean binary cross-entropy. pred [n,1] in (0,1), labels [n,1] in {0,1}.
template <typename S>
S bce_loss(const Tensor<S>& pred, const Tensor<S>& labels);
// d(loss)/d(pred); zero where the clamp is active.
template <typename S>
Tensor<S> bce_backward(const Tensor<S>& pred, const Tensor<S>& labels);

// w - lr * g, elementwise. lr = 0 or g = 0 leaves w bitwise unchanged.
template <typename S>
Tensor<S> sgd_step(const Tensor<S>& param, const Tensor<S>& grad, S lr);
template <typename S>
void sgd_step_inplace(LayerParams<S>& params, const LayerParams<S>& grads, S lr);

extern template struct LayerParams<float>;
extern template struct LayerParams<double>;

#define SPLITWING_EXTERN_OPS(S)                                                       \
  extern template LayerParams<S> he_uniform_conv<S>(int, int, int, int, Rng);         \
  extern template LayerParams<S> he_uniform_dense<S>(int, int, Rng);                  \
  extern template LayerParams<S> xavier_uniform_dense<S>(int, int, Rng);              \
  extern template Tensor<S> conv2d<S>(const Tensor<S>&, const LayerParams<S>&, int,   \
                                      Padding);                                       \
  extern template ConvGrads<S> conv2d_backward<S>(                                    \
      const Tensor<S>&, const LayerParams<S>&, const Tensor<S>&, int, Padding);       \
  extern template Tensor<S> relu<S>(const Tensor<S>&);                                \
  extern template Tensor<S> relu_backward<S>(const Tensor<S>&, const Tensor<S>&);     \
  extern template MaxPool<S> maxpool2<S>(const Tensor<S>&);                           \
  extern template Tensor<S> maxpool2_backward<S>(const MaxPool<S>&, const Tensor<S>&);\
  extern template Tensor<S> dense<S>(const Tensor<S>&, const LayerParams<S>&);        \
  extern template DenseGrads<S> dense_backward<S>(                                    \
      const Tensor<S>&, const LayerParams<S>&, const Tensor<S>&);                     \
  extern template Tensor<S> sigmoid<S>(const Tensor<S>&);                             \
  extern template Tensor<S> sigmoid_backward<S>(const Tensor<S>&, const Tensor<S>&);  \
  extern template S bce_loss<S>(const Tensor<S>&, const Tensor<S>&);                  \
  extern template Tensor<S> bce_backward<S>(const Tensor<S>&, const Tensor<S>&);      \
  extern template Tensor<S> sgd_step<S>(const Tensor<S>&, const Tensor<S>&, S);       \
  extern template void sgd_step_inplace<S>(LayerParams<S>&, const LayerParams<S>&, S);

SPLITWING_EXTERN_OPS(float)
SPLITWING_EXTERN_OPS(double)
#undef SPLITWING_EXTERN_OPS

}  // namespace splitwing
