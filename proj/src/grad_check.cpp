#include "splitwing/grad_check.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "splitwing/model.hpp"
#include "splitwing/rng.hpp"

namespace splitwing {

template <typename S>
double grad_check(const std::function<S(const std::vector<Tensor<S>>&)>& loss,
                  std::vector<Tensor<S>> points, double eps) {
  if (eps <= 0) throw ValidationError("grad_check eps must be positive");
  double worst = 0;
  for (auto& pt : points) {
    if (pt.grad.size() != pt.data.size())
      throw ValidationError("grad_check point lacks its analytic gradient");
    for (size_t i = 0; i < pt.data.size(); ++i) {
      const S saved = pt.data[i];
      pt.data[i] = saved + static_cast<S>(eps);
      const double up = static_cast<double>(loss(points));
      pt.data[i] = saved - static_cast<S>(eps);
      const double down = static_cast<double>(loss(points));
      pt.data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double rel =
          std::abs(static_cast<double>(pt.grad[i]) - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

template double grad_check<float>(
    const std::function<float(const std::vector<Tensor<float>>&)>&,
    std::vector<Tensor<float>>, double);
template double grad_check<double>(
    const std::function<double(const std::vector<Tensor<double>>&)>&,
    std::vector<Tensor<double>>, double);

namespace {

using T = Tensor<double>;

T random_tensor(Shape s, Rng rng, double lo, double hi) {
  T t = T::zeros(std::move(s));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

T random_labels(int64_t n, Rng rng) {
  T t = T::zeros({n, 1});
  for (double& v : t.data) v = static_cast<double>(rng.below(2));
  return t;
}

// Scalarizes a tensor output so any layer can be checked: L = sum(r .* out)
// with fixed random weights r, whose gradient w.r.t. out is exactly r.
double weighted_sum(const T& out, const T& r) {
  double s = 0;
  for (size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * r.data[i];
  return s;
}

double min_abs(const T& t) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : t.data) m = std::min(m, std::abs(v));
  return m;
}

// Smallest gap between the two largest positive values of any 2x2 window.
// Windows whose runner-up is clamped at zero cannot flip their argmax under
// a small perturbation (the relu margin already guards the crossing), so
// they are ignored.
double min_positive_pool_gap(const T& t) {
  const int64_t batch = t.shape[0], h = t.shape[1], w = t.shape[2], ch = t.shape[3];
  double m = std::numeric_limits<double>::infinity();
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t oh = 0; oh < (h + 1) / 2; ++oh)
      for (int64_t ow = 0; ow < (w + 1) / 2; ++ow)
        for (int64_t c = 0; c < ch; ++c) {
          double top1 = -std::numeric_limits<double>::infinity(), top2 = top1;
          for (int64_t dh = 0; dh < 2 && oh * 2 + dh < h; ++dh)
            for (int64_t dw = 0; dw < 2 && ow * 2 + dw < w; ++dw) {
              const double v =
                  t.data[(((n * h + oh * 2 + dh) * w) + ow * 2 + dw) * ch + c];
              if (v > top1) {
                top2 = top1;
                top1 = v;
              } else if (v > top2) {
                top2 = v;
              }
            }
          if (top2 > 0) m = std::min(m, top1 - top2);
        }
  return m;
}

constexpr double kReluMargin = 3e-3;
constexpr double kPoolMargin = 5e-3;
constexpr int kMaxAttempts = 500;

}  // namespace

double grad_check_conv2d(uint64_t seed, double eps) {
  Rng root(seed);
  T input = random_tensor({1, 4, 4, 2}, root.fork("in"), -1, 1);
  LayerParams<double> p;
  p.kernels = random_tensor({3, 3, 2, 3}, root.fork("k"), -0.7, 0.7);
  p.bias = random_tensor({3}, root.fork("b"), -0.5, 0.5);
  const T r = random_tensor({1, 4, 4, 3}, root.fork("r"), -1, 1);

  ConvGrads<double> g = conv2d_backward(input, p, r, 1, Padding::Same);
  input.grad = g.input.data;
  p.kernels.grad = g.params.kernels.data;
  p.bias.grad = g.params.bias.data;

  auto loss = [r](const std::vector<T>& pts) {
    LayerParams<double> q{pts[1], pts[2]};
    return weighted_sum(conv2d(pts[0], q, 1, Padding::Same), r);
  };
  return grad_check<double>(loss, {input, p.kernels, p.bias}, eps);
}

double grad_check_dense(uint64_t seed, double eps) {
  Rng root(seed);
  T input = random_tensor({4, 8}, root.fork("in"), -1, 1);
  LayerParams<double> p;
  p.kernels = random_tensor({8, 3}, root.fork("k"), -0.7, 0.7);
  p.bias = random_tensor({3}, root.fork("b"), -0.5, 0.5);
  const T r = random_tensor({4, 3}, root.fork("r"), -1, 1);

  DenseGrads<double> g = dense_backward(input, p, r);
  input.grad = g.input.data;
  p.kernels.grad = g.params.kernels.data;
  p.bias.grad = g.params.bias.data;

  auto loss = [r](const std::vector<T>& pts) {
    LayerParams<double> q{pts[1], pts[2]};
    return weighted_sum(dense(pts[0], q), r);
  };
  return grad_check<double>(loss, {input, p.kernels, p.bias}, eps);
}

double grad_check_relu(uint64_t seed, double eps) {
  Rng root(seed);
  T input = T::zeros({64});
  {
    Rng rin = root.fork("in");
    for (double& v : input.data) {
      const double mag = rin.uniform(0.2, 1.0);  // bounded away from the kink
      v = rin.below(2) ? mag : -mag;
    }
  }
  const T r = random_tensor({64}, root.fork("r"), -1, 1);
  input.grad = relu_backward(input, r).data;

  auto loss = [r](const std::vector<T>& pts) { return weighted_sum(relu(pts[0]), r); };
  return grad_check<double>(loss, {input}, eps);
}

double grad_check_bce_sigmoid(uint64_t seed, double eps) {
  Rng root(seed);
  T logits = random_tensor({6, 1}, root.fork("z"), -2.5, 2.5);
  const T labels = random_labels(6, root.fork("y"));

  T p = sigmoid(logits);
  logits.grad = sigmoid_backward(p, bce_backward(p, labels)).data;

  auto loss = [labels](const std::vector<T>& pts) {
    return bce_loss(sigmoid(pts[0]), labels);
  };
  return grad_check<double>(loss, {logits}, eps);
}

double grad_check_client_chain(uint64_t seed, double eps) {
  ClientArch arch;
  arch.input_h = 8;
  arch.input_w = 8;
  arch.filters = 4;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng root = Rng(seed).fork("try", static_cast<uint64_t>(attempt));
    auto model = ClientModel<double>::init(arch, root.fork("model"), true);
    {
      Rng rb = root.fork("bias");
      for (double& b : model.conv.bias.data) b = rb.uniform(-0.3, 0.3);
    }
    T batch = random_tensor({2, 8, 8, 1}, root.fork("batch"), 0, 1);
    const T r = random_tensor({2, 8, 8, 4}, root.fork("r"), -1, 1);
    const T labels = T::zeros({2, 1});

    T conv_pre = conv2d(batch, model.conv, 1, Padding::Same);
    if (min_abs(conv_pre) < kReluMargin) continue;  // too close to a relu kink

    ClientGrads<double> cg = client_backward(model, batch, r);
    batch.grad = conv2d_backward(batch, model.conv, relu_backward(conv_pre, r), 1,
                                 Padding::Same)
                     .input.data;
    T kernels = model.conv.kernels;
    kernels.grad = cg.conv.kernels.data;
    T bias = model.conv.bias;
    bias.grad = cg.conv.bias.data;

    auto loss = [&arch, &model, r, labels](const std::vector<T>& pts) {
      ClientModel<double> m = model;
      m.conv.kernels = pts[1];
      m.conv.bias = pts[2];
      return weighted_sum(client_forward(m, pts[0], labels, 0, 0).features, r);
    };
    return grad_check<double>(loss, {batch, kernels, bias}, eps);
  }
  throw NumericError("grad_check_client_chain: no kink-free point found");
}

double grad_check_server_chain(uint64_t seed, double eps) {
  ServerArch arch;
  arch.block_channels = {3, 4, 4};
  arch.dense_hidden = 6;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng root = Rng(seed).fork("try", static_cast<uint64_t>(attempt));
    auto model = ServerModel<double>::init(arch, 2, 8, 8, root.fork("model"));
    {
      Rng rb = root.fork("bias");
      for (auto& blk : model.blocks)
        for (double& b : blk.bias.data) b = rb.uniform(-0.2, 0.2);
      for (double& b : model.hidden.bias.data) b = rb.uniform(-0.2, 0.2);
      for (double& b : model.out.bias.data) b = rb.uniform(-0.2, 0.2);
    }
    T features = random_tensor({1, 8, 8, 2}, root.fork("feat"), 0, 1);
    const T labels = random_labels(1, root.fork("y"));

    ServerForward<double> f = server_forward(model, features);
    bool clear = min_abs(f.cache.hidden_pre) >= kReluMargin &&
                 f.pred.data[0] > 0.05 && f.pred.data[0] < 0.95;
    for (size_t i = 0; clear && i < f.cache.conv_pre.size(); ++i) {
      clear = min_abs(f.cache.conv_pre[i]) >= kReluMargin &&
              min_positive_pool_gap(relu(f.cache.conv_pre[i])) >= kPoolMargin;
    }
    if (!clear) continue;

    ConcatOffsets whole;
    whole.client_ids.push_back(0);
    whole.ranges.emplace_back(0, 1);
    ServerBackward<double> sb = server_backward(model, f.cache, f.pred, labels, whole);

    std::vector<T> points;
    features.grad = sb.cut_slices.front().data;
    points.push_back(features);
    for (size_t i = 0; i < model.blocks.size(); ++i) {
      T k = model.blocks[i].kernels;
      k.grad = sb.grads.blocks[i].kernels.data;
      T b = model.blocks[i].bias;
      b.grad = sb.grads.blocks[i].bias.data;
      points.push_back(std::move(k));
      points.push_back(std::move(b));
    }
    for (auto [param, grad] : {std::pair{&model.hidden, &sb.grads.hidden},
                               std::pair{&model.out, &sb.grads.out}}) {
      T k = param->kernels;
      k.grad = grad->kernels.data;
      T b = param->bias;
      b.grad = grad->bias.data;
      points.push_back(std::move(k));
      points.push_back(std::move(b));
    }

    auto loss = [&model, labels](const std::vector<T>& pts) {
      ServerModel<double> m = model;
      size_t at = 1;
      for (auto& blk : m.blocks) {
        blk.kernels = pts[at++];
        blk.bias = pts[at++];
      }
      m.hidden.kernels = pts[at++];
      m.hidden.bias = pts[at++];
      m.out.kernels = pts[at++];
      m.out.bias = pts[at++];
      return bce_loss(server_forward(m, pts[0]).pred, labels);
    };
    return grad_check<double>(loss, std::move(points), eps);
  }
  throw NumericError("grad_check_server_chain: no kink-free point found");
}

}  // namespace splitwing
