#include "splitwing/model.hpp"

#include <algorithm>
#include <cstring>

namespace splitwing {

template <typename S>
ClientModel<S> ClientModel<S>::init(const ClientArch& arch, Rng rng, bool trainable) {
  ClientModel<S> m;
  m.conv = he_uniform_conv<S>(arch.kernel, arch.kernel, arch.in_channels, arch.filters,
                              rng.fork("conv"));
  m.input_h = arch.input_h;
  m.input_w = arch.input_w;
  m.trainable = trainable;
  return m;
}

template <typename S>
ServerModel<S> ServerModel<S>::init(const ServerArch& arch, int in_channels, int in_h,
                                    int in_w, Rng rng) {
  if (arch.block_channels.empty())
    throw ValidationError("server needs at least one conv block");
  if (arch.dense_hidden < 1) throw ValidationError("dense_hidden must be positive");
  ServerModel<S> m;
  int cin = in_channels;
  int h = in_h, w = in_w;
  for (size_t i = 0; i < arch.block_channels.size(); ++i) {
    const int cout = arch.block_channels[i];
    m.blocks.push_back(he_uniform_conv<S>(3, 3, cin, cout, rng.fork("block", i)));
    cin = cout;
    h = (h + 1) / 2;  // conv is same-padded; only the pool shrinks
    w = (w + 1) / 2;
  }
  const int flat = h * w * cin;
  m.hidden = he_uniform_dense<S>(flat, arch.dense_hidden, rng.fork("hidden"));
  m.out = xavier_uniform_dense<S>(arch.dense_hidden, 1, rng.fork("out"));
  return m;
}

template <typename S>
CutActivation<S> client_forward(const ClientModel<S>& model, const Tensor<S>& batch,
                                const Tensor<S>& labels, uint16_t client_id,
                                uint32_t round_id) {
  if (batch.rank() != 4)
    throw DimensionError("client batch must be rank 4, got " + shape_str(batch.shape));
  if (batch.shape[1] != model.input_h || batch.shape[2] != model.input_w)
    throw DimensionError("client expects " + std::to_string(model.input_h) + "x" +
                         std::to_string(model.input_w) + " input, got " +
                         shape_str(batch.shape));
  if (labels.rank() != 2 || labels.shape[0] != batch.shape[0] || labels.shape[1] != 1)
    throw DimensionError("labels " + shape_str(labels.shape) + " do not match batch " +
                         shape_str(batch.shape));
  CutActivation<S> cut;
  cut.features = relu(conv2d(batch, model.conv, 1, Padding::Same));
  cut.labels = labels;
  cut.client_id = client_id;
  cut.round_id = round_id;
  return cut;
}

template <typename S>
ConcatResult<S> concat_features(const std::vector<CutActivation<S>>& parts) {
  if (parts.empty()) throw ValidationError("concat_features on an empty part list");

  std::vector<const CutActivation<S>*> sorted;
  sorted.reserve(parts.size());
  for (const auto& p : parts) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->client_id < b->client_id; });

  const auto& first = *sorted.front();
  Shape tail(first.features.shape.begin() + 1, first.features.shape.end());
  int64_t total = 0;
  for (size_t i = 0; i < sorted.size(); ++i) {
    const auto& p = *sorted[i];
    if (i > 0 && p.client_id == sorted[i - 1]->client_id)
      throw ProtocolError(ProtocolCode::DuplicateFrame,
                          "two parts from client " + std::to_string(p.client_id));
    if (p.round_id != first.round_id)
      throw ProtocolError(ProtocolCode::RoundMismatch,
                          "part from client " + std::to_string(p.client_id) + " is round " +
                              std::to_string(p.round_id) + ", expected " +
                              std::to_string(first.round_id));
    if (p.features.rank() != 4 ||
        !std::equal(tail.begin(), tail.end(), p.features.shape.begin() + 1))
      throw ProtocolError(ProtocolCode::BadPayload,
                          "feature dims " + shape_str(p.features.shape) +
                              " do not match " + shape_str(first.features.shape));
    if (p.labels.rank() != 2 || p.labels.shape[0] != p.features.shape[0] ||
        p.labels.shape[1] != 1)
      throw ProtocolError(ProtocolCode::BadPayload,
                          "label block " + shape_str(p.labels.shape) +
                              " does not match features " + shape_str(p.features.shape));
    total += p.features.shape[0];
  }

  ConcatResult<S> r;
  Shape out_shape{total};
  out_shape.insert(out_shape.end(), tail.begin(), tail.end());
  r.features = Tensor<S>::zeros(out_shape);
  r.labels = Tensor<S>::zeros({total, 1});

  const int64_t row = shape_numel(tail);
  int64_t at = 0;
  for (const auto* p : sorted) {
    const int64_t b = p->features.shape[0];
    if (b > 0) {
      std::copy(p->features.data.begin(), p->features.data.end(),
                r.features.data.begin() + at * row);
      std::copy(p->labels.data.begin(), p->labels.data.end(), r.labels.data.begin() + at);
    }
    r.offsets.client_ids.push_back(p->client_id);
    r.offsets.ranges.emplace_back(at, at + b);
    at += b;
  }
  return r;
}

template <typename S>
ServerForward<S> server_forward(const ServerModel<S>& model, const Tensor<S>& features) {
  if (features.rank() != 4)
    throw DimensionError("server input must be rank 4, got " + shape_str(features.shape));
  if (features.shape[3] != model.blocks.front().kernels.shape[2])
    throw DimensionError("server expects " +
                         std::to_string(model.blocks.front().kernels.shape[2]) +
                         " input channels, got " + shape_str(features.shape));
  ServerForward<S> f;
  f.cache.input = features;
  const Tensor<S>* cur = &f.cache.input;
  for (const auto& block : model.blocks) {
    f.cache.conv_pre.push_back(conv2d(*cur, block, 1, Padding::Same));
    f.cache.pools.push_back(maxpool2(relu(f.cache.conv_pre.back())));
    cur = &f.cache.pools.back().output;
  }
  const int64_t batch = cur->shape[0];
  f.cache.flat = cur->reshaped({batch, batch > 0 ? cur->numel() / batch : model.hidden.kernels.shape[0]});
  f.cache.hidden_pre = dense(f.cache.flat, model.hidden);
  f.cache.hidden_act = relu(f.cache.hidden_pre);
  f.pred = sigmoid(dense(f.cache.hidden_act, model.out));
  return f;
}

template <typename S>
ServerBackward<S> server_backward(const ServerModel<S>& model, const ServerCache<S>& cache,
                                  const Tensor<S>& pred, const Tensor<S>& labels,
                                  const ConcatOffsets& offsets) {
  const int64_t batch = cache.input.shape[0];
  if (offsets.ranges.size() != offsets.client_ids.size())
    throw ProtocolError(ProtocolCode::BadPayload, "offset table is inconsistent");
  int64_t at = 0;
  for (const auto& [lo, hi] : offsets.ranges) {
    if (lo != at || hi < lo)
      throw ProtocolError(ProtocolCode::BadPayload, "offsets do not partition the batch");
    at = hi;
  }
  if (at != batch)
    throw ProtocolError(ProtocolCode::BadPayload,
                        "offsets cover " + std::to_string(at) + " rows of " +
                            std::to_string(batch));

  ServerBackward<S> r;
  Tensor<S> d_out_pre = sigmoid_backward(pred, bce_backward(pred, labels));
  DenseGrads<S> g_out = dense_backward(cache.hidden_act, model.out, d_out_pre);
  r.grads.out = std::move(g_out.params);
  Tensor<S> d_hidden_pre = relu_backward(cache.hidden_pre, g_out.input);
  DenseGrads<S> g_hidden = dense_backward(cache.flat, model.hidden, d_hidden_pre);
  r.grads.hidden = std::move(g_hidden.params);

  Tensor<S> d_cur = g_hidden.input.reshaped(cache.pools.back().output.shape);
  r.grads.blocks.resize(model.blocks.size());
  for (size_t i = model.blocks.size(); i-- > 0;) {
    Tensor<S> d_relu_out = maxpool2_backward(cache.pools[i], d_cur);
    Tensor<S> d_conv_pre = relu_backward(cache.conv_pre[i], d_relu_out);
    const Tensor<S>& block_in = i == 0 ? cache.input : cache.pools[i - 1].output;
    ConvGrads<S> cg = conv2d_backward(block_in, model.blocks[i], d_conv_pre, 1, Padding::Same);
    r.grads.blocks[i] = std::move(cg.params);
    d_cur = std::move(cg.input);
  }

  // d_cur is now the full cut-layer gradient; slice it per client
  Shape tail(cache.input.shape.begin() + 1, cache.input.shape.end());
  const int64_t row = shape_numel(tail);
  for (const auto& [lo, hi] : offsets.ranges) {
    Shape s{hi - lo};
    s.insert(s.end(), tail.begin(), tail.end());
    Tensor<S> slice = Tensor<S>::zeros(s);
    std::copy(d_cur.data.begin() + lo * row, d_cur.data.begin() + hi * row,
              slice.data.begin());
    r.cut_slices.push_back(std::move(slice));
  }
  return r;
}

template <typename S>
ClientGrads<S> client_backward(const ClientModel<S>& model, const Tensor<S>& batch,
                               const Tensor<S>& cut_grad_slice) {
  if (!model.trainable)
    throw ModeError("client_backward on a frozen client");
  Tensor<S> conv_pre = conv2d(batch, model.conv, 1, Padding::Same);
  if (cut_grad_slice.shape != conv_pre.shape)
    throw DimensionError("cut gradient " + shape_str(cut_grad_slice.shape) +
                         " does not match features " + shape_str(conv_pre.shape));
  Tensor<S> d_pre = relu_backward(conv_pre, cut_grad_slice);
  ConvGrads<S> cg = conv2d_backward(batch, model.conv, d_pre, 1, Padding::Same);
  return ClientGrads<S>{std::move(cg.params)};
}

template <typename S>
void apply_sgd(ClientModel<S>& model, const ClientGrads<S>& grads, S lr) {
  sgd_step_inplace(model.conv, grads.conv, lr);
}

template <typename S>
void apply_sgd(ServerModel<S>& model, const ServerGrads<S>& grads, S lr) {
  for (size_t i = 0; i < model.blocks.size(); ++i)
    sgd_step_inplace(model.blocks[i], grads.blocks[i], lr);
  sgd_step_inplace(model.hidden, grads.hidden, lr);
  sgd_step_inplace(model.out, grads.out, lr);
}

template <typename S>
MonolithicModel<S> compose_monolithic(ClientModel<S> client, ServerModel<S> server) {
  if (server.blocks.front().kernels.shape[2] != client.conv.kernels.shape[3])
    throw DimensionError("client emits " + std::to_string(client.conv.kernels.shape[3]) +
                         " channels but server expects " +
                         std::to_string(server.blocks.front().kernels.shape[2]));
  return MonolithicModel<S>{std::move(client), std::move(server)};
}

template <typename S>
MonoForward<S> mono_forward(const MonolithicModel<S>& model, const Tensor<S>& batch) {
  MonoForward<S> f;
  Tensor<S> labels = Tensor<S>::zeros({batch.shape.empty() ? 0 : batch.shape[0], 1});
  f.cache.cut = client_forward(model.client, batch, labels, 0, 0);
  ServerForward<S> sf = server_forward(model.server, f.cache.cut.features);
  f.pred = std::move(sf.pred);
  f.cache.server = std::move(sf.cache);
  return f;
}

template <typename S>
MonoGrads<S> mono_backward(const MonolithicModel<S>& model, const MonoCache<S>& cache,
                           const Tensor<S>& pred, const Tensor<S>& labels,
                           const Tensor<S>& batch) {
  ConcatOffsets whole;
  whole.client_ids.push_back(0);
  whole.ranges.emplace_back(0, cache.cut.features.shape[0]);
  ServerBackward<S> sb = server_backward(model.server, cache.server, pred, labels, whole);
  MonoGrads<S> g;
  g.server = std::move(sb.grads);
  g.client = client_backward(model.client, batch, sb.cut_slices.front());
  return g;
}

template <typename S>
uint64_t fingerprint(const LayerParams<S>& p, uint64_t h) {
  auto feed = [&h](const Tensor<S>& t) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(t.data.data());
    for (size_t i = 0; i < t.data.size() * sizeof(S); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  feed(p.kernels);
  feed(p.bias);
  return h;
}

template <typename S>
uint64_t fingerprint(const ClientModel<S>& m) {
  return fingerprint(m.conv);
}

template <typename S>
uint64_t fingerprint(const ServerModel<S>& m) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& b : m.blocks) h = fingerprint(b, h);
  h = fingerprint(m.hidden, h);
  return fingerprint(m.out, h);
}

#define SPLITWING_INSTANTIATE_MODEL(S)                                                   \
  template struct ClientModel<S>;                                                        \
  template struct ServerModel<S>;                                                        \
  template CutActivation<S> client_forward<S>(const ClientModel<S>&, const Tensor<S>&,   \
                                              const Tensor<S>&, uint16_t, uint32_t);     \
  template ConcatResult<S> concat_features<S>(const std::vector<CutActivation<S>>&);     \
  template ServerForward<S> server_forward<S>(const ServerModel<S>&, const Tensor<S>&);  \
  template ServerBackward<S> server_backward<S>(                                         \
      const ServerModel<S>&, const ServerCache<S>&, const Tensor<S>&, const Tensor<S>&,  \
      const ConcatOffsets&);                                                             \
  template ClientGrads<S> client_backward<S>(const ClientModel<S>&, const Tensor<S>&,    \
                                             const Tensor<S>&);                          \
  template void apply_sgd<S>(ClientModel<S>&, const ClientGrads<S>&, S);                 \
  template void apply_sgd<S>(ServerModel<S>&, const ServerGrads<S>&, S);                 \
  template MonolithicModel<S> compose_monolithic<S>(ClientModel<S>, ServerModel<S>);     \
  template MonoForward<S> mono_forward<S>(const MonolithicModel<S>&, const Tensor<S>&);  \
  template MonoGrads<S> mono_backward<S>(const MonolithicModel<S>&, const MonoCache<S>&, \
                                         const Tensor<S>&, const Tensor<S>&,             \
                                         const Tensor<S>&);                              \
  template uint64_t fingerprint<S>(const LayerParams<S>&, uint64_t);                     \
  template uint64_t fingerprint<S>(const ClientModel<S>&);                               \
  template uint64_t fingerprint<S>(const ServerModel<S>&);

SPLITWING_INSTANTIATE_MODEL(float)
SPLITWING_INSTANTIATE_MODEL(double)
#undef SPLITWING_INSTANTIATE_MODEL

}  // namespace splitwing
