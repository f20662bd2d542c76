#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "splitwing/ops.hpp"

namespace splitwing {

// The client half: one conv + relu stage (the cut layer).
struct ClientArch {
  int input_h = 64;
  int input_w = 64;
  int kernel = 3;
  int in_channels = 1;
  int filters = 16;
};

// The server half: VGG-style conv3x3+relu+maxpool blocks, then
// dense -> relu -> dense(1) -> sigmoid.
struct ServerArch {
  std::vector<int> block_channels{32, 64, 64};
  int dense_hidden = 128;
};

template <typename S>
struct ClientModel {
  LayerParams<S> conv;  // stride 1, same padding
  int input_h = 64;
  int input_w = 64;
  bool trainable = false;

  static ClientModel init(const ClientArch& arch, Rng rng, bool trainable);
};

template <typename S>
struct ServerModel {
  std::vector<LayerParams<S>> blocks;
  LayerParams<S> hidden;
  LayerParams<S> out;

  static ServerModel init(const ServerArch& arch, int in_channels, int in_h, int in_w,
                          Rng rng);
};

// One client's contribution to a round: the cut-layer activations plus the
// labels that let the server compute the loss.
template <typename S>
struct CutActivation {
  Tensor<S> features;  // [b, h, w, c]; b may be 0
  Tensor<S> labels;    // [b, 1], values in {0,1}
  uint16_t client_id = 0;
  uint32_t round_id = 0;
};

template <typename S>
CutActivation<S> client_forward(const ClientModel<S>& model, const Tensor<S>& batch,
                                const Tensor<S>& labels, uint16_t client_id,
                                uint32_t round_id);

// Row ranges of each client's slice inside the concatenated batch,
// ascending client_id.
struct ConcatOffsets {
  std::vector<uint16_t> client_ids;
  std::vector<std::pair<int64_t, int64_t>> ranges;  // [start, end)
};

template <typename S>
struct ConcatResult {
  Tensor<S> features;  // [B, h, w, c]
  Tensor<S> labels;    // [B, 1]
  ConcatOffsets offsets;
};

// Batch-axis concatenation in ascending client_id order; invariant to
// arrival order of the parts.
template <typename S>
ConcatResult<S> concat_features(const std::vector<CutActivation<S>>& parts);

template <typename S>
struct ServerCache {
  Tensor<S> input;
  std::vector<Tensor<S>> conv_pre;  // per block, pre-relu
  std::vector<MaxPool<S>> pools;    // per block
  Tensor<S> flat;
  Tensor<S> hidden_pre;
  Tensor<S> hidden_act;
};

template <typename S>
struct ServerForward {
  Tensor<S> pred;  // [B, 1] in (0,1)
  ServerCache<S> cache;
};

template <typename S>
ServerForward<S> server_forward(const ServerModel<S>& model, const Tensor<S>& features);

template <typename S>
struct ServerGrads {
  std::vector<LayerParams<S>> blocks;
  LayerParams<S> hidden;
  LayerParams<S> out;
};

template <typename S>
struct ServerBackward {
  ServerGrads<S> grads;
  std::vector<Tensor<S>> cut_slices;  // per client, in offsets order
};

template <typename S>
ServerBackward<S> server_backward(const ServerModel<S>& model, const ServerCache<S>& cache,
                                  const Tensor<S>& pred, const Tensor<S>& labels,
                                  const ConcatOffsets& offsets);

template <typename S>
struct ClientGrads {
  LayerParams<S> conv;
};

// Gradients of the cut layer from this client's slice of the cut gradient.
// Throws ModeError when the model is frozen.
template <typename S>
ClientGrads<S> client_backward(const ClientModel<S>& model, const Tensor<S>& batch,
                               const Tensor<S>& cut_grad_slice);

template <typename S>
void apply_sgd(ClientModel<S>& model, const ClientGrads<S>& grads, S lr);
template <typename S>
void apply_sgd(ServerModel<S>& model, const ServerGrads<S>& grads, S lr);

// The same layer chain as one client + the server, run centrally. Used as the
// split-vs-central correctness oracle.
template <typename S>
struct MonolithicModel {
  ClientModel<S> client;
  ServerModel<S> server;
};

template <typename S>
MonolithicModel<S> compose_monolithic(ClientModel<S> client, ServerModel<S> server);

template <typename S>
struct MonoCache {
  CutActivation<S> cut;
  ServerCache<S> server;
};

template <typename S>
struct MonoForward {
  Tensor<S> pred;
  MonoCache<S> cache;
};

template <typename S>
MonoForward<S> mono_forward(const MonolithicModel<S>& model, const Tensor<S>& batch);

template <typename S>
struct MonoGrads {
  ClientGrads<S> client;
  ServerGrads<S> server;
};

template <typename S>
MonoGrads<S> mono_backward(const MonolithicModel<S>& model, const MonoCache<S>& cache,
                           const Tensor<S>& pred, const Tensor<S>& labels,
                           const Tensor<S>& batch);

// FNV-1a over the raw weight bytes; used to prove frozen weights never move.
template <typename S>
uint64_t fingerprint(const LayerParams<S>& p, uint64_t h = 0xcbf29ce484222325ull);
template <typename S>
uint64_t fingerprint(const ClientModel<S>& m);
template <typename S>
uint64_t fingerprint(const ServerModel<S>& m);

#define SPLITWING_EXTERN_MODEL(S)                                                        \
  extern template struct ClientModel<S>;                                                 \
  extern template struct ServerModel<S>;                                                 \
  extern template CutActivation<S> client_forward<S>(                                    \
      const ClientModel<S>&, const Tensor<S>&, const Tensor<S>&, uint16_t, uint32_t);    \
  extern template ConcatResult<S> concat_features<S>(                                    \
      const std::vector<CutActivation<S>>&);                                             \
  extern template ServerForward<S> server_forward<S>(const ServerModel<S>&,              \
                                                     const Tensor<S>&);                  \
  extern template ServerBackward<S> server_backward<S>(                                  \
      const ServerModel<S>&, const ServerCache<S>&, const Tensor<S>&, const Tensor<S>&,  \
      const ConcatOffsets&);                                                             \
  extern template ClientGrads<S> client_backward<S>(const ClientModel<S>&,               \
                                                    const Tensor<S>&, const Tensor<S>&); \
  extern template void apply_sgd<S>(ClientModel<S>&, const ClientGrads<S>&, S);          \
  extern template void apply_sgd<S>(ServerModel<S>&, const ServerGrads<S>&, S);          \
  extern template MonolithicModel<S> compose_monolithic<S>(ClientModel<S>,               \
                                                           ServerModel<S>);              \
  extern template MonoForward<S> mono_forward<S>(const MonolithicModel<S>&,              \
                                                 const Tensor<S>&);                      \
  extern template MonoGrads<S> mono_backward<S>(const MonolithicModel<S>&,               \
                                                const MonoCache<S>&, const Tensor<S>&,   \
                                                const Tensor<S>&, const Tensor<S>&);     \
  extern template uint64_t fingerprint<S>(const LayerParams<S>&, uint64_t);              \
  extern template uint64_t fingerprint<S>(const ClientModel<S>&);                        \
  extern template uint64_t fingerprint<S>(const ServerModel<S>&);

SPLITWING_EXTERN_MODEL(float)
SPLITWING_EXTERN_MODEL(double)
#undef SPLITWING_EXTERN_MODEL

}  // namespace splitwing
