#pragma once

#include <functional>
#include <vector>

#include "splitwing/tensor.hpp"

namespace splitwing {

// Central-difference verification of analytic gradients.
//
// `loss` must be a pure scalar function of `points`. Each point tensor
// carries its analytic gradient in its `grad` field. Returns
//   max over every coordinate of |analytic - fd| / max(1, |fd|)
// where fd = (loss(x+eps) - loss(x-eps)) / (2 eps).
//
// Meaningful in 64-bit mode; f32 finite differences drown in rounding.
template <typename S>
double grad_check(const std::function<S(const std::vector<Tensor<S>>&)>& loss,
                  std::vector<Tensor<S>> points, double eps);

// Named layer specs used by the test and acceptance suites. Each builds a
// small randomly seeded instance, computes analytic gradients through the
// corresponding backward op, and runs grad_check over all parameters and
// inputs.
double grad_check_conv2d(uint64_t seed, double eps);
double grad_check_dense(uint64_t seed, double eps);
double grad_check_relu(uint64_t seed, double eps);
double grad_check_bce_sigmoid(uint64_t seed, double eps);
double grad_check_client_chain(uint64_t seed, double eps);
double grad_check_server_chain(uint64_t seed, double eps);

extern template double grad_check<float>(
    const std::function<float(const std::vector<Tensor<float>>&)>&,
    std::vector<Tensor<float>>, double);
extern template double grad_check<double>(
    const std::function<double(const std::vector<Tensor<double>>&)>&,
    std::vector<Tensor<double>>, double);

}  // namespace splitwing
