#pragma once

#include "segreg/tensor.hpp"

namespace segreg {

// All losses return scalar tensors and use batch-mean reduction.

// 1 - mean over foreground classes of (2*sum(y_hat*y)) / (sum(y_hat)+sum(y)+eps),
// averaged over the batch. y is expected binary, y_hat in [0,1]; both
// [N,C,H,W] with C the foreground classes only.
Tensor dice_loss(const Tensor& y_hat, const Tensor& y);

// Sum over all elements of (a-b)^2, divided by the batch extent (first axis
// when present, 1 otherwise). Backbone of the latent-space penalty.
Tensor sum_squared_difference(const Tensor& a, const Tensor& b);

// Mean over likelihood-map elements of -log(1-d_fake) - log(d_real).
// Values are clamped to [1e-7, 1-1e-7] before the log; the gradient is zero
// in the clamped region.
Tensor disc_loss(const Tensor& d_fake, const Tensor& d_real);

// Mean over likelihood-map elements of -log(d_fake), same clamping.
Tensor adv_loss(const Tensor& d_fake);

inline constexpr double kDiceEps = 1e-7;
inline constexpr double kLogClamp = 1e-7;

}  // namespace segreg
