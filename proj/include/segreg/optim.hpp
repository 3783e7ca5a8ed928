#pragma once

#include <vector>

#include "segreg/tensor.hpp"

namespace segreg {

// Bias-corrected Adam moments for one parameter list, in list order.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update over params from their accumulated grads (missing grad
// buffers count as zero). Lazily sizes the state on first call.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

void zero_grads(std::vector<Tensor>& params);

}  // namespace segreg
