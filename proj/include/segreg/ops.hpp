#pragma once

#include <vector>

#include "segreg/tensor.hpp"

namespace segreg {

enum class Mode { kTrain, kEval };

// Per-channel running moments for batch_norm eval mode.
struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    bool initialized = false;
    double momentum = 0.9;
    double eps = 1e-5;
};

// Element-wise arithmetic (matching shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double factor);

// Reductions to scalar.
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);

// Activations.
Tensor relu(const Tensor& t);
Tensor leaky_relu(const Tensor& t, double slope);
Tensor sigmoid(const Tensor& t);
// Softmax across the channel axis of [N,C,H,W], per spatial location.
Tensor softmax_channels(const Tensor& t);

// Cross-correlation of [N,Cin,H,W] with [Cout,Cin,k,k] plus bias [Cout].
// k must be odd. Output spatial extent is (H + 2*padding - k) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);

// 2x2 max pooling, stride 2; requires even spatial extents. Gradient routes
// to the window argmax, first index in scan order on ties.
Tensor maxpool2(const Tensor& t);
// Nearest-neighbour x2 upsampling.
Tensor upsample2(const Tensor& t);
// [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Channels [first, first+count) of [N,C,H,W].
Tensor slice_channels(const Tensor& t, int first, int count);
// [N,C,H,W] -> [N,C], per-channel maximum; gradient to the argmax element.
Tensor global_max_pool(const Tensor& t);
// [N,F] x [F,O] + [O] -> [N,O].
Tensor dense(const Tensor& t, const Tensor& weight, const Tensor& bias);

// Per-channel normalization of [N,C,H,W] over N,H,W. Train mode uses batch
// moments and updates the running ones; eval mode uses the running moments.
Tensor batch_norm(const Tensor& t, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode);

}  // namespace segreg
