#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "segreg/losses.hpp"
#include "segreg/nets.hpp"
#include "segreg/phantom.hpp"

namespace segreg {

enum class Regularization { kBase, kShape, kAdv, kCombined };

std::string regularization_name(Regularization r);
Regularization regularization_from_name(const std::string& name);

struct TrainConfig {
    double lambda1 = 1e-4;  // latent-space penalty weight
    double lambda2 = 1e-2;  // adversarial penalty weight
    double lr_ae = 1e-2;
    double lr_main = 1e-4;
    int epochs = 10;
    int batch_size = 8;
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::kMulti;
    Regularization regularization = Regularization::kBase;
    bool augment = true;
    // Diagnostic switch: pins the adversarial branch to an exact zero loss
    // and skips the discriminator entirely.
    bool stub_adversarial = false;

    int unet_depth = 3;
    int unet_base_channels = 8;
    int ae_depth = 3;
    int ae_base_channels = 8;
    int ae_code_channels = 32;
    int disc_depth = 3;
    int disc_base_channels = 8;
};

// One 2D training sample: normalized intensity slice plus its aligned binary
// mask channels (foreground classes only; channels*h*w).
struct SliceSample {
    std::vector<double> image;
    std::vector<std::uint8_t> masks;
    int channels = 0;
    int h = 0;
    int w = 0;
};

using SliceDataset = std::vector<SliceSample>;

// Mask-only sample for auto-encoder training.
struct MaskStack {
    std::vector<std::uint8_t> masks;
    int channels = 0;
    int h = 0;
    int w = 0;
};

struct EpochLogRow {
    int epoch = 0;
    double total = 0.0;
    double dice = 0.0;
    double shape = 0.0;
    double adv = 0.0;
    double disc = 0.0;
};

struct TrainLog {
    std::vector<EpochLogRow> epochs;
    std::vector<double> batch_total;  // per-batch total loss trajectory
    bool diverged = false;

    // Line-oriented records: epoch index then the mean dice/shape/adv/disc
    // terms, tab-separated.
    std::string to_tsv() const;
};

// ---------------------------------------------------------------------------
// Loss composition
// ---------------------------------------------------------------------------

// ||F(y_hat) - F(y)||^2 over the bottleneck feature map, batch-mean. The
// encoder must be frozen; gradient reaches y_hat only.
Tensor shape_loss(ShapeEncoder& encoder, const Tensor& y_hat, const Tensor& y);

struct CombinedLossTerms {
    Tensor total;
    double dice_value = 0.0;
    double shape_value = 0.0;
    double adv_value = 0.0;
};

// dice + lambda1*shape + lambda2*adv, exactly; absent branches contribute
// nothing. y_hat/y carry foreground channels, x the conditioning image.
CombinedLossTerms combined_loss(const Tensor& y_hat, const Tensor& y, const Tensor& x,
                                ShapeEncoder* encoder, Discriminator* discriminator,
                                double lambda1, double lambda2);

// ---------------------------------------------------------------------------
// Two-step training
// ---------------------------------------------------------------------------

struct AutoEncoderTrainResult {
    ShapeEncoder encoder;
    ShapeDecoder decoder;
    TrainLog log;
    double initial_loss = 0.0;  // mean reconstruction Dice loss before training
    double final_loss = 0.0;    // after the last epoch
};

// Step one: fit the auto-encoder on ground-truth masks with Dice loss.
AutoEncoderTrainResult train_autoencoder(const std::vector<MaskStack>& masks,
                                         const TrainConfig& cfg);

struct MainTrainResult {
    UNet unet;
    std::optional<Discriminator> discriminator;
    TrainLog log;
};

// Step two: alternating updates, one optimization step for each network per
// batch — discriminator first (on a detached prediction), then the segmenter
// with the regularized objective. encoder must be supplied exactly when the
// regularization uses the latent penalty, and is frozen throughout.
MainTrainResult train_main(const SliceDataset& data, const TrainConfig& cfg,
                           ShapeEncoder* encoder);

// Mean reconstruction Dice loss of the auto-encoder over a mask set (eval mode).
double autoencoder_reconstruction_loss(ShapeEncoder& encoder, ShapeDecoder& decoder,
                                       const std::vector<MaskStack>& masks);

}  // namespace segreg
