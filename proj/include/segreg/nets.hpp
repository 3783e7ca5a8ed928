#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "segreg/ops.hpp"
#include "segreg/tensor.hpp"

namespace segreg {

struct ConvLayer {
    Tensor w;  // [Cout,Cin,k,k]
    Tensor b;  // [Cout]
    int pad = 1;
    int stride = 1;
};

struct NormLayer {
    Tensor gamma;
    Tensor beta;
    BatchNormState state;
};

// conv3x3 + BN + ReLU, twice.
struct ConvBlock {
    ConvLayer conv1;
    NormLayer bn1;
    ConvLayer conv2;
    NormLayer bn2;
};

struct SegNetConfig {
    int in_channels = 1;
    int num_classes = 1;  // foreground classes C
    int depth = 3;        // pooling stages
    int base_channels = 8;
    bool multi_head = false;  // softmax over C+1 channels; otherwise sigmoid over 1
};

struct AutoEncoderConfig {
    int in_channels = 1;  // C for the multi strategy, 1 otherwise
    int depth = 3;
    int base_channels = 8;
    int code_channels = 32;  // channel extent of the bottleneck feature map
};

struct DiscriminatorConfig {
    int in_channels = 2;  // mask channels + 1 conditioning image channel
    int depth = 3;
    int base_channels = 8;
};

// Segmentation network: UNet encoder/decoder with skip connections.
// Parameters are He-uniform initialized (zero biases, gamma 1 / beta 0),
// reproducible from the seed.
class UNet {
public:
    UNet(SegNetConfig cfg, std::uint64_t seed);

    // Requires spatial extents divisible by 2^depth. The multi head sums to
    // one over channels per pixel; the binary head lies in (0,1).
    Tensor forward(const Tensor& x, Mode mode);

    std::vector<Tensor> parameters() const;
    std::int64_t parameter_count() const;
    void set_trainable(bool on);
    const SegNetConfig& config() const { return cfg_; }
    int out_channels() const { return cfg_.multi_head ? cfg_.num_classes + 1 : 1; }

    std::vector<ConvBlock>& encoder_blocks() { return enc_; }
    ConvBlock& bottleneck_block() { return bottleneck_; }
    std::vector<ConvBlock>& decoder_blocks() { return dec_; }
    ConvLayer& head_layer() { return head_; }

private:
    SegNetConfig cfg_;
    std::vector<ConvBlock> enc_;
    ConvBlock bottleneck_;
    std::vector<ConvBlock> dec_;  // deepest first
    ConvLayer head_;
};

// Shape encoder F: per level conv3x3+BN+ReLU then pool; a final conv maps to
// code_channels, giving a bottleneck feature map of extent H/2^depth.
class ShapeEncoder {
public:
    ShapeEncoder(AutoEncoderConfig cfg, std::uint64_t seed);

    Tensor forward(const Tensor& y, Mode mode);

    std::vector<Tensor> parameters() const;
    void set_trainable(bool on);
    const AutoEncoderConfig& config() const { return cfg_; }

    std::vector<ConvLayer>& conv_layers() { return convs_; }
    std::vector<NormLayer>& norm_layers() { return norms_; }

private:
    AutoEncoderConfig cfg_;
    std::vector<ConvLayer> convs_;  // depth levels then bottleneck
    std::vector<NormLayer> norms_;
};

// Shape decoder G: mirrors the encoder with nearest-neighbour upsampling;
// sigmoid head reconstructs the mask channels.
class ShapeDecoder {
public:
    ShapeDecoder(AutoEncoderConfig cfg, std::uint64_t seed);

    Tensor forward(const Tensor& code, Mode mode);

    std::vector<Tensor> parameters() const;
    void set_trainable(bool on);
    const AutoEncoderConfig& config() const { return cfg_; }

    std::vector<ConvLayer>& conv_layers() { return convs_; }
    std::vector<NormLayer>& norm_layers() { return norms_; }
    ConvLayer& head_layer() { return head_; }

private:
    AutoEncoderConfig cfg_;
    std::vector<ConvLayer> convs_;
    std::vector<NormLayer> norms_;
    ConvLayer head_;
};

inline std::pair<ShapeEncoder, ShapeDecoder> build_autoencoder(const AutoEncoderConfig& cfg,
                                                               std::uint64_t seed) {
    return {ShapeEncoder(cfg, seed), ShapeDecoder(cfg, seed + 0x9e3779b9ull)};
}

// Conditional patch discriminator: judges mask plausibility given the image.
// conv3x3 + LeakyReLU(0.2) + pool per level, then a 1x1 conv + sigmoid
// likelihood map whose every value lies strictly in (0,1).
class Discriminator {
public:
    Discriminator(DiscriminatorConfig cfg, std::uint64_t seed);

    Tensor forward(const Tensor& y, const Tensor& x, Mode mode);

    std::vector<Tensor> parameters() const;
    void set_trainable(bool on);
    const DiscriminatorConfig& config() const { return cfg_; }

    std::vector<ConvLayer>& conv_layers() { return convs_; }
    ConvLayer& head_layer() { return head_; }

private:
    DiscriminatorConfig cfg_;
    std::vector<ConvLayer> convs_;
    ConvLayer head_;
};

// He-uniform conv kernel [cout,cin,k,k] with zero bias.
ConvLayer make_conv(int cin, int cout, int k, int pad, class Rng& rng);
NormLayer make_norm(int channels);

}  // namespace segreg
