#include "segreg/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "segreg/rng.hpp"

namespace segreg {

ConvLayer make_conv(int cin, int cout, int k, int pad, Rng& rng) {
    ConvLayer layer;
    const double limit = std::sqrt(6.0 / (static_cast<double>(cin) * k * k));
    std::vector<double> w(static_cast<std::size_t>(cout) * cin * k * k);
    for (auto& v : w) v = rng.uniform(-limit, limit);
    layer.w = Tensor::from_data({cout, cin, k, k}, std::move(w), true);
    layer.b = Tensor::zeros({cout}, true);
    layer.pad = pad;
    return layer;
}

NormLayer make_norm(int channels) {
    NormLayer layer;
    layer.gamma = Tensor::full({channels}, 1.0, true);
    layer.beta = Tensor::zeros({channels}, true);
    return layer;
}

namespace {

ConvBlock make_block(int cin, int cout, Rng& rng) {
    ConvBlock b;
    b.conv1 = make_conv(cin, cout, 3, 1, rng);
    b.bn1 = make_norm(cout);
    b.conv2 = make_conv(cout, cout, 3, 1, rng);
    b.bn2 = make_norm(cout);
    return b;
}

Tensor run_block(ConvBlock& b, const Tensor& x, Mode mode) {
    Tensor t = conv2d(x, b.conv1.w, b.conv1.b, 1, b.conv1.pad);
    t = relu(batch_norm(t, b.bn1.gamma, b.bn1.beta, b.bn1.state, mode));
    t = conv2d(t, b.conv2.w, b.conv2.b, 1, b.conv2.pad);
    return relu(batch_norm(t, b.bn2.gamma, b.bn2.beta, b.bn2.state, mode));
}

void push_block(std::vector<Tensor>& out, const ConvBlock& b) {
    out.push_back(b.conv1.w);
    out.push_back(b.conv1.b);
    out.push_back(b.bn1.gamma);
    out.push_back(b.bn1.beta);
    out.push_back(b.conv2.w);
    out.push_back(b.conv2.b);
    out.push_back(b.bn2.gamma);
    out.push_back(b.bn2.beta);
}

void set_trainable_all(std::vector<Tensor> params, bool on) {
    for (auto& p : params) p.set_requires_grad(on);
}

}  // namespace

// ---------------------------------------------------------------------------
// UNet
// ---------------------------------------------------------------------------

UNet::UNet(SegNetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.num_classes < 1 || cfg.depth < 1 || cfg.base_channels < 1 || cfg.in_channels < 1) {
        throw std::invalid_argument("UNet: invalid config");
    }
    Rng rng = Rng::stream(seed, "unet-init");
    int ch = cfg.in_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        const int cout = cfg.base_channels << i;
        enc_.push_back(make_block(ch, cout, rng));
        ch = cout;
    }
    bottleneck_ = make_block(ch, cfg.base_channels << cfg.depth, rng);
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int skip = cfg.base_channels << i;
        const int up = cfg.base_channels << (i + 1);
        dec_.push_back(make_block(skip + up, skip, rng));
    }
    head_ = make_conv(cfg.base_channels, out_channels(), 1, 0, rng);
}

Tensor UNet::forward(const Tensor& x, Mode mode) {
    if (x.shape().size() != 4 || x.extent(1) != cfg_.in_channels) {
        throw std::invalid_argument("UNet::forward: expected [N," + std::to_string(cfg_.in_channels) +
                                    ",H,W], got " + format_shape(x.shape()));
    }
    const int div = 1 << cfg_.depth;
    if (x.extent(2) % div != 0 || x.extent(3) % div != 0) {
        throw std::invalid_argument("UNet::forward: spatial extents of " + format_shape(x.shape()) +
                                    " not divisible by 2^depth=" + std::to_string(div));
    }
    std::vector<Tensor> skips;
    Tensor cur = x;
    for (auto& block : enc_) {
        cur = run_block(block, cur, mode);
        skips.push_back(cur);
        cur = maxpool2(cur);
    }
    cur = run_block(bottleneck_, cur, mode);
    for (std::size_t i = 0; i < dec_.size(); ++i) {
        cur = upsample2(cur);
        cur = concat_channels(skips[skips.size() - 1 - i], cur);
        cur = run_block(dec_[i], cur, mode);
    }
    Tensor logits = conv2d(cur, head_.w, head_.b, 1, 0);
    return cfg_.multi_head ? softmax_channels(logits) : sigmoid(logits);
}

std::vector<Tensor> UNet::parameters() const {
    std::vector<Tensor> out;
    for (const auto& b : enc_) push_block(out, b);
    push_block(out, bottleneck_);
    for (const auto& b : dec_) push_block(out, b);
    out.push_back(head_.w);
    out.push_back(head_.b);
    return out;
}

std::int64_t UNet::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.size();
    return n;
}

void UNet::set_trainable(bool on) { set_trainable_all(parameters(), on); }

// ---------------------------------------------------------------------------
// Shape auto-encoder
// ---------------------------------------------------------------------------

ShapeEncoder::ShapeEncoder(AutoEncoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.in_channels < 1 || cfg.depth < 1 || cfg.base_channels < 1 || cfg.code_channels < 1) {
        throw std::invalid_argument("ShapeEncoder: invalid config");
    }
    Rng rng = Rng::stream(seed, "shape-encoder-init");
    int ch = cfg.in_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        const int cout = cfg.base_channels << i;
        convs_.push_back(make_conv(ch, cout, 3, 1, rng));
        norms_.push_back(make_norm(cout));
        ch = cout;
    }
    convs_.push_back(make_conv(ch, cfg.code_channels, 3, 1, rng));
    norms_.push_back(make_norm(cfg.code_channels));
}

Tensor ShapeEncoder::forward(const Tensor& y, Mode mode) {
    if (y.shape().size() != 4 || y.extent(1) != cfg_.in_channels) {
        throw std::invalid_argument("ShapeEncoder::forward: expected [N," +
                                    std::to_string(cfg_.in_channels) + ",H,W], got " +
                                    format_shape(y.shape()));
    }
    const int div = 1 << cfg_.depth;
    if (y.extent(2) % div != 0 || y.extent(3) % div != 0) {
        throw std::invalid_argument("ShapeEncoder::forward: spatial extents of " +
                                    format_shape(y.shape()) + " not divisible by " + std::to_string(div));
    }
    Tensor cur = y;
    for (int i = 0; i < cfg_.depth; ++i) {
        cur = conv2d(cur, convs_[i].w, convs_[i].b, 1, convs_[i].pad);
        cur = relu(batch_norm(cur, norms_[i].gamma, norms_[i].beta, norms_[i].state, mode));
        cur = maxpool2(cur);
    }
    cur = conv2d(cur, convs_.back().w, convs_.back().b, 1, convs_.back().pad);
    return relu(batch_norm(cur, norms_.back().gamma, norms_.back().beta, norms_.back().state, mode));
}

std::vector<Tensor> ShapeEncoder::parameters() const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        out.push_back(convs_[i].w);
        out.push_back(convs_[i].b);
        out.push_back(norms_[i].gamma);
        out.push_back(norms_[i].beta);
    }
    return out;
}

void ShapeEncoder::set_trainable(bool on) { set_trainable_all(parameters(), on); }

ShapeDecoder::ShapeDecoder(AutoEncoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng = Rng::stream(seed, "shape-decoder-init");
    int ch = cfg.code_channels;
    // two convs per level: one after the upsample, one to sharpen the
    // nearest-neighbour blocks before the next doubling
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int cout = cfg.base_channels << i;
        convs_.push_back(make_conv(ch, cout, 3, 1, rng));
        norms_.push_back(make_norm(cout));
        convs_.push_back(make_conv(cout, cout, 3, 1, rng));
        norms_.push_back(make_norm(cout));
        ch = cout;
    }
    head_ = make_conv(ch, cfg.in_channels, 1, 0, rng);
}

Tensor ShapeDecoder::forward(const Tensor& code, Mode mode) {
    if (code.shape().size() != 4 || code.extent(1) != cfg_.code_channels) {
        throw std::invalid_argument("ShapeDecoder::forward: expected [N," +
                                    std::to_string(cfg_.code_channels) + ",h,w], got " +
                                    format_shape(code.shape()));
    }
    Tensor cur = code;
    for (std::size_t i = 0; i < convs_.size(); i += 2) {
        cur = upsample2(cur);
        cur = conv2d(cur, convs_[i].w, convs_[i].b, 1, convs_[i].pad);
        cur = relu(batch_norm(cur, norms_[i].gamma, norms_[i].beta, norms_[i].state, mode));
        cur = conv2d(cur, convs_[i + 1].w, convs_[i + 1].b, 1, convs_[i + 1].pad);
        cur = relu(batch_norm(cur, norms_[i + 1].gamma, norms_[i + 1].beta, norms_[i + 1].state, mode));
    }
    return sigmoid(conv2d(cur, head_.w, head_.b, 1, 0));
}

std::vector<Tensor> ShapeDecoder::parameters() const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        out.push_back(convs_[i].w);
        out.push_back(convs_[i].b);
        out.push_back(norms_[i].gamma);
        out.push_back(norms_[i].beta);
    }
    out.push_back(head_.w);
    out.push_back(head_.b);
    return out;
}

void ShapeDecoder::set_trainable(bool on) { set_trainable_all(parameters(), on); }

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

Discriminator::Discriminator(DiscriminatorConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.in_channels < 2 || cfg.depth < 1 || cfg.base_channels < 1) {
        throw std::invalid_argument("Discriminator: invalid config");
    }
    Rng rng = Rng::stream(seed, "discriminator-init");
    int ch = cfg.in_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        const int cout = cfg.base_channels << i;
        convs_.push_back(make_conv(ch, cout, 3, 1, rng));
        ch = cout;
    }
    head_ = make_conv(ch, 1, 1, 0, rng);
}

Tensor Discriminator::forward(const Tensor& y, const Tensor& x, Mode mode) {
    (void)mode;  // no normalization layers; kept for interface symmetry
    Tensor cur = concat_channels(y, x);
    if (cur.extent(1) != cfg_.in_channels) {
        throw std::invalid_argument("Discriminator::forward: mask+image channels " +
                                    format_shape(cur.shape()) + " do not match configured " +
                                    std::to_string(cfg_.in_channels));
    }
    for (auto& layer : convs_) {
        cur = maxpool2(leaky_relu(conv2d(cur, layer.w, layer.b, 1, layer.pad), 0.2));
    }
    return sigmoid(conv2d(cur, head_.w, head_.b, 1, 0));
}

std::vector<Tensor> Discriminator::parameters() const {
    std::vector<Tensor> out;
    for (const auto& layer : convs_) {
        out.push_back(layer.w);
        out.push_back(layer.b);
    }
    out.push_back(head_.w);
    out.push_back(head_.b);
    return out;
}

void Discriminator::set_trainable(bool on) { set_trainable_all(parameters(), on); }

}  // namespace segreg
