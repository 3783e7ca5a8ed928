#include "segreg/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "segreg/optim.hpp"

namespace segreg {

std::string regularization_name(Regularization r) {
    switch (r) {
        case Regularization::kBase: return "base";
        case Regularization::kShape: return "shape";
        case Regularization::kAdv: return "adv";
        case Regularization::kCombined: return "combined";
    }
    return "unknown";
}

Regularization regularization_from_name(const std::string& name) {
    if (name == "base") return Regularization::kBase;
    if (name == "shape") return Regularization::kShape;
    if (name == "adv") return Regularization::kAdv;
    if (name == "combined") return Regularization::kCombined;
    throw std::invalid_argument("unknown regularization '" + name + "'");
}

std::string TrainLog::to_tsv() const {
    std::string out = "epoch\tdice\tshape\tadv\tdisc\n";
    char buf[160];
    for (const auto& row : epochs) {
        std::snprintf(buf, sizeof buf, "%d\t%.12g\t%.12g\t%.12g\t%.12g\n", row.epoch, row.dice,
                      row.shape, row.adv, row.disc);
        out += buf;
    }
    return out;
}

Tensor shape_loss(ShapeEncoder& encoder, const Tensor& y_hat, const Tensor& y) {
    for (const auto& p : encoder.parameters()) {
        if (p.requires_grad()) {
            throw std::invalid_argument("shape_loss: encoder must be frozen");
        }
    }
    Tensor code_pred = encoder.forward(y_hat, Mode::kEval);
    Tensor code_true = encoder.forward(y, Mode::kEval);
    return sum_squared_difference(code_pred, code_true);
}

CombinedLossTerms combined_loss(const Tensor& y_hat, const Tensor& y, const Tensor& x,
                                ShapeEncoder* encoder, Discriminator* discriminator,
                                double lambda1, double lambda2) {
    CombinedLossTerms terms;
    Tensor dice = dice_loss(y_hat, y);
    terms.dice_value = dice.value();
    terms.total = dice;
    if (encoder != nullptr) {
        Tensor sh = shape_loss(*encoder, y_hat, y);
        terms.shape_value = sh.value();
        terms.total = add(terms.total, scale(sh, lambda1));
    }
    if (discriminator != nullptr) {
        Tensor d_live = discriminator->forward(y_hat, x, Mode::kTrain);
        Tensor av = adv_loss(d_live);
        terms.adv_value = av.value();
        terms.total = add(terms.total, scale(av, lambda2));
    }
    return terms;
}

// ---------------------------------------------------------------------------
// Auto-encoder training
// ---------------------------------------------------------------------------

namespace {

Tensor masks_to_tensor(const std::vector<const MaskStack*>& batch) {
    const int c = batch[0]->channels, h = batch[0]->h, w = batch[0]->w;
    const std::size_t per = static_cast<std::size_t>(c) * h * w;
    std::vector<double> data(batch.size() * per);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = 0; j < per; ++j) data[i * per + j] = batch[i]->masks[j];
    }
    return Tensor::from_data({static_cast<int>(batch.size()), c, h, w}, std::move(data), false);
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, int batch_size,
                                                   Rng& shuffle_rng) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t at = 0; at < count; at += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(count, at + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

}  // namespace

double autoencoder_reconstruction_loss(ShapeEncoder& encoder, ShapeDecoder& decoder,
                                       const std::vector<MaskStack>& masks) {
    double total = 0.0;
    for (const auto& m : masks) {
        Tape::active().clear();
        std::vector<const MaskStack*> one{&m};
        Tensor y = masks_to_tensor(one);
        Tensor recon = decoder.forward(encoder.forward(y, Mode::kEval), Mode::kEval);
        total += dice_loss(recon, y).value();
        Tape::active().clear();
    }
    return total / static_cast<double>(masks.size());
}

AutoEncoderTrainResult train_autoencoder(const std::vector<MaskStack>& masks,
                                         const TrainConfig& cfg) {
    if (masks.empty()) throw std::invalid_argument("train_autoencoder: empty dataset");
    const int c = masks[0].channels, h = masks[0].h, w = masks[0].w;
    for (const auto& m : masks) {
        if (m.channels != c || m.h != h || m.w != w) {
            throw std::invalid_argument("train_autoencoder: ragged mask extents");
        }
    }

    AutoEncoderConfig acfg;
    acfg.in_channels = c;
    acfg.depth = cfg.ae_depth;
    acfg.base_channels = cfg.ae_base_channels;
    acfg.code_channels = cfg.ae_code_channels;
    auto [encoder, decoder] = build_autoencoder(acfg, cfg.seed);

    auto params = encoder.parameters();
    {
        auto dec_params = decoder.parameters();
        params.insert(params.end(), dec_params.begin(), dec_params.end());
    }
    AdamState state;
    Rng shuffle_rng = Rng::stream(cfg.seed, "ae-shuffle");
    Rng aug_rng = Rng::stream(cfg.seed, "ae-augment");

    AutoEncoderTrainResult result{std::move(encoder), std::move(decoder), {}, 0.0, 0.0};

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double sum_loss = 0.0;
        std::size_t batches = 0;
        for (const auto& batch : make_batches(masks.size(), cfg.batch_size, shuffle_rng)) {
            std::vector<MaskStack> augmented;
            std::vector<const MaskStack*> refs;
            augmented.reserve(batch.size());
            for (std::size_t idx : batch) {
                if (cfg.augment) {
                    MaskStack m = masks[idx];
                    std::vector<double> dummy(static_cast<std::size_t>(h) * w, 0.0);
                    apply_augment(sample_augment(aug_rng, h, w), h, w, dummy, m.masks, c);
                    augmented.push_back(std::move(m));
                    refs.push_back(&augmented.back());
                } else {
                    refs.push_back(&masks[idx]);
                }
            }
            Tape::active().clear();
            Tensor y = masks_to_tensor(refs);
            Tensor recon = result.decoder.forward(result.encoder.forward(y, Mode::kTrain), Mode::kTrain);
            Tensor loss = dice_loss(recon, y);
            backward(loss);
            adam_step(params, state, cfg.lr_ae);
            zero_grads(params);
            Tape::active().clear();
            const double v = loss.value();
            if (!std::isfinite(v)) {
                result.log.diverged = true;
                break;
            }
            sum_loss += v;
            ++batches;
            result.log.batch_total.push_back(v);
        }
        if (result.log.diverged) break;
        EpochLogRow row;
        row.epoch = epoch;
        row.dice = sum_loss / static_cast<double>(batches);
        row.total = row.dice;
        result.log.epochs.push_back(row);
        if (epoch == 0) result.initial_loss = row.dice;
        result.final_loss = row.dice;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Main training: alternating discriminator / segmenter updates
// ---------------------------------------------------------------------------

MainTrainResult train_main(const SliceDataset& data, const TrainConfig& cfg,
                           ShapeEncoder* encoder) {
    if (data.empty()) throw std::invalid_argument("train_main: empty dataset");
    const bool want_shape = cfg.regularization == Regularization::kShape ||
                            cfg.regularization == Regularization::kCombined;
    const bool want_adv = (cfg.regularization == Regularization::kAdv ||
                           cfg.regularization == Regularization::kCombined) &&
                          !cfg.stub_adversarial;
    if (want_shape && encoder == nullptr) {
        throw std::invalid_argument("train_main: regularization '" +
                                    regularization_name(cfg.regularization) +
                                    "' needs a trained shape encoder");
    }
    if (!want_shape && encoder != nullptr) {
        throw std::invalid_argument("train_main: shape encoder supplied but regularization is '" +
                                    regularization_name(cfg.regularization) + "'");
    }

    const int c = data[0].channels, h = data[0].h, w = data[0].w;
    for (const auto& s : data) {
        if (s.channels != c || s.h != h || s.w != w) {
            throw std::invalid_argument("train_main: ragged sample extents");
        }
    }
    const bool multi = cfg.strategy == Strategy::kMulti;
    if (encoder != nullptr && encoder->config().in_channels != c) {
        throw std::invalid_argument("train_main: encoder channels " +
                                    std::to_string(encoder->config().in_channels) +
                                    " do not match mask channels " + std::to_string(c));
    }

    SegNetConfig scfg;
    scfg.in_channels = 1;
    scfg.num_classes = c;
    scfg.depth = cfg.unet_depth;
    scfg.base_channels = cfg.unet_base_channels;
    scfg.multi_head = multi;
    MainTrainResult result{UNet(scfg, cfg.seed), std::nullopt, {}};

    if (want_adv) {
        DiscriminatorConfig dcfg;
        dcfg.in_channels = c + 1;
        dcfg.depth = cfg.disc_depth;
        dcfg.base_channels = cfg.disc_base_channels;
        result.discriminator.emplace(dcfg, cfg.seed);
    }
    if (encoder != nullptr) encoder->set_trainable(false);

    auto s_params = result.unet.parameters();
    AdamState s_state;
    std::vector<Tensor> d_params;
    AdamState d_state;
    if (result.discriminator) d_params = result.discriminator->parameters();

    Rng shuffle_rng = Rng::stream(cfg.seed, "main-shuffle");
    Rng aug_rng = Rng::stream(cfg.seed, "main-augment");

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double sum_dice = 0.0, sum_shape = 0.0, sum_adv = 0.0, sum_disc = 0.0, sum_total = 0.0;
        std::size_t batches = 0;
        for (const auto& batch : make_batches(data.size(), cfg.batch_size, shuffle_rng)) {
            const int bn = static_cast<int>(batch.size());
            std::vector<double> xs(static_cast<std::size_t>(bn) * plane);
            std::vector<double> ys(static_cast<std::size_t>(bn) * c * plane);
            for (int i = 0; i < bn; ++i) {
                std::vector<double> img = data[batch[static_cast<std::size_t>(i)]].image;
                std::vector<std::uint8_t> msk = data[batch[static_cast<std::size_t>(i)]].masks;
                if (cfg.augment) {
                    apply_augment(sample_augment(aug_rng, h, w), h, w, img, msk, c);
                }
                std::copy(img.begin(), img.end(), xs.begin() + static_cast<std::size_t>(i) * plane);
                for (std::size_t j = 0; j < static_cast<std::size_t>(c) * plane; ++j) {
                    ys[static_cast<std::size_t>(i) * c * plane + j] = msk[j];
                }
            }
            Tensor x = Tensor::from_data({bn, 1, h, w}, std::move(xs), false);
            Tensor y = Tensor::from_data({bn, c, h, w}, std::move(ys), false);

            Tape::active().clear();
            Tensor y_hat_full = result.unet.forward(x, Mode::kTrain);
            Tensor y_hat = multi ? slice_channels(y_hat_full, 1, c) : y_hat_full;

            // discriminator step first, on the detached prediction
            if (result.discriminator) {
                auto& disc = *result.discriminator;
                disc.set_trainable(true);
                Tensor d_fake = disc.forward(y_hat.detach(), x, Mode::kTrain);
                Tensor d_real = disc.forward(y, x, Mode::kTrain);
                Tensor dl = disc_loss(d_fake, d_real);
                backward(dl);
                adam_step(d_params, d_state, cfg.lr_main);
                zero_grads(d_params);
                sum_disc += dl.value();
                disc.set_trainable(false);
            }

            // segmenter step against the just-updated discriminator
            CombinedLossTerms terms =
                combined_loss(y_hat, y, x, encoder,
                              result.discriminator ? &*result.discriminator : nullptr,
                              cfg.lambda1, cfg.lambda2);
            backward(terms.total);
            adam_step(s_params, s_state, cfg.lr_main);
            zero_grads(s_params);
            Tape::active().clear();

            const double total = terms.total.value();
            if (!std::isfinite(total)) {
                result.log.diverged = true;
                break;
            }
            result.log.batch_total.push_back(total);
            sum_total += total;
            sum_dice += terms.dice_value;
            sum_shape += terms.shape_value;
            sum_adv += terms.adv_value;
            ++batches;
        }
        if (result.log.diverged) break;
        EpochLogRow row;
        row.epoch = epoch;
        row.total = sum_total / static_cast<double>(batches);
        row.dice = sum_dice / static_cast<double>(batches);
        row.shape = sum_shape / static_cast<double>(batches);
        row.adv = sum_adv / static_cast<double>(batches);
        row.disc = sum_disc / static_cast<double>(batches);
        result.log.epochs.push_back(row);
    }
    if (encoder != nullptr) encoder->set_trainable(true);
    return result;
}

}  // namespace segreg
