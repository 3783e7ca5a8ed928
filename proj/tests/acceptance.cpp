// Acceptance suite: runs the ten project acceptance checks end to end and
// prints one pass/fail line per criterion. Exit code 0 only when all pass.
//
// Usage: acceptance [--only N]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "finite_diff.hpp"
#include "segreg/harness.hpp"
#include "segreg/losses.hpp"
#include "segreg/metrics.hpp"
#include "segreg/nets.hpp"
#include "segreg/optim.hpp"
#include "segreg/postproc.hpp"
#include "segreg/ranking.hpp"
#include "segreg/train.hpp"

using namespace segreg;
using segreg::testing::fd_gradient;
using segreg::testing::max_rel_error;
using segreg::testing::random_tensor;

namespace {

namespace fs = std::filesystem;

struct Outcome {
    bool pass = true;
    std::string detail;
};

// ---------------------------------------------------------------------------
// Criterion 1: gradient suite
// ---------------------------------------------------------------------------

double op_gradient_check(Tensor leaf, const std::function<Tensor()>& make_loss) {
    Tape::active().clear();
    leaf.zero_grad();
    Tensor loss = make_loss();
    backward(loss);
    std::vector<double> analytic = leaf.has_grad()
                                       ? leaf.grad()
                                       : std::vector<double>(leaf.data().size(), 0.0);
    auto eval = [&make_loss] {
        Tape::active().clear();
        const double v = make_loss().value();
        Tape::active().clear();
        return v;
    };
    const auto numeric = fd_gradient(leaf, eval, 1e-5);
    return max_rel_error(analytic, numeric);
}

Outcome criterion_gradients() {
    Outcome out;
    double worst = 0.0;
    std::string worst_name = "-";
    auto check = [&](const char* name, Tensor leaf, const std::function<Tensor()>& loss) {
        const double err = op_gradient_check(std::move(leaf), loss);
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
        if (err >= 1e-4) out.pass = false;
    };

    const int instances = 20;
    Rng rng(20250811);
    for (int i = 0; i < instances; ++i) {
        // element-wise ops and reductions
        {
            Tensor a = random_tensor({2, 6}, rng);
            Tensor b = random_tensor({2, 6}, rng, -1, 1, false);
            check("add", a, [&] { return sum(mul(add(a, b), add(a, b))); });
            check("sub", a, [&] { return sum(mul(sub(a, b), sub(a, b))); });
            check("mul", a, [&] { return sum(mul(mul(a, b), a)); });
            check("scale", a, [&] { return mean(scale(mul(a, a), 2.5)); });
            check("sum", a, [&] { return sum(a); });
            check("mean", a, [&] { return mean(mul(a, a)); });
        }
        // activations
        {
            Tensor t = random_tensor({1, 3, 4, 4}, rng);
            Tensor w = random_tensor({1, 3, 4, 4}, rng, -1, 1, false);
            check("relu", t, [&] { return sum(mul(relu(t), w)); });
            check("leaky_relu", t, [&] { return sum(mul(leaky_relu(t, 0.2), w)); });
            check("sigmoid", t, [&] { return sum(mul(sigmoid(t), w)); });
            check("softmax_channels", t, [&] { return sum(mul(softmax_channels(t), w)); });
        }
        // convolution, plain and strided
        {
            Tensor x = random_tensor({1, 2, 5, 5}, rng);
            Tensor k = random_tensor({3, 2, 3, 3}, rng);
            Tensor b = random_tensor({3}, rng);
            auto loss = [&] { return sum(conv2d(x, k, b, 1, 1)); };
            check("conv2d/input", x, loss);
            check("conv2d/kernel", k, loss);
            check("conv2d/bias", b, loss);
            Tensor xs = random_tensor({1, 2, 6, 6}, rng);
            check("conv2d/stride2", xs, [&] { return mean(mul(conv2d(xs, k, b, 2, 1),
                                                              conv2d(xs, k, b, 2, 1))); });
        }
        // pooling and reshaping; distinct values keep argmax stable under the step
        {
            std::vector<double> vals(2 * 2 * 4 * 4);
            for (std::size_t j = 0; j < vals.size(); ++j) vals[j] = 0.11 * static_cast<double>(j) - 3.0;
            rng.shuffle(vals);
            Tensor t = Tensor::from_data({2, 2, 4, 4}, vals, true);
            Tensor w = random_tensor({2, 2, 2, 2}, rng, -1, 1, false);
            check("maxpool2", t, [&] { return sum(mul(maxpool2(t), w)); });
            Tensor wup = random_tensor({2, 2, 8, 8}, rng, -1, 1, false);
            check("upsample2", t, [&] { return sum(mul(upsample2(t), wup)); });
            Tensor other = random_tensor({2, 3, 4, 4}, rng);
            auto cat = [&] { return sum(mul(concat_channels(t, other), concat_channels(t, other))); };
            check("concat_channels", t, cat);
            check("concat_channels/b", other, cat);
            check("slice_channels", t,
                  [&] { return sum(mul(slice_channels(t, 1, 1), slice_channels(t, 1, 1))); });
            Tensor wg = random_tensor({2, 2}, rng, -1, 1, false);
            check("global_max_pool", t, [&] { return sum(mul(global_max_pool(t), wg)); });
        }
        // dense
        {
            Tensor t = random_tensor({3, 4}, rng);
            Tensor w = random_tensor({4, 2}, rng);
            Tensor b = random_tensor({2}, rng);
            auto loss = [&] { return sum(mul(dense(t, w, b), dense(t, w, b))); };
            check("dense/input", t, loss);
            check("dense/weight", w, loss);
            check("dense/bias", b, loss);
        }
        // batch norm, both modes
        {
            Tensor x = random_tensor({2, 2, 4, 4}, rng);
            Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
            Tensor beta = random_tensor({2}, rng, -0.5, 0.5);
            Tensor w = random_tensor({2, 2, 4, 4}, rng, -1, 1, false);
            auto train_loss = [&] {
                BatchNormState fresh;
                Tensor o = batch_norm(x, gamma, beta, fresh, Mode::kTrain);
                return sum(mul(relu(o), mul(o, w)));
            };
            check("batch_norm/x", x, train_loss);
            check("batch_norm/gamma", gamma, train_loss);
            check("batch_norm/beta", beta, train_loss);
            BatchNormState state;
            Tape::active().clear();
            (void)batch_norm(x, gamma, beta, state, Mode::kTrain);
            Tape::active().clear();
            auto eval_loss = [&] {
                Tensor o = batch_norm(x, gamma, beta, state, Mode::kEval);
                return sum(mul(o, mul(o, w)));
            };
            check("batch_norm/eval", x, eval_loss);
        }
        // segmentation Dice objective
        {
            Tensor y = random_tensor({2, 2, 4, 4}, rng, 0, 1, false);
            for (auto& v : y.data()) v = v > 0.6 ? 1.0 : 0.0;
            Tensor y_hat = random_tensor({2, 2, 4, 4}, rng, 0.05, 0.95);
            check("dice_loss", y_hat, [&] { return dice_loss(y_hat, y); });
        }
        // reconstruction objective through the auto-encoder
        {
            AutoEncoderConfig cfg;
            cfg.in_channels = 1;
            cfg.depth = 1;
            cfg.base_channels = 3;
            cfg.code_channels = 4;
            auto [enc, dec] = build_autoencoder(cfg, rng.next_u64());
            Tensor y = random_tensor({1, 1, 4, 4}, rng, 0, 1, false);
            for (auto& v : y.data()) v = v > 0.5 ? 1.0 : 0.0;
            // differentiate w.r.t. the first encoder kernel
            Tensor kernel = enc.conv_layers()[0].w;
            check("ae_reconstruction", kernel, [&] {
                return dice_loss(dec.forward(enc.forward(y, Mode::kTrain), Mode::kTrain), y);
            });
        }
        // latent-space penalty through a frozen encoder
        {
            AutoEncoderConfig cfg;
            cfg.in_channels = 1;
            cfg.depth = 1;
            cfg.base_channels = 3;
            cfg.code_channels = 4;
            auto [enc, dec] = build_autoencoder(cfg, rng.next_u64());
            (void)dec;
            Tensor warm = random_tensor({1, 1, 4, 4}, rng, 0, 1, false);
            Tape::active().clear();
            (void)enc.forward(warm, Mode::kTrain);
            Tape::active().clear();
            enc.set_trainable(false);
            Tensor y = random_tensor({1, 1, 4, 4}, rng, 0, 1, false);
            Tensor y_hat = random_tensor({1, 1, 4, 4}, rng, 0.05, 0.95);
            check("shape_loss", y_hat, [&] { return shape_loss(enc, y_hat, y); });
        }
        // discriminator and adversarial objectives
        {
            Tensor d_fake = random_tensor({1, 1, 3, 3}, rng, 0.1, 0.9);
            Tensor d_real = random_tensor({1, 1, 3, 3}, rng, 0.1, 0.9);
            check("disc_loss/fake", d_fake, [&] { return disc_loss(d_fake, d_real); });
            check("disc_loss/real", d_real, [&] { return disc_loss(d_fake, d_real); });
            check("adv_loss", d_fake, [&] { return adv_loss(d_fake); });
        }
        // combined objective through encoder and discriminator
        {
            AutoEncoderConfig acfg;
            acfg.in_channels = 1;
            acfg.depth = 1;
            acfg.base_channels = 3;
            acfg.code_channels = 4;
            auto [enc, dec] = build_autoencoder(acfg, rng.next_u64());
            (void)dec;
            Tape::active().clear();
            (void)enc.forward(random_tensor({1, 1, 8, 8}, rng, 0, 1, false), Mode::kTrain);
            Tape::active().clear();
            enc.set_trainable(false);
            DiscriminatorConfig dcfg;
            dcfg.in_channels = 2;
            dcfg.depth = 1;
            dcfg.base_channels = 3;
            Discriminator disc(dcfg, rng.next_u64());
            disc.set_trainable(false);
            Tensor y = random_tensor({1, 1, 8, 8}, rng, 0, 1, false);
            for (auto& v : y.data()) v = v > 0.5 ? 1.0 : 0.0;
            Tensor x = random_tensor({1, 1, 8, 8}, rng, -1, 1, false);
            Tensor y_hat = random_tensor({1, 1, 8, 8}, rng, 0.05, 0.95);
            check("combined_loss", y_hat, [&] {
                return combined_loss(y_hat, y, x, &enc, &disc, 1e-4, 1e-2).total;
            });
        }
        // a composite encoder/decoder block, end to end
        {
            Tensor x = random_tensor({1, 2, 8, 8}, rng);
            Tensor k1 = random_tensor({4, 2, 3, 3}, rng);
            Tensor b1 = random_tensor({4}, rng);
            Tensor gamma = random_tensor({4}, rng, 0.5, 1.5);
            Tensor beta = random_tensor({4}, rng, -0.5, 0.5);
            Tensor k2 = random_tensor({2, 4, 3, 3}, rng);
            Tensor b2 = random_tensor({2}, rng);
            auto loss = [&] {
                BatchNormState bn;
                Tensor t = conv2d(x, k1, b1, 1, 1);
                t = relu(batch_norm(t, gamma, beta, bn, Mode::kTrain));
                t = maxpool2(t);
                t = upsample2(t);
                t = conv2d(t, k2, b2, 1, 1);
                return mean(mul(sigmoid(t), t));
            };
            check("unet_block", x, loss);
            check("unet_block/kernel", k1, loss);
        }
    }
    Tape::active().clear();
    char buf[160];
    std::snprintf(buf, sizeof buf, "max rel err %.2e (%s), %d instances per op/loss", worst,
                  worst_name.c_str(), instances);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 2: metric oracle suite
// ---------------------------------------------------------------------------

Outcome criterion_metric_oracles() {
    Outcome out;
    Rng rng(777001);
    double worst_abs = 0.0;
    int evaluated = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 2 + static_cast<int>(rng.next_u64() % 15);
        const int h = 2 + static_cast<int>(rng.next_u64() % 15);
        const int w = 2 + static_cast<int>(rng.next_u64() % 15);
        const std::array<double, 3> sp{rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0),
                                       rng.uniform(0.2, 2.0)};
        BinaryVolume gt = make_volume(d, h, w, sp);
        BinaryVolume p = make_volume(d, h, w, sp);
        const double density = rng.uniform(0.1, 0.6);
        for (auto& v : gt.voxels) v = rng.bernoulli(density);
        for (auto& v : p.voxels) v = rng.bernoulli(density);

        // confusion-matrix oracle, exact equality
        std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < gt.voxels.size(); ++i) {
            const bool g = gt.voxels[i], q = p.voxels[i];
            tp += g && q;
            fp += !g && q;
            fn += g && !q;
            tn += !g && !q;
        }
        const OverlapMetrics m = overlap_metrics(gt, p);
        if (tp + fn > 0) {
            if (*m.dice != 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)) {
                out.pass = false;
            }
            if (*m.sensitivity != static_cast<double>(tp) / static_cast<double>(tp + fn)) {
                out.pass = false;
            }
        }
        if (fp + tn > 0 && *m.specificity != static_cast<double>(tn) / static_cast<double>(fp + tn)) {
            out.pass = false;
        }

        // quadratic surface-distance oracle
        const auto s_gt = surface_voxels(gt);
        const auto s_p = surface_voxels(p);
        if (s_gt.empty() || s_p.empty()) continue;
        ++evaluated;
        double hd = 0.0, sum = 0.0;
        auto directed = [&](const std::vector<std::array<int, 3>>& from,
                            const std::vector<std::array<int, 3>>& to) {
            for (const auto& a : from) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& b : to) {
                    const double dz = (a[0] - b[0]) * sp[0];
                    const double dy = (a[1] - b[1]) * sp[1];
                    const double dx = (a[2] - b[2]) * sp[2];
                    best = std::min(best, std::sqrt(dz * dz + dy * dy + dx * dx));
                }
                hd = std::max(hd, best);
                sum += best;
            }
        };
        directed(s_gt, s_p);
        directed(s_p, s_gt);
        const double msd_brute = sum / static_cast<double>(s_gt.size() + s_p.size());
        const double hd_err = std::fabs(*hausdorff(gt, p, sp) - hd);
        const double msd_err = std::fabs(*mean_surface_distance(gt, p, sp) - msd_brute);
        worst_abs = std::max({worst_abs, hd_err, msd_err});
        if (hd_err > 1e-9 || msd_err > 1e-9) out.pass = false;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "200 pairs (%d with surfaces), worst distance error %.2e mm",
                  evaluated, worst_abs);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 3: ranking fidelity
// ---------------------------------------------------------------------------

Outcome criterion_ranking() {
    Outcome out;
    ThresholdTable t;
    auto expect = [&](double got, double want) {
        if (got != want) out.pass = false;
    };
    expect(metric_to_score(100.0, RankedMetric::kDice, t), 100.0);
    expect(metric_to_score(80.0, RankedMetric::kDice, t), 0.0);
    expect(metric_to_score(72.5, RankedMetric::kDice, t), 0.0);
    expect(metric_to_score(30.0, RankedMetric::kHd, t), 0.0);
    expect(metric_to_score(42.0, RankedMetric::kHd, t), 0.0);
    expect(metric_to_score(4.0, RankedMetric::kMsd, t), 0.0);
    expect(metric_to_score(6.5, RankedMetric::kMsd, t), 0.0);
    expect(metric_to_score(10.0, RankedMetric::kRavd, t), 0.0);
    expect(metric_to_score(25.0, RankedMetric::kRavd, t), 0.0);
    if (std::fabs(metric_to_score(90.0, RankedMetric::kDice, t) - 50.0) > 1e-12) out.pass = false;
    if (std::fabs(metric_to_score(15.0, RankedMetric::kHd, t) - 50.0) > 1e-12) out.pass = false;
    out.detail = "Table-style endpoints and linear midpoints reproduced exactly";
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 4: power analysis
// ---------------------------------------------------------------------------

Outcome criterion_power() {
    Outcome out;
    const auto n = required_sample_size(87.1, 9.5, 82.8, 12.2, 0.05, 0.8);
    out.pass = n.has_value() && *n >= 76 && *n <= 80;
    out.detail = n ? "n = " + std::to_string(*n) + " per group (expected band [76, 80])"
                   : "unbounded sample size";
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 5: degenerate configuration equivalence
// ---------------------------------------------------------------------------

Outcome criterion_degenerate() {
    Outcome out;
    std::vector<Case> cases;
    for (int i = 0; i < 3; ++i) {
        Case c = generate_case(6100 + static_cast<std::uint64_t>(i), 2, {8, 32, 32},
                               {0.5, 0.25, 0.25});
        normalize_intensity(c.image);
        cases.push_back(std::move(c));
    }
    std::vector<const Case*> refs;
    for (const auto& c : cases) refs.push_back(&c);
    StrategyData data = build_strategy_data(refs, Strategy::kGlobal);

    TrainConfig cfg;
    cfg.strategy = Strategy::kGlobal;
    cfg.seed = 4242;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.unet_depth = 2;
    cfg.unet_base_channels = 4;
    cfg.ae_depth = 2;
    cfg.ae_base_channels = 4;
    cfg.ae_code_channels = 8;

    TrainConfig base_cfg = cfg;
    base_cfg.regularization = Regularization::kBase;
    auto base = train_main(data.slices[0], base_cfg, nullptr);

    TrainConfig comb_cfg = cfg;
    comb_cfg.regularization = Regularization::kCombined;
    comb_cfg.lambda1 = 0.0;
    comb_cfg.lambda2 = 0.0;
    comb_cfg.stub_adversarial = true;
    auto ae = train_autoencoder(data.masks[0], comb_cfg);
    ae.encoder.set_trainable(false);
    auto comb = train_main(data.slices[0], comb_cfg, &ae.encoder);

    out.pass = base.log.batch_total.size() == comb.log.batch_total.size();
    if (out.pass) {
        for (std::size_t i = 0; i < base.log.batch_total.size(); ++i) {
            if (std::memcmp(&base.log.batch_total[i], &comb.log.batch_total[i], sizeof(double)) != 0) {
                out.pass = false;
                break;
            }
        }
    }
    auto pb = base.unet.parameters(), pc = comb.unet.parameters();
    for (std::size_t i = 0; out.pass && i < pb.size(); ++i) {
        if (pb[i].data() != pc[i].data()) out.pass = false;
    }
    out.detail = "baseline vs zero-weight combined run: " +
                 std::to_string(base.log.batch_total.size()) +
                 " batch losses and all parameters bit-identical";
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 6: auto-encoder smoke test
// ---------------------------------------------------------------------------

Outcome criterion_autoencoder() {
    Outcome out;
    std::vector<MaskStack> masks;
    std::vector<Case> cases;
    for (int i = 0; i < 20; ++i) {
        cases.push_back(generate_case(8800 + static_cast<std::uint64_t>(i), 3, {16, 64, 64},
                                      {0.5, 0.25, 0.25}));
    }
    std::vector<const Case*> refs;
    for (const auto& c : cases) refs.push_back(&c);
    StrategyData data = build_strategy_data(refs, Strategy::kGlobal);
    masks = data.masks[0];

    TrainConfig cfg;  // section-3.3 defaults: lr 1e-2, 10 epochs, batch 8
    cfg.seed = 3131;
    auto ae = train_autoencoder(masks, cfg);
    const double loss = autoencoder_reconstruction_loss(ae.encoder, ae.decoder, masks);
    const double dice = 1.0 - loss;
    out.pass = !ae.log.diverged && ae.final_loss < ae.initial_loss && dice >= 0.95;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "training-set reconstruction Dice %.4f (threshold 0.95), loss %.4f -> %.4f", dice,
                  ae.initial_loss, ae.final_loss);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 7: end-to-end desk benchmark
// ---------------------------------------------------------------------------

Outcome criterion_end_to_end() {
    Outcome out;
    ExperimentConfig cfg;
    cfg.dataset_seed = 424242;
    cfg.dataset_size = 12;
    cfg.num_classes = 3;
    cfg.extents = {16, 64, 64};
    cfg.spacing_mm = {0.5, 0.25, 0.25};
    cfg.grid = {{Regularization::kBase, Strategy::kMulti},
                {Regularization::kCombined, Strategy::kMulti}};
    cfg.train.seed = 5150;
    // desk-scale overrides: the published rates fit thousands of 512x512
    // steps, not 220 steps on 64x64 phantoms
    cfg.train.lr_main = 1e-3;
    cfg.train.lambda1 = 1e-5;
    cfg.parallel_folds = 2;
    cfg.output_dir.clear();

    RunResult result = run_loocv(cfg);
    const Aggregate base = aggregate_metric(result, "BaseUNet_multi", "dice");
    const Aggregate comb = aggregate_metric(result, "CombReg_multi", "dice");
    int failed = 0;
    for (const auto& fold : result.folds) failed += fold.failed;

    out.pass = failed == 0 && comb.count == 12 && base.count == 12 && comb.mean >= 0.85 &&
               comb.mean >= base.mean - 0.02;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "held-out Dice: CombReg %.4f +- %.4f vs BaseUNet %.4f +- %.4f over %d folds "
                  "(%d failed)",
                  comb.mean, comb.sd, base.mean, base.sd, comb.count, failed);
    out.detail = buf;
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 8: post-processing properties
// ---------------------------------------------------------------------------

using VoxelSet = std::set<std::array<int, 3>>;

VoxelSet to_set(const BinaryVolume& v) {
    VoxelSet s;
    for (int z = 0; z < v.d; ++z)
        for (int y = 0; y < v.h; ++y)
            for (int x = 0; x < v.w; ++x)
                if (v.at(z, y, x)) s.insert({z, y, x});
    return s;
}

bool adjacent_under(const std::array<int, 3>& a, const std::array<int, 3>& b, int connectivity) {
    const int dz = std::abs(a[0] - b[0]), dy = std::abs(a[1] - b[1]), dx = std::abs(a[2] - b[2]);
    if (dz > 1 || dy > 1 || dx > 1) return false;
    const int manhattan = dz + dy + dx;
    if (manhattan == 0) return false;
    if (connectivity == 6) return manhattan == 1;
    if (connectivity == 18) return manhattan <= 2;
    return true;
}

std::vector<VoxelSet> oracle_components(const BinaryVolume& v, int connectivity) {
    VoxelSet remaining = to_set(v);
    std::vector<VoxelSet> comps;
    while (!remaining.empty()) {
        VoxelSet comp{*remaining.begin()};
        remaining.erase(remaining.begin());
        bool grew = true;
        while (grew) {
            grew = false;
            for (auto it = remaining.begin(); it != remaining.end();) {
                bool touches = false;
                for (const auto& c : comp) {
                    if (adjacent_under(*it, c, connectivity)) {
                        touches = true;
                        break;
                    }
                }
                if (touches) {
                    comp.insert(*it);
                    it = remaining.erase(it);
                    grew = true;
                } else {
                    ++it;
                }
            }
        }
        comps.push_back(std::move(comp));
    }
    return comps;
}

VoxelSet oracle_closing(const VoxelSet& input, int radius) {
    std::vector<std::array<int, 3>> ball;
    for (int dz = -radius; dz <= radius; ++dz)
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx)
                if (dz * dz + dy * dy + dx * dx <= radius * radius) ball.push_back({dz, dy, dx});
    VoxelSet dilated;
    for (const auto& p : input)
        for (const auto& o : ball) dilated.insert({p[0] + o[0], p[1] + o[1], p[2] + o[2]});
    VoxelSet closed;
    for (const auto& p : dilated) {
        bool keep = true;
        for (const auto& o : ball) {
            if (!dilated.count({p[0] + o[0], p[1] + o[1], p[2] + o[2]})) {
                keep = false;
                break;
            }
        }
        if (keep) closed.insert(p);
    }
    return closed;
}

Outcome criterion_postproc() {
    Outcome out;
    Rng rng(990011);
    int violations = 0;
    int checks = 0;

    // 500 component checks
    for (int trial = 0; trial < 500; ++trial) {
        const int conn = trial % 3 == 0 ? 6 : (trial % 3 == 1 ? 18 : 26);
        BinaryVolume v = make_volume(3 + static_cast<int>(rng.next_u64() % 3),
                                     3 + static_cast<int>(rng.next_u64() % 4),
                                     3 + static_cast<int>(rng.next_u64() % 4), {1, 1, 1});
        const double density = rng.uniform(0.1, 0.5);
        for (auto& vox : v.voxels) vox = rng.bernoulli(density);
        BinaryVolume lcc = largest_connected_component(v, conn);
        ++checks;

        std::size_t best = 0;
        for (const auto& comp : oracle_components(v, conn)) best = std::max(best, comp.size());
        bool ok = lcc.count() == best;
        for (std::size_t i = 0; i < v.voxels.size(); ++i) {
            if (lcc.voxels[i] && !v.voxels[i]) ok = false;  // subset
        }
        if (best > 0 && oracle_components(lcc, conn).size() != 1) ok = false;  // connected
        if (largest_connected_component(lcc, conn).voxels != lcc.voxels) ok = false;  // idempotent
        if (!ok) ++violations;
    }

    // 500 closing checks
    for (int trial = 0; trial < 500; ++trial) {
        const int radius = 1 + static_cast<int>(rng.next_u64() % 2);
        BinaryVolume a = make_volume(4, 4 + static_cast<int>(rng.next_u64() % 2),
                                     4 + static_cast<int>(rng.next_u64() % 2), {1, 1, 1});
        const double density = rng.uniform(0.08, 0.4);
        for (auto& vox : a.voxels) vox = rng.bernoulli(density);
        BinaryVolume closed = morphological_closing(a, radius);
        ++checks;

        bool ok = to_set(closed) == oracle_closing(to_set(a), radius);
        for (std::size_t i = 0; i < a.voxels.size(); ++i) {
            if (a.voxels[i] && !closed.voxels[i]) ok = false;  // extensive
        }
        BinaryVolume b = a;
        for (int extra = 0; extra < 3; ++extra) b.voxels[rng.next_u64() % b.voxels.size()] = 1;
        BinaryVolume closed_b = morphological_closing(b, radius);
        for (std::size_t i = 0; i < a.voxels.size(); ++i) {
            if (closed.voxels[i] && !closed_b.voxels[i]) ok = false;  // increasing
        }
        if (morphological_closing(closed, radius).voxels != closed.voxels) ok = false;  // idempotent
        if (!ok) ++violations;
    }

    out.pass = violations == 0;
    out.detail = std::to_string(checks) + " randomized checks, " + std::to_string(violations) +
                 " violations";
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 9: strategy algebra
// ---------------------------------------------------------------------------

Outcome criterion_strategy_algebra() {
    Outcome out;
    Rng rng(445566);
    // encoding identity on 50 random label volumes
    for (int trial = 0; trial < 50; ++trial) {
        Case c;
        c.d = 3 + static_cast<int>(rng.next_u64() % 3);
        c.h = 4 + static_cast<int>(rng.next_u64() % 4);
        c.w = 4 + static_cast<int>(rng.next_u64() % 4);
        c.num_classes = 1 + static_cast<int>(rng.next_u64() % 4);
        const std::size_t n = static_cast<std::size_t>(c.d) * c.h * c.w;
        c.labels.resize(n);
        c.image.assign(n, 0.0);
        for (auto& v : c.labels) {
            v = static_cast<std::uint8_t>(rng.next_u64() % static_cast<std::uint64_t>(c.num_classes + 1));
        }
        const LabelEncoding glob = encode_labels(c, Strategy::kGlobal);
        const LabelEncoding multi = encode_labels(c, Strategy::kMulti);
        const LabelEncoding ind = encode_labels(c, Strategy::kIndividual);
        for (std::size_t i = 0; i < n; ++i) {
            int multi_fg = 0;
            for (int ch = 1; ch <= c.num_classes; ++ch) {
                multi_fg |= multi.stacks[0][static_cast<std::size_t>(ch) * n + i];
            }
            int ind_fg = 0;
            for (int m = 0; m < c.num_classes; ++m) ind_fg |= ind.stacks[static_cast<std::size_t>(m)][i];
            if (multi_fg != glob.stacks[0][i] || ind_fg != glob.stacks[0][i]) out.pass = false;
        }
    }

    // prediction transformation contract on a trained individual model
    std::vector<Case> cases;
    for (int i = 0; i < 2; ++i) {
        Case c = generate_case(7300 + static_cast<std::uint64_t>(i), 2, {8, 32, 32},
                               {0.5, 0.25, 0.25});
        normalize_intensity(c.image);
        cases.push_back(std::move(c));
    }
    std::vector<const Case*> refs{&cases[0]};
    StrategyData data = build_strategy_data(refs, Strategy::kIndividual);
    TrainConfig cfg;
    cfg.strategy = Strategy::kIndividual;
    cfg.regularization = Regularization::kBase;
    cfg.seed = 11;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.unet_depth = 2;
    cfg.unet_base_channels = 4;
    std::vector<UNet> models;
    for (int m = 0; m < data.num_models; ++m) {
        models.push_back(train_single_model(data.slices[static_cast<std::size_t>(m)],
                                            data.masks[static_cast<std::size_t>(m)], cfg)
                             .unet);
    }
    Prediction pred = predict_case(models, Strategy::kIndividual, cases[1], 26, 1);
    BinaryVolume manual = pred.structures[0];
    for (std::size_t s = 1; s < pred.structures.size(); ++s) {
        for (std::size_t i = 0; i < manual.voxels.size(); ++i) {
            manual.voxels[i] = manual.voxels[i] || pred.structures[s].voxels[i];
        }
    }
    if (pred.global_mask.voxels != manual.voxels) out.pass = false;
    out.detail = "50 label volumes + a trained individual-strategy prediction transform";
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 10: determinism of the full grid
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

Outcome criterion_determinism() {
    Outcome out;
    auto run_once = [](const std::string& dir) {
        ExperimentConfig cfg;
        cfg.dataset_seed = 64000;
        cfg.dataset_size = 3;
        cfg.num_classes = 2;
        cfg.extents = {8, 32, 32};
        cfg.spacing_mm = {0.5, 0.25, 0.25};
        cfg.grid = full_method_grid();  // all 12 methods
        cfg.train.seed = 909;
        cfg.train.epochs = 1;
        cfg.train.batch_size = 4;
        cfg.train.unet_depth = 2;
        cfg.train.unet_base_channels = 4;
        cfg.train.ae_depth = 2;
        cfg.train.ae_base_channels = 4;
        cfg.train.ae_code_channels = 8;
        cfg.train.disc_depth = 2;
        cfg.train.disc_base_channels = 4;
        cfg.parallel_folds = 2;
        cfg.output_dir = dir;
        cfg.emit_overlays = false;
        return run_loocv(cfg);
    };
    const fs::path out1 = fs::temp_directory_path() / "segreg_accept_run1";
    const fs::path out2 = fs::temp_directory_path() / "segreg_accept_run2";
    fs::remove_all(out1);
    fs::remove_all(out2);
    RunResult r1 = run_once(out1.string());
    RunResult r2 = run_once(out2.string());
    const bool metrics_equal = slurp(out1 / "metrics.csv") == slurp(out2 / "metrics.csv");
    const bool board_equal = slurp(out1 / "leaderboard.csv") == slurp(out2 / "leaderboard.csv");
    const bool twelve = r1.leaderboard.size() == 12;
    out.pass = metrics_equal && board_equal && twelve && !slurp(out1 / "metrics.csv").empty();
    out.detail = std::string("metrics.csv ") + (metrics_equal ? "identical" : "DIFFER") +
                 ", leaderboard.csv " + (board_equal ? "identical" : "DIFFER") + ", " +
                 std::to_string(r1.leaderboard.size()) + " methods ranked";
    fs::remove_all(out1);
    fs::remove_all(out2);
    (void)r2;
    return out;
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)();
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);
    }

    const Criterion criteria[] = {
        {1, "gradient suite", criterion_gradients},
        {2, "metric oracle suite", criterion_metric_oracles},
        {3, "ranking fidelity", criterion_ranking},
        {4, "power analysis", criterion_power},
        {5, "degenerate-configuration equivalence", criterion_degenerate},
        {6, "auto-encoder smoke test", criterion_autoencoder},
        {7, "end-to-end desk benchmark", criterion_end_to_end},
        {8, "post-processing properties", criterion_postproc},
        {9, "strategy algebra", criterion_strategy_algebra},
        {10, "grid determinism", criterion_determinism},
    };

    bool all_pass = true;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.fn();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %2d: %-38s (%7.1f s)  %s\n", outcome.pass ? "PASS" : "FAIL",
                    c.id, c.name, secs, outcome.detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && outcome.pass;
    }
    return all_pass ? 0 : 1;
}
