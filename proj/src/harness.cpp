#include "segreg/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "segreg/checkpoint.hpp"

namespace segreg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("harness: cannot open " + path + " for writing");
    os << text;
    if (!os) throw std::runtime_error("harness: write failed for " + path);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

std::string method_name(const MethodSpec& m) {
    std::string reg;
    switch (m.regularization) {
        case Regularization::kBase: reg = "BaseUNet"; break;
        case Regularization::kShape: reg = "ShapeReg"; break;
        case Regularization::kAdv: reg = "AdvReg"; break;
        case Regularization::kCombined: reg = "CombReg"; break;
    }
    return reg + "_" + strategy_name(m.strategy);
}

std::vector<MethodSpec> full_method_grid() {
    std::vector<MethodSpec> grid;
    for (Regularization r : {Regularization::kBase, Regularization::kShape, Regularization::kAdv,
                             Regularization::kCombined}) {
        for (Strategy s : {Strategy::kIndividual, Strategy::kGlobal, Strategy::kMulti}) {
            grid.push_back({r, s});
        }
    }
    return grid;
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& a, const std::string& b) {
    std::uint64_t h = seed ^ 0xcbf29ce484222325ull;
    auto fold = [&h](const std::string& s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        h ^= '|';
        h *= 1099511628211ull;
    };
    fold(a);
    fold(b);
    return h;
}

std::vector<Case> build_dataset(std::uint64_t dataset_seed, int count, int num_classes,
                                std::array<int, 3> extents, std::array<double, 3> spacing_mm) {
    std::vector<Case> cases;
    cases.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Case c = generate_case(dataset_seed + static_cast<std::uint64_t>(i), num_classes, extents,
                               spacing_mm);
        normalize_intensity(c.image);
        cases.push_back(std::move(c));
    }
    return cases;
}

// ---------------------------------------------------------------------------
// Training data assembly
// ---------------------------------------------------------------------------

StrategyData build_strategy_data(const std::vector<const Case*>& cases, Strategy strategy) {
    if (cases.empty()) throw std::invalid_argument("build_strategy_data: no cases");
    const int c_count = cases[0]->num_classes;
    StrategyData data;
    data.num_models = strategy == Strategy::kIndividual ? c_count : 1;
    data.slices.resize(static_cast<std::size_t>(data.num_models));
    data.masks.resize(static_cast<std::size_t>(data.num_models));

    for (const Case* cs : cases) {
        if (cs->num_classes != c_count) {
            throw std::invalid_argument("build_strategy_data: class counts differ across cases");
        }
        const int d = cs->d, h = cs->h, w = cs->w;
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        const LabelEncoding enc = encode_labels(*cs, strategy);
        const int fg = strategy == Strategy::kMulti ? c_count : 1;  // foreground channels per model
        for (int model = 0; model < data.num_models; ++model) {
            const auto& stack = enc.stacks[static_cast<std::size_t>(model)];
            const std::size_t vox = static_cast<std::size_t>(d) * plane;
            for (int z = 0; z < d; ++z) {
                SliceSample s;
                s.h = h;
                s.w = w;
                s.channels = fg;
                s.image.assign(cs->image.begin() + static_cast<std::ptrdiff_t>(z * plane),
                               cs->image.begin() + static_cast<std::ptrdiff_t>((z + 1) * plane));
                s.masks.resize(static_cast<std::size_t>(fg) * plane);
                for (int ch = 0; ch < fg; ++ch) {
                    // multi stacks carry the background channel first
                    const int src = strategy == Strategy::kMulti ? ch + 1 : ch;
                    std::copy(stack.begin() + static_cast<std::ptrdiff_t>(src * vox + z * plane),
                              stack.begin() + static_cast<std::ptrdiff_t>(src * vox + (z + 1) * plane),
                              s.masks.begin() + static_cast<std::ptrdiff_t>(ch * plane));
                }
                // the auto-encoder learns from shapes; slices with no
                // foreground carry none and are left out of its mask set
                bool any_fg = false;
                for (std::uint8_t v : s.masks) any_fg = any_fg || v != 0;
                if (any_fg) {
                    MaskStack m;
                    m.channels = fg;
                    m.h = h;
                    m.w = w;
                    m.masks = s.masks;
                    data.masks[static_cast<std::size_t>(model)].push_back(std::move(m));
                }
                data.slices[static_cast<std::size_t>(model)].push_back(std::move(s));
            }
        }
    }
    return data;
}

TrainedModel train_single_model(const SliceDataset& slices, const std::vector<MaskStack>& masks,
                                const TrainConfig& cfg) {
    const bool want_shape = cfg.regularization == Regularization::kShape ||
                            cfg.regularization == Regularization::kCombined;
    std::optional<ShapeEncoder> encoder;
    std::optional<ShapeDecoder> decoder;
    TrainLog ae_log;
    if (want_shape) {
        auto ae = train_autoencoder(masks, cfg);
        ae_log = std::move(ae.log);
        encoder.emplace(std::move(ae.encoder));
        decoder.emplace(std::move(ae.decoder));
        encoder->set_trainable(false);
    }
    MainTrainResult main = train_main(slices, cfg, encoder ? &*encoder : nullptr);
    TrainedModel model{std::move(main.unet), std::move(main.discriminator), std::move(encoder),
                       std::move(decoder), std::move(ae_log), std::move(main.log)};
    return model;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

BinaryVolume union_masks(const std::vector<BinaryVolume>& masks) {
    if (masks.empty()) throw std::invalid_argument("union_masks: empty set");
    BinaryVolume out = masks[0];
    for (std::size_t i = 1; i < masks.size(); ++i) {
        if (masks[i].voxels.size() != out.voxels.size()) {
            throw std::invalid_argument("union_masks: extents differ");
        }
        for (std::size_t j = 0; j < out.voxels.size(); ++j) {
            out.voxels[j] = out.voxels[j] || masks[i].voxels[j];
        }
    }
    return out;
}

namespace {

// Eval-mode whole-volume forward: [D,1,H,W] in one batch.
Tensor forward_volume(UNet& net, const Case& c) {
    std::vector<double> data(c.image);
    Tensor x = Tensor::from_data({c.d, 1, c.h, c.w}, std::move(data), false);
    return net.forward(x, Mode::kEval);
}

}  // namespace

Prediction predict_case(std::vector<UNet>& models, Strategy strategy, const Case& c,
                        int connectivity, int radius) {
    const int c_count = c.num_classes;
    const std::size_t plane = static_cast<std::size_t>(c.h) * c.w;
    Prediction pred;

    const int expected_models = strategy == Strategy::kIndividual ? c_count : 1;
    if (static_cast<int>(models.size()) != expected_models) {
        throw std::invalid_argument("predict_case: expected " + std::to_string(expected_models) +
                                    " models for strategy " + strategy_name(strategy));
    }
    for (auto& m : models) m.set_trainable(false);
    Tape::active().clear();

    auto postprocess = [&](std::vector<std::vector<std::uint8_t>>& slices) {
        BinaryVolume vol = stack_slices(slices, c.h, c.w, c.spacing_mm);
        vol = largest_connected_component(vol, connectivity);
        return morphological_closing(vol, radius);
    };

    if (strategy == Strategy::kMulti) {
        Tensor y = forward_volume(models[0], c);  // [D, C+1, H, W]
        const int channels = y.extent(1);
        for (int cls = 1; cls < channels; ++cls) {
            std::vector<std::vector<std::uint8_t>> slices(static_cast<std::size_t>(c.d));
            for (int z = 0; z < c.d; ++z) {
                slices[static_cast<std::size_t>(z)].assign(plane, 0);
                for (std::size_t i = 0; i < plane; ++i) {
                    // per-pixel argmax over channels
                    int best = 0;
                    double bv = y.data()[(static_cast<std::size_t>(z) * channels) * plane + i];
                    for (int ch = 1; ch < channels; ++ch) {
                        const double v = y.data()[(static_cast<std::size_t>(z) * channels + ch) * plane + i];
                        if (v > bv) {
                            bv = v;
                            best = ch;
                        }
                    }
                    slices[static_cast<std::size_t>(z)][i] = best == cls;
                }
            }
            pred.structures.push_back(postprocess(slices));
        }
    } else if (strategy == Strategy::kIndividual) {
        for (int cls = 0; cls < c_count; ++cls) {
            Tensor y = forward_volume(models[static_cast<std::size_t>(cls)], c);
            std::vector<std::vector<std::uint8_t>> slices(static_cast<std::size_t>(c.d));
            for (int z = 0; z < c.d; ++z) {
                slices[static_cast<std::size_t>(z)].assign(plane, 0);
                for (std::size_t i = 0; i < plane; ++i) {
                    slices[static_cast<std::size_t>(z)][i] =
                        y.data()[static_cast<std::size_t>(z) * plane + i] >= 0.5;
                }
            }
            pred.structures.push_back(postprocess(slices));
        }
    } else {
        Tensor y = forward_volume(models[0], c);
        std::vector<std::vector<std::uint8_t>> slices(static_cast<std::size_t>(c.d));
        for (int z = 0; z < c.d; ++z) {
            slices[static_cast<std::size_t>(z)].assign(plane, 0);
            for (std::size_t i = 0; i < plane; ++i) {
                slices[static_cast<std::size_t>(z)][i] =
                    y.data()[static_cast<std::size_t>(z) * plane + i] >= 0.5;
            }
        }
        pred.structures.push_back(postprocess(slices));
    }
    Tape::active().clear();
    for (auto& m : models) m.set_trainable(true);

    pred.global_mask = union_masks(pred.structures);
    return pred;
}

// ---------------------------------------------------------------------------
// LOOCV
// ---------------------------------------------------------------------------

namespace {

BinaryVolume label_mask(const Case& c, int cls /* 0 = any foreground */) {
    BinaryVolume v = make_volume(c.d, c.h, c.w, c.spacing_mm);
    for (std::size_t i = 0; i < c.labels.size(); ++i) {
        v.voxels[i] = cls == 0 ? c.labels[i] >= 1 : c.labels[i] == cls;
    }
    return v;
}

FoldResult run_fold(const ExperimentConfig& cfg, const MethodSpec& method,
                    const std::vector<Case>& cases, std::size_t held_out,
                    const ThresholdTable& table) {
    const auto started = std::chrono::steady_clock::now();
    const Case& target = cases[held_out];

    FoldResult fold;
    fold.method = method_name(method);
    fold.held_out_case = target.case_id;

    std::vector<const Case*> training;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (i != held_out) {
            training.push_back(&cases[i]);
            fold.training_cases.push_back(cases[i].case_id);
        }
    }

    const bool emit = !cfg.output_dir.empty();
    const fs::path out(cfg.output_dir);

    try {
        TrainConfig tcfg = cfg.train;
        tcfg.strategy = method.strategy;
        tcfg.regularization = method.regularization;
        tcfg.seed = mix_seed(cfg.train.seed, fold.method, target.case_id);

        StrategyData data = build_strategy_data(training, method.strategy);
        std::vector<UNet> unets;
        for (int model = 0; model < data.num_models; ++model) {
            TrainConfig mcfg = tcfg;
            mcfg.seed = mix_seed(tcfg.seed, "model", std::to_string(model));
            TrainedModel trained = train_single_model(data.slices[static_cast<std::size_t>(model)],
                                                      data.masks[static_cast<std::size_t>(model)], mcfg);
            if (trained.main_log.diverged || trained.ae_log.diverged) {
                fold.failed = true;
                fold.failure_reason = "training diverged (non-finite loss)";
            }
            if (emit) {
                const std::string stem = fold.held_out_case +
                                         (data.num_models > 1 ? "_m" + std::to_string(model) : "");
                const fs::path logdir = out / "logs" / fold.method;
                write_text((logdir / (stem + ".tsv")).string(), trained.main_log.to_tsv());
                const fs::path ckptdir = out / "checkpoints" / fold.method;
                const std::string unet_path = (ckptdir / (stem + ".unet.ckpt")).string();
                save_unet(unet_path, trained.unet);
                fold.checkpoints.push_back(unet_path);
                if (trained.encoder) {
                    write_text((logdir / (stem + ".ae.tsv")).string(), trained.ae_log.to_tsv());
                    const std::string ae_path = (ckptdir / (stem + ".ae.ckpt")).string();
                    save_autoencoder(ae_path, *trained.encoder, *trained.decoder);
                    fold.checkpoints.push_back(ae_path);
                }
                if (trained.discriminator) {
                    const std::string d_path = (ckptdir / (stem + ".disc.ckpt")).string();
                    save_discriminator(d_path, *trained.discriminator);
                    fold.checkpoints.push_back(d_path);
                }
            }
            unets.push_back(std::move(trained.unet));
        }
        if (!fold.failed) {
            Prediction pred = predict_case(unets, method.strategy, target,
                                           cfg.postproc_connectivity, cfg.postproc_radius);
            if (emit && cfg.emit_overlays) {
                // paired prediction / ground-truth dumps for visual review
                const std::string dir = (out / "overlays" / fold.method).string();
                write_mask_vvol(dir, fold.held_out_case + "_pred", pred.global_mask);
                write_mask_vvol(dir, fold.held_out_case + "_gt", label_mask(target, 0));
            }

            if (method.strategy != Strategy::kGlobal) {
                for (int cls = 1; cls <= target.num_classes; ++cls) {
                    MetricReport r = evaluate_masks(label_mask(target, cls),
                                                    pred.structures[static_cast<std::size_t>(cls - 1)]);
                    r.case_id = target.case_id;
                    r.method = fold.method;
                    r.structure = "structure_" + std::to_string(cls);
                    fold.structure_reports.push_back(std::move(r));
                }
            }
            MetricReport g = evaluate_masks(label_mask(target, 0), pred.global_mask);
            g.case_id = target.case_id;
            g.method = fold.method;
            g.structure = "global";
            fold.global_report = std::move(g);

            if (cfg.per_structure_scores && !fold.structure_reports.empty()) {
                double total = 0.0;
                for (const auto& r : fold.structure_reports) total += case_score(r, table);
                fold.score = total / static_cast<double>(fold.structure_reports.size());
            } else {
                fold.score = case_score(fold.global_report, table);
            }
        }
    } catch (const std::exception& e) {
        fold.failed = true;
        fold.failure_reason = e.what();
    }
    fold.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return fold;
}

}  // namespace

RunResult run_loocv(const ExperimentConfig& cfg) {
    if (cfg.dataset_size < 2) {
        throw std::invalid_argument("run_loocv: leave-one-out needs at least 2 cases");
    }
    const std::vector<MethodSpec> grid = cfg.grid.empty() ? full_method_grid() : cfg.grid;
    const std::vector<Case> cases = build_dataset(cfg.dataset_seed, cfg.dataset_size,
                                                  cfg.num_classes, cfg.extents, cfg.spacing_mm);
    const ThresholdTable table;

    struct Task {
        std::size_t method_index;
        std::size_t case_index;
    };
    std::vector<Task> tasks;
    for (std::size_t m = 0; m < grid.size(); ++m) {
        for (std::size_t i = 0; i < cases.size(); ++i) tasks.push_back({m, i});
    }

    if (!cfg.output_dir.empty()) {
        // pre-create the fold artifact tree so workers never race on mkdir
        for (const auto& m : grid) {
            fs::create_directories(fs::path(cfg.output_dir) / "logs" / method_name(m));
            fs::create_directories(fs::path(cfg.output_dir) / "checkpoints" / method_name(m));
            if (cfg.emit_overlays) {
                fs::create_directories(fs::path(cfg.output_dir) / "overlays" / method_name(m));
            }
        }
    }

    RunResult result;
    result.folds.resize(tasks.size());
    std::atomic<std::size_t> next{0};
    const int workers = std::max(1, std::min<int>(cfg.parallel_folds,
                                                  static_cast<int>(tasks.size())));
    auto worker = [&] {
        while (true) {
            const std::size_t at = next.fetch_add(1);
            if (at >= tasks.size()) break;
            const Task& t = tasks[at];
            result.folds[at] = run_fold(cfg, grid[t.method_index], cases, t.case_index, table);
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    // merge order is (method, case_id), independent of worker scheduling
    std::stable_sort(result.folds.begin(), result.folds.end(),
                     [](const FoldResult& a, const FoldResult& b) {
                         if (a.method != b.method) return a.method < b.method;
                         return a.held_out_case < b.held_out_case;
                     });

    for (const auto& fold : result.folds) {
        if (!fold.failed) result.scores[fold.method][fold.held_out_case] = fold.score;
    }
    // ranking needs a common case set; a failed fold removes its case from
    // every method so the comparison stays paired
    std::vector<std::string> failed_cases;
    for (const auto& fold : result.folds) {
        if (fold.failed) failed_cases.push_back(fold.held_out_case);
    }
    for (const auto& id : failed_cases) {
        for (auto& [method, scores] : result.scores) scores.erase(id);
    }
    if (!result.scores.empty() && !result.scores.begin()->second.empty()) {
        result.leaderboard = rank_methods(result.scores);
    }
    if (!cfg.output_dir.empty()) emit_reports(result, cfg, cfg.output_dir);
    return result;
}

Aggregate aggregate_metric(const RunResult& result, const std::string& method,
                           const std::string& metric) {
    std::vector<double> values;
    for (const auto& fold : result.folds) {
        if (fold.method != method || fold.failed) continue;
        const MetricReport& r = fold.global_report;
        std::optional<double> v;
        if (metric == "dice") {
            v = r.dice;
        } else if (metric == "sensitivity") {
            v = r.sensitivity;
        } else if (metric == "specificity") {
            v = r.specificity;
        } else if (metric == "hd_mm") {
            v = r.hd_mm;
        } else if (metric == "msd_mm") {
            v = r.msd_mm;
        } else if (metric == "ravd") {
            v = r.ravd;
        } else {
            throw std::invalid_argument("aggregate_metric: unknown metric " + metric);
        }
        if (v) values.push_back(*v);
    }
    Aggregate agg;
    agg.count = static_cast<int>(values.size());
    if (values.empty()) return agg;
    for (double v : values) agg.mean += v;
    agg.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
        agg.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return agg;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
}

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown_keys(j, {"dataset", "grid", "train", "output_dir", "parallel_folds",
                            "per_structure_scores", "postproc", "emit_overlays"},
                        "top level");
    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        reject_unknown_keys(d, {"seed", "size", "classes", "extents", "spacing_mm"}, "dataset");
        cfg.dataset_seed = d.value("seed", cfg.dataset_seed);
        cfg.dataset_size = d.value("size", cfg.dataset_size);
        cfg.num_classes = d.value("classes", cfg.num_classes);
        if (d.contains("extents")) {
            const auto e = d["extents"].get<std::vector<int>>();
            if (e.size() != 3) throw std::invalid_argument("config: extents must be [D,H,W]");
            cfg.extents = {e[0], e[1], e[2]};
        }
        if (d.contains("spacing_mm")) {
            const auto s = d["spacing_mm"].get<std::vector<double>>();
            if (s.size() != 3) throw std::invalid_argument("config: spacing_mm must be [sz,sy,sx]");
            cfg.spacing_mm = {s[0], s[1], s[2]};
        }
    }
    if (j.contains("grid")) {
        if (j["grid"].is_string() && j["grid"] == "full") {
            cfg.grid = full_method_grid();
        } else {
            for (const auto& entry : j["grid"]) {
                reject_unknown_keys(entry, {"regularization", "strategy"}, "grid entry");
                MethodSpec m;
                m.regularization =
                    regularization_from_name(entry.at("regularization").get<std::string>());
                m.strategy = strategy_from_name(entry.at("strategy").get<std::string>());
                cfg.grid.push_back(m);
            }
        }
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        reject_unknown_keys(t,
                            {"lambda1", "lambda2", "lr_ae", "lr_main", "epochs", "batch_size",
                             "seed", "augment", "unet_depth", "unet_base_channels", "ae_depth",
                             "ae_base_channels", "ae_code_channels", "disc_depth",
                             "disc_base_channels"},
                            "train");
        cfg.train.lambda1 = t.value("lambda1", cfg.train.lambda1);
        cfg.train.lambda2 = t.value("lambda2", cfg.train.lambda2);
        cfg.train.lr_ae = t.value("lr_ae", cfg.train.lr_ae);
        cfg.train.lr_main = t.value("lr_main", cfg.train.lr_main);
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.seed = t.value("seed", cfg.train.seed);
        cfg.train.augment = t.value("augment", cfg.train.augment);
        cfg.train.unet_depth = t.value("unet_depth", cfg.train.unet_depth);
        cfg.train.unet_base_channels = t.value("unet_base_channels", cfg.train.unet_base_channels);
        cfg.train.ae_depth = t.value("ae_depth", cfg.train.ae_depth);
        cfg.train.ae_base_channels = t.value("ae_base_channels", cfg.train.ae_base_channels);
        cfg.train.ae_code_channels = t.value("ae_code_channels", cfg.train.ae_code_channels);
        cfg.train.disc_depth = t.value("disc_depth", cfg.train.disc_depth);
        cfg.train.disc_base_channels = t.value("disc_base_channels", cfg.train.disc_base_channels);
    }
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.parallel_folds = j.value("parallel_folds", cfg.parallel_folds);
    cfg.per_structure_scores = j.value("per_structure_scores", cfg.per_structure_scores);
    if (j.contains("postproc")) {
        const auto& p = j["postproc"];
        reject_unknown_keys(p, {"connectivity", "radius"}, "postproc");
        cfg.postproc_connectivity = p.value("connectivity", cfg.postproc_connectivity);
        cfg.postproc_radius = p.value("radius", cfg.postproc_radius);
    }
    cfg.emit_overlays = j.value("emit_overlays", cfg.emit_overlays);

    if (cfg.dataset_size < 2) throw std::invalid_argument("config: dataset size must be >= 2");
    if (cfg.num_classes < 1 || cfg.num_classes > 5) {
        throw std::invalid_argument("config: classes must lie in 1..5");
    }
    if (cfg.train.lambda1 < 0.0 || cfg.train.lambda2 < 0.0 || cfg.train.batch_size < 1) {
        throw std::invalid_argument("config: lambda weights must be >= 0 and batch size >= 1");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Latent code export
// ---------------------------------------------------------------------------

std::string export_codes_csv(ShapeEncoder& encoder, const std::vector<Case>& cases) {
    const int in_ch = encoder.config().in_channels;
    const int code_ch = encoder.config().code_channels;
    encoder.set_trainable(false);
    std::string out = "case_id,structure,slice";
    for (int k = 0; k < code_ch; ++k) out += ",code_" + std::to_string(k);
    out += "\n";
    char buf[40];
    for (const auto& c : cases) {
        const std::size_t plane = static_cast<std::size_t>(c.h) * c.w;
        for (int cls = 1; cls <= c.num_classes; ++cls) {
            for (int z = 0; z < c.d; ++z) {
                // the structure's mask goes into its strategy channel; the
                // other channels stay empty
                std::vector<double> data(static_cast<std::size_t>(in_ch) * plane, 0.0);
                const int channel = in_ch == 1 ? 0 : cls - 1;
                for (std::size_t i = 0; i < plane; ++i) {
                    data[channel * plane + i] =
                        c.labels[static_cast<std::size_t>(z) * plane + i] == cls ? 1.0 : 0.0;
                }
                Tape::active().clear();
                Tensor y = Tensor::from_data({1, in_ch, c.h, c.w}, std::move(data), false);
                Tensor code = global_max_pool(encoder.forward(y, Mode::kEval));
                out += c.case_id + ",structure_" + std::to_string(cls) + "," + std::to_string(z);
                for (int k = 0; k < code_ch; ++k) {
                    std::snprintf(buf, sizeof buf, ",%.12g", code.data()[static_cast<std::size_t>(k)]);
                    out += buf;
                }
                out += "\n";
                Tape::active().clear();
            }
        }
    }
    encoder.set_trainable(true);
    return out;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

void emit_reports(const RunResult& result, const ExperimentConfig& cfg, const std::string& outdir) {
    fs::create_directories(outdir);

    // metrics.csv / metrics.json: one record per (method, case, structure)
    std::string csv = metric_csv_header() + "\n";
    json jrecords = json::array();
    int failed_folds = 0;
    for (const auto& fold : result.folds) {
        if (fold.failed) {
            ++failed_folds;
            continue;
        }
        for (const auto& r : fold.structure_reports) {
            csv += metric_csv_row(r) + "\n";
            jrecords.push_back(json::parse(metric_json(r)));
        }
        csv += metric_csv_row(fold.global_report) + "\n";
        jrecords.push_back(json::parse(metric_json(fold.global_report)));
    }
    write_text((fs::path(outdir) / "metrics.csv").string(), csv);
    json jmetrics = {{"schema_version", 1}, {"failed_folds", failed_folds}, {"records", jrecords}};
    write_text((fs::path(outdir) / "metrics.json").string(), jmetrics.dump(2) + "\n");

    // summary.csv: per-method mean +- sd per metric over successful folds
    std::string summary =
        "method,folds,failed_folds,dice_pct_mean,dice_pct_sd,sensitivity_pct_mean,"
        "sensitivity_pct_sd,specificity_pct_mean,specificity_pct_sd,hd_mm_mean,hd_mm_sd,"
        "msd_mm_mean,msd_mm_sd,ravd_pct_mean,ravd_pct_sd\n";
    std::map<std::string, std::pair<int, int>> fold_counts;  // method -> (total, failed)
    for (const auto& fold : result.folds) {
        auto& fc = fold_counts[fold.method];
        ++fc.first;
        if (fold.failed) ++fc.second;
    }
    for (const auto& [method, counts] : fold_counts) {
        summary += method + "," + std::to_string(counts.first) + "," + std::to_string(counts.second);
        const char* metrics[] = {"dice", "sensitivity", "specificity", "hd_mm", "msd_mm", "ravd"};
        const double scales[] = {100.0, 100.0, 100.0, 1.0, 1.0, 100.0};
        for (int i = 0; i < 6; ++i) {
            const Aggregate agg = aggregate_metric(result, method, metrics[i]);
            summary += "," + fmt(agg.mean * scales[i]) + "," + fmt(agg.sd * scales[i]);
        }
        summary += "\n";
    }
    write_text((fs::path(outdir) / "summary.csv").string(), summary);

    // leaderboard.csv
    std::string board = "method,mean,median,q1,q3,min,max,rank\n";
    for (const auto& card : result.leaderboard) {
        board += card.method + "," + fmt(card.mean) + "," + fmt(card.median) + "," + fmt(card.q1) +
                 "," + fmt(card.q3) + "," + fmt(card.min) + "," + fmt(card.max) + "," +
                 std::to_string(card.rank) + "\n";
    }
    write_text((fs::path(outdir) / "leaderboard.csv").string(), board);

    // boxplot.json: five-number summary + mean per method (rank order)
    json jbox = json::array();
    for (const auto& card : result.leaderboard) {
        jbox.push_back({{"method", card.method},
                        {"mean", card.mean},
                        {"median", card.median},
                        {"q1", card.q1},
                        {"q3", card.q3},
                        {"min", card.min},
                        {"max", card.max},
                        {"rank", card.rank}});
    }
    write_text((fs::path(outdir) / "boxplot.json").string(),
               json{{"schema_version", 1}, {"methods", jbox}}.dump(2) + "\n");

    // spider.json: per-case scores keyed by case_id per method
    json jspider;
    for (const auto& [method, scores] : result.scores) {
        json per_case;
        for (const auto& [case_id, score] : scores) per_case[case_id] = score;
        jspider[method] = per_case;
    }
    write_text((fs::path(outdir) / "spider.json").string(),
               json{{"schema_version", 1}, {"scores", jspider}}.dump(2) + "\n");
}

}  // namespace segreg
