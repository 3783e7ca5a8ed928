// Command-line front end: phantom dataset generation, training, prediction,
// evaluation, ranking, latent-code export and the full leave-one-out grid.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "segreg/checkpoint.hpp"
#include "segreg/harness.hpp"

using namespace segreg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << text;
    if (!os) throw std::runtime_error("write failed for " + path);
}

struct GenArgs {
    std::string out;
    std::uint64_t seed = 91;
    int cases = 12;
    int classes = 3;
    std::vector<int> extents{16, 64, 64};
    std::vector<double> spacing{0.5, 0.25, 0.25};
};

int cmd_gen(const GenArgs& a) {
    if (a.extents.size() != 3 || a.spacing.size() != 3) {
        throw std::invalid_argument("--extents and --spacing take three values (D H W / sz sy sx)");
    }
    fs::create_directories(a.out);
    json manifest = {{"format", "segreg-dataset"},
                     {"version", 1},
                     {"seed", a.seed},
                     {"classes", a.classes},
                     {"cases", json::array()}};
    for (int i = 0; i < a.cases; ++i) {
        Case c = generate_case(a.seed + static_cast<std::uint64_t>(i), a.classes,
                               {a.extents[0], a.extents[1], a.extents[2]},
                               {a.spacing[0], a.spacing[1], a.spacing[2]});
        write_case_vvol(a.out, c);
        manifest["cases"].push_back(c.case_id);
        std::printf("wrote %s (%s)\n", c.case_id.c_str(), c.condition_tag.c_str());
    }
    write_file((fs::path(a.out) / "dataset.json").string(), manifest.dump(2) + "\n");
    return kExitOk;
}

std::vector<Case> load_cases(const std::string& dir, bool normalize) {
    std::vector<Case> cases;
    for (const auto& id : list_vvol_cases(dir)) {
        Case c = read_case_vvol(dir, id);
        if (normalize) normalize_intensity(c.image);
        cases.push_back(std::move(c));
    }
    if (cases.empty()) throw std::invalid_argument("no VVOL cases found in " + dir);
    return cases;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string strategy = "multi";
    std::string regularization = "combined";
    TrainConfig cfg;
};

int cmd_train(const TrainArgs& a) {
    TrainConfig cfg = a.cfg;
    cfg.strategy = strategy_from_name(a.strategy);
    cfg.regularization = regularization_from_name(a.regularization);

    std::vector<Case> cases = load_cases(a.data, true);
    std::vector<const Case*> refs;
    for (const auto& c : cases) refs.push_back(&c);
    StrategyData data = build_strategy_data(refs, cfg.strategy);

    fs::create_directories(a.out);
    for (int model = 0; model < data.num_models; ++model) {
        TrainConfig mcfg = cfg;
        mcfg.seed = mix_seed(cfg.seed, "model", std::to_string(model));
        TrainedModel trained = train_single_model(data.slices[static_cast<std::size_t>(model)],
                                                  data.masks[static_cast<std::size_t>(model)], mcfg);
        const std::string stem =
            data.num_models > 1 ? "model_m" + std::to_string(model) : "model";
        save_unet((fs::path(a.out) / (stem + ".unet.ckpt")).string(), trained.unet);
        write_file((fs::path(a.out) / (stem + ".loss.tsv")).string(), trained.main_log.to_tsv());
        if (trained.encoder) {
            save_autoencoder((fs::path(a.out) / (stem + ".ae.ckpt")).string(), *trained.encoder,
                             *trained.decoder);
            write_file((fs::path(a.out) / (stem + ".ae.loss.tsv")).string(),
                       trained.ae_log.to_tsv());
        }
        if (trained.discriminator) {
            save_discriminator((fs::path(a.out) / (stem + ".disc.ckpt")).string(),
                               *trained.discriminator);
        }
        if (trained.main_log.diverged || trained.ae_log.diverged) {
            std::fprintf(stderr, "training diverged (non-finite loss)\n");
            return kExitRuntime;
        }
        std::printf("model %d: final mean loss %.6f\n", model,
                    trained.main_log.epochs.empty() ? 0.0 : trained.main_log.epochs.back().total);
    }
    return kExitOk;
}

struct PredictArgs {
    std::vector<std::string> checkpoints;
    std::string data;
    std::string case_id;
    std::string strategy = "multi";
    std::string out;
    int connectivity = 26;
    int radius = 1;
};

int cmd_predict(const PredictArgs& a) {
    const Strategy strategy = strategy_from_name(a.strategy);
    Case c = read_case_vvol(a.data, a.case_id);
    normalize_intensity(c.image);
    std::vector<UNet> models;
    for (const auto& path : a.checkpoints) models.push_back(load_unet(path));
    Prediction pred = predict_case(models, strategy, c, a.connectivity, a.radius);
    fs::create_directories(a.out);
    for (std::size_t i = 0; i < pred.structures.size(); ++i) {
        write_mask_vvol(a.out, a.case_id + "_structure_" + std::to_string(i + 1),
                        pred.structures[i]);
    }
    write_mask_vvol(a.out, a.case_id + "_global", pred.global_mask);
    std::printf("wrote %zu structure masks and the global mask to %s\n", pred.structures.size(),
                a.out.c_str());
    return kExitOk;
}

struct EvalArgs {
    std::string data;
    std::string case_id;
    std::string pred;
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    Case c = read_case_vvol(a.data, a.case_id);
    std::string csv = metric_csv_header() + "\n";
    json records = json::array();
    auto evaluate = [&](const std::string& structure, const BinaryVolume& gt_mask,
                        const std::string& stem) {
        BinaryVolume p = read_mask_vvol(a.pred, stem);
        p.spacing_mm = c.spacing_mm;
        MetricReport r = evaluate_masks(gt_mask, p);
        r.case_id = c.case_id;
        r.method = "cli";
        r.structure = structure;
        csv += metric_csv_row(r) + "\n";
        records.push_back(json::parse(metric_json(r)));
    };
    for (int cls = 1; cls <= c.num_classes; ++cls) {
        const std::string stem = a.case_id + "_structure_" + std::to_string(cls);
        if (!fs::exists(fs::path(a.pred) / (stem + ".vvol.json"))) continue;
        BinaryVolume gt = make_volume(c.d, c.h, c.w, c.spacing_mm);
        for (std::size_t i = 0; i < c.labels.size(); ++i) gt.voxels[i] = c.labels[i] == cls;
        evaluate("structure_" + std::to_string(cls), gt, stem);
    }
    BinaryVolume gt_global = make_volume(c.d, c.h, c.w, c.spacing_mm);
    for (std::size_t i = 0; i < c.labels.size(); ++i) gt_global.voxels[i] = c.labels[i] >= 1;
    evaluate("global", gt_global, a.case_id + "_global");

    if (a.out.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        fs::create_directories(a.out);
        write_file((fs::path(a.out) / "metrics.csv").string(), csv);
        write_file((fs::path(a.out) / "metrics.json").string(),
                   json{{"schema_version", 1}, {"records", records}}.dump(2) + "\n");
    }
    return kExitOk;
}

struct RankArgs {
    std::string scores;
    std::string out;
};

int cmd_rank(const RankArgs& a) {
    const json j = json::parse(read_file(a.scores));
    std::map<std::string, std::map<std::string, double>> scores;
    const json& table = j.contains("scores") ? j["scores"] : j;
    for (const auto& [method, cases] : table.items()) {
        for (const auto& [case_id, score] : cases.items()) {
            scores[method][case_id] = score.get<double>();
        }
    }
    const auto cards = rank_methods(scores);
    std::string csv = "method,mean,median,q1,q3,min,max,rank\n";
    char buf[200];
    for (const auto& card : cards) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n",
                      card.method.c_str(), card.mean, card.median, card.q1, card.q3, card.min,
                      card.max, card.rank);
        csv += buf;
    }
    if (a.out.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        write_file(a.out, csv);
    }
    return kExitOk;
}

struct CodesArgs {
    std::string ae;
    std::string data;
    std::string out;
};

int cmd_codes(const CodesArgs& a) {
    auto pair = load_autoencoder(a.ae);
    std::vector<Case> cases = load_cases(a.data, false);
    const std::string csv = export_codes_csv(pair.first, cases);
    if (a.out.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        write_file(a.out, csv);
    }
    return kExitOk;
}

struct RunArgs {
    std::string config;
    std::string out_override;
    int parallel_override = -1;
};

int cmd_run(const RunArgs& a) {
    ExperimentConfig cfg =
        a.config.empty() ? ExperimentConfig{} : experiment_config_from_json(read_file(a.config));
    if (!a.out_override.empty()) cfg.output_dir = a.out_override;
    if (a.parallel_override > 0) cfg.parallel_folds = a.parallel_override;
    if (cfg.output_dir.empty()) cfg.output_dir = "segreg_out";
    if (cfg.grid.empty()) cfg.grid = full_method_grid();

    RunResult result = run_loocv(cfg);
    int failed = 0;
    for (const auto& fold : result.folds) failed += fold.failed;
    std::printf("completed %zu folds (%d failed); reports under %s\n", result.folds.size(), failed,
                cfg.output_dir.c_str());
    for (const auto& card : result.leaderboard) {
        std::printf("  rank %2d  %-22s mean score %.1f\n", card.rank, card.method.c_str(),
                    card.mean);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regularized multi-structure segmentation benchmark on synthetic phantoms"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* sgen = app.add_subcommand("gen", "generate a phantom VVOL dataset");
    sgen->add_option("--out", gen.out, "output directory")->required();
    sgen->add_option("--seed", gen.seed, "dataset seed");
    sgen->add_option("--cases", gen.cases, "number of cases");
    sgen->add_option("--classes", gen.classes, "structure count C (1..5)");
    sgen->add_option("--extents", gen.extents, "volume extents D H W")->expected(3);
    sgen->add_option("--spacing", gen.spacing, "voxel spacing sz sy sx in mm")->expected(3);

    TrainArgs train;
    auto* strain = app.add_subcommand("train", "train on every case of a dataset");
    strain->add_option("--data", train.data, "dataset directory")->required();
    strain->add_option("--out", train.out, "checkpoint output directory")->required();
    strain->add_option("--strategy", train.strategy, "individual|global|multi");
    strain->add_option("--regularization", train.regularization, "base|shape|adv|combined");
    strain->add_option("--epochs", train.cfg.epochs, "training epochs");
    strain->add_option("--batch-size", train.cfg.batch_size, "batch size");
    strain->add_option("--seed", train.cfg.seed, "training seed");
    strain->add_option("--lambda1", train.cfg.lambda1, "latent penalty weight");
    strain->add_option("--lambda2", train.cfg.lambda2, "adversarial penalty weight");
    strain->add_option("--lr-ae", train.cfg.lr_ae, "auto-encoder learning rate");
    strain->add_option("--lr-main", train.cfg.lr_main, "main learning rate");
    strain->add_flag("--no-augment", [&train](std::int64_t) { train.cfg.augment = false; },
                     "disable augmentation");

    PredictArgs predict;
    auto* spredict = app.add_subcommand("predict", "segment one case with trained checkpoints");
    spredict->add_option("--ckpt", predict.checkpoints,
                         "unet checkpoint(s); one per class for the individual strategy")
        ->required();
    spredict->add_option("--data", predict.data, "dataset directory")->required();
    spredict->add_option("--case", predict.case_id, "case id")->required();
    spredict->add_option("--strategy", predict.strategy, "individual|global|multi");
    spredict->add_option("--out", predict.out, "mask output directory")->required();
    spredict->add_option("--connectivity", predict.connectivity, "component connectivity 6|18|26");
    spredict->add_option("--radius", predict.radius, "closing radius in voxels");

    EvalArgs eval;
    auto* seval = app.add_subcommand("eval", "evaluate predicted masks against ground truth");
    seval->add_option("--data", eval.data, "dataset directory")->required();
    seval->add_option("--case", eval.case_id, "case id")->required();
    seval->add_option("--pred", eval.pred, "directory with predicted masks")->required();
    seval->add_option("--out", eval.out, "report directory (default: stdout)");

    RankArgs rank;
    auto* srank = app.add_subcommand("rank", "rank methods from per-case scores");
    srank->add_option("--scores", rank.scores, "scores JSON (spider.json or {method:{case:score}})")
        ->required();
    srank->add_option("--out", rank.out, "leaderboard CSV path (default: stdout)");

    CodesArgs codes;
    auto* scodes = app.add_subcommand("codes", "export latent shape codes as CSV");
    scodes->add_option("--ae", codes.ae, "auto-encoder checkpoint")->required();
    scodes->add_option("--data", codes.data, "dataset directory")->required();
    scodes->add_option("--out", codes.out, "CSV path (default: stdout)");

    RunArgs run;
    auto* srun = app.add_subcommand("run", "run the leave-one-out experiment grid");
    srun->add_option("--config", run.config, "experiment config JSON");
    srun->add_option("--out", run.out_override, "output directory override");
    srun->add_option("--parallel", run.parallel_override, "concurrent folds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sgen->parsed()) return cmd_gen(gen);
        if (strain->parsed()) return cmd_train(train);
        if (spredict->parsed()) return cmd_predict(predict);
        if (seval->parsed()) return cmd_eval(eval);
        if (srank->parsed()) return cmd_rank(rank);
        if (scodes->parsed()) return cmd_codes(codes);
        if (srun->parsed()) return cmd_run(run);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitConfig;
}
