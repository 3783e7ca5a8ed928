#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "segreg/harness.hpp"

using namespace segreg;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_experiment(const std::string& outdir = "") {
    ExperimentConfig cfg;
    cfg.dataset_seed = 2200;
    cfg.dataset_size = 3;
    cfg.num_classes = 2;
    cfg.extents = {8, 32, 32};
    cfg.spacing_mm = {0.5, 0.25, 0.25};
    cfg.grid = {{Regularization::kBase, Strategy::kMulti}};
    cfg.train.epochs = 1;
    cfg.train.batch_size = 4;
    cfg.train.seed = 77;
    cfg.train.unet_depth = 2;
    cfg.train.unet_base_channels = 4;
    cfg.train.ae_depth = 2;
    cfg.train.ae_base_channels = 4;
    cfg.train.ae_code_channels = 8;
    cfg.train.disc_depth = 2;
    cfg.train.disc_base_channels = 4;
    cfg.output_dir = outdir;
    cfg.emit_overlays = false;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("dataset builder is deterministic and normalizes intensities") {
    auto a = build_dataset(10, 3, 2, {8, 32, 32}, {0.5, 0.25, 0.25});
    auto b = build_dataset(10, 3, 2, {8, 32, 32}, {0.5, 0.25, 0.25});
    REQUIRE(a.size() == 3);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].labels == b[i].labels);
        ids.insert(a[i].case_id);
        double mean = 0.0;
        for (double v : a[i].image) mean += v;
        mean /= static_cast<double>(a[i].image.size());
        CHECK(std::fabs(mean) < 1e-9);
    }
    CHECK(ids.size() == 3);
}

TEST_CASE("strategy data shapes: models, channels, slices") {
    auto cases = build_dataset(20, 2, 3, {8, 32, 32}, {1, 1, 1});
    std::vector<const Case*> refs{&cases[0], &cases[1]};

    StrategyData ind = build_strategy_data(refs, Strategy::kIndividual);
    CHECK(ind.num_models == 3);
    CHECK(ind.slices[0].size() == 16);  // 2 cases x 8 slices
    CHECK(ind.slices[0][0].channels == 1);

    StrategyData glob = build_strategy_data(refs, Strategy::kGlobal);
    CHECK(glob.num_models == 1);
    CHECK(glob.slices[0][0].channels == 1);

    StrategyData multi = build_strategy_data(refs, Strategy::kMulti);
    CHECK(multi.num_models == 1);
    CHECK(multi.slices[0][0].channels == 3);  // foreground classes only

    // global mask equals the union of the individual masks, slice by slice
    for (std::size_t s = 0; s < glob.slices[0].size(); ++s) {
        const auto& g = glob.slices[0][s].masks;
        for (std::size_t i = 0; i < g.size(); ++i) {
            int u = 0;
            for (int m = 0; m < 3; ++m) u |= ind.slices[static_cast<std::size_t>(m)][s].masks[i];
            CHECK(u == g[i]);
        }
    }
}

TEST_CASE("union of masks matches a per-voxel set oracle") {
    Rng rng(9);
    std::vector<BinaryVolume> masks;
    for (int m = 0; m < 3; ++m) {
        BinaryVolume v = make_volume(3, 4, 4, {1, 1, 1});
        for (auto& vox : v.voxels) vox = rng.bernoulli(0.3);
        masks.push_back(std::move(v));
    }
    BinaryVolume u = union_masks(masks);
    for (std::size_t i = 0; i < u.voxels.size(); ++i) {
        const int expected = masks[0].voxels[i] | masks[1].voxels[i] | masks[2].voxels[i];
        CHECK(u.voxels[i] == expected);
    }
}

TEST_CASE("prediction emits per-structure masks whose union is the global transform") {
    auto cases = build_dataset(30, 2, 2, {8, 32, 32}, {0.5, 0.25, 0.25});
    std::vector<const Case*> train_refs{&cases[0]};
    StrategyData data = build_strategy_data(train_refs, Strategy::kIndividual);

    TrainConfig cfg = tiny_experiment().train;
    cfg.strategy = Strategy::kIndividual;
    cfg.regularization = Regularization::kBase;
    std::vector<UNet> models;
    for (int m = 0; m < data.num_models; ++m) {
        auto trained = train_single_model(data.slices[static_cast<std::size_t>(m)],
                                          data.masks[static_cast<std::size_t>(m)], cfg);
        models.push_back(std::move(trained.unet));
    }
    Prediction pred = predict_case(models, Strategy::kIndividual, cases[1], 26, 1);
    REQUIRE(pred.structures.size() == 2);
    BinaryVolume manual = pred.structures[0];
    for (std::size_t i = 0; i < manual.voxels.size(); ++i) {
        manual.voxels[i] = manual.voxels[i] || pred.structures[1].voxels[i];
    }
    CHECK(pred.global_mask.voxels == manual.voxels);

    // binarity after post-processing
    for (const auto& s : pred.structures) {
        for (auto v : s.voxels) CHECK((v == 0 || v == 1));
    }
}

TEST_CASE("loocv produces one fold per case, each leaving out exactly that case") {
    ExperimentConfig cfg = tiny_experiment();
    RunResult result = run_loocv(cfg);
    REQUIRE(result.folds.size() == 3);
    std::set<std::string> held;
    for (const auto& fold : result.folds) {
        held.insert(fold.held_out_case);
        CHECK(fold.training_cases.size() == 2);
        for (const auto& id : fold.training_cases) CHECK(id != fold.held_out_case);
        CHECK_FALSE(fold.failed);
    }
    CHECK(held.size() == 3);
    REQUIRE(result.leaderboard.size() == 1);
    CHECK(result.leaderboard[0].rank == 1);
    CHECK_THROWS_AS(run_loocv([] {
                        ExperimentConfig c = tiny_experiment();
                        c.dataset_size = 1;
                        return c;
                    }()),
                    std::invalid_argument);
}

TEST_CASE("aggregates equal an independent recomputation") {
    ExperimentConfig cfg = tiny_experiment();
    RunResult result = run_loocv(cfg);
    const std::string method = method_name(cfg.grid[0]);
    std::vector<double> dices;
    for (const auto& fold : result.folds) {
        if (!fold.failed && fold.global_report.dice) dices.push_back(*fold.global_report.dice);
    }
    REQUIRE_FALSE(dices.empty());
    double mean = 0.0;
    for (double v : dices) mean += v;
    mean /= static_cast<double>(dices.size());
    double ss = 0.0;
    for (double v : dices) ss += (v - mean) * (v - mean);
    const double sd = dices.size() > 1 ? std::sqrt(ss / static_cast<double>(dices.size() - 1)) : 0.0;
    const Aggregate agg = aggregate_metric(result, method, "dice");
    CHECK(std::fabs(agg.mean - mean) < 1e-9);
    CHECK(std::fabs(agg.sd - sd) < 1e-9);
    CHECK(agg.count == static_cast<int>(dices.size()));
}

TEST_CASE("report emission writes stable, versioned files") {
    const fs::path out = fs::temp_directory_path() / "segreg_reports_test";
    fs::remove_all(out);
    ExperimentConfig cfg = tiny_experiment(out.string());
    RunResult result = run_loocv(cfg);

    CHECK(fs::exists(out / "metrics.csv"));
    CHECK(fs::exists(out / "metrics.json"));
    CHECK(fs::exists(out / "leaderboard.csv"));
    CHECK(fs::exists(out / "boxplot.json"));
    CHECK(fs::exists(out / "spider.json"));
    CHECK(fs::exists(out / "summary.csv"));
    CHECK_FALSE(result.folds[0].checkpoints.empty());
    for (const auto& ckpt : result.folds[0].checkpoints) CHECK(fs::exists(ckpt));

    const std::string metrics_a = slurp(out / "metrics.csv");
    CHECK(metrics_a.find("case_id,method,structure") == 0);

    // byte-identical on a rerun with the same seeds
    const fs::path out2 = fs::temp_directory_path() / "segreg_reports_test2";
    fs::remove_all(out2);
    ExperimentConfig cfg2 = tiny_experiment(out2.string());
    (void)run_loocv(cfg2);
    CHECK(slurp(out2 / "metrics.csv") == metrics_a);
    CHECK(slurp(out2 / "leaderboard.csv") == slurp(out / "leaderboard.csv"));

    // loss log external interface rides along
    const std::string method = method_name(cfg.grid[0]);
    CHECK(fs::exists(out / "logs" / method));
    fs::remove_all(out);
    fs::remove_all(out2);
}

TEST_CASE("empty results still emit headers-only CSV and valid JSON") {
    const fs::path out = fs::temp_directory_path() / "segreg_empty_reports";
    fs::remove_all(out);
    RunResult empty;
    ExperimentConfig cfg = tiny_experiment();
    emit_reports(empty, cfg, out.string());
    const std::string csv = slurp(out / "metrics.csv");
    CHECK(csv == metric_csv_header() + "\n");
    const std::string board = slurp(out / "leaderboard.csv");
    CHECK(board == "method,mean,median,q1,q3,min,max,rank\n");
    CHECK(slurp(out / "boxplot.json").find("\"methods\": []") != std::string::npos);
    fs::remove_all(out);
}

TEST_CASE("experiment config JSON round-trips fields and rejects junk") {
    const std::string text = R"({
        "dataset": {"seed": 5, "size": 4, "classes": 2,
                    "extents": [8, 32, 32], "spacing_mm": [0.5, 0.25, 0.25]},
        "grid": [{"regularization": "combined", "strategy": "multi"}],
        "train": {"epochs": 3, "batch_size": 2, "lambda1": 1e-5, "lr_main": 1e-3},
        "output_dir": "out",
        "parallel_folds": 2,
        "postproc": {"connectivity": 6, "radius": 2}
    })";
    ExperimentConfig cfg = experiment_config_from_json(text);
    CHECK(cfg.dataset_seed == 5);
    CHECK(cfg.dataset_size == 4);
    CHECK(cfg.num_classes == 2);
    CHECK(cfg.extents == std::array<int, 3>{8, 32, 32});
    REQUIRE(cfg.grid.size() == 1);
    CHECK(cfg.grid[0].regularization == Regularization::kCombined);
    CHECK(cfg.grid[0].strategy == Strategy::kMulti);
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.train.lambda1 == 1e-5);
    CHECK(cfg.postproc_connectivity == 6);
    CHECK(cfg.postproc_radius == 2);

    ExperimentConfig full = experiment_config_from_json(R"({"grid": "full"})");
    CHECK(full.grid.size() == 12);

    CHECK_THROWS_AS(experiment_config_from_json("not json"), std::invalid_argument);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"typo_key": 1})"), std::invalid_argument);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"dataset": {"size": 1}})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"train": {"lambda1": -1}})"),
                    std::invalid_argument);
}

TEST_CASE("latent code export: shape, purity and the all-zero mask") {
    auto cases = build_dataset(40, 1, 2, {8, 32, 32}, {1, 1, 1});
    AutoEncoderConfig acfg;
    acfg.in_channels = 2;
    acfg.depth = 2;
    acfg.base_channels = 4;
    acfg.code_channels = 8;
    auto [encoder, decoder] = build_autoencoder(acfg, 50);
    (void)decoder;
    // seed the running moments
    Tensor warm = Tensor::zeros({1, 2, 32, 32});
    (void)encoder.forward(warm, Mode::kTrain);
    Tape::active().clear();

    const std::string csv = export_codes_csv(encoder, cases);
    std::istringstream is(csv);
    std::string header;
    std::getline(is, header);
    CHECK(header == "case_id,structure,slice,code_0,code_1,code_2,code_3,code_4,code_5,code_6,code_7");
    std::size_t rows = 0;
    std::string line;
    std::set<std::string> distinct;
    while (std::getline(is, line)) {
        ++rows;
        distinct.insert(line.substr(line.find(',')));
    }
    CHECK(rows == 2u * 8u);  // structures x slices

    const std::string again = export_codes_csv(encoder, cases);
    CHECK(again == csv);
}
