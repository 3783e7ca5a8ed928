#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segreg/metrics.hpp"
#include "segreg/nets.hpp"
#include "segreg/postproc.hpp"
#include "segreg/ranking.hpp"
#include "segreg/train.hpp"
#include "segreg/volume.hpp"

namespace segreg {

struct MethodSpec {
    Regularization regularization = Regularization::kBase;
    Strategy strategy = Strategy::kMulti;
};

// e.g. "CombReg_multi", matching the usual reporting labels.
std::string method_name(const MethodSpec& m);

struct ExperimentConfig {
    std::uint64_t dataset_seed = 91;
    int dataset_size = 12;
    int num_classes = 3;
    std::array<int, 3> extents{16, 64, 64};
    std::array<double, 3> spacing_mm{0.5, 0.25, 0.25};
    std::vector<MethodSpec> grid;  // empty = full 4 regularizations x 3 strategies
    TrainConfig train;
    std::string output_dir;
    int parallel_folds = 1;
    // score each case on the global-transformed mask (default) or on the
    // mean of per-structure scores
    bool per_structure_scores = false;
    int postproc_connectivity = 26;
    int postproc_radius = 1;
    bool emit_overlays = true;
};

std::vector<MethodSpec> full_method_grid();

// Phantom dataset with per-volume normalized intensities; case i uses seed
// dataset_seed + i.
std::vector<Case> build_dataset(std::uint64_t dataset_seed, int count, int num_classes,
                                std::array<int, 3> extents, std::array<double, 3> spacing_mm);

// Per-model training inputs of one strategy (C models for individual).
struct StrategyData {
    int num_models = 0;
    std::vector<SliceDataset> slices;            // per model
    std::vector<std::vector<MaskStack>> masks;   // per model, AE inputs
};
StrategyData build_strategy_data(const std::vector<const Case*>& cases, Strategy strategy);

struct TrainedModel {
    UNet unet;
    std::optional<Discriminator> discriminator;
    std::optional<ShapeEncoder> encoder;
    std::optional<ShapeDecoder> decoder;
    TrainLog ae_log;
    TrainLog main_log;
};

// Two-step training of one model: auto-encoder first when the
// regularization needs it, then the alternating main loop.
TrainedModel train_single_model(const SliceDataset& slices, const std::vector<MaskStack>& masks,
                                const TrainConfig& cfg);

// Slice-wise eval-mode prediction, per-pixel argmax (multi) or 0.5 threshold
// (binary heads), then stack -> largest component -> closing per structure.
struct Prediction {
    std::vector<BinaryVolume> structures;  // C entries (individual/multi), 1 (global)
    BinaryVolume global_mask;              // union of the per-structure volumes
};
Prediction predict_case(std::vector<UNet>& models, Strategy strategy, const Case& c,
                        int connectivity, int radius);

// The transformation used for cross-strategy comparison.
BinaryVolume union_masks(const std::vector<BinaryVolume>& masks);

struct FoldResult {
    std::string method;
    std::string held_out_case;
    std::vector<std::string> training_cases;
    std::vector<MetricReport> structure_reports;
    MetricReport global_report;
    double score = 0.0;
    bool failed = false;
    std::string failure_reason;
    double wall_seconds = 0.0;
    std::vector<std::string> checkpoints;  // paths written under the output dir
};

struct RunResult {
    std::vector<FoldResult> folds;  // ordered by (method, case_id)
    std::vector<ScoreCard> leaderboard;
    std::map<std::string, std::map<std::string, double>> scores;  // method -> case -> score
};

// Leave-one-out over the method grid: N folds per method, each training on
// N-1 cases and evaluated on the held-out one. A diverged fold is marked
// failed and excluded from aggregates; the run continues.
RunResult run_loocv(const ExperimentConfig& cfg);

// Latent codes: encoder bottleneck of each (case, structure, slice) mask
// reduced by global max pooling, as CSV rows ready for external embedding
// tools.
std::string export_codes_csv(ShapeEncoder& encoder, const std::vector<Case>& cases);

// metrics.csv / metrics.json / summary.csv / leaderboard.csv / boxplot.json
// / spider.json under outdir (schemas versioned), plus the per-fold loss
// logs and, optionally, paired prediction/ground-truth overlay volumes.
void emit_reports(const RunResult& result, const ExperimentConfig& cfg, const std::string& outdir);

// Aggregate mean and sample SD of one metric over the successful folds of a
// method (global-transformed reports).
struct Aggregate {
    double mean = 0.0;
    double sd = 0.0;
    int count = 0;
};
Aggregate aggregate_metric(const RunResult& result, const std::string& method,
                           const std::string& metric);

std::uint64_t mix_seed(std::uint64_t seed, const std::string& a, const std::string& b);

// Parses the run-config JSON (documented in the README); unknown keys are
// rejected so typos fail loudly.
ExperimentConfig experiment_config_from_json(const std::string& json_text);

}  // namespace segreg
