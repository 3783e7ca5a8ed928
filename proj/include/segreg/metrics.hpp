#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "segreg/volume.hpp"

namespace segreg {

// Per-structure evaluation record. Distances are in millimetres
// (voxel-centre to voxel-centre, per-axis spacing applied before the norm);
// dice/sensitivity/specificity/ravd are fractions. A missing value is the
// explicit undefined marker (empty ground truth, empty surface, ...), never
// a sentinel zero.
struct MetricReport {
    std::string case_id;
    std::string method;
    std::string structure;
    std::optional<double> dice;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    std::optional<double> hd_mm;
    std::optional<double> msd_mm;
    std::optional<double> ravd;
    double delta_mm = 0.0;  // longest possible distance in the volume
};

struct OverlapMetrics {
    std::optional<double> dice;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
};

// Set-cardinality overlap measures. dice/sensitivity are undefined on an
// empty ground truth; specificity on a full-volume ground truth.
OverlapMetrics overlap_metrics(const BinaryVolume& gt, const BinaryVolume& p);

// Foreground voxels with at least one 6-neighbour that is background or
// outside the volume.
std::vector<std::array<int, 3>> surface_voxels(const BinaryVolume& vol);

// max over both directed max-min surface distances; undefined when either
// surface is empty.
std::optional<double> hausdorff(const BinaryVolume& gt, const BinaryVolume& p,
                                std::array<double, 3> spacing_mm);

// Symmetric average of nearest-surface distances.
std::optional<double> mean_surface_distance(const BinaryVolume& gt, const BinaryVolume& p,
                                            std::array<double, 3> spacing_mm);

// | |GT| - |P| | / |GT|; undefined on empty ground truth.
std::optional<double> ravd(const BinaryVolume& gt, const BinaryVolume& p);

// Spacing-scaled diagonal of the volume: the worst possible distance.
double volume_diagonal_mm(int d, int h, int w, std::array<double, 3> spacing_mm);

// All six metrics of one (ground truth, prediction) pair.
MetricReport evaluate_masks(const BinaryVolume& gt, const BinaryVolume& p);

// Exact squared Euclidean distance transform of a voxel grid with per-axis
// spacing: the squared millimetre distance from every voxel to the nearest
// seed voxel. Separable lower-envelope construction, O(voxels) per axis.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& seeds, int d,
                                               int h, int w, std::array<double, 3> spacing_mm);

// CSV / JSON serialization of reports (schema version 1).
std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& r);
std::string metric_json(const MetricReport& r);

}  // namespace segreg
