#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "segreg/rng.hpp"

namespace segreg {

// Multi-structure label encodings of a segmentation map: one binary model
// per class, all classes merged, or one channel per class.
enum class Strategy { kIndividual, kGlobal, kMulti };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

// One synthetic subject: intensity volume, integer label volume and
// anisotropic voxel spacing in millimetres (sz, sy, sx).
struct Case {
    std::string case_id;
    std::string condition_tag;  // "healthy" | "pathological"
    int d = 0, h = 0, w = 0;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    int num_classes = 0;                // C
    std::vector<double> image;          // d*h*w row-major
    std::vector<std::uint8_t> labels;   // d*h*w, values 0..C

    std::size_t voxel_count() const { return image.size(); }
};

// Per-strategy binary mask stacks. `stacks` holds one entry per model
// (C entries for individual, one otherwise); each entry is channels*d*h*w.
struct LabelEncoding {
    Strategy strategy = Strategy::kGlobal;
    int num_models = 0;
    int channels = 0;  // per model: 1, 1, or C+1 (background first) for multi
    int d = 0, h = 0, w = 0;
    std::vector<std::vector<std::uint8_t>> stacks;
};

// Deterministic phantom: C superellipsoid structures with low-frequency
// boundary perturbation, at least one 26-adjacent structure pair, an
// intensity image of per-structure means plus a smooth bias field and
// Gaussian noise. extents are (D,H,W) with D >= 8 and H,W >= 32.
Case generate_case(std::uint64_t seed, int num_classes, std::array<int, 3> extents,
                   std::array<double, 3> spacing_mm);

// Zero-mean unit-variance rescaling; constant volumes map to all zeros.
void normalize_intensity(std::vector<double>& image);

LabelEncoding encode_labels(const Case& c, Strategy strategy);

// True when any two voxels of distinct foreground labels are 26-adjacent.
bool has_adjacent_structure_pair(const Case& c);

// ---------------------------------------------------------------------------
// On-the-fly 2D augmentation
// ---------------------------------------------------------------------------

struct AugmentParams {
    double scale = 1.0;     // [0.9, 1.1]
    double rot_rad = 0.0;   // [-15 deg, 15 deg]
    double shift_y = 0.0;   // voxels, |shift| <= 10% extent
    double shift_x = 0.0;
    bool flip_h = false;    // horizontal (x) flip
    bool flip_v = false;    // vertical (y) flip
};

AugmentParams identity_augment();
AugmentParams sample_augment(Rng& rng, int h, int w);

// Applies one transform identically to the image slice (bilinear) and its
// aligned mask channels (nearest-neighbour, preserving binarity).
// Out-of-frame regions fill with background (0).
void apply_augment(const AugmentParams& p, int h, int w, std::vector<double>& image,
                   std::vector<std::uint8_t>& masks, int mask_channels);

}  // namespace segreg
