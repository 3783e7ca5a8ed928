#include "segreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace segreg {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::kIndividual: return "individual";
        case Strategy::kGlobal: return "global";
        case Strategy::kMulti: return "multi";
    }
    return "unknown";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "individual") return Strategy::kIndividual;
    if (name == "global") return Strategy::kGlobal;
    if (name == "multi") return Strategy::kMulti;
    throw std::invalid_argument("unknown strategy '" + name + "'");
}

// ---------------------------------------------------------------------------
// Phantom generation
// ---------------------------------------------------------------------------

namespace {

struct Blob {
    double cz, cy, cx;
    double rz, ry, rx;
    double exponent;
    double amp;            // boundary perturbation amplitude
    double wz, wy, wx;     // perturbation angular rates per voxel
    double pz, py, px;     // phases
};

// Implicit superellipsoid value with a low-frequency additive ripple;
// inside when < 1.
double blob_field(const Blob& b, int z, int y, int x) {
    const double uz = std::fabs((z - b.cz) / b.rz);
    const double uy = std::fabs((y - b.cy) / b.ry);
    const double ux = std::fabs((x - b.cx) / b.rx);
    const double base = std::pow(uz, b.exponent) + std::pow(uy, b.exponent) + std::pow(ux, b.exponent);
    const double ripple = b.amp * std::sin(b.wz * z + b.pz) * std::sin(b.wy * y + b.py) *
                          std::sin(b.wx * x + b.px);
    return base + ripple;
}

bool try_generate(std::uint64_t seed, int c_count, std::array<int, 3> ext,
                  std::array<double, 3> spacing, Case& out) {
    const int d = ext[0], h = ext[1], w = ext[2];
    Rng rng = Rng::stream(seed, "phantom-geometry");

    // every class keeps a characteristic shape band across cases, the way
    // real anatomical structures do: a flat boxy one, a small round one, a
    // tall one, and softer variants for higher class counts
    struct ShapeBand {
        double rx_lo, rx_hi, ry_lo, ry_hi, rz_lo, rz_hi, p_lo, p_hi;
    };
    static constexpr ShapeBand kBands[5] = {
        {0.58, 0.70, 0.19, 0.24, 0.36, 0.44, 2.5, 3.2},
        {0.54, 0.64, 0.18, 0.23, 0.34, 0.42, 1.8, 2.2},
        {0.42, 0.52, 0.24, 0.30, 0.38, 0.46, 2.0, 2.6},
        {0.55, 0.65, 0.17, 0.21, 0.32, 0.38, 2.2, 2.8},
        {0.45, 0.55, 0.21, 0.26, 0.30, 0.36, 1.9, 2.4},
    };

    std::vector<Blob> blobs;
    const double span = static_cast<double>(w) / (c_count + 1);
    for (int c = 0; c < c_count; ++c) {
        const ShapeBand& band = kBands[c];
        Blob b;
        b.cx = span * (c + 1) + rng.uniform(-span * 0.1, span * 0.1);
        b.cy = h / 2.0 + rng.uniform(-h / 8.0, h / 8.0);
        b.cz = d / 2.0 + rng.uniform(-d / 10.0, d / 10.0);
        b.rx = span * rng.uniform(band.rx_lo, band.rx_hi);
        b.ry = h * rng.uniform(band.ry_lo, band.ry_hi);
        b.rz = d * rng.uniform(band.rz_lo, band.rz_hi);
        b.exponent = rng.uniform(band.p_lo, band.p_hi);
        b.amp = rng.uniform(0.04, 0.14);
        b.wz = 2.0 * kPi * rng.uniform(0.8, 2.0) / d;
        b.wy = 2.0 * kPi * rng.uniform(0.8, 2.2) / h;
        b.wx = 2.0 * kPi * rng.uniform(0.8, 2.2) / w;
        b.pz = rng.uniform(0.0, 2.0 * kPi);
        b.py = rng.uniform(0.0, 2.0 * kPi);
        b.px = rng.uniform(0.0, 2.0 * kPi);
        blobs.push_back(b);
    }
    // force nominal overlap of the first two structures; first-come painting
    // turns the overlap into a shared boundary (adjacent, never overlapping)
    if (c_count >= 2) {
        blobs[1].cy = blobs[0].cy + rng.uniform(-h / 16.0, h / 16.0);
        blobs[1].cz = blobs[0].cz + rng.uniform(-d / 12.0, d / 12.0);
        blobs[1].cx = blobs[0].cx + (blobs[0].rx + blobs[1].rx) * rng.uniform(0.84, 0.94);
    }

    out.labels.assign(static_cast<std::size_t>(d) * h * w, 0);
    std::vector<std::size_t> voxels_per_class(static_cast<std::size_t>(c_count) + 1, 0);
    for (int z = 0; z < d; ++z) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t idx = (static_cast<std::size_t>(z) * h + y) * w + x;
                for (int c = 0; c < c_count; ++c) {
                    if (blob_field(blobs[c], z, y, x) < 1.0) {
                        out.labels[idx] = static_cast<std::uint8_t>(c + 1);
                        ++voxels_per_class[static_cast<std::size_t>(c) + 1];
                        break;
                    }
                }
            }
        }
    }

    for (int c = 1; c <= c_count; ++c) {
        if (voxels_per_class[static_cast<std::size_t>(c)] < 16) return false;
    }
    out.d = d;
    out.h = h;
    out.w = w;
    out.spacing_mm = spacing;
    out.num_classes = c_count;
    if (c_count >= 2 && !has_adjacent_structure_pair(out)) return false;

    // intensity model: structure means above a darker background. Class
    // means are spread enough to identify a structure from its bulk, while
    // noise plus the bias field keep every range overlapping with its
    // neighbours and the background, so boundary voxels stay ambiguous.
    Rng irng = Rng::stream(seed, "phantom-intensity");
    const double mean_table[5] = {0.50, 0.80, 1.10, 0.65, 0.95};
    std::vector<double> means(static_cast<std::size_t>(c_count) + 1);
    means[0] = 0.20;
    for (int c = 1; c <= c_count; ++c) {
        means[static_cast<std::size_t>(c)] = mean_table[c - 1] + irng.uniform(-0.03, 0.03);
    }
    const double bias_amp = irng.uniform(0.05, 0.10);
    const double bias_fy = irng.uniform(0.5, 1.5), bias_fx = irng.uniform(0.5, 1.5);
    const double bias_py = irng.uniform(0.0, 2.0 * kPi), bias_px = irng.uniform(0.0, 2.0 * kPi);
    const double zgrad = irng.uniform(-0.06, 0.06);
    const double noise_sd = 0.08;

    out.image.assign(out.labels.size(), 0.0);
    for (int z = 0; z < d; ++z) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t idx = (static_cast<std::size_t>(z) * h + y) * w + x;
                const double bias = bias_amp * std::sin(2.0 * kPi * bias_fy * y / h + bias_py) *
                                        std::sin(2.0 * kPi * bias_fx * x / w + bias_px) +
                                    zgrad * (static_cast<double>(z) / d - 0.5);
                out.image[idx] = means[out.labels[idx]] + bias + noise_sd * irng.normal();
            }
        }
    }
    out.condition_tag = Rng::stream(seed, "phantom-condition").bernoulli(0.5) ? "pathological" : "healthy";
    return true;
}

}  // namespace

Case generate_case(std::uint64_t seed, int num_classes, std::array<int, 3> extents,
                   std::array<double, 3> spacing_mm) {
    if (num_classes < 1 || num_classes > 5) {
        throw std::invalid_argument("generate_case: class count must be in 1..5, got " +
                                    std::to_string(num_classes));
    }
    if (extents[0] < 8 || extents[1] < 32 || extents[2] < 32) {
        throw std::invalid_argument("generate_case: extents below the 8x32x32 minimum");
    }
    for (double s : spacing_mm) {
        if (!(s > 0.0)) throw std::invalid_argument("generate_case: spacing must be positive");
    }
    Case c;
    for (int attempt = 0; attempt < 8; ++attempt) {
        if (try_generate(seed + 0x51a7b2c900000000ull * attempt, num_classes, extents, spacing_mm, c)) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "case_%06llu",
                          static_cast<unsigned long long>(seed % 1000000ull));
            c.case_id = buf;
            return c;
        }
    }
    throw std::runtime_error("generate_case: extents too small to place " +
                             std::to_string(num_classes) + " structures");
}

void normalize_intensity(std::vector<double>& image) {
    if (image.empty()) return;
    double mean = 0.0;
    for (double v : image) mean += v;
    mean /= static_cast<double>(image.size());
    double var = 0.0;
    for (double v : image) {
        const double dv = v - mean;
        var += dv * dv;
    }
    var /= static_cast<double>(image.size());
    if (var < 1e-24) {
        std::fill(image.begin(), image.end(), 0.0);
        return;
    }
    const double inv_sd = 1.0 / std::sqrt(var);
    for (double& v : image) v = (v - mean) * inv_sd;
}

bool has_adjacent_structure_pair(const Case& c) {
    const int d = c.d, h = c.h, w = c.w;
    for (int z = 0; z < d; ++z) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::uint8_t a = c.labels[(static_cast<std::size_t>(z) * h + y) * w + x];
                if (a == 0) continue;
                for (int dz = -1; dz <= 1; ++dz) {
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int zz = z + dz, yy = y + dy, xx = x + dx;
                            if (zz < 0 || zz >= d || yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                            const std::uint8_t b = c.labels[(static_cast<std::size_t>(zz) * h + yy) * w + xx];
                            if (b != 0 && b != a) return true;
                        }
                    }
                }
            }
        }
    }
    return false;
}

LabelEncoding encode_labels(const Case& c, Strategy strategy) {
    LabelEncoding enc;
    enc.strategy = strategy;
    enc.d = c.d;
    enc.h = c.h;
    enc.w = c.w;
    const std::size_t n = c.labels.size();
    switch (strategy) {
        case Strategy::kIndividual: {
            enc.num_models = c.num_classes;
            enc.channels = 1;
            for (int cls = 1; cls <= c.num_classes; ++cls) {
                std::vector<std::uint8_t> mask(n, 0);
                for (std::size_t i = 0; i < n; ++i) mask[i] = c.labels[i] == cls ? 1 : 0;
                enc.stacks.push_back(std::move(mask));
            }
            break;
        }
        case Strategy::kGlobal: {
            enc.num_models = 1;
            enc.channels = 1;
            std::vector<std::uint8_t> mask(n, 0);
            for (std::size_t i = 0; i < n; ++i) mask[i] = c.labels[i] >= 1 ? 1 : 0;
            enc.stacks.push_back(std::move(mask));
            break;
        }
        case Strategy::kMulti: {
            enc.num_models = 1;
            enc.channels = c.num_classes + 1;  // explicit background channel first
            std::vector<std::uint8_t> mask(n * static_cast<std::size_t>(enc.channels), 0);
            for (std::size_t i = 0; i < n; ++i) {
                mask[static_cast<std::size_t>(c.labels[i]) * n + i] = 1;
            }
            enc.stacks.push_back(std::move(mask));
            break;
        }
    }
    return enc;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

AugmentParams identity_augment() { return AugmentParams{}; }

AugmentParams sample_augment(Rng& rng, int h, int w) {
    AugmentParams p;
    p.scale = rng.uniform(0.9, 1.1);
    p.rot_rad = rng.uniform(-15.0, 15.0) * kPi / 180.0;
    p.shift_y = rng.uniform(-0.1, 0.1) * h;
    p.shift_x = rng.uniform(-0.1, 0.1) * w;
    p.flip_v = rng.bernoulli(0.5);
    p.flip_h = rng.bernoulli(0.5);
    return p;
}

void apply_augment(const AugmentParams& p, int h, int w, std::vector<double>& image,
                   std::vector<std::uint8_t>& masks, int mask_channels) {
    if (static_cast<int>(image.size()) != h * w ||
        static_cast<int>(masks.size()) != mask_channels * h * w) {
        throw std::invalid_argument("apply_augment: extents do not match buffers");
    }
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    const double cos_t = std::cos(p.rot_rad), sin_t = std::sin(p.rot_rad);
    const double inv_s = 1.0 / p.scale;
    const double fy = p.flip_v ? -1.0 : 1.0;
    const double fx = p.flip_h ? -1.0 : 1.0;

    std::vector<double> out_img(image.size(), 0.0);
    std::vector<std::uint8_t> out_masks(masks.size(), 0);
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double vy = fy * (y - cy - p.shift_y);
            const double vx = fx * (x - cx - p.shift_x);
            const double sy = cy + inv_s * (cos_t * vy + sin_t * vx);
            const double sx = cx + inv_s * (-sin_t * vy + cos_t * vx);

            // bilinear sample of the image, zero fill outside
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double wy = sy - y0, wx = sx - x0;
            double acc = 0.0;
            for (int oy = 0; oy <= 1; ++oy) {
                for (int ox = 0; ox <= 1; ++ox) {
                    const int yy = y0 + oy, xx = x0 + ox;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const double wgt = (oy ? wy : 1.0 - wy) * (ox ? wx : 1.0 - wx);
                    acc += wgt * image[static_cast<std::size_t>(yy) * w + xx];
                }
            }
            out_img[static_cast<std::size_t>(y) * w + x] = acc;

            // nearest neighbour for the masks
            const int ny = static_cast<int>(std::lround(sy));
            const int nx = static_cast<int>(std::lround(sx));
            if (ny >= 0 && ny < h && nx >= 0 && nx < w) {
                for (int c = 0; c < mask_channels; ++c) {
                    out_masks[c * plane + static_cast<std::size_t>(y) * w + x] =
                        masks[c * plane + static_cast<std::size_t>(ny) * w + nx];
                }
            }
        }
    }
    image = std::move(out_img);
    masks = std::move(out_masks);
}

}  // namespace segreg
