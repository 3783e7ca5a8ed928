#include "segreg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace segreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_extents(const BinaryVolume& a, const BinaryVolume& b, const char* op) {
    if (a.d != b.d || a.h != b.h || a.w != b.w) {
        throw std::invalid_argument(std::string(op) + ": volume extents differ");
    }
}

// 1D squared-distance lower envelope over samples at positions i*s.
void edt_1d(const double* f, double* out, int n, double s, std::vector<int>& v,
            std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    const double s2 = s * s;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (f[v[0]] == kInf) {
            // no finite parabola yet
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double intersect;
        while (true) {
            const int p = v[k];
            intersect = ((f[q] + s2 * q * q) - (f[p] + s2 * p * p)) / (2.0 * s2 * (q - p));
            if (intersect <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = intersect;
        z[k + 1] = kInf;
    }
    if (f[v[0]] == kInf) {
        for (int q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = s * (q - v[k]);
        out[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& seeds, int d,
                                               int h, int w,
                                               std::array<double, 3> spacing_mm) {
    const std::size_t n = static_cast<std::size_t>(d) * h * w;
    if (seeds.size() != n) throw std::invalid_argument("distance transform: seed size mismatch");
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = seeds[i] ? 0.0 : kInf;

    const int max_extent = std::max({d, h, w});
    std::vector<double> line(max_extent), out(max_extent);
    std::vector<int> v(max_extent);
    std::vector<double> z(max_extent + 1);

    // along x
    for (int zz = 0; zz < d; ++zz) {
        for (int yy = 0; yy < h; ++yy) {
            double* row = dist.data() + (static_cast<std::size_t>(zz) * h + yy) * w;
            edt_1d(row, out.data(), w, spacing_mm[2], v, z);
            std::copy(out.begin(), out.begin() + w, row);
        }
    }
    // along y
    for (int zz = 0; zz < d; ++zz) {
        for (int xx = 0; xx < w; ++xx) {
            for (int yy = 0; yy < h; ++yy) {
                line[yy] = dist[(static_cast<std::size_t>(zz) * h + yy) * w + xx];
            }
            edt_1d(line.data(), out.data(), h, spacing_mm[1], v, z);
            for (int yy = 0; yy < h; ++yy) {
                dist[(static_cast<std::size_t>(zz) * h + yy) * w + xx] = out[yy];
            }
        }
    }
    // along z
    for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
            for (int zz = 0; zz < d; ++zz) {
                line[zz] = dist[(static_cast<std::size_t>(zz) * h + yy) * w + xx];
            }
            edt_1d(line.data(), out.data(), d, spacing_mm[0], v, z);
            for (int zz = 0; zz < d; ++zz) {
                dist[(static_cast<std::size_t>(zz) * h + yy) * w + xx] = out[zz];
            }
        }
    }
    return dist;
}

OverlapMetrics overlap_metrics(const BinaryVolume& gt, const BinaryVolume& p) {
    require_same_extents(gt, p, "overlap_metrics");
    std::size_t tp = 0, tn = 0, gt_count = 0, p_count = 0;
    for (std::size_t i = 0; i < gt.voxels.size(); ++i) {
        const bool g = gt.voxels[i] != 0, q = p.voxels[i] != 0;
        gt_count += g;
        p_count += q;
        tp += g && q;
        tn += !g && !q;
    }
    const std::size_t total = gt.voxels.size();
    OverlapMetrics m;
    if (gt_count > 0) {
        m.dice = 2.0 * static_cast<double>(tp) / static_cast<double>(gt_count + p_count);
        m.sensitivity = static_cast<double>(tp) / static_cast<double>(gt_count);
    }
    if (gt_count < total) {
        m.specificity = static_cast<double>(tn) / static_cast<double>(total - gt_count);
    }
    return m;
}

std::vector<std::array<int, 3>> surface_voxels(const BinaryVolume& vol) {
    std::vector<std::array<int, 3>> out;
    static constexpr int kOffsets[6][3] = {{-1, 0, 0}, {1, 0, 0},  {0, -1, 0},
                                           {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
    for (int z = 0; z < vol.d; ++z) {
        for (int y = 0; y < vol.h; ++y) {
            for (int x = 0; x < vol.w; ++x) {
                if (!vol.at(z, y, x)) continue;
                for (const auto& o : kOffsets) {
                    const int zz = z + o[0], yy = y + o[1], xx = x + o[2];
                    if (!vol.inside(zz, yy, xx) || !vol.at(zz, yy, xx)) {
                        out.push_back({z, y, x});
                        break;
                    }
                }
            }
        }
    }
    return out;
}

namespace {

std::vector<std::uint8_t> surface_seed_grid(const BinaryVolume& vol,
                                            const std::vector<std::array<int, 3>>& surface) {
    std::vector<std::uint8_t> seeds(vol.voxels.size(), 0);
    for (const auto& s : surface) {
        seeds[(static_cast<std::size_t>(s[0]) * vol.h + s[1]) * vol.w + s[2]] = 1;
    }
    return seeds;
}

struct DirectedStats {
    double max_sq = 0.0;
    double sum = 0.0;  // of unsquared distances
};

DirectedStats directed_surface_distances(const std::vector<std::array<int, 3>>& from,
                                         const std::vector<double>& sq_dist_to_other,
                                         const BinaryVolume& grid) {
    DirectedStats s;
    for (const auto& v : from) {
        const double d2 = sq_dist_to_other[(static_cast<std::size_t>(v[0]) * grid.h + v[1]) * grid.w + v[2]];
        s.max_sq = std::max(s.max_sq, d2);
        s.sum += std::sqrt(d2);
    }
    return s;
}

}  // namespace

std::optional<double> hausdorff(const BinaryVolume& gt, const BinaryVolume& p,
                                std::array<double, 3> spacing_mm) {
    require_same_extents(gt, p, "hausdorff");
    const auto s_gt = surface_voxels(gt);
    const auto s_p = surface_voxels(p);
    if (s_gt.empty() || s_p.empty()) return std::nullopt;
    const auto d_to_p = squared_distance_transform(surface_seed_grid(p, s_p), gt.d, gt.h, gt.w, spacing_mm);
    const auto d_to_gt = squared_distance_transform(surface_seed_grid(gt, s_gt), gt.d, gt.h, gt.w, spacing_mm);
    const double h_gp = directed_surface_distances(s_gt, d_to_p, gt).max_sq;
    const double h_pg = directed_surface_distances(s_p, d_to_gt, gt).max_sq;
    return std::sqrt(std::max(h_gp, h_pg));
}

std::optional<double> mean_surface_distance(const BinaryVolume& gt, const BinaryVolume& p,
                                            std::array<double, 3> spacing_mm) {
    require_same_extents(gt, p, "mean_surface_distance");
    const auto s_gt = surface_voxels(gt);
    const auto s_p = surface_voxels(p);
    if (s_gt.empty() || s_p.empty()) return std::nullopt;
    const auto d_to_p = squared_distance_transform(surface_seed_grid(p, s_p), gt.d, gt.h, gt.w, spacing_mm);
    const auto d_to_gt = squared_distance_transform(surface_seed_grid(gt, s_gt), gt.d, gt.h, gt.w, spacing_mm);
    const double sum = directed_surface_distances(s_gt, d_to_p, gt).sum +
                       directed_surface_distances(s_p, d_to_gt, gt).sum;
    return sum / static_cast<double>(s_gt.size() + s_p.size());
}

std::optional<double> ravd(const BinaryVolume& gt, const BinaryVolume& p) {
    require_same_extents(gt, p, "ravd");
    const double gt_count = static_cast<double>(gt.count());
    if (gt_count == 0.0) return std::nullopt;
    const double p_count = static_cast<double>(p.count());
    return std::fabs(gt_count - p_count) / gt_count;
}

double volume_diagonal_mm(int d, int h, int w, std::array<double, 3> spacing_mm) {
    const double dz = (d - 1) * spacing_mm[0];
    const double dy = (h - 1) * spacing_mm[1];
    const double dx = (w - 1) * spacing_mm[2];
    return std::sqrt(dz * dz + dy * dy + dx * dx);
}

MetricReport evaluate_masks(const BinaryVolume& gt, const BinaryVolume& p) {
    require_same_extents(gt, p, "evaluate_masks");
    MetricReport r;
    const OverlapMetrics o = overlap_metrics(gt, p);
    r.dice = o.dice;
    r.sensitivity = o.sensitivity;
    r.specificity = o.specificity;
    r.hd_mm = hausdorff(gt, p, gt.spacing_mm);
    r.msd_mm = mean_surface_distance(gt, p, gt.spacing_mm);
    r.ravd = ravd(gt, p);
    r.delta_mm = volume_diagonal_mm(gt.d, gt.h, gt.w, gt.spacing_mm);
    return r;
}

namespace {

std::string opt_csv(const std::optional<double>& v, double unit_scale = 1.0) {
    if (!v) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", *v * unit_scale);
    return buf;
}

}  // namespace

std::string metric_csv_header() {
    return "case_id,method,structure,dice_pct,sensitivity_pct,specificity_pct,hd_mm,msd_mm,ravd_pct,delta_mm";
}

std::string metric_csv_row(const MetricReport& r) {
    char buf[64];
    std::string out = r.case_id + "," + r.method + "," + r.structure + ",";
    out += opt_csv(r.dice, 100.0) + "," + opt_csv(r.sensitivity, 100.0) + "," +
           opt_csv(r.specificity, 100.0) + "," + opt_csv(r.hd_mm) + "," + opt_csv(r.msd_mm) + "," +
           opt_csv(r.ravd, 100.0) + ",";
    std::snprintf(buf, sizeof buf, "%.9g", r.delta_mm);
    out += buf;
    return out;
}

std::string metric_json(const MetricReport& r) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["case_id"] = r.case_id;
    j["method"] = r.method;
    j["structure"] = r.structure;
    auto put = [&j](const char* key, const std::optional<double>& v, double scale) {
        if (v) {
            j[key] = *v * scale;
        } else {
            j[key] = nullptr;
        }
    };
    put("dice_pct", r.dice, 100.0);
    put("sensitivity_pct", r.sensitivity, 100.0);
    put("specificity_pct", r.specificity, 100.0);
    put("hd_mm", r.hd_mm, 1.0);
    put("msd_mm", r.msd_mm, 1.0);
    put("ravd_pct", r.ravd, 100.0);
    j["delta_mm"] = r.delta_mm;
    return j.dump();
}

}  // namespace segreg
