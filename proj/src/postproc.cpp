#include "segreg/postproc.hpp"

#include <stdexcept>

namespace segreg {

BinaryVolume stack_slices(const std::vector<std::vector<std::uint8_t>>& slices, int h, int w,
                          std::array<double, 3> spacing_mm) {
    BinaryVolume vol = make_volume(static_cast<int>(slices.size()), h, w, spacing_mm);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t z = 0; z < slices.size(); ++z) {
        if (slices[z].size() != plane) {
            throw std::invalid_argument("stack_slices: slice " + std::to_string(z) +
                                        " does not match " + std::to_string(h) + "x" + std::to_string(w));
        }
        for (std::size_t i = 0; i < plane; ++i) vol.voxels[z * plane + i] = slices[z][i] != 0;
    }
    return vol;
}

namespace {

std::vector<std::array<int, 3>> neighbour_offsets(int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26) {
        throw std::invalid_argument("connectivity must be 6, 18 or 26, got " +
                                    std::to_string(connectivity));
    }
    std::vector<std::array<int, 3>> offsets;
    for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
                if (manhattan == 0) continue;
                if (connectivity == 6 && manhattan > 1) continue;
                if (connectivity == 18 && manhattan > 2) continue;
                offsets.push_back({dz, dy, dx});
            }
        }
    }
    return offsets;
}

}  // namespace

BinaryVolume largest_connected_component(const BinaryVolume& vol, int connectivity) {
    const auto offsets = neighbour_offsets(connectivity);
    const std::size_t n = vol.voxels.size();
    std::vector<std::int32_t> component(n, -1);
    std::vector<std::size_t> stack;

    std::size_t best_size = 0;
    std::int32_t best_id = -1;
    std::int32_t next_id = 0;

    for (std::size_t seed = 0; seed < n; ++seed) {
        if (!vol.voxels[seed] || component[seed] >= 0) continue;
        const std::int32_t id = next_id++;
        std::size_t size = 0;
        component[seed] = id;
        stack.assign(1, seed);
        while (!stack.empty()) {
            const std::size_t at = stack.back();
            stack.pop_back();
            ++size;
            const int z = static_cast<int>(at / (static_cast<std::size_t>(vol.h) * vol.w));
            const int rem = static_cast<int>(at % (static_cast<std::size_t>(vol.h) * vol.w));
            const int y = rem / vol.w;
            const int x = rem % vol.w;
            for (const auto& o : offsets) {
                const int zz = z + o[0], yy = y + o[1], xx = x + o[2];
                if (!vol.inside(zz, yy, xx)) continue;
                const std::size_t ni = (static_cast<std::size_t>(zz) * vol.h + yy) * vol.w + xx;
                if (vol.voxels[ni] && component[ni] < 0) {
                    component[ni] = id;
                    stack.push_back(ni);
                }
            }
        }
        // strict >: earlier seeds win ties (lowest scan-order seed voxel)
        if (size > best_size) {
            best_size = size;
            best_id = id;
        }
    }

    BinaryVolume out = make_volume(vol.d, vol.h, vol.w, vol.spacing_mm);
    if (best_id >= 0) {
        for (std::size_t i = 0; i < n; ++i) out.voxels[i] = component[i] == best_id;
    }
    return out;
}

BinaryVolume morphological_closing(const BinaryVolume& vol, int radius) {
    if (radius < 1) throw std::invalid_argument("morphological_closing: radius must be >= 1");

    std::vector<std::array<int, 3>> ball;
    for (int dz = -radius; dz <= radius; ++dz) {
        for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                if (dz * dz + dy * dy + dx * dx <= radius * radius) ball.push_back({dz, dy, dx});
            }
        }
    }

    // pad by the radius so dilation past the bounds survives until erosion
    const int pd = vol.d + 2 * radius, ph = vol.h + 2 * radius, pw = vol.w + 2 * radius;
    auto pidx = [ph, pw](int z, int y, int x) {
        return (static_cast<std::size_t>(z) * ph + y) * pw + x;
    };
    std::vector<std::uint8_t> dilated(static_cast<std::size_t>(pd) * ph * pw, 0);
    for (int z = 0; z < vol.d; ++z) {
        for (int y = 0; y < vol.h; ++y) {
            for (int x = 0; x < vol.w; ++x) {
                if (!vol.at(z, y, x)) continue;
                for (const auto& o : ball) {
                    dilated[pidx(z + radius + o[0], y + radius + o[1], x + radius + o[2])] = 1;
                }
            }
        }
    }

    BinaryVolume out = make_volume(vol.d, vol.h, vol.w, vol.spacing_mm);
    for (int z = 0; z < vol.d; ++z) {
        for (int y = 0; y < vol.h; ++y) {
            for (int x = 0; x < vol.w; ++x) {
                bool keep = true;
                for (const auto& o : ball) {
                    if (!dilated[pidx(z + radius + o[0], y + radius + o[1], x + radius + o[2])]) {
                        keep = false;
                        break;
                    }
                }
                out.set(z, y, x, keep);
            }
        }
    }
    return out;
}

}  // namespace segreg
