#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "segreg/phantom.hpp"

namespace segreg {

// 3D binary mask with anisotropic voxel spacing (sz, sy, sx) in millimetres.
struct BinaryVolume {
    int d = 0, h = 0, w = 0;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> voxels;  // 0/1, row-major d*h*w

    std::uint8_t at(int z, int y, int x) const {
        return voxels[(static_cast<std::size_t>(z) * h + y) * w + x];
    }
    void set(int z, int y, int x, std::uint8_t v) {
        voxels[(static_cast<std::size_t>(z) * h + y) * w + x] = v;
    }
    bool inside(int z, int y, int x) const {
        return z >= 0 && z < d && y >= 0 && y < h && x >= 0 && x < w;
    }
    std::size_t count() const;
    bool empty_mask() const { return count() == 0; }
};

BinaryVolume make_volume(int d, int h, int w, std::array<double, 3> spacing_mm);

// ---------------------------------------------------------------------------
// VVOL container: <stem>.vvol.json header + raw little-endian payloads
// <stem>.image.raw (64-bit floats) and <stem>.labels.raw (8-bit unsigned).
// ---------------------------------------------------------------------------

void write_case_vvol(const std::string& dir, const Case& c);
Case read_case_vvol(const std::string& dir, const std::string& case_id);

// Masks are stored as single-class label volumes without an image payload.
void write_mask_vvol(const std::string& dir, const std::string& stem, const BinaryVolume& mask);
BinaryVolume read_mask_vvol(const std::string& dir, const std::string& stem);

// case_ids found in a dataset directory, sorted.
std::vector<std::string> list_vvol_cases(const std::string& dir);

}  // namespace segreg
