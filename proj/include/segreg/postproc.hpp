#pragma once

#include <vector>

#include "segreg/volume.hpp"

namespace segreg {

// Stacks per-slice 2D masks (acquisition order) into a volume.
BinaryVolume stack_slices(const std::vector<std::vector<std::uint8_t>>& slices, int h, int w,
                          std::array<double, 3> spacing_mm);

// Keeps the single largest foreground component under 6/18/26 connectivity.
// Size ties break toward the component whose seed voxel comes first in scan
// order. An empty input stays empty.
BinaryVolume largest_connected_component(const BinaryVolume& vol, int connectivity);

// Dilation then erosion with a discrete Euclidean ball (voxel units). The
// volume is conceptually embedded in an infinite zero background: the
// dilation may grow past the original bounds before eroding back, which
// keeps closing extensive and idempotent on masks that touch the border.
BinaryVolume morphological_closing(const BinaryVolume& vol, int radius);

}  // namespace segreg
