#pragma once

#include <limits>
#include <vector>

#include "tcfa/image.hpp"

namespace tcfa {

// Distance value for non-plaque pixels in a DistanceMap.
inline constexpr int kNotPlaque = -1;
// Plaque pixels with no 8-connected path through plaque to the lumen.
inline constexpr int kUnreachable = std::numeric_limits<int>::max();

// Geodesic hop count from the lumen, per pixel. Plaque pixels 8-adjacent to a
// lumen pixel have distance 1; paths run through plaque pixels only.
struct DistanceMap {
    int width = 0;
    int height = 0;
    std::vector<int> distance;  // kNotPlaque outside the plaque

    int at(int r, int c) const {
        return distance[static_cast<std::size_t>(r) * width + c];
    }
};

DistanceMap lumen_distance_map(const MaskImage& mask);

// Band thresholds: Cap is within 2 hops of the lumen, Suf1 within 10, Suf2
// within 20, Suf3 is the rest of the plaque (including unreachable pixels).
inline constexpr int kCapMaxDistance = 2;
inline constexpr int kSuf1MaxDistance = 10;
inline constexpr int kSuf2MaxDistance = 20;

RoiMask precise_roi_segmentation(const MaskImage& mask);

}  // namespace tcfa
