#pragma once

#include <cstdint>
#include <vector>

#include "tcfa/image.hpp"

namespace tcfa {

// Rotation about the image center by a nonzero multiple of 30 degrees below
// 360. Multiples of 90 are exact pixel permutations; other angles use
// bilinear interpolation with out-of-frame samples filled with 0.
GreyImage rotate_image(const GreyImage& image, int degrees);

// Same geometry with nearest-neighbor sampling so labels stay categorical;
// out-of-frame samples become ADVENTITIA.
MaskImage rotate_mask(const MaskImage& mask, int degrees);

// Balances the corpus by rotating TCFA samples. Each TCFA sample gains
// k = min(11, round(N_normal / N_tcfa) - 1) copies at k distinct random
// nonzero multiples of 30 degrees; NORMAL samples pass through untouched.
// Output order: all originals first, then the rotated copies grouped per
// source sample. Deterministic given the seed.
std::vector<LabeledSample> augment_minority(const std::vector<LabeledSample>& samples,
                                            std::uint64_t seed);

}  // namespace tcfa
