#include "tcfa/segmentation.hpp"

#include <deque>
#include <stdexcept>

namespace tcfa {

DistanceMap lumen_distance_map(const MaskImage& mask) {
    validate(mask);
    const int w = mask.width;
    const int h = mask.height;
    DistanceMap map;
    map.width = w;
    map.height = h;
    map.distance.assign(static_cast<std::size_t>(w) * h, kNotPlaque);

    std::deque<int> frontier;
    // Seed: plaque pixels 8-adjacent to a lumen pixel start at distance 1.
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            std::size_t idx = static_cast<std::size_t>(r) * w + c;
            if (mask.labels[idx] != TissueLabel::Plaque) continue;
            map.distance[idx] = kUnreachable;
            bool touches_lumen = false;
            for (int dr = -1; dr <= 1 && !touches_lumen; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                    if (mask.at(nr, nc) == TissueLabel::Lumen) {
                        touches_lumen = true;
                        break;
                    }
                }
            }
            if (touches_lumen) {
                map.distance[idx] = 1;
                frontier.push_back(static_cast<int>(idx));
            }
        }
    }

    // BFS through plaque with unit steps (8-connected).
    while (!frontier.empty()) {
        int idx = frontier.front();
        frontier.pop_front();
        int r = idx / w, c = idx % w;
        int d = map.distance[idx];
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                int nr = r + dr, nc = c + dc;
                if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                std::size_t nidx = static_cast<std::size_t>(nr) * w + nc;
                if (mask.labels[nidx] != TissueLabel::Plaque) continue;
                if (map.distance[nidx] > d + 1) {
                    map.distance[nidx] = d + 1;
                    frontier.push_back(static_cast<int>(nidx));
                }
            }
        }
    }
    return map;
}

RoiMask precise_roi_segmentation(const MaskImage& mask) {
    DistanceMap map = lumen_distance_map(mask);
    RoiMask roi;
    roi.width = mask.width;
    roi.height = mask.height;
    roi.regions.resize(mask.labels.size());
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
        switch (mask.labels[i]) {
            case TissueLabel::Adventitia:
                roi.regions[i] = Region::Adventitia;
                break;
            case TissueLabel::Lumen:
                roi.regions[i] = Region::Lumen;
                break;
            case TissueLabel::Plaque: {
                int d = map.distance[i];
                if (d <= kCapMaxDistance) roi.regions[i] = Region::Cap;
                else if (d <= kSuf1MaxDistance) roi.regions[i] = Region::Suf1;
                else if (d <= kSuf2MaxDistance) roi.regions[i] = Region::Suf2;
                else roi.regions[i] = Region::Suf3;  // includes unreachable
                break;
            }
        }
    }
    return roi;
}

}  // namespace tcfa
