// Test-only oracles, implemented independently of the library code paths they
// check. Written before the corresponding tests froze their expected values.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "tcfa/image.hpp"
#include "tcfa/rng.hpp"
#include "tcfa/segmentation.hpp"

namespace oracle {

// Geodesic 8-connected distance from the lumen through plaque, by naive
// fixpoint relaxation over the full grid (Bellman-Ford style), not BFS.
inline std::vector<int> geodesic_bfs(const tcfa::MaskImage& mask) {
    const int w = mask.width, h = mask.height;
    const int inf = std::numeric_limits<int>::max();
    std::vector<int> dist(static_cast<std::size_t>(w) * h, -1);
    for (int i = 0; i < w * h; ++i)
        if (mask.labels[i] == tcfa::TissueLabel::Plaque) dist[i] = inf;

    auto label_at = [&](int r, int c) { return mask.labels[r * w + c]; };
    bool changed = true;
    while (changed) {
        changed = false;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                if (label_at(r, c) != tcfa::TissueLabel::Plaque) continue;
                int best = inf;
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        int nr = r + dr, nc = c + dc;
                        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                        if (label_at(nr, nc) == tcfa::TissueLabel::Lumen) {
                            best = std::min(best, 1);
                        } else if (label_at(nr, nc) == tcfa::TissueLabel::Plaque) {
                            int d = dist[nr * w + nc];
                            if (d != inf && d + 1 < best) best = d + 1;
                        }
                    }
                }
                if (best < dist[r * w + c]) {
                    dist[r * w + c] = best;
                    changed = true;
                }
            }
        }
    }
    return dist;
}

// AUC as the fraction of correctly ordered positive/negative pairs, ties
// counted half.
inline double pair_count_auc(const std::vector<double>& scores,
                             const std::vector<int>& labels) {
    double wins = 0.0;
    long n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        ++n_pos;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    for (int l : labels) n_neg += (l == 0);
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Chi-square of per-class feature sums against class-proportional
// expectations, straight from the formula, with Kahan-compensated sums.
inline std::vector<double> chi2_direct(const std::vector<std::vector<double>>& rows,
                                       const std::vector<int>& labels) {
    const std::size_t n = rows.size();
    const std::size_t f = rows.empty() ? 0 : rows[0].size();
    double n_pos = 0;
    for (int l : labels) n_pos += l;
    double n_neg = static_cast<double>(n) - n_pos;

    auto kahan_sum = [&](int cls, std::size_t col) {
        double sum = 0.0, comp = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            if (labels[r] != cls) continue;
            double y = rows[r][col] - comp;
            double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        return sum;
    };

    std::vector<double> scores(f, 0.0);
    for (std::size_t col = 0; col < f; ++col) {
        double obs1 = kahan_sum(1, col);
        double obs0 = kahan_sum(0, col);
        double total = obs0 + obs1;
        double exp1 = total * n_pos / static_cast<double>(n);
        double exp0 = total * n_neg / static_cast<double>(n);
        double s = 0.0;
        if (exp1 > 0.0) s += (obs1 - exp1) * (obs1 - exp1) / exp1;
        if (exp0 > 0.0) s += (obs0 - exp0) * (obs0 - exp0) / exp0;
        scores[col] = s;
    }
    return scores;
}

// Forward rotation of a pixel coordinate about the image center.
inline std::pair<double, double> rotate_coordinate(double r, double c, int side,
                                                   double degrees) {
    double t = degrees * 0.017453292519943295;
    double ctr = (side - 1) / 2.0;
    double dx = c - ctr, dy = r - ctr;
    // Inverse of the sampling map used by the implementation under test.
    double out_c = std::cos(t) * dx - std::sin(t) * dy + ctr;
    double out_r = std::sin(t) * dx + std::cos(t) * dy + ctr;
    return {out_r, out_c};
}

// Central-difference gradient of a scalar function of one parameter vector
// entry; h is relative to the parameter magnitude.
inline double central_difference(const std::function<double()>& loss, double& param,
                                 double h_rel = 1e-5) {
    double saved = param;
    double h = h_rel * std::max(1.0, std::abs(saved));
    param = saved + h;
    double up = loss();
    param = saved - h;
    double down = loss();
    param = saved;
    return (up - down) / (2.0 * h);
}

// Uniformly random tissue mask; produces disconnected plaque, isolated lumen
// and unreachable pockets, which is exactly what the oracle check wants.
inline tcfa::MaskImage random_mask(tcfa::Rng& rng, int side) {
    tcfa::MaskImage mask(side, side);
    for (auto& l : mask.labels) {
        double u = rng.uniform();
        l = u < 0.2   ? tcfa::TissueLabel::Adventitia
            : u < 0.4 ? tcfa::TissueLabel::Lumen
                      : tcfa::TissueLabel::Plaque;
    }
    return mask;
}

}  // namespace oracle
