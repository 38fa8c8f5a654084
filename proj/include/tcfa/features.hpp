#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "tcfa/image.hpp"

namespace tcfa {

inline constexpr int kFeatureCount = 105;
inline constexpr int kBinCount = 26;

// Intensity bins [0,10], [11,20], ..., [241,250], [251,255]: the first bin
// spans 11 values and the last spans 5, per the published bin endpoints.
inline int intensity_bin(int value) {
    if (value <= 10) return 0;
    if (value >= 251) return kBinCount - 1;
    return (value - 11) / 10 + 1;
}

// F1 is the plaque fraction; F2..F27 are the Cap bin ratios, then Suf1,
// Suf2, Suf3 blocks of 26 each. values[i] holds F(i+1).
struct FeatureVector {
    std::array<double, kFeatureCount> values{};
};

struct FeatureMatrix {
    std::vector<std::string> ids;
    std::vector<int> labels;        // 0 = NORMAL, 1 = TCFA
    int cols = 0;
    std::vector<double> values;     // row-major, rows() x cols

    std::size_t rows() const { return labels.size(); }
    double at(std::size_t r, int c) const { return values[r * cols + c]; }
    double& at(std::size_t r, int c) { return values[r * cols + c]; }
    std::span<const double> row(std::size_t r) const {
        return {values.data() + r * cols, static_cast<std::size_t>(cols)};
    }
    void add_row(std::string id, int label, std::span<const double> v);
};

// Per-feature min/Max fitted on the training split.
struct NormalizationParams {
    std::vector<double> min;
    std::vector<double> max;
    int cols() const { return static_cast<int>(min.size()); }
};

FeatureVector extract_features(const GreyImage& image, const RoiMask& roi);

NormalizationParams fit_normalizer(const FeatureMatrix& train);

// x_norm = (x - min) / (Max - min), 0 when Max == min, clipped to [0,1] for
// out-of-range test values.
FeatureMatrix apply_normalizer(const NormalizationParams& params, const FeatureMatrix& m);

// CSV: header "id,label,F1,...,Fk"; label in {0,1}; >= 9 significant digits.
void write_feature_csv(const FeatureMatrix& m, const std::string& path);
FeatureMatrix read_feature_csv(const std::string& path);

// 2 x k CSV, min row then max row, no header.
void write_normalizer_csv(const NormalizationParams& p, const std::string& path);
NormalizationParams read_normalizer_csv(const std::string& path);

}  // namespace tcfa
