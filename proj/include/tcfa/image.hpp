#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tcfa {

enum class TissueLabel : std::uint8_t { Adventitia = 0, Lumen = 1, Plaque = 2 };

enum class Region : std::uint8_t {
    Adventitia = 0,
    Lumen = 1,
    Cap = 2,
    Suf1 = 3,
    Suf2 = 4,
    Suf3 = 5
};

enum class SampleClass : std::uint8_t { Normal = 0, Tcfa = 1 };

// Square 8-bit greyscale image, row-major.
struct GreyImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    GreyImage() = default;
    GreyImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t at(int r, int c) const {
        return pixels[static_cast<std::size_t>(r) * width + c];
    }
    std::uint8_t& at(int r, int c) {
        return pixels[static_cast<std::size_t>(r) * width + c];
    }
};

// Per-pixel tissue label companion of a GreyImage.
struct MaskImage {
    int width = 0;
    int height = 0;
    std::vector<TissueLabel> labels;

    MaskImage() = default;
    MaskImage(int w, int h, TissueLabel fill = TissueLabel::Adventitia)
        : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

    TissueLabel at(int r, int c) const {
        return labels[static_cast<std::size_t>(r) * width + c];
    }
    TissueLabel& at(int r, int c) {
        return labels[static_cast<std::size_t>(r) * width + c];
    }
};

// Six-region extension of MaskImage: the plaque is split into the Cap and
// three superficial bands; adventitia and lumen pass through unchanged.
struct RoiMask {
    int width = 0;
    int height = 0;
    std::vector<Region> regions;

    RoiMask() = default;
    RoiMask(int w, int h, Region fill = Region::Adventitia)
        : width(w), height(h), regions(static_cast<std::size_t>(w) * h, fill) {}

    Region at(int r, int c) const {
        return regions[static_cast<std::size_t>(r) * width + c];
    }
    Region& at(int r, int c) {
        return regions[static_cast<std::size_t>(r) * width + c];
    }
};

struct LabeledSample {
    GreyImage image;
    MaskImage mask;
    SampleClass label = SampleClass::Normal;
    std::string id;
};

// Throw std::invalid_argument when an invariant is broken.
void validate(const GreyImage& img);       // square, side >= 8, size matches
void validate(const MaskImage& mask);      // positive dims, size matches
void validate(const RoiMask& roi);
void validate(const LabeledSample& s);     // image/mask dimensions agree

// --- PGM interchange (binary P5, maxval 255) ---
// Mask codes:    ADVENTITIA=0, LUMEN=85, PLAQUE=170
// RoiMask codes: ADVENTITIA=0, LUMEN=85, CAP=120, SUF1=150, SUF2=190, SUF3=230
// Any other pixel value in a mask/roi file is a parse error.

void write_pgm(const GreyImage& img, const std::string& path);
void write_pgm(const MaskImage& mask, const std::string& path);
void write_pgm(const RoiMask& roi, const std::string& path);

GreyImage read_grey_pgm(const std::string& path);
MaskImage read_mask_pgm(const std::string& path);
RoiMask read_roi_pgm(const std::string& path);

}  // namespace tcfa
