#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcfa/image.hpp"

namespace tcfa {

// Deterministic vessel-phantom generator. Geometry: a noisy-ellipse lumen
// centered in a plaque annulus, adventitia outside. TCFA samples plant two
// signals gated by signature_strength: dark pixels (intensity 0-30)
// concentrated in the plaque bands nearest the lumen plus a mild bright
// (141-180) excess in the next band, and an inflated plaque burden. At
// strength 0 the label carries no signal at all.
struct PhantomConfig {
    int side = 64;
    int corpus_size = 1100;
    double tcfa_fraction = 1.0 / 11.0;

    // Geometry, as fractions of the side. At the default 64-pixel side the
    // normal wall spans 12-14 pixels, so Cap/Suf1/Suf2 are populated for both
    // classes while Suf3 stays empty; the TCFA burden inflation widens the
    // wall without reaching the Suf3 band.
    double center_jitter = 0.03;
    double lumen_radius_min = 0.095;
    double lumen_radius_max = 0.115;
    double wall_thickness_min = 0.19;
    double wall_thickness_max = 0.21;
    double boundary_wobble = 0.05;  // harmonic amplitude on both contours

    // Intensity model (8-bit scale).
    double adventitia_mean = 135.0, adventitia_std = 35.0;
    double lumen_mean = 32.0, lumen_std = 12.0;
    double plaque_mean = 115.0, plaque_std = 22.0;
    double base_dark_prob = 0.05;   // dark speckle present in every plaque

    // TCFA signature, each term scaled by signature_strength.
    double signature_strength = 1.0;
    double cap_dark_boost = 0.45;    // extra dark probability at distance <= 2
    double suf1_dark_boost = 0.22;   // extra dark probability at distance <= 10
    double suf1_bright_prob = 0.10;  // bright (141-180) excess in the same band
    double burden_factor = 0.30;     // wall thickness multiplier (1 + f*s)
    double lumen_shrink = 0.25;      // luminal narrowing, radius * (1 - f*s)

    std::uint64_t seed = 42;

    void validate() const;
};

LabeledSample generate_phantom(const PhantomConfig& cfg, std::size_t index);

struct Corpus {
    std::vector<LabeledSample> samples;
};

// round(fraction * size) TCFA samples first, NORMAL after; deterministic in
// (seed, index) so generation parallelizes freely.
Corpus generate_corpus(const PhantomConfig& cfg, int threads = 1);

// On-disk layout: <id>_img.pgm, <id>_mask.pgm and manifest.csv with columns
// id,label,seed,index.
void write_corpus(const Corpus& corpus, const std::string& dir, std::uint64_t seed);
Corpus read_corpus(const std::string& dir);

}  // namespace tcfa
