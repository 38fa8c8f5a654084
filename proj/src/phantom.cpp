#include "tcfa/phantom.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "tcfa/parallel.hpp"
#include "tcfa/rng.hpp"
#include "tcfa/segmentation.hpp"

namespace fs = std::filesystem;

namespace tcfa {

namespace {
// Mild horizontal squash/stretch of the whole vessel.
constexpr double kEccentricityMin = 0.95;
constexpr double kEccentricityMax = 1.05;
}  // namespace

void PhantomConfig::validate() const {
    if (side < 8) throw std::invalid_argument("phantom: side must be >= 8");
    if (corpus_size < 1) throw std::invalid_argument("phantom: corpus size must be >= 1");
    if (tcfa_fraction <= 0.0 || tcfa_fraction >= 1.0)
        throw std::invalid_argument("phantom: tcfa_fraction must be in (0,1)");
    if (lumen_radius_min <= 0.0 || lumen_radius_max < lumen_radius_min)
        throw std::invalid_argument("phantom: bad lumen radius range");
    if (wall_thickness_min <= 0.0 || wall_thickness_max < wall_thickness_min)
        throw std::invalid_argument("phantom: bad wall thickness range");
    if (signature_strength < 0.0 || signature_strength > 1.0)
        throw std::invalid_argument("phantom: signature_strength must be in [0,1]");
    if (lumen_shrink < 0.0 || lumen_shrink >= 1.0)
        throw std::invalid_argument("phantom: lumen_shrink must be in [0,1)");
    // The fattest possible vessel (wobble crest, widest eccentric axis) must
    // fit inside the frame.
    double max_extent = center_jitter +
                        (lumen_radius_max + wall_thickness_max * (1.0 + burden_factor)) *
                            (1.0 + boundary_wobble) / kEccentricityMin;
    if (max_extent >= 0.5)
        throw std::invalid_argument("phantom: geometry ranges exceed the frame");
}

namespace {

std::uint8_t clamp_u8(double v) {
    long r = std::lround(v);
    return static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

std::size_t tcfa_count(const PhantomConfig& cfg) {
    return static_cast<std::size_t>(std::lround(cfg.tcfa_fraction * cfg.corpus_size));
}

std::string sample_id(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%05zu", index);
    return buf;
}

}  // namespace

LabeledSample generate_phantom(const PhantomConfig& cfg, std::size_t index) {
    cfg.validate();
    const int n = cfg.side;
    const bool is_tcfa = index < tcfa_count(cfg);
    const double s = cfg.signature_strength;
    Rng rng(derive_seed(derive_seed(cfg.seed, "phantom"), index));

    // Geometry. Every random draw happens for both classes so that at
    // strength 0 both labels consume the identical generator distribution.
    double cx = n * (0.5 + rng.uniform(-cfg.center_jitter, cfg.center_jitter));
    double cy = n * (0.5 + rng.uniform(-cfg.center_jitter, cfg.center_jitter));
    double lumen_r = n * rng.uniform(cfg.lumen_radius_min, cfg.lumen_radius_max);
    double wall = n * rng.uniform(cfg.wall_thickness_min, cfg.wall_thickness_max);
    if (is_tcfa) {
        wall *= 1.0 + cfg.burden_factor * s;
        lumen_r *= 1.0 - cfg.lumen_shrink * s;
    }
    double eccentricity = rng.uniform(kEccentricityMin, kEccentricityMax);
    int lumen_lobes = 2 + static_cast<int>(rng.uniform_int(3));
    double lumen_phase = rng.uniform(0.0, 6.283185307179586477);
    int wall_lobes = 2 + static_cast<int>(rng.uniform_int(3));
    double wall_phase = rng.uniform(0.0, 6.283185307179586477);

    MaskImage mask(n, n, TissueLabel::Adventitia);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            double dx = (c - cx) * eccentricity;
            double dy = r - cy;
            double rad = std::sqrt(dx * dx + dy * dy);
            double theta = std::atan2(dy, dx);
            double lb = lumen_r *
                        (1.0 + cfg.boundary_wobble * std::sin(lumen_lobes * theta + lumen_phase));
            double wb = wall *
                        (1.0 + cfg.boundary_wobble * std::sin(wall_lobes * theta + wall_phase));
            if (rad <= lb) mask.at(r, c) = TissueLabel::Lumen;
            else if (rad <= lb + wb) mask.at(r, c) = TissueLabel::Plaque;
        }
    }

    // Band distances drive where the dark signature lands.
    DistanceMap dist = lumen_distance_map(mask);

    double p_dark_cap = cfg.base_dark_prob + (is_tcfa ? s * cfg.cap_dark_boost : 0.0);
    double p_dark_suf1 = cfg.base_dark_prob + (is_tcfa ? s * cfg.suf1_dark_boost : 0.0);
    double p_bright_suf1 = is_tcfa ? s * cfg.suf1_bright_prob : 0.0;

    GreyImage img(n, n, 0);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            std::size_t i = static_cast<std::size_t>(r) * n + c;
            switch (mask.labels[i]) {
                case TissueLabel::Adventitia:
                    img.pixels[i] = clamp_u8(rng.normal(cfg.adventitia_mean, cfg.adventitia_std));
                    break;
                case TissueLabel::Lumen:
                    img.pixels[i] = clamp_u8(rng.normal(cfg.lumen_mean, cfg.lumen_std));
                    break;
                case TissueLabel::Plaque: {
                    int d = dist.distance[i];
                    double p_dark = d <= kCapMaxDistance ? p_dark_cap
                                    : d <= kSuf1MaxDistance ? p_dark_suf1
                                                            : cfg.base_dark_prob;
                    double u = rng.uniform();
                    if (u < p_dark) {
                        img.pixels[i] = static_cast<std::uint8_t>(rng.uniform_int(31));
                    } else if (d > kCapMaxDistance && d <= kSuf1MaxDistance &&
                               u < p_dark + p_bright_suf1) {
                        img.pixels[i] =
                            static_cast<std::uint8_t>(141 + rng.uniform_int(40));
                    } else {
                        double v = rng.normal(cfg.plaque_mean, cfg.plaque_std);
                        if (v < 35.0) v = 35.0;  // keep base tissue out of the dark bins
                        img.pixels[i] = clamp_u8(v);
                    }
                    break;
                }
            }
        }
    }

    LabeledSample sample;
    sample.image = std::move(img);
    sample.mask = std::move(mask);
    sample.label = is_tcfa ? SampleClass::Tcfa : SampleClass::Normal;
    sample.id = sample_id(index);
    return sample;
}

Corpus generate_corpus(const PhantomConfig& cfg, int threads) {
    cfg.validate();
    if (cfg.corpus_size < 10) throw std::invalid_argument("generate_corpus: size must be >= 10");
    std::size_t n_tcfa = tcfa_count(cfg);
    if (n_tcfa == 0 || n_tcfa >= static_cast<std::size_t>(cfg.corpus_size))
        throw std::invalid_argument("generate_corpus: class counts infeasible");
    Corpus corpus;
    corpus.samples.resize(cfg.corpus_size);
    parallel_for(static_cast<std::size_t>(cfg.corpus_size), threads, [&](std::size_t i) {
        corpus.samples[i] = generate_phantom(cfg, i);
    });
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& dir, std::uint64_t seed) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
    manifest << "id,label,seed,index\n";
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        const LabeledSample& s = corpus.samples[i];
        write_pgm(s.image, (fs::path(dir) / (s.id + "_img.pgm")).string());
        write_pgm(s.mask, (fs::path(dir) / (s.id + "_mask.pgm")).string());
        manifest << s.id << "," << (s.label == SampleClass::Tcfa ? 1 : 0) << "," << seed
                 << "," << i << "\n";
    }
    if (!manifest) throw std::runtime_error("manifest write failed in " + dir);
}

Corpus read_corpus(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) throw std::runtime_error("missing manifest.csv in " + dir);
    std::string line;
    if (!std::getline(manifest, line) || line.rfind("id,label,seed,index", 0) != 0)
        throw std::runtime_error("bad manifest header in " + dir);
    Corpus corpus;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw std::runtime_error("bad manifest row in " + dir);
        LabeledSample s;
        s.id = line.substr(0, c1);
        std::string label = line.substr(c1 + 1, c2 - c1 - 1);
        if (label != "0" && label != "1")
            throw std::runtime_error("bad manifest label in " + dir);
        s.label = label == "1" ? SampleClass::Tcfa : SampleClass::Normal;
        s.image = read_grey_pgm((fs::path(dir) / (s.id + "_img.pgm")).string());
        s.mask = read_mask_pgm((fs::path(dir) / (s.id + "_mask.pgm")).string());
        validate(s);
        corpus.samples.push_back(std::move(s));
    }
    if (corpus.samples.empty()) throw std::runtime_error("empty corpus in " + dir);
    return corpus;
}

}  // namespace tcfa
