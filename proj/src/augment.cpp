#include "tcfa/augment.hpp"

#include <cmath>
#include <stdexcept>

#include "tcfa/rng.hpp"

namespace tcfa {

namespace {

constexpr double kDegToRad = 0.017453292519943295;

void check_angle(int degrees) {
    if (degrees < 30 || degrees >= 360 || degrees % 30 != 0)
        throw std::invalid_argument("rotation angle must be a nonzero multiple of 30 in [30,330], got " +
                                    std::to_string(degrees));
}

// Source coordinates for output pixel (r, c) under the inverse rotation:
//   [sx; sy] = [cos t, sin t; -sin t, cos t] * [c - ctr; r - ctr] + ctr
// with ctr = (side - 1) / 2.
struct InverseRotation {
    double cos_t, sin_t, ctr;
    void map(int r, int c, double& sr, double& sc) const {
        double dx = c - ctr;
        double dy = r - ctr;
        sc = cos_t * dx + sin_t * dy + ctr;
        sr = -sin_t * dx + cos_t * dy + ctr;
    }
};

}  // namespace

GreyImage rotate_image(const GreyImage& image, int degrees) {
    check_angle(degrees);
    validate(image);
    const int n = image.width;
    GreyImage out(n, n, 0);

    if (degrees % 90 == 0) {
        // Exact pixel permutation.
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                switch (degrees) {
                    case 90: out.at(r, c) = image.at(n - 1 - c, r); break;
                    case 180: out.at(r, c) = image.at(n - 1 - r, n - 1 - c); break;
                    case 270: out.at(r, c) = image.at(c, n - 1 - r); break;
                }
            }
        }
        return out;
    }

    double t = degrees * kDegToRad;
    InverseRotation inv{std::cos(t), std::sin(t), (n - 1) / 2.0};
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            double sr, sc;
            inv.map(r, c, sr, sc);
            int r0 = static_cast<int>(std::floor(sr));
            int c0 = static_cast<int>(std::floor(sc));
            double fr = sr - r0;
            double fc = sc - c0;
            double acc = 0.0;
            // Bilinear blend; samples outside the frame contribute 0.
            for (int dr = 0; dr <= 1; ++dr) {
                for (int dc = 0; dc <= 1; ++dc) {
                    int rr = r0 + dr, cc = c0 + dc;
                    if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
                    double wgt = (dr ? fr : 1.0 - fr) * (dc ? fc : 1.0 - fc);
                    acc += wgt * image.at(rr, cc);
                }
            }
            double v = std::lround(acc);
            out.at(r, c) = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
        }
    }
    return out;
}

MaskImage rotate_mask(const MaskImage& mask, int degrees) {
    check_angle(degrees);
    validate(mask);
    if (mask.width != mask.height)
        throw std::invalid_argument("rotate_mask requires a square mask");
    const int n = mask.width;
    MaskImage out(n, n, TissueLabel::Adventitia);

    if (degrees % 90 == 0) {
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                switch (degrees) {
                    case 90: out.at(r, c) = mask.at(n - 1 - c, r); break;
                    case 180: out.at(r, c) = mask.at(n - 1 - r, n - 1 - c); break;
                    case 270: out.at(r, c) = mask.at(c, n - 1 - r); break;
                }
            }
        }
        return out;
    }

    double t = degrees * kDegToRad;
    InverseRotation inv{std::cos(t), std::sin(t), (n - 1) / 2.0};
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            double sr, sc;
            inv.map(r, c, sr, sc);
            int rr = static_cast<int>(std::lround(sr));
            int cc = static_cast<int>(std::lround(sc));
            if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
            out.at(r, c) = mask.at(rr, cc);
        }
    }
    return out;
}

std::vector<LabeledSample> augment_minority(const std::vector<LabeledSample>& samples,
                                            std::uint64_t seed) {
    std::size_t n_normal = 0, n_tcfa = 0;
    for (const auto& s : samples) {
        (s.label == SampleClass::Tcfa ? n_tcfa : n_normal)++;
    }
    if (n_normal == 0 || n_tcfa == 0)
        throw std::invalid_argument("augment_minority needs at least one sample of each class");

    long k = std::lround(static_cast<double>(n_normal) / static_cast<double>(n_tcfa)) - 1;
    if (k > 11) k = 11;
    std::vector<LabeledSample> out = samples;
    if (k <= 0) return out;

    static constexpr int kAngles[11] = {30, 60, 90, 120, 150, 180, 210, 240, 270, 300, 330};
    Rng rng(seed);
    for (const auto& s : samples) {
        if (s.label != SampleClass::Tcfa) continue;
        // k distinct angles via a partial Fisher-Yates draw.
        int pool[11];
        for (int i = 0; i < 11; ++i) pool[i] = kAngles[i];
        for (long j = 0; j < k; ++j) {
            std::size_t pick = j + rng.uniform_int(11 - j);
            std::swap(pool[j], pool[pick]);
            int angle = pool[j];
            LabeledSample copy;
            copy.image = rotate_image(s.image, angle);
            copy.mask = rotate_mask(s.mask, angle);
            copy.label = SampleClass::Tcfa;
            copy.id = s.id + "_rot" + std::to_string(angle);
            out.push_back(std::move(copy));
        }
    }
    return out;
}

}  // namespace tcfa
