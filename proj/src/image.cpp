#include "tcfa/image.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace tcfa {

void validate(const GreyImage& img) {
    if (img.width != img.height)
        throw std::invalid_argument("GreyImage must be square, got " +
                                    std::to_string(img.width) + "x" +
                                    std::to_string(img.height));
    if (img.width < 8)
        throw std::invalid_argument("GreyImage side must be >= 8, got " +
                                    std::to_string(img.width));
    if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
        throw std::invalid_argument("GreyImage pixel buffer size mismatch");
}

void validate(const MaskImage& mask) {
    if (mask.width <= 0 || mask.height <= 0)
        throw std::invalid_argument("MaskImage dimensions must be positive");
    if (mask.labels.size() != static_cast<std::size_t>(mask.width) * mask.height)
        throw std::invalid_argument("MaskImage label buffer size mismatch");
    for (TissueLabel l : mask.labels) {
        if (static_cast<std::uint8_t>(l) > 2)
            throw std::invalid_argument("MaskImage has an invalid label value");
    }
}

void validate(const RoiMask& roi) {
    if (roi.width <= 0 || roi.height <= 0)
        throw std::invalid_argument("RoiMask dimensions must be positive");
    if (roi.regions.size() != static_cast<std::size_t>(roi.width) * roi.height)
        throw std::invalid_argument("RoiMask region buffer size mismatch");
    for (Region r : roi.regions) {
        if (static_cast<std::uint8_t>(r) > 5)
            throw std::invalid_argument("RoiMask has an invalid region value");
    }
}

void validate(const LabeledSample& s) {
    validate(s.image);
    validate(s.mask);
    if (s.image.width != s.mask.width || s.image.height != s.mask.height)
        throw std::invalid_argument("sample image/mask dimensions disagree");
}

namespace {

constexpr std::array<std::uint8_t, 3> kMaskCodes = {0, 85, 170};
constexpr std::array<std::uint8_t, 6> kRoiCodes = {0, 85, 120, 150, 190, 230};

void write_p5(const std::string& path, int w, int h, const std::uint8_t* data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(w) * h);
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Reads one whitespace-delimited token, skipping '#' comment lines.
int next_pgm_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c))
        throw std::runtime_error("malformed PGM header: " + path);
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1 << 28) throw std::runtime_error("PGM header value too large: " + path);
        c = in.get();
    }
    if (c != EOF) in.unget();
    return value;
}

struct RawPgm {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;
};

RawPgm read_p5(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5')
        throw std::runtime_error("not a binary PGM (P5) file: " + path);
    RawPgm pgm;
    pgm.width = next_pgm_int(in, path);
    pgm.height = next_pgm_int(in, path);
    int maxval = next_pgm_int(in, path);
    if (maxval != 255)
        throw std::runtime_error("PGM maxval must be 255: " + path);
    in.get();  // single whitespace byte after maxval
    std::size_t n = static_cast<std::size_t>(pgm.width) * pgm.height;
    pgm.data.resize(n);
    in.read(reinterpret_cast<char*>(pgm.data.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw std::runtime_error("truncated PGM pixel data: " + path);
    return pgm;
}

}  // namespace

void write_pgm(const GreyImage& img, const std::string& path) {
    validate(img);
    write_p5(path, img.width, img.height, img.pixels.data());
}

void write_pgm(const MaskImage& mask, const std::string& path) {
    validate(mask);
    std::vector<std::uint8_t> data(mask.labels.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = kMaskCodes[static_cast<std::uint8_t>(mask.labels[i])];
    write_p5(path, mask.width, mask.height, data.data());
}

void write_pgm(const RoiMask& roi, const std::string& path) {
    validate(roi);
    std::vector<std::uint8_t> data(roi.regions.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = kRoiCodes[static_cast<std::uint8_t>(roi.regions[i])];
    write_p5(path, roi.width, roi.height, data.data());
}

GreyImage read_grey_pgm(const std::string& path) {
    RawPgm pgm = read_p5(path);
    GreyImage img;
    img.width = pgm.width;
    img.height = pgm.height;
    img.pixels = std::move(pgm.data);
    validate(img);
    return img;
}

MaskImage read_mask_pgm(const std::string& path) {
    RawPgm pgm = read_p5(path);
    MaskImage mask;
    mask.width = pgm.width;
    mask.height = pgm.height;
    mask.labels.resize(pgm.data.size());
    for (std::size_t i = 0; i < pgm.data.size(); ++i) {
        switch (pgm.data[i]) {
            case 0: mask.labels[i] = TissueLabel::Adventitia; break;
            case 85: mask.labels[i] = TissueLabel::Lumen; break;
            case 170: mask.labels[i] = TissueLabel::Plaque; break;
            default:
                throw std::runtime_error("invalid mask pixel value " +
                                         std::to_string(pgm.data[i]) + " in " + path);
        }
    }
    return mask;
}

RoiMask read_roi_pgm(const std::string& path) {
    RawPgm pgm = read_p5(path);
    RoiMask roi;
    roi.width = pgm.width;
    roi.height = pgm.height;
    roi.regions.resize(pgm.data.size());
    for (std::size_t i = 0; i < pgm.data.size(); ++i) {
        switch (pgm.data[i]) {
            case 0: roi.regions[i] = Region::Adventitia; break;
            case 85: roi.regions[i] = Region::Lumen; break;
            case 120: roi.regions[i] = Region::Cap; break;
            case 150: roi.regions[i] = Region::Suf1; break;
            case 190: roi.regions[i] = Region::Suf2; break;
            case 230: roi.regions[i] = Region::Suf3; break;
            default:
                throw std::runtime_error("invalid roi pixel value " +
                                         std::to_string(pgm.data[i]) + " in " + path);
        }
    }
    return roi;
}

}  // namespace tcfa
