#include "tcfa/features.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tcfa {

void FeatureMatrix::add_row(std::string id, int label, std::span<const double> v) {
    if (cols == 0) cols = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != cols)
        throw std::invalid_argument("feature row width mismatch");
    if (label != 0 && label != 1)
        throw std::invalid_argument("label must be 0 or 1");
    ids.push_back(std::move(id));
    labels.push_back(label);
    values.insert(values.end(), v.begin(), v.end());
}

FeatureVector extract_features(const GreyImage& image, const RoiMask& roi) {
    if (image.width != roi.width || image.height != roi.height)
        throw std::invalid_argument("extract_features: image/roi dimensions disagree");

    // Band order matches the feature layout: Cap, Suf1, Suf2, Suf3.
    std::array<std::array<long, kBinCount>, 4> bin_counts{};
    std::array<long, 4> band_totals{};
    long lumen = 0;

    for (std::size_t i = 0; i < roi.regions.size(); ++i) {
        Region reg = roi.regions[i];
        if (reg == Region::Lumen) {
            ++lumen;
            continue;
        }
        if (reg == Region::Adventitia) continue;
        int band = static_cast<int>(reg) - static_cast<int>(Region::Cap);
        ++band_totals[band];
        ++bin_counts[band][intensity_bin(image.pixels[i])];
    }

    long plaque = band_totals[0] + band_totals[1] + band_totals[2] + band_totals[3];
    if (plaque + lumen == 0)
        throw std::invalid_argument("extract_features: no plaque or lumen pixels");

    FeatureVector fv;
    fv.values[0] = static_cast<double>(plaque) / static_cast<double>(plaque + lumen);
    for (int band = 0; band < 4; ++band) {
        for (int b = 0; b < kBinCount; ++b) {
            double ratio = band_totals[band] == 0
                               ? 0.0
                               : static_cast<double>(bin_counts[band][b]) /
                                     static_cast<double>(band_totals[band]);
            fv.values[1 + band * kBinCount + b] = ratio;
        }
    }
    return fv;
}

NormalizationParams fit_normalizer(const FeatureMatrix& train) {
    if (train.rows() == 0)
        throw std::invalid_argument("fit_normalizer: empty feature matrix");
    NormalizationParams p;
    p.min.assign(train.cols, 0.0);
    p.max.assign(train.cols, 0.0);
    for (int c = 0; c < train.cols; ++c) {
        double lo = train.at(0, c), hi = train.at(0, c);
        for (std::size_t r = 1; r < train.rows(); ++r) {
            double v = train.at(r, c);
            if (v < lo) lo = v;
            if (v > hi) hi = v;
        }
        p.min[c] = lo;
        p.max[c] = hi;
    }
    return p;
}

FeatureMatrix apply_normalizer(const NormalizationParams& params, const FeatureMatrix& m) {
    if (params.cols() != m.cols)
        throw std::invalid_argument("apply_normalizer: column count mismatch");
    FeatureMatrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols; ++c) {
            double span = params.max[c] - params.min[c];
            double v = span == 0.0 ? 0.0 : (m.at(r, c) - params.min[c]) / span;
            if (v < 0.0) v = 0.0;
            if (v > 1.0) v = 1.0;
            out.at(r, c) = v;
        }
    }
    return out;
}

namespace {

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, const std::string& path) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("bad numeric field '" + s + "' in " + path);
    }
}

}  // namespace

void write_feature_csv(const FeatureMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "id,label";
    for (int c = 0; c < m.cols; ++c) out << ",F" << (c + 1);
    out << "\n";
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << m.ids[r] << "," << m.labels[r];
        for (int c = 0; c < m.cols; ++c) out << "," << format_value(m.at(r, c));
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

FeatureMatrix read_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("empty feature CSV: " + path);
    auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label")
        throw std::runtime_error("feature CSV header must start with id,label: " + path);
    int cols = static_cast<int>(header.size()) - 2;

    FeatureMatrix m;
    m.cols = cols;
    std::vector<double> row(cols);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != cols + 2)
            throw std::runtime_error("feature CSV row width mismatch in " + path);
        int label = static_cast<int>(parse_double(fields[1], path));
        if (label != 0 && label != 1)
            throw std::runtime_error("feature CSV label must be 0 or 1 in " + path);
        for (int c = 0; c < cols; ++c) row[c] = parse_double(fields[c + 2], path);
        m.add_row(fields[0], label, row);
    }
    return m;
}

void write_normalizer_csv(const NormalizationParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto* v : {&p.min, &p.max}) {
        for (std::size_t c = 0; c < v->size(); ++c)
            out << (c ? "," : "") << format_value((*v)[c]);
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

NormalizationParams read_normalizer_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    NormalizationParams p;
    std::string line;
    for (auto* v : {&p.min, &p.max}) {
        if (!std::getline(in, line))
            throw std::runtime_error("normalizer CSV must have 2 rows: " + path);
        for (const auto& f : split_csv_line(line)) v->push_back(parse_double(f, path));
    }
    if (p.min.size() != p.max.size())
        throw std::runtime_error("normalizer CSV rows disagree on width: " + path);
    for (std::size_t c = 0; c < p.min.size(); ++c) {
        if (p.max[c] < p.min[c])
            throw std::runtime_error("normalizer CSV has max < min: " + path);
    }
    return p;
}

}  // namespace tcfa
