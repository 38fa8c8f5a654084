#include "tcfa/selection.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace tcfa {

std::vector<double> chi2_scores(const FeatureMatrix& m) {
    const std::size_t n = m.rows();
    if (n == 0) throw std::invalid_argument("chi2_scores: empty matrix");
    std::size_t n_pos = 0;
    for (int l : m.labels) n_pos += static_cast<std::size_t>(l);
    std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("chi2_scores: both classes must be present");

    std::vector<double> scores(m.cols, 0.0);
    for (int c = 0; c < m.cols; ++c) {
        double obs_pos = 0.0, obs_neg = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double v = m.at(r, c);
            if (v < 0.0)
                throw std::invalid_argument("chi2_scores: negative feature value at row " +
                                            std::to_string(r) + ", column " + std::to_string(c));
            (m.labels[r] ? obs_pos : obs_neg) += v;
        }
        double total = obs_pos + obs_neg;
        double exp_pos = total * (static_cast<double>(n_pos) / static_cast<double>(n));
        double exp_neg = total * (static_cast<double>(n_neg) / static_cast<double>(n));
        double score = 0.0;
        if (exp_pos > 0.0) score += (obs_pos - exp_pos) * (obs_pos - exp_pos) / exp_pos;
        if (exp_neg > 0.0) score += (obs_neg - exp_neg) * (obs_neg - exp_neg) / exp_neg;
        scores[c] = score;
    }
    return scores;
}

FeatureRanking rank_features(const FeatureMatrix& m) {
    std::vector<double> scores = chi2_scores(m);
    FeatureRanking ranking;
    ranking.entries.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        ranking.entries[i].feature = static_cast<int>(i);
        ranking.entries[i].score = scores[i];
    }
    std::sort(ranking.entries.begin(), ranking.entries.end(),
              [](const RankEntry& a, const RankEntry& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return a.feature < b.feature;
              });
    double total = 0.0;
    for (double s : scores) total += s;
    if (total == 0.0) {
        ranking.all_zero = true;
    } else {
        for (auto& e : ranking.entries) e.share_pct = e.score / total * 100.0;
    }
    return ranking;
}

FeatureMatrix select_top_n(const FeatureRanking& ranking, const FeatureMatrix& m, int n) {
    if (n < 1 || n > m.cols || n > static_cast<int>(ranking.entries.size()))
        throw std::invalid_argument("select_top_n: n out of range");
    FeatureMatrix out;
    out.ids = m.ids;
    out.labels = m.labels;
    out.cols = n;
    out.values.resize(m.rows() * static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        int f = ranking.entries[j].feature;
        if (f < 0 || f >= m.cols)
            throw std::invalid_argument("select_top_n: ranking refers to a missing column");
        for (std::size_t r = 0; r < m.rows(); ++r) out.at(r, j) = m.at(r, f);
    }
    return out;
}

void write_ranking_csv(const FeatureRanking& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "rank,feature,score,share_pct\n";
    char buf[96];
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        const auto& e = r.entries[i];
        std::snprintf(buf, sizeof(buf), "%zu,F%d,%.17g,%.17g\n", i + 1, e.feature + 1,
                      e.score, e.share_pct);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

FeatureRanking read_ranking_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("rank,feature,score,share_pct", 0) != 0)
        throw std::runtime_error("bad ranking CSV header: " + path);
    FeatureRanking r;
    double total = 0.0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        RankEntry e;
        unsigned long rank = 0;
        if (std::sscanf(line.c_str(), "%lu,F%d,%lg,%lg", &rank, &e.feature, &e.score,
                        &e.share_pct) != 4)
            throw std::runtime_error("bad ranking CSV row in " + path);
        e.feature -= 1;
        total += e.score;
        r.entries.push_back(e);
    }
    r.all_zero = (total == 0.0);
    return r;
}

}  // namespace tcfa
