#include "tcfa/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "tcfa/rng.hpp"

namespace tcfa {

SplitIndices stratified_split(const std::vector<int>& labels, const SplitSpec& spec) {
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
        throw std::invalid_argument("stratified_split: train_fraction must be in (0,1)");
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw std::invalid_argument("stratified_split: labels must be 0 or 1");
        by_class[labels[i]].push_back(i);
    }
    if (by_class[0].empty() || by_class[1].empty())
        throw std::invalid_argument("stratified_split: each class needs at least one sample");

    SplitIndices out;
    Rng rng(spec.seed);
    for (auto& cls : by_class) {
        rng.shuffle(cls);
        std::size_t n_test = static_cast<std::size_t>(
            std::lround((1.0 - spec.train_fraction) * static_cast<double>(cls.size())));
        for (std::size_t i = 0; i < cls.size(); ++i)
            (i < n_test ? out.test : out.train).push_back(cls[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("roc_curve: scores/labels size mismatch");
    if (scores.empty()) throw std::invalid_argument("roc_curve: empty input");
    long pos = 0, neg = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("roc_curve: labels must be 0 or 1");
        (l ? pos : neg)++;
    }
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("roc_curve: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    RocCurve curve;
    double max_score = scores[order.front()];
    curve.points.push_back({max_score + 1.0, 0.0, 0.0});  // sentinel: nothing positive

    long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        double t = scores[order[i]];
        // Group every sample tied at this score into one step.
        while (i < order.size() && scores[order[i]] == t) {
            (labels[order[i]] ? tp : fp)++;
            ++i;
        }
        curve.points.push_back({t, static_cast<double>(fp) / neg,
                                static_cast<double>(tp) / pos});
    }

    double auc = 0.0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const auto& a = curve.points[k - 1];
        const auto& b = curve.points[k];
        auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    curve.auc = auc;
    return curve;
}

std::pair<double, double> confusion_metrics(const ConfusionMatrix& cm) {
    if (cm.tp < 0 || cm.fp < 0 || cm.tn < 0 || cm.fn < 0)
        throw std::invalid_argument("confusion_metrics: negative count");
    if (cm.fp + cm.tn == 0)
        throw std::invalid_argument("confusion_metrics: FP+TN is zero");
    if (cm.tp + cm.fn == 0)
        throw std::invalid_argument("confusion_metrics: TP+FN is zero");
    double sp = static_cast<double>(cm.tn) / static_cast<double>(cm.fp + cm.tn) * 100.0;
    double se = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn) * 100.0;
    return {sp, se};
}

ConfusionMatrix confusion_at(const std::vector<double>& scores,
                             const std::vector<int>& labels, double threshold) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("confusion_at: scores/labels size mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool predicted = scores[i] >= threshold;
        if (labels[i]) (predicted ? cm.tp : cm.fn)++;
        else (predicted ? cm.fp : cm.tn)++;
    }
    return cm;
}

CutoffResult optimal_cutoff(const RocCurve& curve) {
    if (curve.points.empty()) throw std::invalid_argument("optimal_cutoff: empty curve");
    CutoffResult best;
    double best_sum = -1.0;
    // Points are in descending threshold order; strict > keeps the higher
    // threshold on ties.
    for (const auto& p : curve.points) {
        double sp = (1.0 - p.fpr) * 100.0;
        double se = p.tpr * 100.0;
        if (sp + se > best_sum) {
            best_sum = sp + se;
            best = {p.threshold, sp, se};
        }
    }
    return best;
}

std::string auc_guideline(double auc) {
    if (auc >= 0.9) return "Excellent discrimination";
    if (auc >= 0.8) return "Good discrimination";
    if (auc >= 0.7) return "Acceptable discrimination";
    if (auc >= 0.6) return "Poor discrimination";
    return "No discrimination";
}

EvalReport evaluate_scores(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
    RocCurve curve = roc_curve(scores, labels);
    CutoffResult cut = optimal_cutoff(curve);
    EvalReport report;
    report.auc = curve.auc;
    report.threshold = cut.threshold;
    report.specificity_pct = cut.specificity_pct;
    report.sensitivity_pct = cut.sensitivity_pct;
    report.confusion = confusion_at(scores, labels, cut.threshold);
    report.guideline = auc_guideline(curve.auc);
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["auc"] = report.auc;
    j["threshold"] = report.threshold;
    j["specificity_pct"] = report.specificity_pct;
    j["sensitivity_pct"] = report.sensitivity_pct;
    j["confusion"] = {{"tp", report.confusion.tp},
                      {"fp", report.confusion.fp},
                      {"tn", report.confusion.tn},
                      {"fn", report.confusion.fn}};
    j["guideline"] = report.guideline;
    return j.dump(2) + "\n";
}

void write_report_json(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << report_to_json(report);
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_roc_csv(const RocCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "threshold,fpr,tpr\n";
    char buf[96];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.tpr);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace tcfa
