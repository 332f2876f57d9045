#include "ovfer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ovfer/errors.hpp"

namespace ovfer {

double auroc(std::span<const double> known_scores, std::span<const double> unknown_scores) {
    if (known_scores.empty() || unknown_scores.empty())
        throw MetricError("AUROC requires both known and unknown scores");

    // Mann-Whitney U via average ranks over the merged sample.
    struct Entry {
        double score;
        bool known;
    };
    std::vector<Entry> merged;
    merged.reserve(known_scores.size() + unknown_scores.size());
    for (double s : known_scores) merged.push_back({s, true});
    for (double s : unknown_scores) merged.push_back({s, false});
    std::sort(merged.begin(), merged.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

    const double n_known = static_cast<double>(known_scores.size());
    const double n_unknown = static_cast<double>(unknown_scores.size());
    double rank_sum_known = 0.0;
    std::size_t i = 0;
    while (i < merged.size()) {
        std::size_t j = i;
        while (j < merged.size() && merged[j].score == merged[i].score) ++j;
        // 1-based ranks i+1 .. j share the average rank.
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t)
            if (merged[t].known) rank_sum_known += avg_rank;
        i = j;
    }
    const double u = rank_sum_known - n_known * (n_known + 1.0) / 2.0;
    return u / (n_known * n_unknown);
}

double oscr(std::span<const ScoredSample> samples, int unknown_label) {
    std::vector<std::pair<double, bool>> knowns;  // score, correct
    std::vector<double> unknowns;
    for (const auto& s : samples) {
        if (s.true_label == unknown_label)
            unknowns.push_back(s.knownness);
        else
            knowns.emplace_back(s.knownness, s.predicted_known == s.true_label);
    }
    if (knowns.empty() || unknowns.empty())
        throw MetricError("OSCR requires both known and unknown samples");

    std::vector<double> thresholds;
    thresholds.reserve(samples.size());
    for (const auto& s : samples) thresholds.push_back(s.knownness);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    // Sweep thresholds from +inf downward, keeping cumulative counts of the
    // samples admitted at each step.
    std::sort(knowns.begin(), knowns.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    std::sort(unknowns.begin(), unknowns.end(), std::greater<>());

    const double n_known = static_cast<double>(knowns.size());
    const double n_unknown = static_cast<double>(unknowns.size());

    double area = 0.0;
    double prev_fpr = 0.0, prev_ccr = 0.0;  // threshold = +inf admits nothing
    std::size_t ik = 0, iu = 0;
    long correct = 0;
    for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
        const double theta = *it;
        while (ik < knowns.size() && knowns[ik].first >= theta) {
            if (knowns[ik].second) ++correct;
            ++ik;
        }
        while (iu < unknowns.size() && unknowns[iu] >= theta) ++iu;
        const double fpr = static_cast<double>(iu) / n_unknown;
        const double ccr = static_cast<double>(correct) / n_known;
        area += (fpr - prev_fpr) * 0.5 * (ccr + prev_ccr);
        prev_fpr = fpr;
        prev_ccr = ccr;
    }
    // threshold = -inf admits everything.
    const double final_ccr = static_cast<double>(std::count_if(knowns.begin(), knowns.end(),
                                                               [](const auto& k) { return k.second; })) /
                             n_known;
    area += (1.0 - prev_fpr) * 0.5 * (final_ccr + prev_ccr);
    return area;
}

std::pair<double, double> aggregate(std::span<const EvalReport> reports) {
    if (reports.empty()) throw MetricError("cannot aggregate zero reports");
    double a = 0.0, o = 0.0;
    for (const auto& r : reports) {
        a += r.auroc;
        o += r.oscr;
    }
    const double n = static_cast<double>(reports.size());
    return {a / n, o / n};
}

EvalReport report_from_scored_samples(std::span<const ScoredSample> samples, int unknown_label,
                                      double threshold, const OpennessSplit& split) {
    std::vector<double> known_scores, unknown_scores;
    long correct = 0;
    for (const auto& s : samples) {
        if (s.true_label == unknown_label) {
            unknown_scores.push_back(s.knownness);
        } else {
            known_scores.push_back(s.knownness);
            if (s.predicted_known == s.true_label) ++correct;
        }
    }
    EvalReport r;
    r.auroc = auroc(known_scores, unknown_scores);
    r.oscr = oscr(samples, unknown_label);
    r.threshold = threshold;
    r.n_known = static_cast<int>(known_scores.size());
    r.n_unknown = static_cast<int>(unknown_scores.size());
    r.known_accuracy = known_scores.empty() ? 0.0 : static_cast<double>(correct) / known_scores.size();
    r.split = split;
    return r;
}

}  // namespace ovfer
