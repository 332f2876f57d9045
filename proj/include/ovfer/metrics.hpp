#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ovfer/splits.hpp"

namespace ovfer {

// One evaluated sample: its known-ness score, its true label (the unknown
// sentinel for open-set samples) and the fused argmax over known classes.
struct ScoredSample {
    double knownness = 0.0;
    int true_label = 0;
    int predicted_known = 0;
};

// Probability that a random known sample outscores a random unknown one,
// ties counted 1/2 (rank-based, O(n log n)).
double auroc(std::span<const double> known_scores, std::span<const double> unknown_scores);

// Area under CCR(threshold) vs FPR(threshold): CCR counts known samples at
// or above the threshold whose argmax is correct; FPR counts unknown samples
// at or above it. Trapezoidal over the distinct scores plus +/-inf endpoints.
double oscr(std::span<const ScoredSample> samples, int unknown_label);

struct EvalReport {
    double auroc = 0.0;
    double oscr = 0.0;
    double threshold = 0.0;
    double known_accuracy = 0.0;  // closed-set argmax accuracy, debug only
    int n_known = 0;
    int n_unknown = 0;
    OpennessSplit split;
    std::string knownness_score = "max_p_h";
};

// Arithmetic means over per-split reports.
std::pair<double, double> aggregate(std::span<const EvalReport> reports);

// Report construction shared by the evaluation path and tests; the scorer
// that produced `samples` can be anything that fills ScoredSample.
EvalReport report_from_scored_samples(std::span<const ScoredSample> samples, int unknown_label,
                                      double threshold, const OpennessSplit& split);

}  // namespace ovfer
