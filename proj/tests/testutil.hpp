#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ovfer/metrics.hpp"
#include "ovfer/tensor.hpp"
#include "ovfer/visual_prompts.hpp"

namespace testutil {

// O(h*w*l^2) exhaustive window-sum scan; the reference for locate_mask.
inline ovfer::MaskRect brute_force_mask(const ovfer::Matrix& heat, int side) {
    ovfer::MaskRect best{0, 0, side};
    double best_sum = -1e300;
    for (int top = 0; top + side <= heat.rows; ++top)
        for (int left = 0; left + side <= heat.cols; ++left) {
            double s = 0.0;
            for (int y = top; y < top + side; ++y)
                for (int x = left; x < left + side; ++x) s += heat(y, x);
            if (s > best_sum) {
                best_sum = s;
                best = {top, left, side};
            }
        }
    return best;
}

// O(n^2) pairwise AUROC oracle, ties counted one half.
inline double brute_force_auroc(const std::vector<double>& known, const std::vector<double>& unknown) {
    double wins = 0.0;
    for (double k : known)
        for (double u : unknown) {
            if (k > u)
                wins += 1.0;
            else if (k == u)
                wins += 0.5;
        }
    return wins / (static_cast<double>(known.size()) * unknown.size());
}

// O(n^2) threshold-sweep OSCR oracle: recount CCR and FPR at every distinct
// score (plus the +/-inf endpoints), trapezoidal area.
inline double brute_force_oscr(const std::vector<ovfer::ScoredSample>& samples, int unknown_label) {
    std::vector<double> thresholds;
    for (const auto& s : samples) thresholds.push_back(s.knownness);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.push_back(-std::numeric_limits<double>::infinity());

    double n_known = 0, n_unknown = 0;
    for (const auto& s : samples) (s.true_label == unknown_label ? n_unknown : n_known) += 1.0;

    double area = 0.0, prev_fpr = 0.0, prev_ccr = 0.0;  // theta = +inf
    for (double theta : thresholds) {
        double correct = 0, fp = 0;
        for (const auto& s : samples) {
            if (s.knownness >= theta) {
                if (s.true_label == unknown_label)
                    fp += 1.0;
                else if (s.predicted_known == s.true_label)
                    correct += 1.0;
            }
        }
        const double fpr = fp / n_unknown;
        const double ccr = correct / n_known;
        area += (fpr - prev_fpr) * 0.5 * (ccr + prev_ccr);
        prev_fpr = fpr;
        prev_ccr = ccr;
    }
    return area;
}

inline ovfer::Vec random_unit_vec(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> d(0.0, 1.0);
    ovfer::Vec v(static_cast<std::size_t>(n));
    double norm = 0.0;
    do {
        for (double& x : v) x = d(rng);
        norm = ovfer::l2_norm(v);
    } while (!(norm > 1e-12));
    for (double& x : v) x /= norm;
    return v;
}

inline ovfer::Matrix random_unit_rows(std::mt19937_64& rng, int rows, int cols) {
    ovfer::Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        const auto v = random_unit_vec(rng, cols);
        for (int c = 0; c < cols; ++c) m(i, c) = v[static_cast<std::size_t>(c)];
    }
    return m;
}

// Random orthogonal matrix via Gram-Schmidt on a Gaussian sample.
inline ovfer::Matrix random_orthogonal(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> d(0.0, 1.0);
    ovfer::Matrix q(n, n);
    for (int i = 0; i < n; ++i) {
        ovfer::Vec v(static_cast<std::size_t>(n));
        for (double& x : v) x = d(rng);
        for (int j = 0; j < i; ++j) {
            const double proj = ovfer::dot(v, q.row(j));
            for (int c = 0; c < n; ++c) v[static_cast<std::size_t>(c)] -= proj * q(j, c);
        }
        const double norm = ovfer::l2_norm(v);
        for (int c = 0; c < n; ++c) q(i, c) = v[static_cast<std::size_t>(c)] / norm;
    }
    return q;
}

}  // namespace testutil
