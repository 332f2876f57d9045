#include "ovfer/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ovfer/errors.hpp"

namespace ovfer {

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        double max_v = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < logits.cols; ++j) max_v = std::max(max_v, logits(i, j));
        double denom = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            p(i, j) = std::exp(logits(i, j) - max_v);
            denom += p(i, j);
        }
        for (int j = 0; j < logits.cols; ++j) p(i, j) /= denom;
    }
    return p;
}

Matrix prediction_known(const Matrix& video_emb, const Matrix& text_emb, double scale) {
    if (video_emb.cols != text_emb.cols) throw ContractError("embedding dimensions do not match");
    if (!(scale > 0.0)) throw ContractError("logit scale must be positive");
    Matrix logits(video_emb.rows, text_emb.rows);
    for (int i = 0; i < video_emb.rows; ++i)
        for (int k = 0; k < text_emb.rows; ++k) logits(i, k) = scale * dot(video_emb.row(i), text_emb.row(k));
    return softmax_rows(logits);
}

Matrix prediction_negative(const Matrix& video_emb, const Matrix& neg_visual, double scale_d, int sign,
                           Matrix* out_distances) {
    if (video_emb.cols != neg_visual.cols) throw ContractError("embedding dimensions do not match");
    if (!(scale_d > 0.0)) throw ContractError("distance scale must be positive");
    if (sign != 1 && sign != -1) throw ContractError("distance logit sign must be +1 or -1");
    Matrix logits(video_emb.rows, neg_visual.rows);
    Matrix dist(video_emb.rows, neg_visual.rows);
    for (int i = 0; i < video_emb.rows; ++i)
        for (int k = 0; k < neg_visual.rows; ++k) {
            dist(i, k) = std::sqrt(squared_distance(video_emb.row(i), neg_visual.row(k)));
            logits(i, k) = sign * scale_d * dist(i, k);
        }
    if (out_distances) *out_distances = std::move(dist);
    return softmax_rows(logits);
}

Matrix fuse(const Matrix& p_kn, const Matrix& p_ne) {
    if (!p_kn.same_shape(p_ne)) throw ContractError("fused prediction inputs must share a shape");
    Matrix p_h(p_kn.rows, p_kn.cols);
    for (std::size_t i = 0; i < p_h.data.size(); ++i) p_h.data[i] = 0.5 * (p_kn.data[i] + p_ne.data[i]);
    return p_h;
}

namespace {

void check_probability_rows(const Matrix& p, const char* name) {
    for (int i = 0; i < p.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < p.cols; ++j) {
            if (!(p(i, j) >= 0.0)) throw ContractError(std::string(name) + " has a negative probability entry");
            sum += p(i, j);
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ContractError(std::string(name) + " row does not sum to 1");
    }
}

}  // namespace

ScoreBundle ScoreBundle::build(Matrix p_kn, Matrix p_ne) {
    check_probability_rows(p_kn, "p_kn");
    check_probability_rows(p_ne, "p_ne");
    ScoreBundle b;
    b.p_h = fuse(p_kn, p_ne);
    b.p_kn = std::move(p_kn);
    b.p_ne = std::move(p_ne);
    b.knownness.resize(static_cast<std::size_t>(b.p_h.rows));
    for (int i = 0; i < b.p_h.rows; ++i) {
        double m = 0.0;
        for (int j = 0; j < b.p_h.cols; ++j) m = std::max(m, b.p_h(i, j));
        b.knownness[static_cast<std::size_t>(i)] = m;
    }
    return b;
}

double calibrate_threshold(std::vector<double> known_scores, double target_tpr) {
    if (known_scores.empty()) throw CalibrationError("threshold calibration requires at least one score");
    if (!(target_tpr > 0.0 && target_tpr < 1.0))
        throw CalibrationError("target TPR must lie strictly between 0 and 1");
    std::sort(known_scores.begin(), known_scores.end());
    const double q = 1.0 - target_tpr;
    const double pos = q * static_cast<double>(known_scores.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= known_scores.size()) return known_scores.back();
    return known_scores[lo] + frac * (known_scores[lo + 1] - known_scores[lo]);
}

std::vector<OpenSetDecision> classify_open(const ScoreBundle& bundle, double threshold) {
    std::vector<OpenSetDecision> out;
    out.reserve(static_cast<std::size_t>(bundle.batch()));
    for (int i = 0; i < bundle.batch(); ++i) {
        OpenSetDecision d;
        d.score = bundle.knownness[static_cast<std::size_t>(i)];
        d.threshold = threshold;
        if (d.score < threshold) {
            d.predicted = bundle.classes();  // unknown sentinel
        } else {
            int arg = 0;
            for (int j = 1; j < bundle.classes(); ++j)
                if (bundle.p_h(i, j) > bundle.p_h(i, arg)) arg = j;
            d.predicted = arg;
        }
        out.push_back(d);
    }
    return out;
}

}  // namespace ovfer
