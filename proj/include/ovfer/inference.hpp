#pragma once

#include <vector>

#include "ovfer/tensor.hpp"

namespace ovfer {

// Known-class prediction: softmax over scale * cosine(video, known text)
// per row. Inputs are unit-norm rows, so cosine is the dot product.
Matrix prediction_known(const Matrix& video_emb, const Matrix& text_emb, double scale);

// Negative-representation prediction: logits are scale_d * Euclidean
// distance to each negative embedding (larger distance from the class-k
// negative means higher class-k probability — the double-negation reading).
// `sign` = -1 flips the reading for ablation. `out_distances`, when given,
// receives the B x K distance matrix.
Matrix prediction_negative(const Matrix& video_emb, const Matrix& neg_visual, double scale_d, int sign = 1,
                           Matrix* out_distances = nullptr);

// Elementwise average of the two prediction heads.
Matrix fuse(const Matrix& p_kn, const Matrix& p_ne);

// Per-sample probability vectors plus the scalar known-ness score
// (max over classes of the fused row).
struct ScoreBundle {
    Matrix p_kn;
    Matrix p_ne;
    Matrix p_h;
    Vec knownness;

    static ScoreBundle build(Matrix p_kn, Matrix p_ne);
    int batch() const { return p_h.rows; }
    int classes() const { return p_h.cols; }
};

// The (1 - target_tpr) lower quantile (linear interpolation) of validation
// known-ness scores, so a target_tpr fraction of known samples score at or
// above the threshold.
double calibrate_threshold(std::vector<double> known_scores, double target_tpr);

struct OpenSetDecision {
    int predicted = 0;  // 0..K-1, or K for unknown
    double score = 0.0;
    double threshold = 0.0;
};

// Unknown (sentinel K) when knownness < threshold, strictly; otherwise the
// fused argmax with ties broken toward the smaller index.
std::vector<OpenSetDecision> classify_open(const ScoreBundle& bundle, double threshold);

// Row-wise stable softmax.
Matrix softmax_rows(const Matrix& logits);

}  // namespace ovfer
