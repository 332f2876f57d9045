#pragma once

#include <vector>

#include "ovfer/inference.hpp"
#include "ovfer/tensor.hpp"

namespace ovfer {

// Probabilities below this floor are clamped inside cross-entropy; the
// matching backward passes treat clamped entries as flat.
inline constexpr double kProbFloor = 1e-12;

// Batch-level features entering the multi-task objective. All embedding rows
// are unit-norm; labels index known classes.
struct BatchFeatures {
    Matrix video_emb;   // B x d
    Matrix known_text;  // K x d
    Matrix neg_text;    // K x d
    Matrix neg_visual;  // K x d

    void validate(const std::vector<int>& labels) const;
};

struct LossWeights {
    double kn_ce = 1.0;
    double kn_cl = 1.0;
    double ne_ce = 1.0;
    double ne_clip = 1.0;
    double h = 1.0;
};

struct ObjectiveConfig {
    LossWeights weights;
    double supcon_tau = 0.07;
    double align_scale = 100.0;
    // Non-default ablation: folds a supervised contrastive term into the
    // negative-representation branch (the default objective deliberately
    // omits it there).
    bool ne_supcon = false;
};

// Weighted components and their sum; total always equals the sum of the five
// fields.
struct LossBreakdown {
    double l_kn_ce = 0.0;
    double l_kn_cl = 0.0;
    double l_ne_ce = 0.0;
    double l_ne_clip = 0.0;
    double l_h = 0.0;
    double total = 0.0;
};

// Mean over the batch of -log P[i, y_i] with the probability floor. Rows
// must be valid distributions.
double cross_entropy(const Matrix& probs, const std::vector<int>& labels);

// Gradient of cross_entropy(softmax(logits), y) with respect to the logits:
// (p - onehot)/B per row, zeroed where the floor clamped the forward value.
Matrix cross_entropy_softmax_grad(const Matrix& probs, const std::vector<int>& labels);

// Supervised contrastive loss over unit-norm rows: anchors without positives
// contribute nothing; the result is the mean over contributing anchors.
// When `grad` is non-null it receives d(loss)/d(embeddings).
double supervised_contrastive(const Matrix& embeddings, const std::vector<int>& labels, double tau,
                              Matrix* grad = nullptr);

// Symmetric contrastive alignment of the two K x d sides over the scaled
// cosine matrix, diagonal as target. Optional gradients for either side and
// for the scale.
double negative_alignment(const Matrix& neg_visual, const Matrix& neg_text, double scale,
                          Matrix* grad_visual = nullptr, Matrix* grad_text = nullptr,
                          double* grad_scale = nullptr);

// The five-term objective evaluated from precomputed predictions and batch
// features.
LossBreakdown total_loss(const ScoreBundle& bundle, const BatchFeatures& features,
                         const std::vector<int>& labels, const ObjectiveConfig& config);

void check_loss_finite(const LossBreakdown& loss);

}  // namespace ovfer
