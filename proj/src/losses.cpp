#include "ovfer/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ovfer/errors.hpp"

namespace ovfer {

namespace {

void check_unit_rows(const Matrix& m, const char* name) {
    for (int i = 0; i < m.rows; ++i) {
        const double n = l2_norm(m.row(i));
        if (std::abs(n - 1.0) > 1e-6)
            throw ContractError(std::string(name) + " row " + std::to_string(i) + " is not unit-norm");
    }
}

double logsumexp(std::span<const double> v) {
    double max_v = -std::numeric_limits<double>::infinity();
    for (double x : v) max_v = std::max(max_v, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - max_v);
    return max_v + std::log(s);
}

}  // namespace

void BatchFeatures::validate(const std::vector<int>& labels) const {
    const int d = video_emb.cols;
    if (known_text.cols != d || neg_text.cols != d || neg_visual.cols != d)
        throw ContractError("batch feature embedding widths do not match");
    const int k_count = known_text.rows;
    if (neg_text.rows != k_count || neg_visual.rows != k_count)
        throw ContractError("negative feature row counts do not match the known class count");
    if (static_cast<int>(labels.size()) != video_emb.rows)
        throw ContractError("label count does not match the batch size");
    for (int y : labels)
        if (y < 0 || y >= k_count) throw ContractError("label outside the known class range");
    check_unit_rows(video_emb, "video_emb");
    check_unit_rows(known_text, "known_text");
    check_unit_rows(neg_text, "neg_text");
    check_unit_rows(neg_visual, "neg_visual");
}

double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
    if (probs.rows != static_cast<int>(labels.size()))
        throw ContractError("cross_entropy: label count does not match the row count");
    if (probs.rows == 0) throw ContractError("cross_entropy: empty batch");
    double sum = 0.0;
    for (int i = 0; i < probs.rows; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= probs.cols) throw ContractError("cross_entropy: label out of range");
        double row_sum = 0.0;
        for (int j = 0; j < probs.cols; ++j) {
            if (!(probs(i, j) >= 0.0)) throw ContractError("cross_entropy: negative probability");
            row_sum += probs(i, j);
        }
        if (std::abs(row_sum - 1.0) > 1e-6) throw ContractError("cross_entropy: row does not sum to 1");
        sum += -std::log(std::max(probs(i, y), kProbFloor));
    }
    return sum / probs.rows;
}

Matrix cross_entropy_softmax_grad(const Matrix& probs, const std::vector<int>& labels) {
    Matrix g(probs.rows, probs.cols, 0.0);
    const double inv_b = 1.0 / probs.rows;
    for (int i = 0; i < probs.rows; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (probs(i, y) <= kProbFloor) continue;  // forward was clamped flat
        for (int j = 0; j < probs.cols; ++j) g(i, j) = probs(i, j) * inv_b;
        g(i, y) -= inv_b;
    }
    return g;
}

double supervised_contrastive(const Matrix& embeddings, const std::vector<int>& labels, double tau,
                              Matrix* grad) {
    const int b = embeddings.rows;
    if (b < 2) throw ContractError("supervised contrastive loss requires a batch of at least 2");
    if (static_cast<int>(labels.size()) != b)
        throw ContractError("supervised contrastive: label count does not match the batch");
    if (!(tau > 0.0)) throw ContractError("supervised contrastive temperature must be positive");

    if (grad) *grad = Matrix(b, embeddings.cols, 0.0);

    // similarities s[i][a] = z_i . z_a / tau
    Matrix sim(b, b, 0.0);
    for (int i = 0; i < b; ++i)
        for (int a = 0; a < b; ++a)
            if (a != i) sim(i, a) = dot(embeddings.row(i), embeddings.row(a)) / tau;

    std::vector<int> contributing;
    double loss = 0.0;
    Matrix g_sim(b, b, 0.0);  // d(sum of anchor losses)/d(sim)
    for (int i = 0; i < b; ++i) {
        std::vector<int> positives;
        for (int a = 0; a < b; ++a)
            if (a != i && labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(i)])
                positives.push_back(a);
        if (positives.empty()) continue;
        contributing.push_back(i);

        Vec others;
        others.reserve(static_cast<std::size_t>(b - 1));
        for (int a = 0; a < b; ++a)
            if (a != i) others.push_back(sim(i, a));
        const double log_denom = logsumexp(others);

        const double inv_p = 1.0 / static_cast<double>(positives.size());
        for (int p : positives) loss += -(sim(i, p) - log_denom) * inv_p;

        for (int a = 0; a < b; ++a) {
            if (a == i) continue;
            g_sim(i, a) = std::exp(sim(i, a) - log_denom);  // softmax weight
        }
        for (int p : positives) g_sim(i, p) -= inv_p;
    }

    if (contributing.empty()) return 0.0;
    const double inv_anchors = 1.0 / static_cast<double>(contributing.size());
    loss *= inv_anchors;

    if (grad) {
        for (int i : contributing) {
            for (int a = 0; a < b; ++a) {
                if (a == i) continue;
                const double g = g_sim(i, a) * inv_anchors / tau;
                if (g == 0.0) continue;
                axpy(g, embeddings.row(a), grad->row(i));
                axpy(g, embeddings.row(i), grad->row(a));
            }
        }
    }
    return loss;
}

double negative_alignment(const Matrix& neg_visual, const Matrix& neg_text, double scale, Matrix* grad_visual,
                          Matrix* grad_text, double* grad_scale) {
    const int k_count = neg_visual.rows;
    if (k_count < 2) throw ContractError("negative alignment requires at least 2 classes");
    if (!neg_visual.same_shape(neg_text)) throw ContractError("negative alignment sides must share a shape");
    if (!(scale > 0.0)) throw ContractError("alignment scale must be positive");

    Matrix cos(k_count, k_count);
    for (int i = 0; i < k_count; ++i)
        for (int j = 0; j < k_count; ++j) cos(i, j) = dot(neg_visual.row(i), neg_text.row(j));

    // Cross-entropy toward the diagonal, computed through log-sum-exp in
    // both directions.
    double loss = 0.0;
    Matrix g_s(k_count, k_count, 0.0);  // d(loss)/d(scaled logits)
    const double half_inv_k = 0.5 / static_cast<double>(k_count);

    Vec buf(static_cast<std::size_t>(k_count));
    for (int i = 0; i < k_count; ++i) {
        for (int j = 0; j < k_count; ++j) buf[static_cast<std::size_t>(j)] = scale * cos(i, j);
        const double lse = logsumexp(buf);
        loss += (lse - scale * cos(i, i)) * half_inv_k;
        for (int j = 0; j < k_count; ++j) g_s(i, j) += std::exp(scale * cos(i, j) - lse) * half_inv_k;
        g_s(i, i) -= half_inv_k;
    }
    for (int j = 0; j < k_count; ++j) {
        for (int i = 0; i < k_count; ++i) buf[static_cast<std::size_t>(i)] = scale * cos(i, j);
        const double lse = logsumexp(buf);
        loss += (lse - scale * cos(j, j)) * half_inv_k;
        for (int i = 0; i < k_count; ++i) g_s(i, j) += std::exp(scale * cos(i, j) - lse) * half_inv_k;
        g_s(j, j) -= half_inv_k;
    }

    if (grad_visual) *grad_visual = Matrix(k_count, neg_visual.cols, 0.0);
    if (grad_text) *grad_text = Matrix(k_count, neg_text.cols, 0.0);
    if (grad_scale) *grad_scale = 0.0;
    if (grad_visual || grad_text || grad_scale) {
        for (int i = 0; i < k_count; ++i)
            for (int j = 0; j < k_count; ++j) {
                const double g = g_s(i, j);
                if (g == 0.0) continue;
                if (grad_visual) axpy(g * scale, neg_text.row(j), grad_visual->row(i));
                if (grad_text) axpy(g * scale, neg_visual.row(i), grad_text->row(j));
                if (grad_scale) *grad_scale += g * cos(i, j);
            }
    }
    return loss;
}

LossBreakdown total_loss(const ScoreBundle& bundle, const BatchFeatures& features,
                         const std::vector<int>& labels, const ObjectiveConfig& config) {
    features.validate(labels);
    if (bundle.batch() != features.video_emb.rows || bundle.classes() != features.known_text.rows)
        throw ContractError("score bundle shape does not match the batch features");

    const LossWeights& w = config.weights;
    LossBreakdown out;
    if (w.kn_ce != 0.0) out.l_kn_ce = w.kn_ce * cross_entropy(bundle.p_kn, labels);
    if (w.kn_cl != 0.0)
        out.l_kn_cl = w.kn_cl * supervised_contrastive(features.video_emb, labels, config.supcon_tau);
    if (w.ne_ce != 0.0) {
        double v = cross_entropy(bundle.p_ne, labels);
        if (config.ne_supcon) v += supervised_contrastive(features.video_emb, labels, config.supcon_tau);
        out.l_ne_ce = w.ne_ce * v;
    }
    if (w.ne_clip != 0.0)
        out.l_ne_clip = w.ne_clip * negative_alignment(features.neg_visual, features.neg_text, config.align_scale);
    if (w.h != 0.0) out.l_h = w.h * cross_entropy(bundle.p_h, labels);
    out.total = out.l_kn_ce + out.l_kn_cl + out.l_ne_ce + out.l_ne_clip + out.l_h;
    return out;
}

void check_loss_finite(const LossBreakdown& loss) {
    const struct {
        const char* name;
        double value;
    } parts[] = {{"l_kn_ce", loss.l_kn_ce}, {"l_kn_cl", loss.l_kn_cl}, {"l_ne_ce", loss.l_ne_ce},
                 {"l_ne_clip", loss.l_ne_clip}, {"l_h", loss.l_h},     {"total", loss.total}};
    for (const auto& p : parts)
        if (!std::isfinite(p.value))
            throw DivergenceError(std::string("non-finite loss component: ") + p.name);
}

}  // namespace ovfer
