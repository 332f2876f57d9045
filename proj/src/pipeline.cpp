#include "ovfer/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "ovfer/errors.hpp"
#include "ovfer/rng.hpp"

namespace ovfer {

namespace {

// Chain a gradient taken at the unit vector u = r/|r| back to r.
void through_normalization(std::span<const double> grad_unit, std::span<const double> unit, double raw_norm,
                           Vec& grad_raw) {
    const double g_dot_u = dot(grad_unit, unit);
    grad_raw.assign(grad_unit.size(), 0.0);
    for (std::size_t i = 0; i < grad_unit.size(); ++i)
        grad_raw[i] = (grad_unit[i] - g_dot_u * unit[i]) / raw_norm;
}

template <typename StateT, typename Fn>
void visit_param_data(StateT& state, Fn&& fn) {
    for (auto& m : state.ctx.per_class) fn(m.data);
    if (state.neg_ctx)
        for (auto& m : state.neg_ctx->per_class) fn(m.data);
    for (auto& p : state.patches) fn(p.data);
    for (auto& t : state.bank.tensors) fn(t.data);
}

}  // namespace

PromptState PromptState::zeros_like(const PromptState& other) {
    PromptState z = other;
    visit_param_data(z, [](std::vector<double>& block) { std::fill(block.begin(), block.end(), 0.0); });
    if (z.align_scale) *z.align_scale = 0.0;
    return z;
}

std::size_t PromptState::param_count() const {
    std::size_t n = 0;
    visit_param_data(const_cast<PromptState&>(*this),
                     [&](std::vector<double>& block) { n += block.size(); });
    if (align_scale) ++n;
    return n;
}

Vec PromptState::flatten() const {
    Vec out;
    out.reserve(param_count());
    visit_param_data(const_cast<PromptState&>(*this), [&](std::vector<double>& block) {
        out.insert(out.end(), block.begin(), block.end());
    });
    if (align_scale) out.push_back(*align_scale);
    return out;
}

void PromptState::unflatten(std::span<const double> values) {
    if (values.size() != param_count()) throw ContractError("flattened parameter size mismatch");
    std::size_t pos = 0;
    visit_param_data(*this, [&](std::vector<double>& block) {
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(pos),
                  values.begin() + static_cast<std::ptrdiff_t>(pos + block.size()), block.begin());
        pos += block.size();
    });
    if (align_scale) *align_scale = values[pos];
}

std::vector<std::span<double>> PromptState::param_blocks() {
    std::vector<std::span<double>> blocks;
    visit_param_data(*this, [&](std::vector<double>& block) { blocks.emplace_back(block); });
    if (align_scale) blocks.emplace_back(&*align_scale, 1);
    return blocks;
}

PromptPipeline::PromptPipeline(const DualEncoder& encoder, PromptSettings settings,
                               std::vector<std::string> known_class_names)
    : encoder_(encoder), settings_(std::move(settings)), class_names_(std::move(known_class_names)) {
    if (class_names_.size() < 2) throw ProtocolError("prompt pipeline requires at least 2 known classes");
    if (settings_.frames_per_video < 1) throw ContractError("frames_per_video must be positive");
    const FrameShape shape = encoder_.frame_shape();
    if (settings_.modules == PromptModules::tp_vp &&
        (settings_.patch_side < 1 || settings_.patch_side > std::min(shape.height, shape.width)))
        throw DomainError("patch side must fit inside the frame");
    if (!settings_.negative_text_learnable)
        fixed_neg_text_ = encode_negative_prompts(class_names_, encoder_);
}

int PromptPipeline::pad_band_width() const {
    const FrameShape shape = encoder_.frame_shape();
    const double area = static_cast<double>(settings_.patch_side) * settings_.patch_side;
    const int band = static_cast<int>(std::lround(area / (2.0 * (shape.height + shape.width))));
    return std::clamp(band, 1, std::min(shape.height, shape.width) / 2);
}

PromptState PromptPipeline::init_state(std::uint64_t seed) const {
    const int k_count = static_cast<int>(class_names_.size());
    const FrameShape shape = encoder_.frame_shape();
    const PixelRange range = encoder_.pixel_range();

    PromptState state;
    state.ctx = init_context(k_count, settings_.context_len, encoder_.token_dim(), mix_seed(seed, 1),
                             settings_.ctx_init_std);
    if (settings_.negative_text_learnable)
        state.neg_ctx = init_context(k_count, settings_.context_len, encoder_.token_dim(), mix_seed(seed, 2),
                                     settings_.ctx_init_std);

    if (settings_.modules == PromptModules::tp_vp) {
        const bool full_frame = settings_.style == VisualPromptStyle::padding;
        const int ph = full_frame ? shape.height : settings_.patch_side;
        const int pw = full_frame ? shape.width : settings_.patch_side;
        const int n_patches = settings_.patch_per_frame ? settings_.frames_per_video : 1;
        auto rng = make_rng(mix_seed(seed, 3));
        std::uniform_real_distribution<double> uniform(range.lo, range.hi);
        for (int q = 0; q < n_patches; ++q) {
            Tensor3 patch(shape.channels, ph, pw, 0.0);
            if (settings_.patch_mode == PatchMode::replace)
                for (double& v : patch.data) v = uniform(rng);
            state.patches.push_back(std::move(patch));
        }
    }

    state.bank = init_negative_bank(k_count, shape, range, mix_seed(seed, 4));
    if (settings_.learn_align_scale) state.align_scale = encoder_.logit_scale();
    return state;
}

double PromptPipeline::alignment_scale(const PromptState& state) const {
    return state.align_scale ? *state.align_scale : encoder_.logit_scale();
}

MaskRect PromptPipeline::rect_for(const VideoSample& sample) {
    const auto it = mask_cache_.find(sample.id);
    if (it != mask_cache_.end()) return it->second;

    const FrameShape shape = encoder_.frame_shape();
    MaskRect rect{0, 0, settings_.patch_side};
    if (settings_.modules == PromptModules::tp_vp) {
        switch (settings_.style) {
            case VisualPromptStyle::masked_patch:
                ++saliency_calls_;
                rect = locate_mask(sample.frames.front(), encoder_, settings_.patch_side);
                break;
            case VisualPromptStyle::random_patch: {
                auto rng = make_rng(mix_seed(settings_.prompt_seed, fnv1a(sample.id)));
                std::uniform_int_distribution<int> dy(0, shape.height - settings_.patch_side);
                std::uniform_int_distribution<int> dx(0, shape.width - settings_.patch_side);
                rect.top = dy(rng);
                rect.left = dx(rng);
                break;
            }
            case VisualPromptStyle::padding:
                break;  // border band; rectangle unused
        }
    }
    mask_cache_.emplace(sample.id, rect);
    return rect;
}

void PromptPipeline::reset_mask_cache() {
    mask_cache_.clear();
    saliency_calls_ = 0;
}

const Tensor3& PromptPipeline::patch_for_frame(const PromptState& state, int frame_index) const {
    if (state.patches.empty()) throw ContractError("no visual patch in tp-only mode");
    if (settings_.patch_per_frame)
        return state.patches[static_cast<std::size_t>(frame_index) % state.patches.size()];
    return state.patches.front();
}

Tensor3 PromptPipeline::prompt_one_frame(const Tensor3& frame, const MaskRect& rect,
                                         const Tensor3& patch) const {
    const PixelRange range = encoder_.pixel_range();
    if (settings_.style == VisualPromptStyle::padding) {
        const int band = pad_band_width();
        Tensor3 out = frame;
        for (int c = 0; c < frame.channels; ++c)
            for (int y = 0; y < frame.height; ++y)
                for (int x = 0; x < frame.width; ++x) {
                    const bool in_band = y < band || y >= frame.height - band || x < band ||
                                         x >= frame.width - band;
                    if (!in_band) continue;
                    out.at(c, y, x) = settings_.patch_mode == PatchMode::replace
                                          ? patch.at(c, y, x)
                                          : std::clamp(frame.at(c, y, x) + patch.at(c, y, x), range.lo, range.hi);
                }
        return out;
    }

    if (settings_.patch_mode == PatchMode::replace) return apply_visual_prompt(frame, rect, patch);

    // Additive: the effective patch is the covered crop plus the learnable
    // perturbation, clipped to the pixel range.
    Tensor3 effective(patch.channels, patch.height, patch.width);
    for (int c = 0; c < patch.channels; ++c)
        for (int y = 0; y < patch.height; ++y)
            for (int x = 0; x < patch.width; ++x)
                effective.at(c, y, x) =
                    std::clamp(frame.at(c, rect.top + y, rect.left + x) + patch.at(c, y, x), range.lo, range.hi);
    return apply_visual_prompt(frame, rect, effective);
}

void PromptPipeline::accumulate_patch_grad(const Tensor3& frame, const MaskRect& rect, const Tensor3& patch,
                                           const Tensor3& pixel_grad, Tensor3& patch_grad) const {
    const PixelRange range = encoder_.pixel_range();
    const bool additive = settings_.patch_mode == PatchMode::additive;
    if (settings_.style == VisualPromptStyle::padding) {
        const int band = pad_band_width();
        for (int c = 0; c < frame.channels; ++c)
            for (int y = 0; y < frame.height; ++y)
                for (int x = 0; x < frame.width; ++x) {
                    const bool in_band = y < band || y >= frame.height - band || x < band ||
                                         x >= frame.width - band;
                    if (!in_band) continue;
                    if (additive) {
                        const double v = frame.at(c, y, x) + patch.at(c, y, x);
                        if (!(v > range.lo && v < range.hi)) continue;  // clipped flat
                    }
                    patch_grad.at(c, y, x) += pixel_grad.at(c, y, x);
                }
        return;
    }
    for (int c = 0; c < patch.channels; ++c)
        for (int y = 0; y < patch.height; ++y)
            for (int x = 0; x < patch.width; ++x) {
                if (additive) {
                    const double v = frame.at(c, rect.top + y, rect.left + x) + patch.at(c, y, x);
                    if (!(v > range.lo && v < range.hi)) continue;
                }
                patch_grad.at(c, y, x) += pixel_grad.at(c, rect.top + y, rect.left + x);
            }
}

std::vector<Tensor3> PromptPipeline::prompted_frames(const VideoSample& sample, const PromptState& state,
                                                     const MaskRect& rect) const {
    std::vector<Tensor3> frames = sample_frames(sample, settings_.frames_per_video);
    if (settings_.modules == PromptModules::tp || state.patches.empty()) return frames;
    for (std::size_t q = 0; q < frames.size(); ++q)
        frames[q] = prompt_one_frame(frames[q], rect, patch_for_frame(state, static_cast<int>(q)));
    return frames;
}

BatchForward PromptPipeline::forward(std::span<const VideoSample* const> batch,
                                     const std::vector<int>& labels, const PromptState& state) {
    if (batch.empty()) throw ContractError("empty batch");
    if (labels.size() != batch.size()) throw ContractError("label count does not match the batch");
    if (state.ctx.num_classes() != static_cast<int>(class_names_.size()))
        throw ContractError("prompt state class count does not match the pipeline");

    BatchForward out;
    out.known_text = encode_known_prompts(state.ctx, class_names_, encoder_);
    out.neg_text = settings_.negative_text_learnable
                       ? encode_known_prompts(*state.neg_ctx, class_names_, encoder_)
                       : *fixed_neg_text_;
    out.bank = encode_negative_bank(state.bank, encoder_);

    const int b = static_cast<int>(batch.size());
    out.features.video_emb = Matrix(b, encoder_.embed_dim());
    out.videos.reserve(batch.size());
    out.rects.reserve(batch.size());
    for (int i = 0; i < b; ++i) {
        const MaskRect rect = rect_for(*batch[static_cast<std::size_t>(i)]);
        const auto frames = prompted_frames(*batch[static_cast<std::size_t>(i)], state, rect);
        EncodedVideo enc = encode_video(frames, encoder_);
        for (int c = 0; c < encoder_.embed_dim(); ++c)
            out.features.video_emb(i, c) = enc.unit[static_cast<std::size_t>(c)];
        out.videos.push_back(std::move(enc));
        out.rects.push_back(rect);
    }
    out.features.known_text = out.known_text.unit;
    out.features.neg_text = out.neg_text.unit;
    out.features.neg_visual = out.bank.unit;

    Matrix p_kn = prediction_known(out.features.video_emb, out.features.known_text, encoder_.logit_scale());
    Matrix p_ne = prediction_negative(out.features.video_emb, out.features.neg_visual, settings_.ne_scale,
                                      settings_.ne_logit_sign, &out.distances);
    out.bundle = ScoreBundle::build(std::move(p_kn), std::move(p_ne));

    ObjectiveConfig ocfg;
    ocfg.weights = settings_.loss_weights;
    ocfg.supcon_tau = settings_.supcon_tau;
    ocfg.align_scale = alignment_scale(state);
    ocfg.ne_supcon = settings_.ne_supcon;
    out.loss = total_loss(out.bundle, out.features, labels, ocfg);
    return out;
}

void PromptPipeline::backward(const BatchForward& fwd, std::span<const VideoSample* const> batch,
                              const std::vector<int>& labels, const PromptState& state, PromptState& grads) {
    const int b = fwd.features.video_emb.rows;
    const int k_count = fwd.features.known_text.rows;
    const int d = encoder_.embed_dim();
    const LossWeights& w = settings_.loss_weights;

    // ---- logits-level gradients --------------------------------------
    Matrix g_logits_kn(b, k_count, 0.0);
    Matrix g_logits_ne(b, k_count, 0.0);
    if (w.kn_ce != 0.0) {
        const Matrix g = cross_entropy_softmax_grad(fwd.bundle.p_kn, labels);
        for (std::size_t i = 0; i < g.data.size(); ++i) g_logits_kn.data[i] += w.kn_ce * g.data[i];
    }
    if (w.ne_ce != 0.0) {
        const Matrix g = cross_entropy_softmax_grad(fwd.bundle.p_ne, labels);
        for (std::size_t i = 0; i < g.data.size(); ++i) g_logits_ne.data[i] += w.ne_ce * g.data[i];
    }
    if (w.h != 0.0) {
        // L_H = CE((softmax_kn + softmax_ne)/2, y); chain v = dCE/dp_h
        // through each softmax Jacobian, halved.
        for (int i = 0; i < b; ++i) {
            const int y = labels[static_cast<std::size_t>(i)];
            const double p_hy = fwd.bundle.p_h(i, y);
            if (p_hy <= kProbFloor) continue;
            const double v = -w.h / (b * p_hy);
            const double vy_kn = fwd.bundle.p_kn(i, y) * v;
            const double vy_ne = fwd.bundle.p_ne(i, y) * v;
            for (int j = 0; j < k_count; ++j) {
                g_logits_kn(i, j) += 0.5 * (fwd.bundle.p_kn(i, j) * ((j == y ? v : 0.0)) -
                                            fwd.bundle.p_kn(i, j) * vy_kn);
                g_logits_ne(i, j) += 0.5 * (fwd.bundle.p_ne(i, j) * ((j == y ? v : 0.0)) -
                                            fwd.bundle.p_ne(i, j) * vy_ne);
            }
        }
    }

    // ---- embedding-level gradients -----------------------------------
    Matrix g_video(b, d, 0.0);
    Matrix g_text(k_count, d, 0.0);
    Matrix g_neg_visual(k_count, d, 0.0);
    Matrix g_neg_text(k_count, d, 0.0);

    const double supcon_coeff = w.kn_cl + (settings_.ne_supcon ? w.ne_ce : 0.0);
    if (supcon_coeff != 0.0) {
        Matrix sg;
        supervised_contrastive(fwd.features.video_emb, labels, settings_.supcon_tau, &sg);
        for (std::size_t i = 0; i < sg.data.size(); ++i) g_video.data[i] += supcon_coeff * sg.data[i];
    }

    const double s = encoder_.logit_scale();
    for (int i = 0; i < b; ++i)
        for (int k = 0; k < k_count; ++k) {
            const double g = g_logits_kn(i, k) * s;
            if (g == 0.0) continue;
            axpy(g, fwd.features.known_text.row(k), g_video.row(i));
            axpy(g, fwd.features.video_emb.row(i), g_text.row(k));
        }

    const double c_ne = settings_.ne_logit_sign * settings_.ne_scale;
    for (int i = 0; i < b; ++i)
        for (int k = 0; k < k_count; ++k) {
            const double gd = g_logits_ne(i, k) * c_ne;
            if (gd == 0.0) continue;
            const double dist = fwd.distances(i, k);
            if (dist < 1e-12) continue;
            for (int c = 0; c < d; ++c) {
                const double dir = (fwd.features.video_emb(i, c) - fwd.features.neg_visual(k, c)) / dist;
                g_video(i, c) += gd * dir;
                g_neg_visual(k, c) -= gd * dir;
            }
        }

    if (w.ne_clip != 0.0) {
        Matrix gv, gt;
        double gs = 0.0;
        negative_alignment(fwd.features.neg_visual, fwd.features.neg_text, alignment_scale(state), &gv, &gt,
                           &gs);
        for (std::size_t i = 0; i < gv.data.size(); ++i) g_neg_visual.data[i] += w.ne_clip * gv.data[i];
        if (settings_.negative_text_learnable)
            for (std::size_t i = 0; i < gt.data.size(); ++i) g_neg_text.data[i] += w.ne_clip * gt.data[i];
        if (grads.align_scale) *grads.align_scale += w.ne_clip * gs;
    }

    // ---- chain into text contexts ------------------------------------
    Vec grad_raw;
    std::vector<Vec> grad_tokens;
    for (int k = 0; k < k_count; ++k) {
        through_normalization(g_text.row(k), fwd.known_text.unit.row(k),
                              fwd.known_text.raw_norm[static_cast<std::size_t>(k)], grad_raw);
        grad_tokens.clear();
        encoder_.encode_text_backward(fwd.known_text.tokens[static_cast<std::size_t>(k)], grad_raw, grad_tokens);
        Matrix& ctx_grad = grads.ctx.per_class[static_cast<std::size_t>(k)];
        for (int m = 0; m < settings_.context_len; ++m)
            axpy(1.0, grad_tokens[static_cast<std::size_t>(m)], ctx_grad.row(m));
        // class-name tokens are fixed; their gradient is dropped
    }
    if (settings_.negative_text_learnable && grads.neg_ctx) {
        for (int k = 0; k < k_count; ++k) {
            through_normalization(g_neg_text.row(k), fwd.neg_text.unit.row(k),
                                  fwd.neg_text.raw_norm[static_cast<std::size_t>(k)], grad_raw);
            grad_tokens.clear();
            encoder_.encode_text_backward(fwd.neg_text.tokens[static_cast<std::size_t>(k)], grad_raw,
                                          grad_tokens);
            Matrix& ctx_grad = grads.neg_ctx->per_class[static_cast<std::size_t>(k)];
            for (int m = 0; m < settings_.context_len; ++m)
                axpy(1.0, grad_tokens[static_cast<std::size_t>(m)], ctx_grad.row(m));
        }
    }

    // ---- chain into the negative visual bank -------------------------
    for (int k = 0; k < k_count; ++k) {
        through_normalization(g_neg_visual.row(k), fwd.bank.unit.row(k),
                              fwd.bank.raw_norm[static_cast<std::size_t>(k)], grad_raw);
        encoder_.encode_frame_backward(state.bank.tensors[static_cast<std::size_t>(k)], grad_raw,
                                       grads.bank.tensors[static_cast<std::size_t>(k)]);
    }

    // ---- chain into the visual patch ----------------------------------
    if (settings_.modules == PromptModules::tp_vp && !state.patches.empty()) {
        Vec g_frame_emb;
        Tensor3 pixel_grad;
        for (int i = 0; i < b; ++i) {
            const EncodedVideo& enc = fwd.videos[static_cast<std::size_t>(i)];
            through_normalization(g_video.row(i), enc.unit, enc.raw_norm, grad_raw);
            const VideoSample& sample = *batch[static_cast<std::size_t>(i)];
            const MaskRect rect = fwd.rects[static_cast<std::size_t>(i)];
            const auto raw_frames = sample_frames(sample, settings_.frames_per_video);
            const double inv_n = 1.0 / static_cast<double>(raw_frames.size());
            g_frame_emb.assign(grad_raw.size(), 0.0);
            for (std::size_t c = 0; c < grad_raw.size(); ++c) g_frame_emb[c] = grad_raw[c] * inv_n;
            for (std::size_t q = 0; q < raw_frames.size(); ++q) {
                const Tensor3& patch = patch_for_frame(state, static_cast<int>(q));
                const Tensor3 prompted = prompt_one_frame(raw_frames[q], rect, patch);
                pixel_grad = Tensor3(prompted.channels, prompted.height, prompted.width, 0.0);
                encoder_.encode_frame_backward(prompted, g_frame_emb, pixel_grad);
                Tensor3& patch_grad =
                    settings_.patch_per_frame
                        ? grads.patches[q % grads.patches.size()]
                        : grads.patches.front();
                accumulate_patch_grad(raw_frames[q], rect, patch, pixel_grad, patch_grad);
            }
        }
    }
}

ScoreBundle PromptPipeline::score(std::span<const VideoSample* const> batch, const PromptState& state) {
    if (batch.empty()) throw ContractError("empty batch");
    const EncodedTextPrompts known_text = encode_known_prompts(state.ctx, class_names_, encoder_);
    const EncodedBank bank = encode_negative_bank(state.bank, encoder_);

    Matrix video_emb(static_cast<int>(batch.size()), encoder_.embed_dim());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const MaskRect rect = rect_for(*batch[i]);
        const auto frames = prompted_frames(*batch[i], state, rect);
        const EncodedVideo enc = encode_video(frames, encoder_);
        for (int c = 0; c < encoder_.embed_dim(); ++c)
            video_emb(static_cast<int>(i), c) = enc.unit[static_cast<std::size_t>(c)];
    }
    Matrix p_kn = prediction_known(video_emb, known_text.unit, encoder_.logit_scale());
    Matrix p_ne = prediction_negative(video_emb, bank.unit, settings_.ne_scale, settings_.ne_logit_sign);
    return ScoreBundle::build(std::move(p_kn), std::move(p_ne));
}

}  // namespace ovfer
