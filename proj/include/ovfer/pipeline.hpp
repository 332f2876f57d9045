#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovfer/data.hpp"
#include "ovfer/encoder.hpp"
#include "ovfer/losses.hpp"
#include "ovfer/text_prompts.hpp"
#include "ovfer/visual_prompts.hpp"

namespace ovfer {

enum class PatchMode { additive, replace };
enum class VisualPromptStyle { masked_patch, padding, random_patch };
enum class PromptModules { tp, tp_vp };

// Everything the prompting pipeline needs to know; a strict subset of the
// run configuration.
struct PromptSettings {
    int context_len = 16;  // M
    double ctx_init_std = 0.02;
    int patch_side = 56;  // l
    int frames_per_video = 16;  // N fed to the encoder
    double ne_scale = 10.0;
    int ne_logit_sign = 1;
    double supcon_tau = 0.07;
    LossWeights loss_weights;
    bool ne_supcon = false;
    PromptModules modules = PromptModules::tp_vp;
    PatchMode patch_mode = PatchMode::additive;
    VisualPromptStyle style = VisualPromptStyle::masked_patch;
    bool patch_per_frame = false;
    bool negative_text_learnable = false;
    bool learn_align_scale = false;
    std::uint64_t prompt_seed = 3;
};

// All learnable parameters. Doubles as the gradient container (zeros_like).
struct PromptState {
    TextContext ctx;
    std::optional<TextContext> neg_ctx;  // negative_text: learnable
    std::vector<Tensor3> patches;        // empty in tp mode; N entries when per-frame
    NegativeVisualBank bank;
    std::optional<double> align_scale;   // learnable alignment temperature

    static PromptState zeros_like(const PromptState& other);
    std::size_t param_count() const;
    Vec flatten() const;
    void unflatten(std::span<const double> values);
    // Mutable views over every parameter block, in the flatten order.
    std::vector<std::span<double>> param_blocks();
};

struct BatchForward {
    BatchFeatures features;
    ScoreBundle bundle;
    LossBreakdown loss;
    Matrix distances;  // B x K Euclidean distances behind p_ne
    EncodedTextPrompts known_text;
    EncodedTextPrompts neg_text;
    EncodedBank bank;
    std::vector<EncodedVideo> videos;
    std::vector<MaskRect> rects;
};

// Forward and backward evaluation of the multi-task objective with respect
// to the prompt parameters, over a frozen encoder. Mask rectangles are
// located once per video (on the un-prompted first frame) and cached.
class PromptPipeline {
public:
    PromptPipeline(const DualEncoder& encoder, PromptSettings settings,
                   std::vector<std::string> known_class_names);

    PromptState init_state(std::uint64_t seed) const;

    BatchForward forward(std::span<const VideoSample* const> batch, const std::vector<int>& labels,
                         const PromptState& state);
    // Accumulates d(loss.total)/d(parameters) into `grads`.
    void backward(const BatchForward& fwd, std::span<const VideoSample* const> batch,
                  const std::vector<int>& labels, const PromptState& state, PromptState& grads);

    // Label-free scoring for evaluation; same encoding path as forward.
    ScoreBundle score(std::span<const VideoSample* const> batch, const PromptState& state);

    const std::vector<std::string>& class_names() const { return class_names_; }
    const PromptSettings& settings() const { return settings_; }
    const DualEncoder& encoder() const { return encoder_; }
    double alignment_scale(const PromptState& state) const;

    // Instrumentation: number of saliency computations performed (mask
    // stability says one per video, ever).
    long saliency_calls() const { return saliency_calls_; }
    void reset_mask_cache();

    MaskRect rect_for(const VideoSample& sample);
    // Prompted frames for one video under the current parameters.
    std::vector<Tensor3> prompted_frames(const VideoSample& sample, const PromptState& state,
                                         const MaskRect& rect) const;

private:
    const Tensor3& patch_for_frame(const PromptState& state, int frame_index) const;
    Tensor3 prompt_one_frame(const Tensor3& frame, const MaskRect& rect, const Tensor3& patch) const;
    void accumulate_patch_grad(const Tensor3& frame, const MaskRect& rect, const Tensor3& patch,
                               const Tensor3& pixel_grad, Tensor3& patch_grad) const;
    int pad_band_width() const;

    const DualEncoder& encoder_;
    PromptSettings settings_;
    std::vector<std::string> class_names_;
    std::optional<EncodedTextPrompts> fixed_neg_text_;  // cached when not learnable
    std::map<std::string, MaskRect> mask_cache_;
    long saliency_calls_ = 0;
};

}  // namespace ovfer
