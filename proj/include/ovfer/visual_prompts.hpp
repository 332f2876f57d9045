#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ovfer/encoder.hpp"
#include "ovfer/tensor.hpp"

namespace ovfer {

// Expression-sensitive rectangle; lies fully inside the frame.
struct MaskRect {
    int top = 0;
    int left = 0;
    int side = 0;
};

// The side x side window maximizing the summed heatmap score, via a 2-D
// prefix sum. Ties break toward the smallest top, then the smallest left.
MaskRect locate_mask_on_heatmap(const Matrix& heatmap, int side);

// Saliency of the (un-prompted) first frame, located once per video and
// reused for every frame.
MaskRect locate_mask(const Tensor3& first_frame, const DualEncoder& saliency_provider, int side);

// Binary-mask fusion: output equals `patch` inside the rectangle and the
// input frame outside it.
Tensor3 apply_visual_prompt(const Tensor3& frame, const MaskRect& rect, const Tensor3& patch);

// Learnable pixel prompt. In additive mode (the default) `values` holds a
// perturbation added to the covered crop and clipped to the pixel range; in
// replace mode it holds the pixels themselves.
struct VisualPatch {
    Tensor3 values;
    void validate(int side) const;
};

// K learnable frame-sized tensors, one "what this class is not" per class.
struct NegativeVisualBank {
    std::vector<Tensor3> tensors;
    int size() const { return static_cast<int>(tensors.size()); }
    void validate(const FrameShape& shape) const;
};

NegativeVisualBank init_negative_bank(int num_classes, const FrameShape& shape, const PixelRange& range,
                                      std::uint64_t seed);

struct EncodedVideo {
    Vec unit;  // L2-normalized temporal mean of frame embeddings
    Vec raw;
    double raw_norm = 0.0;
};

// Temporal global pooling: arithmetic mean of per-frame embeddings, then
// L2 normalization.
EncodedVideo encode_video(std::span<const Tensor3> frames, const DualEncoder& encoder);

struct EncodedBank {
    Matrix unit;  // K x d, L2-normalized rows
    Matrix raw;
    Vec raw_norm;
};

// Per-tensor frame encoding (embedding part only), order preserving.
EncodedBank encode_negative_bank(const NegativeVisualBank& bank, const DualEncoder& encoder);

}  // namespace ovfer
