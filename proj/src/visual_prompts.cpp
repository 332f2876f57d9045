#include "ovfer/visual_prompts.hpp"

#include <cmath>
#include <limits>

#include "ovfer/errors.hpp"
#include "ovfer/rng.hpp"

namespace ovfer {

MaskRect locate_mask_on_heatmap(const Matrix& heatmap, int side) {
    const int h = heatmap.rows, w = heatmap.cols;
    if (side < 1 || side > h || side > w)
        throw DomainError("mask side must be positive and no larger than the frame");

    // prefix(r,c) = sum of heatmap[0..r-1][0..c-1]
    Matrix prefix(h + 1, w + 1, 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            prefix(r + 1, c + 1) = heatmap(r, c) + prefix(r, c + 1) + prefix(r + 1, c) - prefix(r, c);

    MaskRect best{0, 0, side};
    double best_sum = 0.0;
    bool have_best = false;
    for (int top = 0; top + side <= h; ++top)
        for (int left = 0; left + side <= w; ++left) {
            const double s = prefix(top + side, left + side) - prefix(top, left + side) -
                             prefix(top + side, left) + prefix(top, left);
            // Prefix rounding perturbs exactly-tied windows by ~1e-13; the
            // margin keeps ties breaking toward the smallest top, then left.
            if (!have_best || s > best_sum + 1e-9 * (1.0 + std::abs(best_sum))) {
                best_sum = s;
                best = {top, left, side};
                have_best = true;
            }
        }
    return best;
}

MaskRect locate_mask(const Tensor3& first_frame, const DualEncoder& saliency_provider, int side) {
    const FrameShape shape = saliency_provider.frame_shape();
    if (side > shape.height || side > shape.width)
        throw DomainError("mask side exceeds the frame side");
    return locate_mask_on_heatmap(saliency_provider.saliency(first_frame), side);
}

Tensor3 apply_visual_prompt(const Tensor3& frame, const MaskRect& rect, const Tensor3& patch) {
    if (patch.height != rect.side || patch.width != rect.side || patch.channels != frame.channels)
        throw ContractError("patch shape does not match the mask rectangle");
    if (rect.top < 0 || rect.left < 0 || rect.top + rect.side > frame.height ||
        rect.left + rect.side > frame.width)
        throw ContractError("mask rectangle does not lie inside the frame");
    Tensor3 out = frame;
    for (int c = 0; c < frame.channels; ++c)
        for (int y = 0; y < rect.side; ++y)
            for (int x = 0; x < rect.side; ++x)
                out.at(c, rect.top + y, rect.left + x) = patch.at(c, y, x);
    return out;
}

void VisualPatch::validate(int side) const {
    if (values.height != side || values.width != side)
        throw ContractError("visual patch side does not match the mask rectangle");
    if (!all_finite(values.data)) throw ContractError("visual patch contains non-finite entries");
}

void NegativeVisualBank::validate(const FrameShape& shape) const {
    for (const auto& t : tensors) {
        if (!shape.matches(t)) throw ContractError("negative bank tensor shape does not match the frame shape");
        if (!all_finite(t.data)) throw ContractError("negative bank contains non-finite entries");
    }
}

NegativeVisualBank init_negative_bank(int num_classes, const FrameShape& shape, const PixelRange& range,
                                      std::uint64_t seed) {
    if (num_classes < 1) throw ContractError("negative bank needs at least one class");
    NegativeVisualBank bank;
    bank.tensors.reserve(static_cast<std::size_t>(num_classes));
    auto rng = make_rng(mix_seed(seed, 0xba9bULL));
    std::uniform_real_distribution<double> d(range.lo, range.hi);
    for (int k = 0; k < num_classes; ++k) {
        Tensor3 t(shape.channels, shape.height, shape.width);
        for (double& v : t.data) v = d(rng);
        bank.tensors.push_back(std::move(t));
    }
    return bank;
}

EncodedVideo encode_video(std::span<const Tensor3> frames, const DualEncoder& encoder) {
    if (frames.empty()) throw ContractError("encode_video requires at least one frame");
    EncodedVideo out;
    out.raw.assign(static_cast<std::size_t>(encoder.embed_dim()), 0.0);
    const double inv_n = 1.0 / static_cast<double>(frames.size());
    for (const auto& frame : frames) {
        const EncodedFrame enc = encoder.encode_frame(frame);
        axpy(inv_n, enc.embedding, out.raw);
    }
    out.raw_norm = l2_norm(out.raw);
    if (!(out.raw_norm > 1e-300)) throw ContractError("video embedding collapsed to zero norm");
    out.unit.resize(out.raw.size());
    for (std::size_t i = 0; i < out.raw.size(); ++i) out.unit[i] = out.raw[i] / out.raw_norm;
    return out;
}

EncodedBank encode_negative_bank(const NegativeVisualBank& bank, const DualEncoder& encoder) {
    if (bank.size() < 1) throw ContractError("negative bank is empty");
    EncodedBank out;
    out.unit = Matrix(bank.size(), encoder.embed_dim());
    out.raw = Matrix(bank.size(), encoder.embed_dim());
    out.raw_norm.resize(static_cast<std::size_t>(bank.size()));
    for (int k = 0; k < bank.size(); ++k) {
        const EncodedFrame enc = encoder.encode_frame(bank.tensors[static_cast<std::size_t>(k)]);
        const double n = l2_norm(enc.embedding);
        if (!(n > 1e-300)) throw ContractError("negative bank embedding collapsed to zero norm");
        out.raw_norm[static_cast<std::size_t>(k)] = n;
        for (int c = 0; c < encoder.embed_dim(); ++c) {
            out.raw(k, c) = enc.embedding[static_cast<std::size_t>(c)];
            out.unit(k, c) = enc.embedding[static_cast<std::size_t>(c)] / n;
        }
    }
    return out;
}

}  // namespace ovfer
