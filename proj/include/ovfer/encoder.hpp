#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ovfer/tensor.hpp"

namespace ovfer {

struct EncodedFrame {
    Vec embedding;        // length embed_dim
    Tensor3 feature_map;  // last spatial stage, channels x h' x w'
};

struct PixelRange {
    double lo = 0.0;
    double hi = 1.0;
};

// Frozen dual encoder: a text branch over token embeddings and a per-frame
// visual branch, both deterministic and differentiable with respect to their
// inputs. Gradients flow THROUGH the encoder into prompt parameters; encoder
// weights never change.
class DualEncoder {
public:
    virtual ~DualEncoder() = default;

    virtual int embed_dim() const = 0;
    virtual int token_dim() const = 0;
    virtual FrameShape frame_shape() const = 0;
    virtual double logit_scale() const = 0;
    virtual PixelRange pixel_range() const = 0;

    virtual Vec encode_text(std::span<const Vec> tokens) const = 0;
    // Accumulates d(loss)/d(token coordinates) given d(loss)/d(embedding).
    virtual void encode_text_backward(std::span<const Vec> tokens, std::span<const double> grad_embedding,
                                      std::vector<Vec>& grad_tokens) const = 0;

    virtual EncodedFrame encode_frame(const Tensor3& frame) const = 0;
    virtual void encode_frame_backward(const Tensor3& frame, std::span<const double> grad_embedding,
                                       Tensor3& grad_frame) const = 0;

    virtual std::vector<Vec> tokenize(const std::string& text) const = 0;

    // CAM-style saliency: class-agnostic channel weighting of the spatial
    // feature map, upsampled to frame resolution, shifted to be >= 0.
    virtual Matrix saliency(const Tensor3& frame) const = 0;

    // Digest over the frozen weights; invariant across a training run.
    virtual std::uint64_t digest() const = 0;
};

struct AffineEncoderParams {
    int embed_dim = 32;
    int token_dim = 32;
    FrameShape frame_shape{3, 32, 32};
    double logit_scale = 100.0;
    int pool = 4;           // average-pool window of the visual branch
    bool positions = true;  // positional weighting in the text branch
    PixelRange pixel_range{0.0, 1.0};
};

struct AffineEncoderWeights {
    Matrix text_proj;    // embed_dim x token_dim
    Vec text_bias;       // embed_dim
    Matrix visual_proj;  // embed_dim x (channels * grid_h * grid_w)
    Vec visual_bias;     // embed_dim
};

// Shared math for both the mock and the external adapter: the text branch is
// a position-weighted token mean through a fixed affine map; the visual
// branch is an average-pool followed by a fixed affine map, with the pooled
// grid exposed as the spatial feature map.
class AffineEncoder : public DualEncoder {
public:
    AffineEncoder(AffineEncoderParams params, AffineEncoderWeights weights);

    int embed_dim() const override { return params_.embed_dim; }
    int token_dim() const override { return params_.token_dim; }
    FrameShape frame_shape() const override { return params_.frame_shape; }
    double logit_scale() const override { return params_.logit_scale; }
    PixelRange pixel_range() const override { return params_.pixel_range; }

    Vec encode_text(std::span<const Vec> tokens) const override;
    void encode_text_backward(std::span<const Vec> tokens, std::span<const double> grad_embedding,
                              std::vector<Vec>& grad_tokens) const override;

    EncodedFrame encode_frame(const Tensor3& frame) const override;
    void encode_frame_backward(const Tensor3& frame, std::span<const double> grad_embedding,
                               Tensor3& grad_frame) const override;

    std::vector<Vec> tokenize(const std::string& text) const override;
    Matrix saliency(const Tensor3& frame) const override;
    std::uint64_t digest() const override;

    const AffineEncoderParams& params() const { return params_; }
    const AffineEncoderWeights& weights() const { return weights_; }

    int grid_h() const { return params_.frame_shape.height / params_.pool; }
    int grid_w() const { return params_.frame_shape.width / params_.pool; }

private:
    double position_weight(int position, int coord) const;
    Tensor3 pooled(const Tensor3& frame) const;

    AffineEncoderParams params_;
    AffineEncoderWeights weights_;
    Vec cam_weights_;  // per feature channel, mean of visual_proj entries
};

struct MockEncoderConfig {
    int embed_dim = 32;
    int token_dim = 32;
    FrameShape frame_shape{3, 32, 32};
    double logit_scale = 100.0;
    std::uint64_t seed = 1234;
    int pool = 4;
    bool positions = true;
};

// Deterministic mock: fixed random affine weights derived from the seed.
class MockEncoder final : public AffineEncoder {
public:
    explicit MockEncoder(const MockEncoderConfig& config);
};

// Loads externally produced encoder weights (JSON) into the affine family;
// the integration surface for projections exported from a pretrained model.
std::unique_ptr<DualEncoder> load_external_encoder(const std::filesystem::path& weights_path);

// Writes a weights file in the external format (a template for exporters).
void save_external_encoder_weights(const AffineEncoder& encoder, const std::filesystem::path& path);

}  // namespace ovfer
