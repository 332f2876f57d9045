#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovfer/encoder.hpp"
#include "ovfer/tensor.hpp"

namespace ovfer {

// Learnable per-class context token embeddings (one row of M tokens per
// known class). The only mutable text-side state; updated by the training
// loop alone.
struct TextContext {
    int context_len = 16;  // M
    int token_dim = 0;
    std::vector<Matrix> per_class;  // K entries, each M x token_dim

    int num_classes() const { return static_cast<int>(per_class.size()); }
    void validate() const;
};

// Zero-mean Gaussian entries at init_std (default 0.02), deterministic in
// the seed.
TextContext init_context(int num_classes, int context_len, int token_dim, std::uint64_t seed,
                         double init_std = 0.02);

// "This video is not <class-name>", class name lowercased. Fixed template;
// carries no learnable state.
std::string negative_prompt_text(const std::string& class_name);

// Context tokens followed by the tokenized class name. The context portion
// aliases the learnable parameters; the class-name portion is fixed.
std::vector<Vec> build_known_prompt(const TextContext& context, int class_index, const std::string& class_name,
                                    const DualEncoder& encoder);

// Encoded prompt set with the intermediates the backward pass needs.
struct EncodedTextPrompts {
    Matrix unit;  // K x d, L2-normalized rows
    Matrix raw;   // K x d, encoder outputs
    Vec raw_norm;
    std::vector<std::vector<Vec>> tokens;  // per-class token sequences
};

// Per-class independent encoding; output order matches class order.
EncodedTextPrompts encode_known_prompts(const TextContext& context, const std::vector<std::string>& class_names,
                                        const DualEncoder& encoder);

// The K fixed negative templates, encoded. Deterministic; no learnable
// parameters feed this path.
EncodedTextPrompts encode_negative_prompts(const std::vector<std::string>& class_names,
                                           const DualEncoder& encoder);

}  // namespace ovfer
