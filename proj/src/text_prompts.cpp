#include "ovfer/text_prompts.hpp"

#include <algorithm>
#include <cctype>

#include "ovfer/errors.hpp"
#include "ovfer/rng.hpp"

namespace ovfer {

void TextContext::validate() const {
    if (context_len < 1 || token_dim < 1) throw ContractError("text context dimensions must be positive");
    for (const auto& m : per_class) {
        if (m.rows != context_len || m.cols != token_dim)
            throw ContractError("text context rows must all be context_len x token_dim");
        if (!all_finite(m.data)) throw ContractError("text context contains non-finite entries");
    }
}

TextContext init_context(int num_classes, int context_len, int token_dim, std::uint64_t seed, double init_std) {
    if (num_classes < 1 || context_len < 1 || token_dim < 1)
        throw ContractError("init_context arguments must be positive");
    if (!(init_std > 0.0)) throw ContractError("context init scale must be positive");
    TextContext ctx;
    ctx.context_len = context_len;
    ctx.token_dim = token_dim;
    ctx.per_class.reserve(static_cast<std::size_t>(num_classes));
    auto rng = make_rng(mix_seed(seed, 0x7e47ULL));
    std::normal_distribution<double> d(0.0, init_std);
    for (int k = 0; k < num_classes; ++k) {
        Matrix m(context_len, token_dim);
        for (double& v : m.data) v = d(rng);
        ctx.per_class.push_back(std::move(m));
    }
    return ctx;
}

std::string negative_prompt_text(const std::string& class_name) {
    std::string lowered(class_name);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return "This video is not " + lowered;
}

std::vector<Vec> build_known_prompt(const TextContext& context, int class_index, const std::string& class_name,
                                    const DualEncoder& encoder) {
    if (class_index < 0 || class_index >= context.num_classes())
        throw ContractError("class index out of range for the text context");
    if (context.token_dim != encoder.token_dim())
        throw ContractError("text context token_dim does not match the encoder");
    const Matrix& rows = context.per_class[static_cast<std::size_t>(class_index)];
    std::vector<Vec> tokens;
    tokens.reserve(static_cast<std::size_t>(context.context_len) + 2);
    for (int m = 0; m < context.context_len; ++m) {
        const auto r = rows.row(m);
        tokens.emplace_back(r.begin(), r.end());
    }
    for (auto& t : encoder.tokenize(class_name)) tokens.push_back(std::move(t));
    return tokens;
}

namespace {

EncodedTextPrompts encode_token_sequences(std::vector<std::vector<Vec>> sequences, const DualEncoder& encoder) {
    EncodedTextPrompts out;
    const int k_count = static_cast<int>(sequences.size());
    out.unit = Matrix(k_count, encoder.embed_dim());
    out.raw = Matrix(k_count, encoder.embed_dim());
    out.raw_norm.resize(static_cast<std::size_t>(k_count));
    for (int k = 0; k < k_count; ++k) {
        const Vec raw = encoder.encode_text(sequences[static_cast<std::size_t>(k)]);
        const double n = l2_norm(raw);
        if (!(n > 1e-300)) throw ContractError("text embedding collapsed to zero norm");
        out.raw_norm[static_cast<std::size_t>(k)] = n;
        for (int c = 0; c < encoder.embed_dim(); ++c) {
            out.raw(k, c) = raw[static_cast<std::size_t>(c)];
            out.unit(k, c) = raw[static_cast<std::size_t>(c)] / n;
        }
    }
    out.tokens = std::move(sequences);
    return out;
}

}  // namespace

EncodedTextPrompts encode_known_prompts(const TextContext& context, const std::vector<std::string>& class_names,
                                        const DualEncoder& encoder) {
    if (static_cast<int>(class_names.size()) != context.num_classes())
        throw ContractError("class name list length does not match the text context");
    std::vector<std::vector<Vec>> sequences;
    sequences.reserve(class_names.size());
    for (int k = 0; k < context.num_classes(); ++k)
        sequences.push_back(build_known_prompt(context, k, class_names[static_cast<std::size_t>(k)], encoder));
    return encode_token_sequences(std::move(sequences), encoder);
}

EncodedTextPrompts encode_negative_prompts(const std::vector<std::string>& class_names,
                                           const DualEncoder& encoder) {
    if (class_names.empty()) throw ContractError("negative prompts require at least one class name");
    std::vector<std::vector<Vec>> sequences;
    sequences.reserve(class_names.size());
    for (const auto& name : class_names) sequences.push_back(encoder.tokenize(negative_prompt_text(name)));
    return encode_token_sequences(std::move(sequences), encoder);
}

}  // namespace ovfer
