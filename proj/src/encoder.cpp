#include "ovfer/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ovfer/errors.hpp"
#include "ovfer/rng.hpp"

namespace ovfer {

AffineEncoder::AffineEncoder(AffineEncoderParams params, AffineEncoderWeights weights)
    : params_(params), weights_(std::move(weights)) {
    if (params_.embed_dim < 1 || params_.token_dim < 1) throw ContractError("encoder dimensions must be positive");
    if (!(params_.logit_scale > 0.0)) throw ContractError("logit_scale must be positive");
    if (params_.pool < 1 || params_.frame_shape.height % params_.pool != 0 ||
        params_.frame_shape.width % params_.pool != 0)
        throw ContractError("pool window must divide the frame height and width");
    if (!(params_.pixel_range.lo < params_.pixel_range.hi)) throw ContractError("invalid pixel range");

    const int n_vis = params_.frame_shape.channels * grid_h() * grid_w();
    if (weights_.text_proj.rows != params_.embed_dim || weights_.text_proj.cols != params_.token_dim ||
        weights_.visual_proj.rows != params_.embed_dim || weights_.visual_proj.cols != n_vis ||
        static_cast<int>(weights_.text_bias.size()) != params_.embed_dim ||
        static_cast<int>(weights_.visual_bias.size()) != params_.embed_dim)
        throw ContractError("encoder weight shapes do not match the declared dimensions");

    // Class-agnostic CAM weights: mean of the visual projection entries per
    // feature-map channel (no class label exists at mask time).
    cam_weights_.assign(static_cast<std::size_t>(params_.frame_shape.channels), 0.0);
    const int cells = grid_h() * grid_w();
    for (int c = 0; c < params_.frame_shape.channels; ++c) {
        double sum = 0.0;
        for (int o = 0; o < params_.embed_dim; ++o)
            for (int i = 0; i < cells; ++i) sum += weights_.visual_proj(o, c * cells + i);
        cam_weights_[static_cast<std::size_t>(c)] = sum / (static_cast<double>(params_.embed_dim) * cells);
    }
}

double AffineEncoder::position_weight(int position, int coord) const {
    if (!params_.positions) return 1.0;
    return 1.0 + 0.5 * std::sin(0.7 * position + 0.3 * coord + 0.5);
}

Vec AffineEncoder::encode_text(std::span<const Vec> tokens) const {
    if (tokens.empty()) throw ContractError("encode_text requires a non-empty token sequence");
    for (const auto& t : tokens)
        if (static_cast<int>(t.size()) != params_.token_dim)
            throw ContractError("token embedding width does not match token_dim");

    Vec pooled_tok(static_cast<std::size_t>(params_.token_dim), 0.0);
    const double inv_n = 1.0 / static_cast<double>(tokens.size());
    for (std::size_t j = 0; j < tokens.size(); ++j)
        for (int c = 0; c < params_.token_dim; ++c)
            pooled_tok[static_cast<std::size_t>(c)] +=
                tokens[j][static_cast<std::size_t>(c)] * position_weight(static_cast<int>(j), c) * inv_n;

    Vec out(static_cast<std::size_t>(params_.embed_dim));
    for (int o = 0; o < params_.embed_dim; ++o)
        out[static_cast<std::size_t>(o)] = dot(weights_.text_proj.row(o), pooled_tok) +
                                           weights_.text_bias[static_cast<std::size_t>(o)];
    return out;
}

void AffineEncoder::encode_text_backward(std::span<const Vec> tokens, std::span<const double> grad_embedding,
                                         std::vector<Vec>& grad_tokens) const {
    if (tokens.empty()) throw ContractError("encode_text_backward requires a non-empty token sequence");
    if (static_cast<int>(grad_embedding.size()) != params_.embed_dim)
        throw ContractError("grad_embedding width does not match embed_dim");
    if (grad_tokens.size() != tokens.size())
        grad_tokens.assign(tokens.size(), Vec(static_cast<std::size_t>(params_.token_dim), 0.0));

    // d(out)/d(tok[j][c]) = text_proj[:,c] * pos(j,c) / N
    Vec proj_t(static_cast<std::size_t>(params_.token_dim), 0.0);
    for (int o = 0; o < params_.embed_dim; ++o)
        axpy(grad_embedding[static_cast<std::size_t>(o)], weights_.text_proj.row(o), proj_t);
    const double inv_n = 1.0 / static_cast<double>(tokens.size());
    for (std::size_t j = 0; j < tokens.size(); ++j)
        for (int c = 0; c < params_.token_dim; ++c)
            grad_tokens[j][static_cast<std::size_t>(c)] +=
                proj_t[static_cast<std::size_t>(c)] * position_weight(static_cast<int>(j), c) * inv_n;
}

Tensor3 AffineEncoder::pooled(const Tensor3& frame) const {
    if (!params_.frame_shape.matches(frame)) throw ContractError("frame shape does not match the encoder contract");
    const int p = params_.pool;
    Tensor3 grid(params_.frame_shape.channels, grid_h(), grid_w());
    const double inv = 1.0 / (p * p);
    for (int c = 0; c < grid.channels; ++c)
        for (int gy = 0; gy < grid.height; ++gy)
            for (int gx = 0; gx < grid.width; ++gx) {
                double s = 0.0;
                for (int y = gy * p; y < (gy + 1) * p; ++y)
                    for (int x = gx * p; x < (gx + 1) * p; ++x) s += frame.at(c, y, x);
                grid.at(c, gy, gx) = s * inv;
            }
    return grid;
}

EncodedFrame AffineEncoder::encode_frame(const Tensor3& frame) const {
    EncodedFrame out;
    out.feature_map = pooled(frame);
    out.embedding.resize(static_cast<std::size_t>(params_.embed_dim));
    for (int o = 0; o < params_.embed_dim; ++o)
        out.embedding[static_cast<std::size_t>(o)] =
            dot(weights_.visual_proj.row(o), out.feature_map.data) + weights_.visual_bias[static_cast<std::size_t>(o)];
    return out;
}

void AffineEncoder::encode_frame_backward(const Tensor3& frame, std::span<const double> grad_embedding,
                                          Tensor3& grad_frame) const {
    if (!params_.frame_shape.matches(frame)) throw ContractError("frame shape does not match the encoder contract");
    if (static_cast<int>(grad_embedding.size()) != params_.embed_dim)
        throw ContractError("grad_embedding width does not match embed_dim");
    if (!grad_frame.same_shape(frame)) grad_frame = Tensor3(frame.channels, frame.height, frame.width, 0.0);

    Vec grid_grad(weights_.visual_proj.data.size() / static_cast<std::size_t>(params_.embed_dim), 0.0);
    for (int o = 0; o < params_.embed_dim; ++o)
        axpy(grad_embedding[static_cast<std::size_t>(o)], weights_.visual_proj.row(o), grid_grad);

    const int p = params_.pool;
    const int gh = grid_h(), gw = grid_w();
    const double inv = 1.0 / (p * p);
    for (int c = 0; c < frame.channels; ++c)
        for (int y = 0; y < frame.height; ++y)
            for (int x = 0; x < frame.width; ++x) {
                const std::size_t gi = (static_cast<std::size_t>(c) * gh + y / p) * gw + x / p;
                grad_frame.at(c, y, x) += grid_grad[gi] * inv;
            }
}

std::vector<Vec> AffineEncoder::tokenize(const std::string& text) const {
    std::string lowered(text);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::stringstream ss(lowered);
    std::string word;
    std::vector<Vec> tokens;
    const double scale = 1.0 / std::sqrt(static_cast<double>(params_.token_dim));
    while (ss >> word) {
        auto rng = make_rng(fnv1a(word));
        std::normal_distribution<double> d(0.0, 1.0);
        Vec tok(static_cast<std::size_t>(params_.token_dim));
        for (double& v : tok) v = d(rng) * scale;
        tokens.push_back(std::move(tok));
    }
    if (tokens.empty()) throw ContractError("tokenize requires non-empty text");
    return tokens;
}

Matrix AffineEncoder::saliency(const Tensor3& frame) const {
    const Tensor3 grid = pooled(frame);
    Matrix heat(params_.frame_shape.height, params_.frame_shape.width, 0.0);
    const int p = params_.pool;
    double min_v = 0.0;
    bool first = true;
    for (int gy = 0; gy < grid.height; ++gy)
        for (int gx = 0; gx < grid.width; ++gx) {
            double v = 0.0;
            for (int c = 0; c < grid.channels; ++c)
                v += cam_weights_[static_cast<std::size_t>(c)] * grid.at(c, gy, gx);
            for (int y = gy * p; y < (gy + 1) * p; ++y)
                for (int x = gx * p; x < (gx + 1) * p; ++x) heat(y, x) = v;
            if (first || v < min_v) min_v = v;
            first = false;
        }
    for (double& v : heat.data) v -= min_v;
    return heat;
}

std::uint64_t AffineEncoder::digest() const {
    std::uint64_t h = fnv1a_bytes(weights_.text_proj.data.data(), weights_.text_proj.data.size() * sizeof(double));
    h = fnv1a_bytes(weights_.text_bias.data(), weights_.text_bias.size() * sizeof(double), h);
    h = fnv1a_bytes(weights_.visual_proj.data.data(), weights_.visual_proj.data.size() * sizeof(double), h);
    h = fnv1a_bytes(weights_.visual_bias.data(), weights_.visual_bias.size() * sizeof(double), h);
    const int meta[6] = {params_.embed_dim, params_.token_dim,       params_.frame_shape.channels,
                         params_.frame_shape.height, params_.frame_shape.width, params_.pool};
    h = fnv1a_bytes(meta, sizeof(meta), h);
    return h;
}

namespace {

AffineEncoderWeights random_weights(const AffineEncoderParams& p, std::uint64_t seed) {
    AffineEncoderWeights w;
    const int grid_h = p.frame_shape.height / p.pool;
    const int grid_w = p.frame_shape.width / p.pool;
    const int n_vis = p.frame_shape.channels * grid_h * grid_w;

    auto fill = [](Matrix& m, std::uint64_t s, double scale) {
        auto rng = make_rng(s);
        std::normal_distribution<double> d(0.0, 1.0);
        for (double& v : m.data) v = d(rng) * scale;
    };
    auto fill_vec = [](Vec& v, std::uint64_t s, double scale) {
        auto rng = make_rng(s);
        std::normal_distribution<double> d(0.0, 1.0);
        for (double& x : v) x = d(rng) * scale;
    };

    w.text_proj = Matrix(p.embed_dim, p.token_dim);
    fill(w.text_proj, mix_seed(seed, 1), 1.0 / std::sqrt(static_cast<double>(p.token_dim)));
    w.text_bias.resize(static_cast<std::size_t>(p.embed_dim));
    fill_vec(w.text_bias, mix_seed(seed, 2), 0.1);
    w.visual_proj = Matrix(p.embed_dim, n_vis);
    fill(w.visual_proj, mix_seed(seed, 3), 1.0 / std::sqrt(static_cast<double>(n_vis)));
    w.visual_bias.resize(static_cast<std::size_t>(p.embed_dim));
    fill_vec(w.visual_bias, mix_seed(seed, 4), 0.1);
    return w;
}

AffineEncoderParams params_from_mock(const MockEncoderConfig& c) {
    AffineEncoderParams p;
    p.embed_dim = c.embed_dim;
    p.token_dim = c.token_dim;
    p.frame_shape = c.frame_shape;
    p.logit_scale = c.logit_scale;
    p.pool = c.pool;
    p.positions = c.positions;
    p.pixel_range = {0.0, 1.0};
    return p;
}

}  // namespace

MockEncoder::MockEncoder(const MockEncoderConfig& config)
    : AffineEncoder(params_from_mock(config), random_weights(params_from_mock(config), config.seed)) {}

namespace {

class ExternalAffineEncoder final : public AffineEncoder {
public:
    using AffineEncoder::AffineEncoder;
};

Matrix matrix_from_json(const nlohmann::json& j, int rows, int cols, const char* name) {
    const auto flat = j.get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != rows * cols)
        throw SchemaError(std::string("encoder weights: '") + name + "' has the wrong element count");
    Matrix m(rows, cols);
    m.data = flat;
    return m;
}

}  // namespace

std::unique_ptr<DualEncoder> load_external_encoder(const std::filesystem::path& weights_path) {
    std::ifstream in(weights_path);
    if (!in) throw IngestionError("cannot open encoder weights: " + weights_path.string());
    nlohmann::json j;
    try {
        in >> j;
        AffineEncoderParams p;
        p.embed_dim = j.at("embed_dim").get<int>();
        p.token_dim = j.at("token_dim").get<int>();
        p.frame_shape = {j.at("frame_shape").at("channels").get<int>(),
                         j.at("frame_shape").at("height").get<int>(),
                         j.at("frame_shape").at("width").get<int>()};
        p.logit_scale = j.at("logit_scale").get<double>();
        p.pool = j.at("pool").get<int>();
        p.positions = j.value("positions", true);
        p.pixel_range = {j.value("pixel_lo", 0.0), j.value("pixel_hi", 1.0)};

        const int grid = (p.frame_shape.height / p.pool) * (p.frame_shape.width / p.pool);
        AffineEncoderWeights w;
        w.text_proj = matrix_from_json(j.at("text_proj"), p.embed_dim, p.token_dim, "text_proj");
        w.text_bias = j.at("text_bias").get<Vec>();
        w.visual_proj =
            matrix_from_json(j.at("visual_proj"), p.embed_dim, p.frame_shape.channels * grid, "visual_proj");
        w.visual_bias = j.at("visual_bias").get<Vec>();
        return std::make_unique<ExternalAffineEncoder>(p, std::move(w));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("malformed encoder weights " + weights_path.string() + ": " + e.what());
    }
}

void save_external_encoder_weights(const AffineEncoder& encoder, const std::filesystem::path& path) {
    const auto& p = encoder.params();
    const auto& w = encoder.weights();
    nlohmann::json j;
    j["embed_dim"] = p.embed_dim;
    j["token_dim"] = p.token_dim;
    j["frame_shape"] = {{"channels", p.frame_shape.channels},
                        {"height", p.frame_shape.height},
                        {"width", p.frame_shape.width}};
    j["logit_scale"] = p.logit_scale;
    j["pool"] = p.pool;
    j["positions"] = p.positions;
    j["pixel_lo"] = p.pixel_range.lo;
    j["pixel_hi"] = p.pixel_range.hi;
    j["text_proj"] = w.text_proj.data;
    j["text_bias"] = w.text_bias;
    j["visual_proj"] = w.visual_proj.data;
    j["visual_bias"] = w.visual_bias;
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write encoder weights: " + path.string());
    out << j.dump() << "\n";
}

}  // namespace ovfer
