#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "ovfer/encoder.hpp"
#include "ovfer/errors.hpp"
#include "ovfer/gradcheck.hpp"
#include "ovfer/rng.hpp"
#include "testutil.hpp"

using namespace ovfer;

namespace {

MockEncoder make_mock(bool positions = true) {
    MockEncoderConfig cfg;
    cfg.positions = positions;
    return MockEncoder(cfg);
}

}  // namespace

TEST_CASE("mock encoder is deterministic across instances") {
    const MockEncoder a = make_mock();
    const MockEncoder b = make_mock();
    const auto tokens = a.tokenize("this video is not anger");
    CHECK(a.encode_text(tokens) == b.encode_text(tokens));
    CHECK(a.digest() == b.digest());

    Tensor3 frame(3, 32, 32, 0.3);
    frame.at(0, 5, 7) = 0.9;
    CHECK(a.encode_frame(frame).embedding == b.encode_frame(frame).embedding);

    MockEncoderConfig other;
    other.seed = 999;
    CHECK(MockEncoder(other).digest() != a.digest());
}

TEST_CASE("token permutation changes the text embedding only with positions on") {
    const MockEncoder with_pos = make_mock(true);
    const MockEncoder no_pos = make_mock(false);
    const auto tokens = with_pos.tokenize("anger is not this video");
    std::vector<Vec> reversed(tokens.rbegin(), tokens.rend());

    const Vec a = with_pos.encode_text(tokens);
    const Vec b = with_pos.encode_text(reversed);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    CHECK(diff > 1e-9);

    const Vec c = no_pos.encode_text(tokens);
    const Vec d = no_pos.encode_text(reversed);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(d[i]).epsilon(1e-12));
}

TEST_CASE("text branch gradient matches finite differences") {
    const MockEncoder enc = make_mock();
    const auto r = gradcheck::check_text_encoder(enc, 20, 7);
    CAPTURE(r.max_rel_err);
    CHECK(r.pass());
}

TEST_CASE("visual branch gradient matches finite differences") {
    const MockEncoder enc = make_mock();
    const auto r = gradcheck::check_frame_encoder(enc, 20, 7);
    CAPTURE(r.max_rel_err);
    CHECK(r.pass());
}

TEST_CASE("zero frame yields the finite bias embedding") {
    const MockEncoder enc = make_mock();
    const Tensor3 zero(3, 32, 32, 0.0);
    const auto out = enc.encode_frame(zero);
    CHECK(all_finite(out.embedding));
    CHECK(out.embedding == enc.weights().visual_bias);
}

TEST_CASE("local frame edits reach the embedding") {
    const MockEncoder enc = make_mock();
    Tensor3 a(3, 32, 32, 0.4);
    Tensor3 b = a;
    for (int y = 8; y < 16; ++y)
        for (int x = 8; x < 16; ++x) b.at(1, y, x) = 0.9;
    const auto ea = enc.encode_frame(a).embedding;
    const auto eb = enc.encode_frame(b).embedding;
    double diff = 0.0;
    for (std::size_t i = 0; i < ea.size(); ++i) diff = std::max(diff, std::abs(ea[i] - eb[i]));
    CHECK(diff > 1e-9);
}

TEST_CASE("tokenize: whitespace splitting, determinism, distinct class names") {
    const MockEncoder enc = make_mock();
    CHECK(enc.tokenize("This video is not anger").size() == 5);
    CHECK(enc.tokenize("happiness").size() == 1);
    CHECK(enc.tokenize("anger") == enc.tokenize("ANGER"));  // lowercased table

    const std::vector<std::string> emotions = {"anger",    "disgust",      "fear",
                                               "happiness", "neutral",      "sadness",
                                               "surprise",  "contempt",     "anxiety",
                                               "helplessness", "disappointment"};
    std::set<std::vector<double>> seen;
    for (const auto& name : emotions) {
        const auto toks = enc.tokenize(name);
        REQUIRE(toks.size() == 1);
        seen.insert(toks.front());
    }
    CHECK(seen.size() == emotions.size());

    CHECK_THROWS_AS(enc.tokenize("   "), ContractError);
}

TEST_CASE("encode_text/encode_frame contract errors") {
    const MockEncoder enc = make_mock();
    CHECK_THROWS_AS(enc.encode_text({}), ContractError);
    std::vector<Vec> bad{Vec(7, 0.0)};
    CHECK_THROWS_AS(enc.encode_text(bad), ContractError);
    CHECK_THROWS_AS(enc.encode_frame(Tensor3(3, 16, 16)), ContractError);
    CHECK(enc.logit_scale() > 0.0);
}

TEST_CASE("saliency: shape, non-negativity, constant and quadrant frames") {
    const MockEncoder enc = make_mock();

    const Tensor3 constant(3, 32, 32, 0.6);
    const Matrix flat = enc.saliency(constant);
    REQUIRE(flat.rows == 32);
    REQUIRE(flat.cols == 32);
    for (double v : flat.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1e-6);  // uniform after the min shift
    }

    // Energy in the top-left quadrant, sign-matched per channel to the
    // class-agnostic CAM weights so the weighted sum is positive there.
    const auto& w = enc.weights();
    const int grid = enc.grid_h() * enc.grid_w();
    Vec channel_weight(3, 0.0);
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int o = 0; o < enc.embed_dim(); ++o)
            for (int i = 0; i < grid; ++i) sum += w.visual_proj(o, c * grid + i);
        channel_weight[static_cast<std::size_t>(c)] = sum;
    }
    Tensor3 quadrant(3, 32, 32, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                quadrant.at(c, y, x) = channel_weight[static_cast<std::size_t>(c)] > 0.0 ? 1.0 : 0.0;
    const Matrix heat = enc.saliency(quadrant);
    int best_y = 0, best_x = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (heat(y, x) > heat(best_y, best_x)) {
                best_y = y;
                best_x = x;
            }
    CHECK(best_y < 16);
    CHECK(best_x < 16);
}

TEST_CASE("external encoder weights round trip") {
    const MockEncoder enc = make_mock();
    const auto path = std::filesystem::temp_directory_path() / "ovfer_encoder_weights.json";
    save_external_encoder_weights(enc, path);
    const auto loaded = load_external_encoder(path);
    CHECK(loaded->embed_dim() == enc.embed_dim());
    CHECK(loaded->digest() == enc.digest());
    const auto tokens = enc.tokenize("surprise");
    CHECK(loaded->encode_text(tokens) == enc.encode_text(tokens));
    Tensor3 frame(3, 32, 32, 0.2);
    CHECK(loaded->encode_frame(frame).embedding == enc.encode_frame(frame).embedding);
    std::filesystem::remove(path);
}

TEST_CASE("directional derivatives agree over random probes per branch") {
    // 20 random probe directions per branch, rel err <= 1e-4
    const MockEncoder enc = make_mock();
    for (std::uint64_t seed : {1ULL, 2ULL}) {
        CHECK(gradcheck::check_text_encoder(enc, 10, seed).pass());
        CHECK(gradcheck::check_frame_encoder(enc, 10, seed).pass());
    }
}
