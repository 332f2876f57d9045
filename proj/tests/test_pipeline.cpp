#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ovfer/data.hpp"
#include "ovfer/errors.hpp"
#include "ovfer/gradcheck.hpp"
#include "ovfer/pipeline.hpp"
#include "ovfer/rng.hpp"

using namespace ovfer;

namespace {

MockEncoderConfig small_encoder_config() {
    MockEncoderConfig cfg;
    cfg.frame_shape = {3, 32, 32};
    return cfg;
}

SyntheticSpec small_spec(int classes = 5) {
    SyntheticSpec spec;
    spec.num_classes = classes;
    spec.videos_per_class = 3;
    spec.frames_per_video = 4;
    spec.frame_shape = {3, 32, 32};
    spec.noise_level = 0.0;
    spec.seed = 21;
    return spec;
}

PromptSettings small_settings() {
    PromptSettings s;
    s.patch_side = 8;
    s.frames_per_video = 4;
    s.context_len = 8;
    return s;
}

struct Fixture {
    MockEncoder encoder{small_encoder_config()};
    Dataset data = synthesize_dataset(small_spec());
    PromptPipeline pipeline{encoder, small_settings(), data.class_names};
    std::vector<const VideoSample*> batch;
    std::vector<int> labels;

    Fixture() {
        for (std::size_t i = 0; i < data.samples.size(); i += 2) {
            batch.push_back(&data.samples[i]);
            labels.push_back(data.samples[i].label);
        }
    }
};

}  // namespace

TEST_CASE("forward produces valid bundles and finite losses") {
    Fixture f;
    const PromptState state = f.pipeline.init_state(4);
    const BatchForward fwd = f.pipeline.forward(f.batch, f.labels, state);
    for (int i = 0; i < fwd.bundle.batch(); ++i) {
        double sum_kn = 0.0, sum_ne = 0.0, sum_h = 0.0;
        for (int j = 0; j < fwd.bundle.classes(); ++j) {
            sum_kn += fwd.bundle.p_kn(i, j);
            sum_ne += fwd.bundle.p_ne(i, j);
            sum_h += fwd.bundle.p_h(i, j);
            CHECK(fwd.bundle.p_h(i, j) ==
                  doctest::Approx(0.5 * (fwd.bundle.p_kn(i, j) + fwd.bundle.p_ne(i, j))).epsilon(1e-12));
        }
        CHECK(sum_kn == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(sum_ne == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(sum_h == doctest::Approx(1.0).epsilon(1e-6));
    }
    check_loss_finite(fwd.loss);
    CHECK(fwd.loss.total > 0.0);
}

TEST_CASE("full prompt-space gradient matches finite differences") {
    const auto r = gradcheck::check_total_loss(8, 77);
    CAPTURE(r.max_rel_err);
    CHECK(r.pass());
}

TEST_CASE("mask is located once per video and reused") {
    Fixture f;
    const PromptState state = f.pipeline.init_state(4);
    CHECK(f.pipeline.saliency_calls() == 0);
    f.pipeline.forward(f.batch, f.labels, state);
    const long after_first = f.pipeline.saliency_calls();
    CHECK(after_first == static_cast<long>(f.batch.size()));
    // a second epoch over the same videos must not recompute masks
    f.pipeline.forward(f.batch, f.labels, state);
    f.pipeline.score(f.batch, state);
    CHECK(f.pipeline.saliency_calls() == after_first);
}

TEST_CASE("tp-only mode drops the patch but keeps the negative branch") {
    PromptSettings s = small_settings();
    s.modules = PromptModules::tp;
    MockEncoder enc(small_encoder_config());
    Dataset data = synthesize_dataset(small_spec());
    PromptPipeline pipeline(enc, s, data.class_names);
    const PromptState state = pipeline.init_state(4);
    CHECK(state.patches.empty());
    CHECK(state.bank.size() == data.num_classes());

    std::vector<const VideoSample*> batch{&data.samples[0], &data.samples[5]};
    const std::vector<int> labels{data.samples[0].label, data.samples[5].label};
    PromptPipeline full(enc, small_settings(), data.class_names);
    const PromptState full_state = full.init_state(4);
    const BatchForward a = pipeline.forward(batch, labels, state);
    const BatchForward b = full.forward(batch, labels, full_state);
    CHECK(a.loss.l_ne_ce > 0.0);
    // additive zero-init patches leave frames untouched, so both agree here
    CHECK(a.loss.total == doctest::Approx(b.loss.total).epsilon(1e-12));
    CHECK(pipeline.saliency_calls() == 0);  // no CAM needed without a patch
}

TEST_CASE("per-frame patches and learnable extras enlarge the parameter space") {
    MockEncoder enc(small_encoder_config());
    Dataset data = synthesize_dataset(small_spec());

    PromptSettings base = small_settings();
    PromptPipeline p0(enc, base, data.class_names);
    const std::size_t base_count = p0.init_state(1).param_count();

    PromptSettings per_frame = base;
    per_frame.patch_per_frame = true;
    PromptPipeline p1(enc, per_frame, data.class_names);
    CHECK(p1.init_state(1).param_count() == base_count + 3 * (3 * 8 * 8));  // 3 extra patches

    PromptSettings learn_neg = base;
    learn_neg.negative_text_learnable = true;
    PromptPipeline p2(enc, learn_neg, data.class_names);
    const PromptState s2 = p2.init_state(1);
    REQUIRE(s2.neg_ctx.has_value());
    CHECK(s2.param_count() == base_count + 5 * 8 * 32);

    PromptSettings learn_scale = base;
    learn_scale.learn_align_scale = true;
    PromptPipeline p3(enc, learn_scale, data.class_names);
    const PromptState s3 = p3.init_state(1);
    REQUIRE(s3.align_scale.has_value());
    CHECK(*s3.align_scale == enc.logit_scale());
    CHECK(s3.param_count() == base_count + 1);
}

TEST_CASE("flatten and unflatten round trip") {
    MockEncoder enc(small_encoder_config());
    Dataset data = synthesize_dataset(small_spec());
    PromptSettings s = small_settings();
    s.negative_text_learnable = true;
    s.learn_align_scale = true;
    PromptPipeline pipeline(enc, s, data.class_names);
    PromptState state = pipeline.init_state(12);
    const Vec flat = state.flatten();
    CHECK(flat.size() == state.param_count());

    PromptState copy = PromptState::zeros_like(state);
    CHECK(copy.param_count() == state.param_count());
    for (const double v : copy.flatten()) CHECK(v == 0.0);
    copy.unflatten(flat);
    CHECK(copy.flatten() == flat);
    CHECK(copy.ctx.per_class[0].data == state.ctx.per_class[0].data);
    CHECK(*copy.align_scale == *state.align_scale);
}

TEST_CASE("replace mode uses the patch pixels verbatim inside the rectangle") {
    MockEncoder enc(small_encoder_config());
    Dataset data = synthesize_dataset(small_spec());
    PromptSettings s = small_settings();
    s.patch_mode = PatchMode::replace;
    PromptPipeline pipeline(enc, s, data.class_names);
    PromptState state = pipeline.init_state(4);
    REQUIRE(state.patches.size() == 1);
    // replace-mode init draws from the pixel range
    for (double v : state.patches[0].data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    const VideoSample& sample = data.samples[0];
    const MaskRect rect = pipeline.rect_for(sample);
    const auto frames = pipeline.prompted_frames(sample, state, rect);
    const auto raw = sample_frames(sample, s.frames_per_video);
    for (int y = 0; y < rect.side; ++y)
        for (int x = 0; x < rect.side; ++x)
            CHECK(frames[0].at(0, rect.top + y, rect.left + x) == state.patches[0].at(0, y, x));
    // outside pixels conserved exactly
    CHECK(frames[0].at(0, (rect.top + rect.side) % 32, (rect.left + rect.side) % 32) ==
          raw[0].at(0, (rect.top + rect.side) % 32, (rect.left + rect.side) % 32));
}

TEST_CASE("padding and random-patch styles stay inside the frame") {
    MockEncoder enc(small_encoder_config());
    Dataset data = synthesize_dataset(small_spec());

    PromptSettings pad = small_settings();
    pad.style = VisualPromptStyle::padding;
    PromptPipeline p_pad(enc, pad, data.class_names);
    PromptState s_pad = p_pad.init_state(4);
    REQUIRE(s_pad.patches.size() == 1);
    CHECK(s_pad.patches[0].height == 32);  // frame-sized parameter, band applied
    const auto rect_pad = p_pad.rect_for(data.samples[0]);
    const auto framed = p_pad.prompted_frames(data.samples[0], s_pad, rect_pad);
    CHECK(framed.size() == 4);
    CHECK(p_pad.saliency_calls() == 0);  // padding needs no CAM

    PromptSettings rnd = small_settings();
    rnd.style = VisualPromptStyle::random_patch;
    PromptPipeline p_rnd(enc, rnd, data.class_names);
    const MaskRect r1 = p_rnd.rect_for(data.samples[0]);
    const MaskRect r2 = p_rnd.rect_for(data.samples[0]);
    CHECK(r1.top == r2.top);  // stable per video
    CHECK(r1.left == r2.left);
    CHECK(r1.top >= 0);
    CHECK(r1.top + r1.side <= 32);
    CHECK(r1.left >= 0);
    CHECK(r1.left + r1.side <= 32);
    CHECK(p_rnd.saliency_calls() == 0);
}

TEST_CASE("gradcheck covers the ablation parameter spaces too") {
    // learnable negative text and alignment scale join the checked space
    MockEncoder enc(small_encoder_config());
    Dataset data = synthesize_dataset(small_spec());
    PromptSettings s = small_settings();
    s.negative_text_learnable = true;
    s.learn_align_scale = true;
    PromptPipeline pipeline(enc, s, data.class_names);
    PromptState state = pipeline.init_state(3);
    auto rng = make_rng(99);
    std::uniform_real_distribution<double> nudge(-0.02, 0.02);
    for (auto& p : state.patches)
        for (double& v : p.data) v = nudge(rng);

    std::vector<const VideoSample*> batch;
    std::vector<int> labels;
    for (std::size_t i = 0; i < data.samples.size(); i += 3) {
        batch.push_back(&data.samples[i]);
        labels.push_back(data.samples[i].label);
    }

    const BatchForward fwd = pipeline.forward(batch, labels, state);
    PromptState grads = PromptState::zeros_like(state);
    pipeline.backward(fwd, batch, labels, state, grads);

    const Vec flat = state.flatten();
    const Vec grad_flat = grads.flatten();
    std::normal_distribution<double> d(0.0, 1.0);
    const double h = 1e-3;
    for (int trial = 0; trial < 5; ++trial) {
        Vec v(flat.size());
        for (double& x : v) x = d(rng);
        const double norm = l2_norm(v);
        for (double& x : v) x /= norm;
        Vec plus = flat, minus = flat;
        axpy(h, v, plus);
        axpy(-h, v, minus);
        PromptState sp = state, sm = state;
        sp.unflatten(plus);
        sm.unflatten(minus);
        const double fd =
            (pipeline.forward(batch, labels, sp).loss.total - pipeline.forward(batch, labels, sm).loss.total) /
            (2 * h);
        const double analytic = dot(grad_flat, v);
        CHECK(gradcheck::relative_error(analytic, fd) <= 1e-3);
    }
}

TEST_CASE("forward rejects mismatched state and labels") {
    Fixture f;
    const PromptState state = f.pipeline.init_state(4);
    std::vector<int> bad_labels = f.labels;
    bad_labels.pop_back();
    CHECK_THROWS_AS(f.pipeline.forward(f.batch, bad_labels, state), ContractError);
    CHECK_THROWS_AS(f.pipeline.forward({}, {}, state), ContractError);
}
