#include "ovfer/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ovfer/data.hpp"
#include "ovfer/losses.hpp"
#include "ovfer/pipeline.hpp"
#include "ovfer/rng.hpp"

namespace ovfer::gradcheck {

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-10});
}

namespace {

Vec random_unit(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> d(0.0, 1.0);
    Vec v(n);
    for (double& x : v) x = d(rng);
    const double norm = l2_norm(v);
    for (double& x : v) x /= norm;
    return v;
}

// Generic directional check: f evaluates the scalar at a flat parameter
// vector; grad is d(f)/d(params) at `params`.
template <typename F>
double directional_check(F&& f, const Vec& params, const Vec& grad, std::mt19937_64& rng, int directions,
                         double step) {
    double worst = 0.0;
    for (int t = 0; t < directions; ++t) {
        const Vec v = random_unit(rng, params.size());
        Vec plus = params, minus = params;
        axpy(step, v, plus);
        axpy(-step, v, minus);
        const double fd = (f(plus) - f(minus)) / (2.0 * step);
        const double analytic = dot(grad, v);
        worst = std::max(worst, relative_error(analytic, fd));
    }
    return worst;
}

}  // namespace

CheckResult check_text_encoder(const DualEncoder& encoder, int directions, std::uint64_t seed) {
    auto rng = make_rng(mix_seed(seed, 0x7e7ULL));
    std::normal_distribution<double> d(0.0, 1.0);
    const int n_tokens = 5;
    const int td = encoder.token_dim();

    Vec flat(static_cast<std::size_t>(n_tokens * td));
    for (double& x : flat) x = d(rng);
    Vec probe(static_cast<std::size_t>(encoder.embed_dim()));
    for (double& x : probe) x = d(rng);

    auto unflatten = [&](const Vec& p) {
        std::vector<Vec> tokens(static_cast<std::size_t>(n_tokens));
        for (int j = 0; j < n_tokens; ++j)
            tokens[static_cast<std::size_t>(j)] =
                Vec(p.begin() + static_cast<std::ptrdiff_t>(j) * td,
                    p.begin() + static_cast<std::ptrdiff_t>(j + 1) * td);
        return tokens;
    };
    auto f = [&](const Vec& p) { return dot(probe, encoder.encode_text(unflatten(p))); };

    const auto tokens = unflatten(flat);
    std::vector<Vec> grad_tokens;
    encoder.encode_text_backward(tokens, probe, grad_tokens);
    Vec grad;
    grad.reserve(flat.size());
    for (const auto& g : grad_tokens) grad.insert(grad.end(), g.begin(), g.end());

    CheckResult r{"encoder_text", 0.0, 1e-4, directions};
    r.max_rel_err = directional_check(f, flat, grad, rng, directions, 1e-4);
    return r;
}

CheckResult check_frame_encoder(const DualEncoder& encoder, int directions, std::uint64_t seed) {
    auto rng = make_rng(mix_seed(seed, 0xf7a3eULL));
    std::normal_distribution<double> d(0.0, 1.0);
    const FrameShape shape = encoder.frame_shape();

    Tensor3 frame(shape.channels, shape.height, shape.width);
    std::uniform_real_distribution<double> pix(0.1, 0.9);
    for (double& x : frame.data) x = pix(rng);
    Vec probe(static_cast<std::size_t>(encoder.embed_dim()));
    for (double& x : probe) x = d(rng);

    auto f = [&](const Vec& p) {
        Tensor3 fr = frame;
        fr.data = p;
        return dot(probe, encoder.encode_frame(fr).embedding);
    };

    Tensor3 grad_frame(shape.channels, shape.height, shape.width, 0.0);
    encoder.encode_frame_backward(frame, probe, grad_frame);

    CheckResult r{"encoder_frame", 0.0, 1e-4, directions};
    r.max_rel_err = directional_check(f, frame.data, grad_frame.data, rng, directions, 1e-4);
    return r;
}

CheckResult check_cross_entropy(int directions, std::uint64_t seed) {
    auto rng = make_rng(mix_seed(seed, 0xceULL));
    const int b = 8, k = 5;
    // Interior probability rows (away from the floor and from 0).
    Matrix probs(b, k);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    std::vector<int> labels(static_cast<std::size_t>(b));
    std::uniform_int_distribution<int> li(0, k - 1);
    for (int i = 0; i < b; ++i) {
        double sum = 0.0;
        for (int j = 0; j < k; ++j) {
            probs(i, j) = u(rng);
            sum += probs(i, j);
        }
        for (int j = 0; j < k; ++j) probs(i, j) /= sum;
        labels[static_cast<std::size_t>(i)] = li(rng);
    }

    // Analytic gradient of the mean of -log p[y]: -1/(B p_iy) at the label.
    Matrix grad(b, k, 0.0);
    for (int i = 0; i < b; ++i)
        grad(i, labels[static_cast<std::size_t>(i)]) = -1.0 / (b * probs(i, labels[static_cast<std::size_t>(i)]));

    // Directions must stay on the probability simplex (zero row sums), so
    // the row-sum precondition keeps holding under perturbation.
    double worst = 0.0;
    std::normal_distribution<double> d(0.0, 1.0);
    const double step = 1e-5;
    for (int t = 0; t < directions; ++t) {
        Matrix v(b, k);
        for (int i = 0; i < b; ++i) {
            double mean = 0.0;
            for (int j = 0; j < k; ++j) {
                v(i, j) = d(rng);
                mean += v(i, j);
            }
            mean /= k;
            for (int j = 0; j < k; ++j) v(i, j) -= mean;
        }
        const double norm = l2_norm(v.data);
        for (double& x : v.data) x /= norm;

        Matrix plus = probs, minus = probs;
        axpy(step, v.data, plus.data);
        axpy(-step, v.data, minus.data);
        const double fd = (cross_entropy(plus, labels) - cross_entropy(minus, labels)) / (2.0 * step);
        worst = std::max(worst, relative_error(dot(grad.data, v.data), fd));
    }
    return {"cross_entropy", worst, 1e-4, directions};
}

CheckResult check_softmax_cross_entropy(int directions, std::uint64_t seed) {
    auto rng = make_rng(mix_seed(seed, 0x50f7ULL));
    const int b = 8, k = 5;
    Matrix logits(b, k);
    std::normal_distribution<double> d(0.0, 2.0);
    std::vector<int> labels(static_cast<std::size_t>(b));
    std::uniform_int_distribution<int> li(0, k - 1);
    for (double& x : logits.data) x = d(rng);
    for (auto& y : labels) y = li(rng);

    auto f = [&](const Vec& p) {
        Matrix l = logits;
        l.data = p;
        return cross_entropy(softmax_rows(l), labels);
    };
    const Matrix grad = cross_entropy_softmax_grad(softmax_rows(logits), labels);

    CheckResult r{"softmax_cross_entropy", 0.0, 1e-4, directions};
    r.max_rel_err = directional_check(f, logits.data, grad.data, rng, directions, 1e-4);
    return r;
}

CheckResult check_supervised_contrastive(int directions, std::uint64_t seed) {
    auto rng = make_rng(mix_seed(seed, 0x5c0ULL));
    const int b = 8, dim = 32;
    Matrix z(b, dim);
    std::normal_distribution<double> d(0.0, 1.0);
    for (int i = 0; i < b; ++i) {
        Vec row = random_unit(rng, static_cast<std::size_t>(dim));
        for (int c = 0; c < dim; ++c) z(i, c) = row[static_cast<std::size_t>(c)];
    }
    std::vector<int> labels(static_cast<std::size_t>(b));
    std::uniform_int_distribution<int> li(0, 2);  // few classes so positives exist
    for (auto& y : labels) y = li(rng);

    auto f = [&](const Vec& p) {
        Matrix m = z;
        m.data = p;
        return supervised_contrastive(m, labels, 0.07);
    };
    Matrix grad;
    supervised_contrastive(z, labels, 0.07, &grad);

    CheckResult r{"supervised_contrastive", 0.0, 1e-4, directions};
    r.max_rel_err = directional_check(f, z.data, grad.data, rng, directions, 1e-4);
    return r;
}

CheckResult check_negative_alignment(int directions, std::uint64_t seed) {
    auto rng = make_rng(mix_seed(seed, 0xa119ULL));
    const int k = 5, dim = 32;
    Matrix a(k, dim), b(k, dim);
    for (int i = 0; i < k; ++i) {
        Vec ra = random_unit(rng, static_cast<std::size_t>(dim));
        Vec rb = random_unit(rng, static_cast<std::size_t>(dim));
        // Correlate the sides a little so the softmax is not saturated.
        for (int c = 0; c < dim; ++c) {
            a(i, c) = ra[static_cast<std::size_t>(c)];
            b(i, c) = 0.7 * ra[static_cast<std::size_t>(c)] + 0.3 * rb[static_cast<std::size_t>(c)];
        }
        const double nb = l2_norm(b.row(i));
        for (int c = 0; c < dim; ++c) b(i, c) /= nb;
    }
    const double scale = 10.0;

    Vec flat = a.data;
    flat.insert(flat.end(), b.data.begin(), b.data.end());
    auto f = [&](const Vec& p) {
        Matrix ma = a, mb = b;
        std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(a.data.size()), ma.data.begin());
        std::copy(p.begin() + static_cast<std::ptrdiff_t>(a.data.size()), p.end(), mb.data.begin());
        return negative_alignment(ma, mb, scale);
    };
    Matrix ga, gb;
    negative_alignment(a, b, scale, &ga, &gb);
    Vec grad = ga.data;
    grad.insert(grad.end(), gb.data.begin(), gb.data.end());

    CheckResult r{"negative_alignment", 0.0, 1e-4, directions};
    r.max_rel_err = directional_check(f, flat, grad, rng, directions, 1e-4);
    return r;
}

CheckResult check_total_loss(int directions, std::uint64_t seed) {
    // d=32, B=8, K=5 on the mock encoder, as the acceptance gate states.
    MockEncoderConfig mc;
    mc.frame_shape = {3, 32, 32};
    mc.seed = mix_seed(seed, 0xe5cULL);
    MockEncoder encoder(mc);

    SyntheticSpec spec;
    spec.num_classes = 5;
    spec.videos_per_class = 2;
    spec.frames_per_video = 4;
    spec.frame_shape = mc.frame_shape;
    spec.noise_level = 0.0;  // keeps pixels strictly inside the clip range
    spec.seed = mix_seed(seed, 0xda7aULL);
    const Dataset data = synthesize_dataset(spec);

    PromptSettings settings;
    settings.patch_side = 8;
    settings.frames_per_video = 4;
    PromptPipeline pipeline(encoder, settings, data.class_names);

    PromptState state = pipeline.init_state(mix_seed(seed, 0x57a7eULL));
    // Nudge the additive patch off zero so no covered pixel sits exactly on
    // the clip boundary.
    auto rng = make_rng(mix_seed(seed, 0xb00ULL));
    std::uniform_real_distribution<double> nudge(-0.02, 0.02);
    for (auto& p : state.patches)
        for (double& v : p.data) v = nudge(rng);

    std::vector<const VideoSample*> batch;
    std::vector<int> labels;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(data.samples.size()) - 1);
    for (int i = 0; i < 8; ++i) {
        const VideoSample& s = data.samples[static_cast<std::size_t>(pick(rng))];
        batch.push_back(&s);
        labels.push_back(s.label);
    }

    auto f = [&](const Vec& p) {
        PromptState st = state;
        st.unflatten(p);
        return pipeline.forward(batch, labels, st).loss.total;
    };

    const BatchForward fwd = pipeline.forward(batch, labels, state);
    PromptState grads = PromptState::zeros_like(state);
    pipeline.backward(fwd, batch, labels, state, grads);

    CheckResult r{"total_loss_prompt_space", 0.0, 1e-3, directions};
    r.max_rel_err = directional_check(f, state.flatten(), grads.flatten(), rng, directions, 1e-3);
    return r;
}

std::vector<CheckResult> run_all(int directions, std::uint64_t seed) {
    MockEncoderConfig mc;
    MockEncoder encoder(mc);
    std::vector<CheckResult> results;
    results.push_back(check_text_encoder(encoder, directions, seed));
    results.push_back(check_frame_encoder(encoder, directions, seed));
    results.push_back(check_cross_entropy(directions, seed));
    results.push_back(check_softmax_cross_entropy(directions, seed));
    results.push_back(check_supervised_contrastive(directions, seed));
    results.push_back(check_negative_alignment(directions, seed));
    results.push_back(check_total_loss(directions, seed));
    return results;
}

}  // namespace ovfer::gradcheck
