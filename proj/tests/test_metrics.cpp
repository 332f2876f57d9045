#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ovfer/errors.hpp"
#include "ovfer/metrics.hpp"
#include "ovfer/rng.hpp"
#include "testutil.hpp"

using namespace ovfer;

TEST_CASE("auroc: separation, ties, errors") {
    CHECK(auroc(std::vector<double>{0.9, 0.8}, std::vector<double>{0.1, 0.2}) == doctest::Approx(1.0));
    CHECK(auroc(std::vector<double>{0.1, 0.2}, std::vector<double>{0.9, 0.8}) == doctest::Approx(0.0));
    CHECK(auroc(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(auroc(std::vector<double>{}, std::vector<double>{0.5}), MetricError);
    CHECK_THROWS_AS(auroc(std::vector<double>{0.5}, std::vector<double>{}), MetricError);
}

TEST_CASE("auroc equals the pairwise oracle on random instances") {
    auto rng = make_rng(606);
    std::uniform_int_distribution<int> size(1, 60);
    std::uniform_real_distribution<double> value(0.0, 1.0);
    std::uniform_int_distribution<int> quantize(0, 12);  // force ties sometimes
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> known(static_cast<std::size_t>(size(rng)));
        std::vector<double> unknown(static_cast<std::size_t>(size(rng)));
        const bool ties = trial % 3 == 0;
        for (double& v : known) v = ties ? quantize(rng) / 12.0 : value(rng);
        for (double& v : unknown) v = ties ? quantize(rng) / 12.0 : value(rng);
        const double fast = auroc(known, unknown);
        const double slow = testutil::brute_force_auroc(known, unknown);
        CHECK(std::abs(fast - slow) <= 1e-12);
    }
}

TEST_CASE("auroc symmetry and monotone-transform invariance") {
    auto rng = make_rng(607);
    std::uniform_real_distribution<double> value(0.0, 1.0);
    std::vector<double> known(23), unknown(17);
    for (double& v : known) v = value(rng);
    for (double& v : unknown) v = value(rng);
    CHECK(auroc(known, unknown) + auroc(unknown, known) == doctest::Approx(1.0).epsilon(1e-12));

    auto transform = [](std::vector<double> v) {
        for (double& x : v) x = std::exp(3.0 * x) - 0.5;  // strictly increasing
        return v;
    };
    CHECK(auroc(transform(known), transform(unknown)) == doctest::Approx(auroc(known, unknown)).epsilon(1e-12));
}

namespace {

std::vector<ScoredSample> random_samples(std::mt19937_64& rng, int n, int k, bool quantized) {
    std::uniform_real_distribution<double> value(0.0, 1.0);
    std::uniform_int_distribution<int> quantize(0, 10);
    std::uniform_int_distribution<int> label(0, k);  // k is the unknown sentinel
    std::uniform_int_distribution<int> pred(0, k - 1);
    std::vector<ScoredSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ScoredSample s;
        s.knownness = quantized ? quantize(rng) / 10.0 : value(rng);
        s.true_label = label(rng);
        s.predicted_known = pred(rng);
        out.push_back(s);
    }
    // ensure both populations exist
    out[0].true_label = 0;
    out[0].predicted_known = 0;
    out[1].true_label = k;
    return out;
}

}  // namespace

TEST_CASE("oscr: analytic endpoints") {
    SUBCASE("perfect ranking and classification") {
        std::vector<ScoredSample> samples;
        for (int i = 0; i < 10; ++i) samples.push_back({0.8 + 0.01 * i, i % 3, i % 3});
        for (int i = 0; i < 10; ++i) samples.push_back({0.1 + 0.01 * i, 3, 0});
        CHECK(oscr(samples, 3) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("argmax always wrong gives zero") {
        std::vector<ScoredSample> samples;
        for (int i = 0; i < 10; ++i) samples.push_back({0.9, 1, 2});
        samples.push_back({0.2, 3, 0});
        CHECK(oscr(samples, 3) == doctest::Approx(0.0));
    }
    SUBCASE("missing populations") {
        std::vector<ScoredSample> only_known = {{0.5, 0, 0}};
        CHECK_THROWS_AS(oscr(only_known, 3), MetricError);
        std::vector<ScoredSample> only_unknown = {{0.5, 3, 0}};
        CHECK_THROWS_AS(oscr(only_unknown, 3), MetricError);
    }
}

TEST_CASE("oscr equals the threshold-sweep oracle on random instances") {
    auto rng = make_rng(608);
    std::uniform_int_distribution<int> size(4, 40);
    for (int trial = 0; trial < 200; ++trial) {
        const auto samples = random_samples(rng, size(rng), 5, trial % 2 == 0);
        const double fast = oscr(samples, 5);
        const double slow = testutil::brute_force_oscr(samples, 5);
        CHECK(std::abs(fast - slow) <= 1e-12);
    }
}

TEST_CASE("oscr never exceeds the detection AUROC on the same samples") {
    auto rng = make_rng(609);
    std::uniform_int_distribution<int> size(4, 60);
    for (int trial = 0; trial < 50; ++trial) {
        const auto samples = random_samples(rng, size(rng), 4, trial % 2 == 0);
        std::vector<double> known, unknown;
        for (const auto& s : samples)
            (s.true_label == 4 ? unknown : known).push_back(s.knownness);
        CHECK(oscr(samples, 4) <= auroc(known, unknown) + 1e-12);
    }
}

TEST_CASE("aggregate: arithmetic means") {
    EvalReport a, b;
    a.auroc = 0.6;
    a.oscr = 0.3;
    b.auroc = 0.7;
    b.oscr = 0.5;
    const std::vector<EvalReport> one = {a};
    CHECK(aggregate(one).first == doctest::Approx(0.6));
    CHECK(aggregate(one).second == doctest::Approx(0.3));
    const std::vector<EvalReport> two = {a, b};
    CHECK(aggregate(two).first == doctest::Approx(0.65).epsilon(1e-12));
    CHECK(aggregate(two).second == doctest::Approx(0.4).epsilon(1e-12));

    std::vector<EvalReport> five;
    double sa = 0.0, so = 0.0;
    auto rng = make_rng(610);
    std::uniform_real_distribution<double> value(0.0, 1.0);
    for (int i = 0; i < 5; ++i) {
        EvalReport r;
        r.auroc = value(rng);
        r.oscr = value(rng);
        sa += r.auroc;
        so += r.oscr;
        five.push_back(r);
    }
    CHECK(aggregate(five).first == doctest::Approx(sa / 5).epsilon(1e-12));
    CHECK(aggregate(five).second == doctest::Approx(so / 5).epsilon(1e-12));
    CHECK_THROWS_AS(aggregate(std::vector<EvalReport>{}), MetricError);
}

TEST_CASE("report_from_scored_samples with an ideal scorer") {
    std::vector<ScoredSample> samples;
    for (int i = 0; i < 12; ++i) samples.push_back({1.0, i % 3, i % 3});
    for (int i = 0; i < 8; ++i) samples.push_back({0.0, 3, 1});
    OpennessSplit split;
    split.known_classes = {0, 1, 2};
    split.unknown_classes = {4};
    const EvalReport r = report_from_scored_samples(samples, 3, 0.5, split);
    CHECK(r.auroc == doctest::Approx(1.0));
    CHECK(r.oscr == doctest::Approx(1.0));
    CHECK(r.n_known == 12);
    CHECK(r.n_unknown == 8);
    CHECK(r.known_accuracy == doctest::Approx(1.0));
    CHECK(r.threshold == 0.5);
    CHECK(r.knownness_score == "max_p_h");
}
