#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovfer/encoder.hpp"

namespace ovfer::gradcheck {

struct CheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    int directions = 0;
    bool pass() const { return max_rel_err <= tolerance; }
};

// rel = |a - b| / max(|a|, |b|, 1e-10)
double relative_error(double a, double b);

// Central-difference directional-derivative checks. Each compares the
// analytic gradient against (f(x+hv) - f(x-hv)) / 2h over random unit
// directions v.
CheckResult check_text_encoder(const DualEncoder& encoder, int directions, std::uint64_t seed);
CheckResult check_frame_encoder(const DualEncoder& encoder, int directions, std::uint64_t seed);
CheckResult check_cross_entropy(int directions, std::uint64_t seed);
CheckResult check_softmax_cross_entropy(int directions, std::uint64_t seed);
CheckResult check_supervised_contrastive(int directions, std::uint64_t seed);
CheckResult check_negative_alignment(int directions, std::uint64_t seed);
// Full prompt-parameter space (text contexts + visual patch + negative
// bank) through the entire batch objective on the mock encoder.
CheckResult check_total_loss(int directions, std::uint64_t seed);

std::vector<CheckResult> run_all(int directions, std::uint64_t seed);

}  // namespace ovfer::gradcheck
