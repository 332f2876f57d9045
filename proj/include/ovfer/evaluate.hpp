#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ovfer/config.hpp"
#include "ovfer/metrics.hpp"
#include "ovfer/train.hpp"

namespace ovfer {

// One row of the scores file: sample id, true label (unknown sentinel = K),
// the K fused probabilities, and the known-ness score.
struct ScoredRow {
    std::string id;
    int true_label = 0;
    Vec p_h;
    double knownness = 0.0;

    int predicted_known() const;
};

struct EvalOutput {
    EvalReport report;
    std::vector<ScoredRow> rows;
    // Per-video mask rectangles (id, top, left, side), for reproducibility.
    std::vector<std::pair<std::string, std::array<int, 3>>> mask_rects;
};

// Scores every test video with the checkpointed prompts, calibrates the
// open-set threshold on the held-out known calibration slice, and computes
// AUROC/OSCR. When run_dir is non-empty, writes scores.tsv and report.json.
EvalOutput evaluate_run(const RunConfig& config, const DualEncoder& encoder, const Checkpoint& checkpoint,
                        const Dataset& test, const Dataset& calibration,
                        const std::filesystem::path& run_dir = {});

void write_scores_file(const std::filesystem::path& path, const std::vector<ScoredRow>& rows,
                       const std::vector<std::string>& known_class_names);
std::vector<ScoredRow> read_scores_file(const std::filesystem::path& path);

void write_report(const EvalOutput& output, const std::filesystem::path& path);

}  // namespace ovfer
