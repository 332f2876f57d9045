#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ovfer/evaluate.hpp"

namespace ovfer {

struct ProtocolCell {
    int known = 0;
    int unknown = 0;
    std::string label() const;  // "O(K:U)"
};

// Openness cells of the predefined tasks 1 and 2 (tasks 3 and 4 use a fixed
// basic-emotions partition resolved against the dataset).
std::vector<ProtocolCell> task_cells(int task);

// The seven basic emotion classes anchoring the fixed-partition tasks.
const std::vector<std::string>& basic_emotion_names();

// Tasks 3 and 4: the basic emotions (resolved by name) are known, every
// other class is unknown.
OpennessSplit fixed_basic_emotion_split(const Dataset& dataset, std::uint64_t seed);

struct CellResult {
    std::string label;
    double openness = 0.0;
    std::vector<EvalReport> reports;  // one per random division
    double mean_auroc = 0.0;
    double mean_oscr = 0.0;
};

struct ProtocolResult {
    std::vector<CellResult> cells;
    double mean_auroc = 0.0;
    double mean_oscr = 0.0;
};

// Trains and evaluates one split end to end (calibration slice held out of
// training); when run_dir is non-empty, emits the split record, loss log,
// checkpoints, scores and report there.
EvalReport run_single_split(const RunConfig& config, const DualEncoder& encoder, const Dataset& dataset,
                            const OpennessSplit& split, const std::filesystem::path& run_dir = {});

// The four task runners plus custom K/U; aggregates per cell and overall.
ProtocolResult run_protocol(const RunConfig& config, const DualEncoder& encoder, const Dataset& dataset,
                            const std::filesystem::path& out_dir = {});

void write_protocol_report(const ProtocolResult& result, const std::filesystem::path& path);

// Fixed-width table: cells plus the Mean column, one row per metric.
std::string protocol_table(const ProtocolResult& result);

// Effective division count: an explicit config value wins; otherwise 5 for
// random-division protocols and 1 for the fixed-partition tasks.
int effective_repeats(const RunConfig& config);

}  // namespace ovfer
