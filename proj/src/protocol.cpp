#include "ovfer/protocol.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ovfer/errors.hpp"
#include "ovfer/plot.hpp"
#include "ovfer/rng.hpp"
#include "ovfer/train.hpp"

namespace ovfer {

std::string ProtocolCell::label() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "O(%d:%d)", known, unknown);
    return buf;
}

std::vector<ProtocolCell> task_cells(int task) {
    switch (task) {
        case 1:
            return {{5, 2}, {4, 3}, {3, 4}, {2, 5}};
        case 2:
            return {{8, 3}, {6, 5}, {5, 6}, {3, 8}};
        default:
            throw ProtocolError("only tasks 1 and 2 define openness cells");
    }
}

const std::vector<std::string>& basic_emotion_names() {
    static const std::vector<std::string> names = {"anger",   "disgust",  "fear",   "happiness",
                                                   "sadness", "surprise", "neutral"};
    return names;
}

int effective_repeats(const RunConfig& config) {
    if (config.repeats > 0) return config.repeats;
    return (config.task == 3 || config.task == 4) ? 1 : 5;
}

EvalReport run_single_split(const RunConfig& config, const DualEncoder& encoder, const Dataset& dataset,
                            const OpennessSplit& split, const std::filesystem::path& run_dir) {
    SplitDatasets parts = apply_split(dataset, split);
    auto [core, calib] = calibration_slice(parts.train, config.calib_fraction, calibration_seed(split));
    if (!run_dir.empty()) {
        std::filesystem::create_directories(run_dir);
        save_split(split, run_dir / "split.json");
        save_config(config, run_dir / "config.json");
    }
    TrainResult tr = train(config, encoder, core, split, run_dir);
    EvalOutput ev = evaluate_run(config, encoder, tr.checkpoint, parts.test, calib, run_dir);
    if (!run_dir.empty()) render_histogram_svg(score_histograms(ev.rows), run_dir / "score_hist.svg");
    return ev.report;
}

OpennessSplit fixed_basic_emotion_split(const Dataset& dataset, std::uint64_t seed) {
    OpennessSplit split;
    for (const auto& name : basic_emotion_names()) {
        const auto it = std::find(dataset.class_names.begin(), dataset.class_names.end(), name);
        if (it == dataset.class_names.end())
            throw ProtocolError("fixed-partition tasks require the basic emotion class '" + name +
                                "' in the dataset");
        split.known_classes.push_back(static_cast<int>(it - dataset.class_names.begin()));
    }
    std::sort(split.known_classes.begin(), split.known_classes.end());
    for (int c = 0; c < dataset.num_classes(); ++c)
        if (!std::binary_search(split.known_classes.begin(), split.known_classes.end(), c))
            split.unknown_classes.push_back(c);
    if (split.unknown_classes.empty())
        throw ProtocolError("fixed-partition tasks need at least one non-basic class as unknown");
    split.seed = seed;
    split.openness = openness(split.known_count(), split.unknown_count());
    return split;
}

namespace {

RunConfig derived_run_config(const RunConfig& base, int cell_index, int repeat) {
    RunConfig c = base;
    c.prompt_seed = mix_seed(base.prompt_seed, static_cast<std::uint64_t>(cell_index),
                             static_cast<std::uint64_t>(repeat));
    c.train_seed = mix_seed(base.train_seed, static_cast<std::uint64_t>(cell_index),
                            static_cast<std::uint64_t>(repeat));
    return c;
}

CellResult finalize_cell(std::string label, double cell_openness, std::vector<EvalReport> reports) {
    CellResult cell;
    cell.label = std::move(label);
    cell.openness = cell_openness;
    const auto [ma, mo] = aggregate(reports);
    cell.mean_auroc = ma;
    cell.mean_oscr = mo;
    cell.reports = std::move(reports);
    return cell;
}

}  // namespace

ProtocolResult run_protocol(const RunConfig& config, const DualEncoder& encoder, const Dataset& dataset,
                            const std::filesystem::path& out_dir) {
    config.validate();
    dataset.validate();
    const int total = dataset.num_classes();
    const int repeats = effective_repeats(config);

    std::vector<std::pair<ProtocolCell, std::vector<OpennessSplit>>> plan;
    if (config.task == 1 || config.task == 2) {
        const int expected = config.task == 1 ? 7 : 11;
        if (total != expected)
            throw ProtocolError("task " + std::to_string(config.task) + " expects a dataset with " +
                                std::to_string(expected) + " classes, got " + std::to_string(total));
        for (const auto& cell : task_cells(config.task)) {
            const auto seed = mix_seed(config.split_seed, static_cast<std::uint64_t>(cell.known),
                                       static_cast<std::uint64_t>(cell.unknown));
            plan.emplace_back(cell, generate_splits(total, cell.known, repeats, seed));
        }
    } else if (config.task == 3 || config.task == 4) {
        const OpennessSplit split = fixed_basic_emotion_split(dataset, config.split_seed);
        ProtocolCell cell{split.known_count(), split.unknown_count()};
        // One fixed partition; repeats rerun it under derived seeds.
        plan.emplace_back(cell, std::vector<OpennessSplit>(static_cast<std::size_t>(repeats), split));
    } else {
        if (config.known_count >= total)
            throw ProtocolError("custom protocol known_count must be smaller than the class count");
        ProtocolCell cell{config.known_count, total - config.known_count};
        const auto seed = mix_seed(config.split_seed, static_cast<std::uint64_t>(cell.known),
                                   static_cast<std::uint64_t>(cell.unknown));
        plan.emplace_back(cell, generate_splits(total, cell.known, repeats, seed));
    }

    ProtocolResult result;
    for (std::size_t ci = 0; ci < plan.size(); ++ci) {
        const auto& [cell, splits] = plan[ci];
        std::vector<EvalReport> reports;
        reports.reserve(splits.size());
        for (std::size_t r = 0; r < splits.size(); ++r) {
            const RunConfig run_cfg = derived_run_config(config, static_cast<int>(ci), static_cast<int>(r));
            std::filesystem::path run_dir;
            if (!out_dir.empty()) {
                char sub[64];
                std::snprintf(sub, sizeof(sub), "cell_%d_%d/split_%02zu", cell.known, cell.unknown, r);
                run_dir = out_dir / sub;
            }
            reports.push_back(run_single_split(run_cfg, encoder, dataset, splits[r], run_dir));
        }
        result.cells.push_back(
            finalize_cell(cell.label(), openness(cell.known, cell.unknown), std::move(reports)));
    }

    double sum_a = 0.0, sum_o = 0.0;
    for (const auto& cell : result.cells) {
        sum_a += cell.mean_auroc;
        sum_o += cell.mean_oscr;
    }
    result.mean_auroc = sum_a / static_cast<double>(result.cells.size());
    result.mean_oscr = sum_o / static_cast<double>(result.cells.size());

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_protocol_report(result, out_dir / "protocol_report.json");
        std::ofstream table(out_dir / "protocol_table.txt");
        table << protocol_table(result);
    }
    return result;
}

void write_protocol_report(const ProtocolResult& result, const std::filesystem::path& path) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : result.cells) {
        nlohmann::json reports = nlohmann::json::array();
        for (const auto& r : cell.reports) {
            reports.push_back({{"auroc", r.auroc},
                               {"oscr", r.oscr},
                               {"threshold", r.threshold},
                               {"known_accuracy", r.known_accuracy},
                               {"n_known", r.n_known},
                               {"n_unknown", r.n_unknown},
                               {"knownness_score", r.knownness_score},
                               {"split",
                                {{"known_classes", r.split.known_classes},
                                 {"unknown_classes", r.split.unknown_classes},
                                 {"seed", r.split.seed},
                                 {"openness", r.split.openness}}}});
        }
        cells.push_back({{"label", cell.label},
                         {"openness", cell.openness},
                         {"mean_auroc", cell.mean_auroc},
                         {"mean_oscr", cell.mean_oscr},
                         {"reports", reports}});
    }
    nlohmann::json j{{"cells", cells}, {"mean_auroc", result.mean_auroc}, {"mean_oscr", result.mean_oscr}};
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write protocol report: " + path.string());
    out << j.dump(2) << "\n";
}

std::string protocol_table(const ProtocolResult& result) {
    std::string s;
    char buf[64];
    s += "        ";
    for (const auto& cell : result.cells) {
        std::snprintf(buf, sizeof(buf), "%10s", cell.label.c_str());
        s += buf;
    }
    s += "      Mean\n";
    s += "AUROC   ";
    for (const auto& cell : result.cells) {
        std::snprintf(buf, sizeof(buf), "%10.4f", cell.mean_auroc);
        s += buf;
    }
    std::snprintf(buf, sizeof(buf), "%10.4f\n", result.mean_auroc);
    s += buf;
    s += "OSCR    ";
    for (const auto& cell : result.cells) {
        std::snprintf(buf, sizeof(buf), "%10.4f", cell.mean_oscr);
        s += buf;
    }
    std::snprintf(buf, sizeof(buf), "%10.4f\n", result.mean_oscr);
    s += buf;
    return s;
}

}  // namespace ovfer
