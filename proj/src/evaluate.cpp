#include "ovfer/evaluate.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ovfer/errors.hpp"

namespace ovfer {

int ScoredRow::predicted_known() const {
    int arg = 0;
    for (std::size_t j = 1; j < p_h.size(); ++j)
        if (p_h[j] > p_h[static_cast<std::size_t>(arg)]) arg = static_cast<int>(j);
    return arg;
}

namespace {

void score_into_rows(PromptPipeline& pipeline, const PromptState& state, const Dataset& data,
                     std::vector<ScoredRow>& rows) {
    constexpr std::size_t kChunk = 64;
    for (std::size_t begin = 0; begin < data.samples.size(); begin += kChunk) {
        const std::size_t end = std::min(begin + kChunk, data.samples.size());
        std::vector<const VideoSample*> batch;
        batch.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) batch.push_back(&data.samples[i]);
        const ScoreBundle bundle = pipeline.score(batch, state);
        for (std::size_t i = begin; i < end; ++i) {
            ScoredRow row;
            row.id = data.samples[i].id;
            row.true_label = data.samples[i].label;
            const int bi = static_cast<int>(i - begin);
            row.p_h.assign(static_cast<std::size_t>(bundle.classes()), 0.0);
            for (int j = 0; j < bundle.classes(); ++j) row.p_h[static_cast<std::size_t>(j)] = bundle.p_h(bi, j);
            row.knownness = bundle.knownness[static_cast<std::size_t>(bi)];
            rows.push_back(std::move(row));
        }
    }
}

}  // namespace

EvalOutput evaluate_run(const RunConfig& config, const DualEncoder& encoder, const Checkpoint& checkpoint,
                        const Dataset& test, const Dataset& calibration,
                        const std::filesystem::path& run_dir) {
    const int k_count = static_cast<int>(checkpoint.class_names.size());
    // The test set carries the known classes plus the sentinel name.
    if (test.num_classes() != k_count + 1 ||
        !std::equal(checkpoint.class_names.begin(), checkpoint.class_names.end(), test.class_names.begin()))
        throw CompatibilityError("checkpoint classes do not match the test dataset");
    if (calibration.num_classes() != k_count ||
        calibration.class_names != checkpoint.class_names)
        throw CompatibilityError("checkpoint classes do not match the calibration dataset");
    if (calibration.samples.empty()) throw CalibrationError("calibration slice is empty");

    PromptPipeline pipeline(encoder, prompt_settings(config), checkpoint.class_names);

    std::vector<ScoredRow> calib_rows;
    score_into_rows(pipeline, checkpoint.state, calibration, calib_rows);
    std::vector<double> calib_scores;
    calib_scores.reserve(calib_rows.size());
    for (const auto& r : calib_rows) calib_scores.push_back(r.knownness);
    const double threshold = calibrate_threshold(std::move(calib_scores), config.target_tpr);

    EvalOutput out;
    score_into_rows(pipeline, checkpoint.state, test, out.rows);
    out.mask_rects.reserve(test.samples.size());
    for (const auto& sample : test.samples) {
        const MaskRect rect = pipeline.rect_for(sample);
        out.mask_rects.emplace_back(sample.id, std::array<int, 3>{rect.top, rect.left, rect.side});
    }

    std::vector<ScoredSample> scored;
    scored.reserve(out.rows.size());
    for (const auto& r : out.rows)
        scored.push_back({r.knownness, r.true_label, r.predicted_known()});
    out.report = report_from_scored_samples(scored, k_count, threshold, checkpoint.split);

    if (!run_dir.empty()) {
        std::filesystem::create_directories(run_dir);
        write_scores_file(run_dir / "scores.tsv", out.rows, checkpoint.class_names);
        write_report(out, run_dir / "report.json");
    }
    return out;
}

void write_scores_file(const std::filesystem::path& path, const std::vector<ScoredRow>& rows,
                       const std::vector<std::string>& known_class_names) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write scores file: " + path.string());
    out << "#classes: ";
    for (std::size_t i = 0; i < known_class_names.size(); ++i) {
        if (i) out << ",";
        out << known_class_names[i];
    }
    out << "\n#columns: id\ttrue_label\tp_h[0.." << known_class_names.size() - 1 << "]\tknownness\n";
    out.precision(17);
    for (const auto& r : rows) {
        out << r.id << "\t" << r.true_label;
        for (double p : r.p_h) out << "\t" << p;
        out << "\t" << r.knownness << "\n";
    }
    if (!out) throw IngestionError("failed writing scores file: " + path.string());
}

std::vector<ScoredRow> read_scores_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open scores file: " + path.string());
    std::vector<ScoredRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string field;
        ScoredRow row;
        if (!std::getline(ss, row.id, '\t')) throw SchemaError("malformed scores row in " + path.string());
        if (!std::getline(ss, field, '\t')) throw SchemaError("malformed scores row in " + path.string());
        row.true_label = std::stoi(field);
        std::vector<double> values;
        while (std::getline(ss, field, '\t')) values.push_back(std::stod(field));
        if (values.size() < 2) throw SchemaError("scores row needs probabilities plus knownness");
        row.knownness = values.back();
        values.pop_back();
        row.p_h = std::move(values);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw SchemaError("scores file lists no samples: " + path.string());
    return rows;
}

void write_report(const EvalOutput& output, const std::filesystem::path& path) {
    const EvalReport& report = output.report;
    nlohmann::json j;
    j["auroc"] = report.auroc;
    j["oscr"] = report.oscr;
    j["threshold"] = report.threshold;
    j["known_accuracy"] = report.known_accuracy;
    j["n_known"] = report.n_known;
    j["n_unknown"] = report.n_unknown;
    j["knownness_score"] = report.knownness_score;
    j["split"] = {{"known_classes", report.split.known_classes},
                  {"unknown_classes", report.split.unknown_classes},
                  {"seed", report.split.seed},
                  {"openness", report.split.openness}};
    nlohmann::json rects = nlohmann::json::object();
    for (const auto& [id, rect] : output.mask_rects)
        rects[id] = {{"top", rect[0]}, {"left", rect[1]}, {"side", rect[2]}};
    j["mask_rects"] = rects;
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write report: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace ovfer
