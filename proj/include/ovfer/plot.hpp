#pragma once

#include <filesystem>
#include <vector>

#include "ovfer/evaluate.hpp"

namespace ovfer {

// Known/unknown known-ness histograms over scores normalized to [0,1]
// (min-max over both populations together); each population's bins sum to 1.
struct ScoreHistograms {
    int bins = 0;
    std::vector<double> known;    // proportion per bin
    std::vector<double> unknown;  // proportion per bin
};

ScoreHistograms score_histograms(const std::vector<ScoredRow>& rows, int bins = 20);

void render_histogram_svg(const ScoreHistograms& histograms, const std::filesystem::path& path);

// Reads a scores file and writes the overlaid distribution plot.
void plot_score_distributions(const std::filesystem::path& scores_file,
                              const std::filesystem::path& out_svg, int bins = 20);

}  // namespace ovfer
