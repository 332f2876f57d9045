#include "ovfer/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ovfer/errors.hpp"

namespace ovfer {

ScoreHistograms score_histograms(const std::vector<ScoredRow>& rows, int bins) {
    if (bins < 1) throw PlotError("histogram needs at least one bin");
    if (rows.empty()) throw PlotError("no scored samples to plot");
    const int sentinel = static_cast<int>(rows.front().p_h.size());

    std::vector<double> known, unknown;
    for (const auto& r : rows) (r.true_label == sentinel ? unknown : known).push_back(r.knownness);
    if (known.empty() || unknown.empty())
        throw PlotError("score distribution plot requires both known and unknown samples");

    double lo = rows.front().knownness, hi = lo;
    for (const auto& r : rows) {
        lo = std::min(lo, r.knownness);
        hi = std::max(hi, r.knownness);
    }

    ScoreHistograms h;
    h.bins = bins;
    h.known.assign(static_cast<std::size_t>(bins), 0.0);
    h.unknown.assign(static_cast<std::size_t>(bins), 0.0);
    auto bin_of = [&](double score) {
        if (hi == lo) return 0;  // constant scores share one bin
        const double norm = (score - lo) / (hi - lo);
        return std::min(bins - 1, static_cast<int>(norm * bins));
    };
    for (double s : known) h.known[static_cast<std::size_t>(bin_of(s))] += 1.0;
    for (double s : unknown) h.unknown[static_cast<std::size_t>(bin_of(s))] += 1.0;
    for (double& v : h.known) v /= static_cast<double>(known.size());
    for (double& v : h.unknown) v /= static_cast<double>(unknown.size());
    return h;
}

void render_histogram_svg(const ScoreHistograms& histograms, const std::filesystem::path& path) {
    const int width = 640, height = 400;
    const int margin_left = 50, margin_bottom = 40, margin_top = 20, margin_right = 20;
    const double plot_w = width - margin_left - margin_right;
    const double plot_h = height - margin_top - margin_bottom;

    double max_v = 0.0;
    for (double v : histograms.known) max_v = std::max(max_v, v);
    for (double v : histograms.unknown) max_v = std::max(max_v, v);
    if (max_v <= 0.0) max_v = 1.0;

    std::ofstream out(path);
    if (!out) throw PlotError("cannot write plot file: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    const double bin_w = plot_w / histograms.bins;
    auto bar = [&](int bin, double value, const char* color) {
        const double h = value / max_v * plot_h;
        out << "<rect x=\"" << margin_left + bin * bin_w << "\" y=\"" << margin_top + plot_h - h
            << "\" width=\"" << bin_w << "\" height=\"" << h << "\" fill=\"" << color
            << "\" fill-opacity=\"0.55\"/>\n";
    };
    for (int b = 0; b < histograms.bins; ++b) {
        bar(b, histograms.known[static_cast<std::size_t>(b)], "#2266cc");
        bar(b, histograms.unknown[static_cast<std::size_t>(b)], "#cc3322");
    }

    // axes
    out << "<line x1=\"" << margin_left << "\" y1=\"" << margin_top + plot_h << "\" x2=\""
        << margin_left + plot_w << "\" y2=\"" << margin_top + plot_h << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << margin_left << "\" y1=\"" << margin_top << "\" x2=\"" << margin_left
        << "\" y2=\"" << margin_top + plot_h << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << margin_left << "\" y=\"" << height - 8
        << "\" font-size=\"13\">normalized known-ness score</text>\n";
    out << "<text x=\"" << margin_left + plot_w - 190 << "\" y=\"" << margin_top + 14
        << "\" font-size=\"13\" fill=\"#2266cc\">known</text>\n";
    out << "<text x=\"" << margin_left + plot_w - 130 << "\" y=\"" << margin_top + 14
        << "\" font-size=\"13\" fill=\"#cc3322\">unknown</text>\n";
    out << "<text x=\"8\" y=\"" << margin_top + 12 << "\" font-size=\"13\">share</text>\n";
    out << "</svg>\n";
    if (!out) throw PlotError("failed writing plot file: " + path.string());
}

void plot_score_distributions(const std::filesystem::path& scores_file,
                              const std::filesystem::path& out_svg, int bins) {
    const auto rows = read_scores_file(scores_file);
    render_histogram_svg(score_histograms(rows, bins), out_svg);
}

}  // namespace ovfer
