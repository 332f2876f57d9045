#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ovfer/tensor.hpp"

namespace ovfer {

enum class SplitTag { none, train, test };

// A labeled sequence of face-cropped frames; the unit of training and
// evaluation. Labels are 0-based indices into the owning dataset's
// class_names.
struct VideoSample {
    std::string id;
    std::vector<Tensor3> frames;
    int label = 0;
    std::string source;
    SplitTag tag = SplitTag::none;
};

struct Dataset {
    std::vector<VideoSample> samples;
    std::vector<std::string> class_names;
    FrameShape frame_shape;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    // Throws SchemaError if any invariant is broken.
    void validate() const;
};

// Desk-scale synthetic substrate: each class paints a distinct colored blob
// whose position drifts across frames; per-sample jitter shifts the start
// position; optional Gaussian pixel noise on top.
struct SyntheticSpec {
    int num_classes = 7;
    int videos_per_class = 20;
    int frames_per_video = 8;
    FrameShape frame_shape{3, 32, 32};
    double noise_level = 0.0;
    std::uint64_t seed = 7;

    void validate() const;
};

// Minimum per-class color separation of the synthetic palette: any two class
// colors differ by at least this much in some channel.
inline constexpr double kSyntheticMinColorGap = 0.3;

// Distinct per-class signature color.
std::array<double, 3> synthetic_class_color(int k);

// Cell grid geometry of the class signature pattern (cells are
// kSyntheticCellPx x kSyntheticCellPx pixels).
inline constexpr int kSyntheticCellPx = 4;
int synthetic_pattern_cells(const SyntheticSpec& spec);  // cells per side

// Per-class binary cell patterns; any two patterns differ in at least
// ceil(cells/4) cells (resampled deterministically until they do).
std::vector<std::vector<std::uint8_t>> synthetic_patterns(const SyntheticSpec& spec);

// Per-sample start-position jitter, the only difference between two
// noise-free samples of the same class.
std::pair<int, int> synthetic_jitter(const SyntheticSpec& spec, int class_index, int video_index);

std::vector<Tensor3> render_synthetic_video(const SyntheticSpec& spec, int class_index, int video_index,
                                            std::pair<int, int> jitter);

Dataset synthesize_dataset(const SyntheticSpec& spec);

// Canonical class names for synthetic data: the seven basic emotions first,
// then four further single emotions, then generated names.
std::vector<std::string> synthetic_class_names(int count);

// Uniform temporal sampling: index q -> round(q*(len-1)/(N-1)), a single
// index 0 when N == 1. Videos shorter than N repeat frames accordingly.
std::vector<int> sample_frame_indices(int video_length, int n);
std::vector<Tensor3> sample_frames(const VideoSample& sample, int n);

// Manifest: first line "#classes: a,b,c"; then one row per sample:
// "<id>\t<frames_dir>\t<class_name>\t<train|test|->".
Dataset load_manifest(const std::filesystem::path& path);

// Writes dataset frames (PFM) plus a manifest under out_dir; returns the
// manifest path.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& out_dir);

}  // namespace ovfer
