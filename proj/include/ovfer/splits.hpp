#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ovfer/data.hpp"

namespace ovfer {

// One known/unknown class partition. known_classes and unknown_classes hold
// original dataset class indices; known order defines the label remapping.
struct OpennessSplit {
    std::vector<int> known_classes;
    std::vector<int> unknown_classes;
    std::uint64_t seed = 0;
    double openness = 0.0;

    int known_count() const { return static_cast<int>(known_classes.size()); }
    int unknown_count() const { return static_cast<int>(unknown_classes.size()); }
};

// O(K:U) = 1 - sqrt(K/(K+U)). K must be positive.
double openness(int known, int unknown);

// `repeats` uniformly random partitions, each drawn from a generator seeded
// by (seed, repeat index); partitions are distinct sets whenever the class
// count allows it.
std::vector<OpennessSplit> generate_splits(int class_count, int known_count, int repeats, std::uint64_t seed);

// Unknown test samples carry this label: index K, one past the remapped
// known classes (0-based counterpart of the usual K+1 sentinel).
inline int unknown_label(const OpennessSplit& split) { return split.known_count(); }

struct SplitDatasets {
    Dataset train;  // known classes only, labels remapped to 0..K-1
    Dataset test;   // remapped knowns plus all unknowns collapsed to label K
};

// Manifest train/test tags are honored where present; untagged known samples
// fall back to a deterministic per-class 80/20 split seeded by split.seed.
// Every unknown-class sample lands in test regardless of tags.
SplitDatasets apply_split(const Dataset& dataset, const OpennessSplit& split);

// Holds out a seeded fraction of (already remapped) known training samples
// for threshold calibration; at least one sample per class stays in train.
std::pair<Dataset, Dataset> calibration_slice(const Dataset& train, double fraction, std::uint64_t seed);

// Canonical seed for the calibration slice of a split, shared by training
// and evaluation so both sides derive the identical holdout.
std::uint64_t calibration_seed(const OpennessSplit& split);

void save_split(const OpennessSplit& split, const std::filesystem::path& path);
OpennessSplit load_split(const std::filesystem::path& path);

}  // namespace ovfer
