#include "ovfer/splits.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "ovfer/errors.hpp"
#include "ovfer/rng.hpp"

namespace ovfer {

double openness(int known, int unknown) {
    if (known < 1) throw DomainError("openness requires at least one known class");
    if (unknown < 0) throw DomainError("openness requires a non-negative unknown count");
    return 1.0 - std::sqrt(static_cast<double>(known) / static_cast<double>(known + unknown));
}

namespace {

// n-choose-k with saturation; only used to decide whether `repeats` distinct
// partitions exist at all.
double binomial_upper(int n, int k) {
    double v = 1.0;
    for (int i = 0; i < k; ++i) {
        v *= static_cast<double>(n - i) / (i + 1);
        if (v > 1e18) return 1e18;
    }
    return v;
}

std::vector<int> draw_known_set(std::mt19937_64& rng, int class_count, int known_count) {
    std::vector<int> classes(static_cast<std::size_t>(class_count));
    std::iota(classes.begin(), classes.end(), 0);
    std::shuffle(classes.begin(), classes.end(), rng);
    std::vector<int> known(classes.begin(), classes.begin() + known_count);
    std::sort(known.begin(), known.end());
    return known;
}

}  // namespace

std::vector<OpennessSplit> generate_splits(int class_count, int known_count, int repeats, std::uint64_t seed) {
    if (known_count < 2) throw ProtocolError("split requires at least 2 known classes");
    if (known_count >= class_count)
        throw ProtocolError("known class count must be smaller than the total class count");
    if (repeats < 1) throw ProtocolError("split repeats must be >= 1");

    const bool can_be_distinct = binomial_upper(class_count, known_count) >= repeats;
    std::set<std::vector<int>> seen;
    std::vector<OpennessSplit> splits;
    splits.reserve(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
        auto rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
        std::vector<int> known = draw_known_set(rng, class_count, known_count);
        if (can_be_distinct) {
            int attempts = 0;
            while (seen.count(known)) {
                if (++attempts > 10000)
                    throw ProtocolError("failed to draw a distinct class partition");
                known = draw_known_set(rng, class_count, known_count);
            }
        }
        seen.insert(known);

        OpennessSplit s;
        s.known_classes = known;
        for (int c = 0; c < class_count; ++c)
            if (!std::binary_search(known.begin(), known.end(), c)) s.unknown_classes.push_back(c);
        s.seed = seed;
        s.openness = openness(s.known_count(), s.unknown_count());
        splits.push_back(std::move(s));
    }
    return splits;
}

SplitDatasets apply_split(const Dataset& dataset, const OpennessSplit& split) {
    const int total = dataset.num_classes();
    if (split.known_count() < 2 || split.unknown_count() < 1)
        throw ProtocolError("split needs K >= 2 known and U >= 1 unknown classes");
    std::map<int, int> remap;  // original class -> 0..K-1
    for (int i = 0; i < split.known_count(); ++i) {
        const int c = split.known_classes[static_cast<std::size_t>(i)];
        if (c < 0 || c >= total) throw ProtocolError("split references a class index outside the dataset");
        remap[c] = i;
    }
    for (int c : split.unknown_classes) {
        if (c < 0 || c >= total) throw ProtocolError("split references a class index outside the dataset");
        if (remap.count(c)) throw ProtocolError("split lists a class as both known and unknown");
    }

    SplitDatasets out;
    for (int i = 0; i < split.known_count(); ++i)
        out.train.class_names.push_back(
            dataset.class_names[static_cast<std::size_t>(split.known_classes[static_cast<std::size_t>(i)])]);
    out.test.class_names = out.train.class_names;
    out.test.class_names.push_back("<unknown>");
    out.train.frame_shape = dataset.frame_shape;
    out.test.frame_shape = dataset.frame_shape;

    const int sentinel = unknown_label(split);

    // Untagged known samples per class, for the seeded 80/20 fallback.
    std::map<int, std::vector<std::size_t>> untagged;
    std::vector<int> known_sample_count(static_cast<std::size_t>(split.known_count()), 0);

    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        const auto it = remap.find(s.label);
        if (it == remap.end()) {
            VideoSample copy = s;
            copy.label = sentinel;
            out.test.samples.push_back(std::move(copy));
            continue;
        }
        known_sample_count[static_cast<std::size_t>(it->second)] += 1;
        if (s.tag == SplitTag::train) {
            VideoSample copy = s;
            copy.label = it->second;
            out.train.samples.push_back(std::move(copy));
        } else if (s.tag == SplitTag::test) {
            VideoSample copy = s;
            copy.label = it->second;
            out.test.samples.push_back(std::move(copy));
        } else {
            untagged[it->second].push_back(i);
        }
    }

    for (int k = 0; k < split.known_count(); ++k) {
        if (known_sample_count[static_cast<std::size_t>(k)] == 0)
            throw ProtocolError("known class '" + out.train.class_names[static_cast<std::size_t>(k)] +
                                "' has no samples");
    }

    // 80/20 per known class, deterministic in split.seed. Train keeps at
    // least one sample per class.
    auto rng = make_rng(mix_seed(split.seed, 0x8020ULL));
    for (auto& [cls, indices] : untagged) {
        std::shuffle(indices.begin(), indices.end(), rng);
        const std::size_t n = indices.size();
        const std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.8 * n)));
        for (std::size_t j = 0; j < n; ++j) {
            VideoSample copy = dataset.samples[indices[j]];
            copy.label = cls;
            if (j < n_train)
                out.train.samples.push_back(std::move(copy));
            else
                out.test.samples.push_back(std::move(copy));
        }
    }

    out.train.validate();
    out.test.validate();
    return out;
}

std::pair<Dataset, Dataset> calibration_slice(const Dataset& train, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("calibration fraction must lie in (0,1)");
    Dataset core, calib;
    core.class_names = calib.class_names = train.class_names;
    core.frame_shape = calib.frame_shape = train.frame_shape;

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < train.samples.size(); ++i) by_class[train.samples[i].label].push_back(i);

    auto rng = make_rng(mix_seed(seed, 0xca11bULL));
    for (auto& [cls, indices] : by_class) {
        std::shuffle(indices.begin(), indices.end(), rng);
        std::size_t n_calib = static_cast<std::size_t>(std::lround(fraction * indices.size()));
        if (indices.size() >= 2) n_calib = std::max<std::size_t>(1, n_calib);
        n_calib = std::min(n_calib, indices.size() - 1);  // never empty a class
        for (std::size_t j = 0; j < indices.size(); ++j) {
            (j < n_calib ? calib : core).samples.push_back(train.samples[indices[j]]);
        }
    }
    return {std::move(core), std::move(calib)};
}

std::uint64_t calibration_seed(const OpennessSplit& split) { return mix_seed(split.seed, 0x5ceULL); }

void save_split(const OpennessSplit& split, const std::filesystem::path& path) {
    nlohmann::json j;
    j["known_classes"] = split.known_classes;
    j["unknown_classes"] = split.unknown_classes;
    j["seed"] = split.seed;
    j["openness"] = split.openness;
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write split file: " + path.string());
    out << j.dump(2) << "\n";
}

OpennessSplit load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open split file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        OpennessSplit s;
        s.known_classes = j.at("known_classes").get<std::vector<int>>();
        s.unknown_classes = j.at("unknown_classes").get<std::vector<int>>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.openness = j.at("openness").get<double>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("malformed split file " + path.string() + ": " + e.what());
    }
}

}  // namespace ovfer
