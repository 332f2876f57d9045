#include "ovfer/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ovfer/errors.hpp"
#include "ovfer/image_io.hpp"
#include "ovfer/rng.hpp"

namespace ovfer {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

}  // namespace

void Dataset::validate() const {
    std::set<std::string> seen;
    for (const auto& name : class_names) {
        if (!seen.insert(name).second) throw SchemaError("duplicate class name: " + name);
    }
    for (const auto& s : samples) {
        if (s.frames.empty()) throw SchemaError("sample '" + s.id + "' has no frames");
        if (s.label < 0 || s.label >= num_classes())
            throw SchemaError("sample '" + s.id + "' label out of range");
        for (const auto& f : s.frames) {
            if (!frame_shape.matches(f))
                throw SchemaError("sample '" + s.id + "' has a frame with mismatched shape");
        }
    }
}

void SyntheticSpec::validate() const {
    if (num_classes < 3) throw ContractError("synthetic spec requires at least 3 classes");
    if (videos_per_class < 1 || frames_per_video < 1)
        throw ContractError("synthetic spec requires positive video and frame counts");
    if (frame_shape.channels != 3 || frame_shape.height < 16 || frame_shape.width < 16)
        throw ContractError("synthetic spec requires 3-channel frames of at least 16x16");
    if (!std::isfinite(noise_level) || noise_level < 0.0)
        throw ContractError("synthetic noise_level must be finite and non-negative");
}

std::array<double, 3> synthetic_class_color(int k) {
    // Channel values are drawn from {0.9, 0.2, 0.55}: any two distinct
    // palette entries differ by >= 0.35 > kSyntheticMinColorGap in the
    // channel where they differ. The index stride (7 is coprime to 27)
    // makes consecutive classes differ in more than one channel.
    if (k < 0 || k >= 27) throw ContractError("synthetic palette supports up to 27 classes");
    const int i = (k * 7) % 27;
    static constexpr std::array<double, 3> values{0.9, 0.2, 0.55};
    return {values[i % 3], values[(i / 3) % 3], values[(i / 9) % 3]};
}

int synthetic_pattern_cells(const SyntheticSpec& spec) {
    return std::max(3, std::min(spec.frame_shape.height, spec.frame_shape.width) / (2 * kSyntheticCellPx));
}

std::vector<std::vector<std::uint8_t>> synthetic_patterns(const SyntheticSpec& spec) {
    const int cells = synthetic_pattern_cells(spec);
    const int total = cells * cells;
    const int min_lit = total / 3;
    const int max_lit = total - min_lit;
    const int min_distance = (3 * total + 7) / 8;

    std::vector<std::vector<std::uint8_t>> patterns;
    patterns.reserve(static_cast<std::size_t>(spec.num_classes));
    for (int k = 0; k < spec.num_classes; ++k) {
        auto rng = make_rng(mix_seed(spec.seed ^ 0x9a77e12ULL, static_cast<std::uint64_t>(k)));
        std::bernoulli_distribution bit(0.5);
        std::vector<std::uint8_t> pattern(static_cast<std::size_t>(total));
        bool ok = false;
        for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
            int lit = 0;
            for (auto& c : pattern) {
                c = bit(rng) ? 1 : 0;
                lit += c;
            }
            ok = lit >= min_lit && lit <= max_lit;
            for (const auto& prev : patterns) {
                if (!ok) break;
                int distance = 0;
                for (int i = 0; i < total; ++i) distance += pattern[static_cast<std::size_t>(i)] != prev[static_cast<std::size_t>(i)];
                ok = distance >= min_distance;
            }
        }
        if (!ok)
            throw ContractError("could not draw a distinct signature pattern; too many classes for the frame size");
        patterns.push_back(std::move(pattern));
    }
    return patterns;
}

std::pair<int, int> synthetic_jitter(const SyntheticSpec& spec, int class_index, int video_index) {
    // Kept small relative to the signature cell size so per-sample variation
    // stays below the between-class signature separation.
    const int J = std::max(1, std::min(spec.frame_shape.height, spec.frame_shape.width) / 16);
    auto rng = make_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(class_index),
                                 static_cast<std::uint64_t>(video_index)));
    std::uniform_int_distribution<int> d(-J, J);
    const int dy = d(rng);
    const int dx = d(rng);
    return {dy, dx};
}

std::vector<Tensor3> render_synthetic_video(const SyntheticSpec& spec, int class_index, int video_index,
                                            std::pair<int, int> jitter) {
    spec.validate();
    const int h = spec.frame_shape.height;
    const int w = spec.frame_shape.width;
    // Class signature: a colored binary cell pattern on a dark background.
    // The pattern carries most of the frame energy, so embeddings of
    // different classes stay angularly spread after normalization; the
    // pattern region drifts across frames and starts at a jittered position.
    const int cells = synthetic_pattern_cells(spec);
    const int side = cells * kSyntheticCellPx;
    const double background = 0.0;

    const auto pattern = synthetic_patterns(spec)[static_cast<std::size_t>(class_index)];
    const auto color = synthetic_class_color(class_index);
    // Golden-angle placement keeps consecutive classes apart on the circle.
    const double angle = 2.39996322972865332 * class_index;
    const double radius = (std::min(h, w) - side) / 2.0;
    const double cy0 = h / 2.0 + radius * std::sin(angle) + jitter.first;
    const double cx0 = w / 2.0 + radius * std::cos(angle) + jitter.second;
    const double drift_angle = 2.39996322972865332 * (class_index + 1);
    const double drift_dy = std::sin(drift_angle);
    const double drift_dx = std::cos(drift_angle);

    auto noise_rng = make_rng(mix_seed(spec.seed ^ 0x5eedULL, static_cast<std::uint64_t>(class_index),
                                       static_cast<std::uint64_t>(video_index)));
    std::normal_distribution<double> noise(0.0, spec.noise_level > 0.0 ? spec.noise_level : 1.0);

    std::vector<Tensor3> frames;
    frames.reserve(static_cast<std::size_t>(spec.frames_per_video));
    for (int q = 0; q < spec.frames_per_video; ++q) {
        Tensor3 frame(3, h, w, background);
        const int top = std::clamp(static_cast<int>(std::lround(cy0 + q * drift_dy)) - side / 2, 0, h - side);
        const int left = std::clamp(static_cast<int>(std::lround(cx0 + q * drift_dx)) - side / 2, 0, w - side);
        for (int cy = 0; cy < cells; ++cy)
            for (int cx = 0; cx < cells; ++cx) {
                if (!pattern[static_cast<std::size_t>(cy * cells + cx)]) continue;
                for (int c = 0; c < 3; ++c)
                    for (int y = 0; y < kSyntheticCellPx; ++y)
                        for (int x = 0; x < kSyntheticCellPx; ++x)
                            frame.at(c, top + cy * kSyntheticCellPx + y, left + cx * kSyntheticCellPx + x) =
                                color[static_cast<std::size_t>(c)];
            }
        if (spec.noise_level > 0.0) {
            for (double& v : frame.data) v = std::clamp(v + noise(noise_rng), 0.0, 1.0);
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

std::vector<std::string> synthetic_class_names(int count) {
    static const std::vector<std::string> known = {
        "anger",    "disgust", "fear",        "happiness",      "sadness", "surprise",
        "neutral",  "contempt", "anxiety",    "helplessness",   "disappointment"};
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        if (k < static_cast<int>(known.size())) {
            names.push_back(known[static_cast<std::size_t>(k)]);
        } else {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "emotion_%02d", k);
            names.emplace_back(buf);
        }
    }
    return names;
}

Dataset synthesize_dataset(const SyntheticSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.class_names = synthetic_class_names(spec.num_classes);
    ds.frame_shape = spec.frame_shape;
    ds.samples.reserve(static_cast<std::size_t>(spec.num_classes) * spec.videos_per_class);
    for (int k = 0; k < spec.num_classes; ++k) {
        for (int i = 0; i < spec.videos_per_class; ++i) {
            VideoSample s;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "c%02d_v%03d", k, i);
            s.id = buf;
            s.label = k;
            s.source = "synthetic";
            s.frames = render_synthetic_video(spec, k, i, synthetic_jitter(spec, k, i));
            ds.samples.push_back(std::move(s));
        }
    }
    ds.validate();
    return ds;
}

std::vector<int> sample_frame_indices(int video_length, int n) {
    if (n < 1) throw ContractError("frame sample count must be >= 1");
    if (video_length < 1) throw ContractError("video must contain at least one frame");
    std::vector<int> idx(static_cast<std::size_t>(n));
    if (n == 1) return idx;  // single index 0
    for (int q = 0; q < n; ++q)
        idx[static_cast<std::size_t>(q)] =
            static_cast<int>(std::lround(q * (video_length - 1) / static_cast<double>(n - 1)));
    return idx;
}

std::vector<Tensor3> sample_frames(const VideoSample& sample, int n) {
    const auto idx = sample_frame_indices(static_cast<int>(sample.frames.size()), n);
    std::vector<Tensor3> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(sample.frames[static_cast<std::size_t>(i)]);
    return out;
}

Dataset load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open manifest: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty manifest: " + path.string());
    const std::string header_prefix = "#classes:";
    if (line.rfind(header_prefix, 0) != 0)
        throw SchemaError("manifest must start with '#classes:' header: " + path.string());

    Dataset ds;
    for (const auto& raw : split_on(line.substr(header_prefix.size()), ',')) {
        const std::string name = trim(raw);
        if (name.empty()) throw SchemaError("empty class name in manifest header");
        ds.class_names.push_back(name);
    }
    std::map<std::string, int> class_index;
    for (int i = 0; i < ds.num_classes(); ++i) class_index[ds.class_names[static_cast<std::size_t>(i)]] = i;

    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split_on(line, '\t');
        if (fields.size() != 4)
            throw SchemaError("manifest row " + std::to_string(row) + " must have 4 tab-separated fields");
        VideoSample s;
        s.id = trim(fields[0]);
        const std::string class_name = trim(fields[2]);
        const auto it = class_index.find(class_name);
        if (it == class_index.end())
            throw SchemaError("manifest row " + std::to_string(row) + ": class '" + class_name +
                              "' is not in the header class list");
        s.label = it->second;
        const std::string tag = trim(fields[3]);
        if (tag == "train")
            s.tag = SplitTag::train;
        else if (tag == "test")
            s.tag = SplitTag::test;
        else if (tag == "-")
            s.tag = SplitTag::none;
        else
            throw SchemaError("manifest row " + std::to_string(row) + ": unknown split tag '" + tag + "'");

        std::filesystem::path dir(trim(fields[1]));
        if (dir.is_relative()) dir = base / dir;
        s.source = dir.string();
        if (!std::filesystem::is_directory(dir))
            throw IngestionError("manifest row " + std::to_string(row) + ": frames directory does not exist: " +
                                 dir.string());

        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_regular_file() && imageio::is_supported_image(entry.path())) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end(),
                  [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
        if (files.empty())
            throw IngestionError("manifest row " + std::to_string(row) + ": no frame images in " + dir.string());
        for (const auto& f : files) s.frames.push_back(imageio::read_image(f));
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw SchemaError("manifest lists no samples: " + path.string());
    ds.frame_shape = {ds.samples[0].frames[0].channels, ds.samples[0].frames[0].height,
                      ds.samples[0].frames[0].width};
    ds.validate();
    return ds;
}

std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& out_dir) {
    dataset.validate();
    std::filesystem::create_directories(out_dir / "frames");
    const auto manifest_path = out_dir / "manifest.txt";
    std::ofstream out(manifest_path);
    if (!out) throw IngestionError("cannot write manifest: " + manifest_path.string());
    out << "#classes: ";
    for (std::size_t i = 0; i < dataset.class_names.size(); ++i) {
        if (i) out << ",";
        out << dataset.class_names[i];
    }
    out << "\n";
    for (const auto& s : dataset.samples) {
        const auto dir = out_dir / "frames" / s.id;
        std::filesystem::create_directories(dir);
        for (std::size_t q = 0; q < s.frames.size(); ++q) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "f%04zu.pfm", q);
            imageio::write_pfm(dir / buf, s.frames[q]);
        }
        const char* tag = s.tag == SplitTag::train ? "train" : (s.tag == SplitTag::test ? "test" : "-");
        out << s.id << "\t" << ("frames/" + s.id) << "\t" << dataset.class_names[static_cast<std::size_t>(s.label)]
            << "\t" << tag << "\n";
    }
    if (!out) throw IngestionError("failed writing manifest: " + manifest_path.string());
    return manifest_path;
}

}  // namespace ovfer
