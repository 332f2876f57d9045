#include "ovfer/image_io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "ovfer/errors.hpp"

namespace ovfer::imageio {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
    std::string e = path.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

// Skips whitespace and '#' comment lines between PNM header tokens.
std::string next_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

long parse_long(const std::string& tok, const std::filesystem::path& path) {
    try {
        return std::stol(tok);
    } catch (const std::exception&) {
        throw SchemaError("malformed image header in " + path.string());
    }
}

Tensor3 read_pnm(std::ifstream& in, const std::filesystem::path& path, int channels) {
    const long w = parse_long(next_token(in), path);
    const long h = parse_long(next_token(in), path);
    const long maxval = parse_long(next_token(in), path);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw SchemaError("unsupported PNM geometry in " + path.string());
    const std::size_t n = static_cast<std::size_t>(w) * h * channels;
    std::vector<unsigned char> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw SchemaError("truncated pixel data in " + path.string());
    Tensor3 img(channels, static_cast<int>(h), static_cast<int>(w));
    std::size_t i = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c) img.at(c, y, x) = raw[i++] / static_cast<double>(maxval);
    return img;
}

Tensor3 read_pfm(std::ifstream& in, const std::filesystem::path& path, int channels) {
    const long w = parse_long(next_token(in), path);
    const long h = parse_long(next_token(in), path);
    const std::string scale_tok = next_token(in);
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        throw SchemaError("malformed PFM scale in " + path.string());
    }
    if (w <= 0 || h <= 0 || scale == 0.0) throw SchemaError("unsupported PFM geometry in " + path.string());
    if (scale > 0.0) throw SchemaError("big-endian PFM not supported: " + path.string());
    const std::size_t n = static_cast<std::size_t>(w) * h * channels;
    std::vector<float> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(float))
        throw SchemaError("truncated pixel data in " + path.string());
    Tensor3 img(channels, static_cast<int>(h), static_cast<int>(w));
    // PFM stores rows bottom-to-top.
    std::size_t i = 0;
    for (int y = img.height - 1; y >= 0; --y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c) img.at(c, y, x) = raw[i++];
    return img;
}

}  // namespace

bool is_supported_image(const std::filesystem::path& path) {
    const std::string e = lower_ext(path);
    return e == ".pgm" || e == ".ppm" || e == ".pfm";
}

Tensor3 read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open image file: " + path.string());
    const std::string magic = next_token(in);
    if (magic == "P5") return read_pnm(in, path, 1);
    if (magic == "P6") return read_pnm(in, path, 3);
    if (magic == "Pf") return read_pfm(in, path, 1);
    if (magic == "PF") return read_pfm(in, path, 3);
    throw SchemaError("unsupported image format '" + magic + "' in " + path.string());
}

void write_pfm(const std::filesystem::path& path, const Tensor3& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ContractError("PFM supports 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write image file: " + path.string());
    out << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
    std::vector<float> raw(static_cast<std::size_t>(img.width) * img.height * img.channels);
    std::size_t i = 0;
    for (int y = img.height - 1; y >= 0; --y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) raw[i++] = static_cast<float>(img.at(c, y, x));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!out) throw IngestionError("failed writing image file: " + path.string());
}

void write_pnm(const std::filesystem::path& path, const Tensor3& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ContractError("PNM supports 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write image file: " + path.string());
    out << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(img.width) * img.height * img.channels);
    std::size_t i = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                raw[i++] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IngestionError("failed writing image file: " + path.string());
}

}  // namespace ovfer::imageio
