#include "sora/vten.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sora {

namespace {

constexpr char kMagic[4] = {'V', 'T', 'E', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxDims = 16;

void put_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& is, const std::filesystem::path& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IoError("truncated VTEN file: " + path.string());
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void vten_save(const std::filesystem::path& path, const Shape& shape,
               std::span<const float> data) {
    if (shape_numel(shape) != data.size())
        throw DimensionError("vten_save: shape/data mismatch for " + path.string());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) put_u32(os, static_cast<std::uint32_t>(d));
    for (float v : data) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
        put_u32(os, bits);
    }
    if (!os) throw IoError("write failed: " + path.string());
}

namespace {

Shape read_header(std::ifstream& is, const std::filesystem::path& path) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not a VTEN file: " + path.string());
    std::uint32_t version = get_u32(is, path);
    if (version != kVersion)
        throw IoError("unsupported VTEN version " + std::to_string(version) + ": " +
                      path.string());
    std::uint32_t ndim = get_u32(is, path);
    if (ndim == 0 || ndim > kMaxDims)
        throw IoError("bad VTEN rank " + std::to_string(ndim) + ": " + path.string());
    Shape shape(ndim);
    for (auto& d : shape) {
        std::uint32_t v = get_u32(is, path);
        if (v == 0 || v > (1u << 24)) throw IoError("bad VTEN dim: " + path.string());
        d = static_cast<int>(v);
    }
    return shape;
}

}  // namespace

Shape vten_read_shape(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    return read_header(is, path);
}

std::pair<Shape, std::vector<float>> vten_load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    Shape shape = read_header(is, path);
    std::size_t n = shape_numel(shape);
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_u32(is, path));
    char extra;
    if (is.read(&extra, 1)) throw IoError("trailing bytes in VTEN file: " + path.string());
    return {std::move(shape), std::move(data)};
}

}  // namespace sora
