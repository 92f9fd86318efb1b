#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "udjfl/errors.hpp"
#include "udjfl/io.hpp"
#include "udjfl/nn.hpp"

namespace udjfl {

// Batch container format (little-endian):
//   magic   "UDJFDAT1" (8 bytes)
//   u32     section count
//   per section:
//     u32    rows
//     u32    cols
//     i32[]  labels   (rows entries)
//     f64[]  features (rows*cols entries, row-major)
// Client files carry two sections (train, test); the global test file one.
inline constexpr char kDatasetMagic[8] = {'U', 'D', 'J', 'F', 'D', 'A', 'T', '1'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    b[0] = static_cast<char>(v & 0xff);
    b[1] = static_cast<char>((v >> 8) & 0xff);
    b[2] = static_cast<char>((v >> 16) & 0xff);
    b[3] = static_cast<char>((v >> 24) & 0xff);
    out.append(b, 4);
}

inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw FormatError("dataset container: truncated");
    const auto* p = reinterpret_cast<const unsigned char*>(in.data() + pos);
    pos += 4;
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

inline void put_batch(std::string& out, const Batch& b) {
    put_u32(out, static_cast<std::uint32_t>(b.rows));
    put_u32(out, static_cast<std::uint32_t>(b.cols));
    for (int y : b.labels) put_u32(out, static_cast<std::uint32_t>(y));
    const std::size_t bytes = b.features.size() * sizeof(double);
    const std::size_t off = out.size();
    out.resize(off + bytes);
    std::memcpy(out.data() + off, b.features.data(), bytes);
}

inline Batch get_batch(const std::string& in, std::size_t& pos) {
    Batch b;
    b.rows = get_u32(in, pos);
    b.cols = get_u32(in, pos);
    b.labels.resize(b.rows);
    for (std::size_t i = 0; i < b.rows; ++i)
        b.labels[i] = static_cast<int>(get_u32(in, pos));
    const std::size_t count = b.rows * b.cols;
    const std::size_t bytes = count * sizeof(double);
    if (pos + bytes > in.size()) throw FormatError("dataset container: truncated features");
    b.features.resize(count);
    std::memcpy(b.features.data(), in.data() + pos, bytes);
    pos += bytes;
    return b;
}

}  // namespace detail

inline std::string encode_batches(const std::vector<Batch>& batches) {
    std::string out;
    out.append(kDatasetMagic, sizeof kDatasetMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(batches.size()));
    for (const Batch& b : batches) detail::put_batch(out, b);
    return out;
}

inline std::vector<Batch> decode_batches(const std::string& in, const std::string& what) {
    if (in.size() < sizeof kDatasetMagic ||
        std::memcmp(in.data(), kDatasetMagic, sizeof kDatasetMagic) != 0)
        throw FormatError("dataset container: bad magic in " + what);
    std::size_t pos = sizeof kDatasetMagic;
    const std::uint32_t count = detail::get_u32(in, pos);
    std::vector<Batch> batches;
    batches.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) batches.push_back(detail::get_batch(in, pos));
    if (pos != in.size()) throw FormatError("dataset container: trailing bytes in " + what);
    return batches;
}

inline void write_batches(const std::filesystem::path& path, const std::vector<Batch>& batches) {
    write_file_atomic(path, encode_batches(batches));
}

inline std::vector<Batch> read_batches(const std::filesystem::path& path) {
    return decode_batches(read_file(path), path.string());
}

}  // namespace udjfl
