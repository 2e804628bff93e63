#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fenet/errors.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

// FENT tensor container: magic "FENT", version 0x01, dtype 0x01 (f32),
// u8 rank, rank little-endian u32 dims, row-major little-endian payload.

namespace detail {

inline void put_u32_le(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    buf.push_back(std::uint8_t(v & 0xff));
    buf.push_back(std::uint8_t((v >> 8) & 0xff));
    buf.push_back(std::uint8_t((v >> 16) & 0xff));
    buf.push_back(std::uint8_t((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
           (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_fent(const Tensor<float>& t) {
    std::vector<std::uint8_t> buf;
    buf.reserve(7 + 4 * t.rank() + 4 * t.numel());
    buf.insert(buf.end(), {'F', 'E', 'N', 'T'});
    buf.push_back(0x01);  // version
    buf.push_back(0x01);  // dtype f32
    if (t.rank() > 255) throw UsageError("fent: rank > 255 unsupported");
    buf.push_back(std::uint8_t(t.rank()));
    for (std::size_t d : t.shape()) {
        if (d > 0xffffffffULL) throw UsageError("fent: dim too large");
        detail::put_u32_le(buf, std::uint32_t(d));
    }
    for (std::size_t i = 0; i < t.numel(); ++i) {
        std::uint32_t bits;
        const float v = t.data()[i];
        std::memcpy(&bits, &v, 4);
        detail::put_u32_le(buf, bits);
    }
    return buf;
}

inline Tensor<float> decode_fent(const std::vector<std::uint8_t>& buf,
                                 const std::string& origin = "<memory>") {
    if (buf.size() < 7 || buf[0] != 'F' || buf[1] != 'E' || buf[2] != 'N' ||
        buf[3] != 'T') {
        throw DataError("fent: bad magic in " + origin);
    }
    if (buf[4] != 0x01) throw DataError("fent: unsupported version in " + origin);
    if (buf[5] != 0x01) throw DataError("fent: unsupported dtype in " + origin);
    const std::size_t rank = buf[6];
    std::size_t off = 7;
    if (buf.size() < off + 4 * rank) throw DataError("fent: truncated dims in " + origin);
    Shape shape(rank);
    for (std::size_t i = 0; i < rank; ++i, off += 4) {
        shape[i] = detail::get_u32_le(buf.data() + off);
        if (shape[i] == 0) throw DataError("fent: zero dim in " + origin);
    }
    const std::size_t n = shape_numel(shape);
    if (buf.size() != off + 4 * n) {
        throw DataError("fent: payload size mismatch in " + origin);
    }
    std::vector<float> values(n);
    for (std::size_t i = 0; i < n; ++i, off += 4) {
        const std::uint32_t bits = detail::get_u32_le(buf.data() + off);
        std::memcpy(&values[i], &bits, 4);
    }
    return Tensor<float>(std::move(shape), std::move(values));
}

inline void write_fent(const std::filesystem::path& path, const Tensor<float>& t) {
    const auto buf = encode_fent(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

inline Tensor<float> read_fent(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    return decode_fent(buf, path.string());
}

}  // namespace fenet
