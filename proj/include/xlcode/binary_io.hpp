#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "error.hpp"

// Little-endian primitives shared by the EMBT, PROJ and EMBS containers.
namespace xlcode::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if_needed(T v) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        return v;
    } else {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
            std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
}

template <typename T>
void write(std::ostream& out, T v) {
    v = byteswap_if_needed(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write(out, v); }
inline void write_u32(std::ostream& out, std::uint32_t v) { write(out, v); }
inline void write_f32(std::ostream& out, float v) { write(out, v); }

inline void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

template <typename T>
T read(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw FormatError("unexpected EOF");
    return byteswap_if_needed(v);
}

inline std::uint8_t read_u8(std::istream& in) { return read<std::uint8_t>(in); }
inline std::uint32_t read_u32(std::istream& in) { return read<std::uint32_t>(in); }
inline float read_f32(std::istream& in) { return read<float>(in); }

inline std::string read_bytes(std::istream& in, std::size_t n) {
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw FormatError("unexpected EOF");
    return s;
}

inline void expect_magic(std::istream& in, std::string_view magic) {
    std::string got;
    try {
        got = read_bytes(in, magic.size());
    } catch (const FormatError&) {
        throw FormatError("unexpected EOF while reading magic");
    }
    if (got != magic)
        throw FormatError("bad magic: expected \"" + std::string(magic) + "\"");
}

} // namespace xlcode::binio
