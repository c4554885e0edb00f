#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "almt/errors.hpp"

// Little-endian binary encoding helpers shared by the MMF and checkpoint
// writers/readers.

namespace almt::binio {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t at = 0;
    const char* source = "stream";

    void need(std::size_t n, const char* what) const {
        if (at + n > buf.size())
            throw FormatError(std::string(source) + ": truncated while reading " + what +
                              " at byte " + std::to_string(at));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<std::uint8_t>(buf[at + static_cast<std::size_t>(i)]);
        at += 4;
        return v;
    }
    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(at, n);
        at += n;
        return s;
    }
};

} // namespace almt::binio
