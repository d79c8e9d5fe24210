#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace lire {

using VectorId = std::uint64_t;
using PostingId = std::uint64_t;

// All vectors are held as float in memory; element_type only changes the
// on-disk encoding (uint8 components must be integral and fit one byte).
using Vector = std::vector<float>;

enum class ErrorCode {
    invalid_argument,
    invalid_state,
    not_found,
    conflict,
    out_of_space,
    corruption,
    io_error,
    unrecoverable,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

// CRC-32 (IEEE 802.3 polynomial, reflected), used by every on-disk format.
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

// Little-endian encode/decode helpers. The host is assumed little-endian or
// at least tolerant of byte-level packing; all formats are byte-exact.
inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

// Cursor over a byte buffer; throws corruption on under-run.
struct ByteReader {
    const std::uint8_t* p;
    std::size_t len;
    std::size_t pos = 0;

    ByteReader(const void* data, std::size_t n) : p(static_cast<const std::uint8_t*>(data)), len(n) {}

    void need(std::size_t n) const {
        if (pos + n > len) raise(ErrorCode::corruption, "truncated byte stream");
    }
    std::uint8_t u8() {
        need(1);
        return p[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void bytes(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, p + pos, n);
        pos += n;
    }
    std::size_t remaining() const { return len - pos; }
};

}  // namespace lire
