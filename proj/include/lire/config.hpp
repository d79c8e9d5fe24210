#pragma once

#include <cstdint>
#include <string>

#include "lire/common.hpp"

namespace lire {

enum class ElementType : std::uint8_t { float32 = 0, uint8 = 1 };

inline std::size_t element_width(ElementType t) { return t == ElementType::float32 ? 4 : 1; }

// One-byte per-vector version entry: seven bits of reassign counter plus a
// tombstone bit. Once the tombstone is set the entry never goes live again.
struct VersionEntry {
    static constexpr std::uint8_t kDeletedBit = 0x80;
    static constexpr std::uint8_t kVersionMask = 0x7f;

    std::uint8_t raw = 0;

    std::uint8_t version() const { return raw & kVersionMask; }
    bool deleted() const { return (raw & kDeletedBit) != 0; }

    static std::uint8_t next_version(std::uint8_t v) { return (v + 1) & kVersionMask; }

    // v_new is newer than v_old iff their modular distance lies in [1, 64].
    // Tolerates 7-bit wraparound; more than 64 outstanding reassigns of one
    // vector would be needed to confuse it.
    static bool newer(std::uint8_t v_new, std::uint8_t v_old) {
        std::uint8_t d = (v_new - v_old) & kVersionMask;
        return d >= 1 && d <= 64;
    }
};

struct IndexConfig {
    std::uint32_t dim = 16;
    ElementType element_type = ElementType::float32;
    std::uint32_t split_limit = 32;       // max entries per posting before a split job fires
    std::uint32_t merge_threshold = 4;    // postings scanned below this enqueue a merge
    std::uint32_t reassign_range = 8;     // nearby postings scanned after a split
    std::uint32_t nprobe = 8;             // postings fetched per search
    std::uint32_t replica_count = 2;      // max postings a boundary vector lives in
    double replica_distance_ratio = 1.2;  // replica admitted when dist <= ratio * d1
    std::uint32_t block_size = 4096;

    std::size_t entry_width() const { return 8 + 1 + std::size_t(dim) * element_width(element_type); }

    void validate() const {
        if (dim == 0) raise(ErrorCode::invalid_argument, "dim must be positive");
        if (split_limit == 0) raise(ErrorCode::invalid_argument, "split_limit must be positive");
        if (merge_threshold >= split_limit)
            raise(ErrorCode::invalid_argument, "merge_threshold must be < split_limit");
        if (nprobe == 0) raise(ErrorCode::invalid_argument, "nprobe must be positive");
        if (replica_count == 0 || replica_count > nprobe)
            raise(ErrorCode::invalid_argument, "replica_count must be in [1, nprobe]");
        if (replica_distance_ratio < 1.0)
            raise(ErrorCode::invalid_argument, "replica_distance_ratio must be >= 1.0");
        if (block_size == 0 || (block_size & (block_size - 1)) != 0)
            raise(ErrorCode::invalid_argument, "block_size must be a power of two");
        if (entry_width() > block_size)
            raise(ErrorCode::invalid_argument, "one entry must fit in a block");
    }
};

}  // namespace lire
