#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "lire/config.hpp"
#include "lire/engine.hpp"

namespace lire {

struct WalRecord {
    enum class Op : std::uint8_t { insert = 0, erase = 1 };

    std::uint64_t sequence = 0;
    Op op = Op::insert;
    VectorId vector_id = 0;
    Vector payload;  // empty for deletes
};

// Append-only log of foreground updates. One logical writer: appends are
// serialized and a record is on disk before the corresponding operation is
// acknowledged. Record layout (little-endian): sequence u64, op u8,
// vector_id u64, dim u32 (0 for delete), payload, crc32 of the body.
class WalWriter : public UpdateLog {
  public:
    // Opens for appending; sequence numbering starts at `next_sequence`.
    WalWriter(std::string path, IndexConfig cfg, std::uint64_t next_sequence = 1,
              bool sync_each = false);
    ~WalWriter() override;

    void append(const WalRecord& rec);  // invalid_state on a sequence gap

    void log_insert(VectorId id, const Vector& v) override;
    void log_delete(VectorId id) override;

    std::uint64_t next_sequence() const;

    // Drops every record below the watermark. Truncation only happens after
    // a snapshot is durable, at which point the watermark equals
    // next_sequence, so the whole file is reset.
    void truncate_below(std::uint64_t watermark);

  private:
    void write_record(const WalRecord& rec);

    mutable std::mutex mu_;
    std::string path_;
    IndexConfig cfg_;
    int fd_ = -1;
    std::uint64_t next_seq_;
    bool sync_each_;
};

struct WalReadResult {
    std::vector<WalRecord> records;
    bool tail_discarded = false;  // a torn or corrupt tail record was dropped
};

// Reads every well-formed record. Scanning stops at the first checksum
// mismatch, short record, or sequence discontinuity; everything after is
// discarded. A missing file reads as empty.
WalReadResult read_wal(const std::string& path, const IndexConfig& cfg);

}  // namespace lire
