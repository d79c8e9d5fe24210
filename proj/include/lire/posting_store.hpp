#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "lire/block_device.hpp"
#include "lire/config.hpp"

namespace lire {

// One serialized unit inside a posting: id, version byte, raw vector.
// Fixed width per index config: 8 + 1 + dim * element_width bytes.
struct PostingEntry {
    VectorId id = 0;
    std::uint8_t version = 0;
    Vector vec;

    bool operator==(const PostingEntry&) const = default;
};

// I/O breakdown of a single mutation, for the append-locality checks.
struct IoBreakdown {
    std::uint32_t existing_block_reads = 0;
    std::uint32_t blocks_written = 0;
    std::uint32_t blocks_released = 0;
    std::uint32_t resulting_entry_count = 0;
};

struct GetMiss {
    PostingId posting_id;
};

// Append-optimized posting store over a block device. The store guarantees
// atomic block-map entry swaps and thread-safe pool operations; mutations to
// the same posting are serialized by the caller (the engine's per-posting
// write locks). Blocks are never rewritten in place: every write lands on a
// freshly allocated offset and replaced blocks move to the pre-release
// buffer, which joins the free pool only after the next snapshot.
class PostingStore {
  public:
    PostingStore(std::shared_ptr<BlockDevice> device, const IndexConfig& cfg);

    std::vector<PostingEntry> get(PostingId posting_id) const;

    struct ParallelGetResult {
        // One slot per requested id, input order; nullopt where the posting
        // is unknown, with the miss recorded in `missing`.
        std::vector<std::optional<std::vector<PostingEntry>>> postings;
        std::vector<GetMiss> missing;
    };
    ParallelGetResult parallel_get(const std::vector<PostingId>& posting_ids) const;

    IoBreakdown append(PostingId posting_id, const std::vector<PostingEntry>& new_entries);
    IoBreakdown put(PostingId posting_id, const std::vector<PostingEntry>& entries);
    void delete_posting(PostingId posting_id);

    bool exists(PostingId posting_id) const;
    std::uint32_t entry_count(PostingId posting_id) const;  // not_found if absent
    std::vector<std::pair<PostingId, std::uint32_t>> posting_sizes() const;
    std::size_t block_count_of(PostingId posting_id) const;
    std::vector<std::uint64_t> blocks_of(PostingId posting_id) const;
    bool block_referenced(std::uint64_t offset) const;  // held by any live map entry

    std::vector<std::uint8_t> snapshot() const;
    // Restores map + free pool from a snapshot. Blocks that end up neither
    // free nor referenced are parked in pre-release so the conservation
    // invariant holds after a crash.
    void restore(const std::vector<std::uint8_t>& bytes);

    void promote_pre_release();

    std::size_t free_blocks() const;
    std::size_t pre_release_blocks() const;
    std::size_t live_postings() const;

    // Block conservation: free, pre-release and live-referenced blocks must
    // partition the device with no offset in two sets. Throws on violation.
    void verify_conservation() const;

    BlockDevice& device() { return *device_; }
    const BlockDevice& device() const { return *device_; }

  private:
    struct MapEntry {
        std::uint32_t entry_count = 0;
        std::vector<std::uint64_t> offsets;
    };

    std::vector<std::uint64_t> allocate(std::size_t n);  // lowest-offset-first
    void release_to_pre(const std::vector<std::uint64_t>& offsets);
    void return_to_free(const std::vector<std::uint64_t>& offsets);  // failed-allocation rollback

    std::vector<std::uint8_t> serialize_entries(const std::vector<PostingEntry>& entries) const;
    std::vector<PostingEntry> read_entries(const MapEntry& e) const;

    std::shared_ptr<BlockDevice> device_;
    IndexConfig cfg_;

    mutable std::shared_mutex map_mu_;
    std::unordered_map<PostingId, MapEntry> map_;

    mutable std::mutex pool_mu_;
    std::set<std::uint64_t> free_;
    std::set<std::uint64_t> pre_release_;
};

}  // namespace lire
