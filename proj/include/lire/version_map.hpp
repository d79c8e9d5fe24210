#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "lire/common.hpp"
#include "lire/config.hpp"

namespace lire {

// Sole authority on per-vector liveness and staleness. An on-disk entry is
// live iff its stored version equals the map's current reassign version and
// the tombstone bit is clear. Entries are never removed; ids are never
// reused within one index lifetime.
//
// Lookup pointers stay valid forever (node-based map, no erase), so version
// bumps and tombstones are plain CAS loops on the entry byte.
class VersionMap {
  public:
    // Registers a new id at version 0. Throws conflict if the id was ever seen.
    void register_id(VectorId id);

    std::optional<VersionEntry> lookup(VectorId id) const;

    // Sets the tombstone bit. Throws not_found when the id is unknown or
    // already deleted.
    void mark_deleted(VectorId id);

    // Single version bump: succeeds iff the entry still equals `observed`
    // and is not deleted.
    bool cas_bump(VectorId id, std::uint8_t observed_version);

    // True iff the id is live and `stored_version` is its current version.
    bool entry_is_current(VectorId id, std::uint8_t stored_version) const;

    std::uint64_t live_count() const { return live_.load(std::memory_order_relaxed); }
    std::vector<VectorId> live_ids() const;

    std::vector<std::uint8_t> snapshot() const;
    void restore(const std::vector<std::uint8_t>& bytes);

  private:
    struct Shard {
        mutable std::shared_mutex mu;
        std::unordered_map<VectorId, std::atomic<std::uint8_t>> map;
    };
    static constexpr std::size_t kShards = 64;

    Shard& shard(VectorId id) { return shards_[id % kShards]; }
    const Shard& shard(VectorId id) const { return shards_[id % kShards]; }
    std::atomic<std::uint8_t>* find(VectorId id) const;

    Shard shards_[kShards];
    std::atomic<std::uint64_t> live_{0};
};

}  // namespace lire
