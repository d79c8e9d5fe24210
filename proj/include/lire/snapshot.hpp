#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "lire/engine.hpp"
#include "lire/wal.hpp"

namespace lire {

struct SnapshotManifest {
    std::uint64_t snapshot_id = 0;
    std::uint64_t wal_low_watermark = 1;  // first sequence not covered
    std::uint64_t next_posting_id = 0;
    std::uint32_t centroid_crc = 0;
    std::uint32_t version_crc = 0;
    std::uint32_t blockmap_crc = 0;
};

// Periodic full snapshots of the in-memory structures under
// <dir>/snap-<id>/{centroids.bin, versions.bin, blockmap.bin, manifest.bin}.
// The manifest is written last; a snapshot without a valid manifest is
// treated as absent. Pre-release blocks are promoted and the WAL reset only
// after the manifest is durable.
class SnapshotManager {
  public:
    explicit SnapshotManager(std::string dir);

    SnapshotManifest take(Engine& engine, WalWriter* wal);

    // Test hook: the next take() writes every component but no manifest,
    // simulating a crash mid-snapshot. State on disk stays recoverable from
    // the previous generation.
    void fail_next_before_manifest() { fault_next_ = true; }

    std::optional<SnapshotManifest> latest_valid() const;

    // Restores the latest valid generation into a freshly constructed engine
    // over the original device file. Throws unrecoverable when none exists.
    SnapshotManifest restore_latest(Engine& engine) const;

  private:
    std::string snap_dir(std::uint64_t id) const;

    std::string dir_;
    std::uint64_t next_id_ = 1;
    bool fault_next_ = false;
};

struct RecoveryResult {
    std::uint64_t snapshot_id = 0;
    std::uint64_t replayed = 0;
    std::uint64_t next_wal_sequence = 1;
};

// Restore latest snapshot, replay the WAL tail through the normal update
// paths (replays of already-applied operations are tolerated as no-ops),
// re-enqueue splits for anything a crash left oversized, drain.
RecoveryResult recover(Engine& engine, const SnapshotManager& snaps, const std::string& wal_path);

}  // namespace lire
