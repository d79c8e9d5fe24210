#include "lire/snapshot.hpp"

#include <algorithm>
#include <filesystem>

#include "lire/io_format.hpp"

namespace fs = std::filesystem;

namespace lire {

namespace {
constexpr std::uint32_t kManifestVersion = 1;
constexpr char kMagic[4] = {'M', 'N', 'F', 'T'};

std::vector<std::uint8_t> encode_manifest(const SnapshotManifest& m) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kManifestVersion);
    put_u64(out, m.snapshot_id);
    put_u64(out, m.wal_low_watermark);
    put_u64(out, m.next_posting_id);
    put_u32(out, m.centroid_crc);
    put_u32(out, m.version_crc);
    put_u32(out, m.blockmap_crc);
    put_u32(out, crc32(out.data(), out.size()));
    return out;
}

SnapshotManifest decode_manifest(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() != 4 + 4 + 8 * 3 + 4 * 3 + 4)
        raise(ErrorCode::corruption, "manifest size mismatch");
    std::uint32_t stored = 0;
    {
        ByteReader tail(bytes.data() + bytes.size() - 4, 4);
        stored = tail.u32();
    }
    if (crc32(bytes.data(), bytes.size() - 4) != stored)
        raise(ErrorCode::corruption, "manifest checksum mismatch");
    ByteReader r(bytes.data(), bytes.size() - 4);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) raise(ErrorCode::corruption, "bad manifest magic");
    if (r.u32() != kManifestVersion) raise(ErrorCode::corruption, "unsupported manifest version");
    SnapshotManifest m;
    m.snapshot_id = r.u64();
    m.wal_low_watermark = r.u64();
    m.next_posting_id = r.u64();
    m.centroid_crc = r.u32();
    m.version_crc = r.u32();
    m.blockmap_crc = r.u32();
    return m;
}
}  // namespace

SnapshotManager::SnapshotManager(std::string dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    // Resume numbering above anything already on disk.
    for (const auto& e : fs::directory_iterator(dir_)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("snap-", 0) != 0) continue;
        std::uint64_t id = std::strtoull(name.c_str() + 5, nullptr, 10);
        next_id_ = std::max(next_id_, id + 1);
    }
}

std::string SnapshotManager::snap_dir(std::uint64_t id) const {
    return dir_ + "/snap-" + std::to_string(id);
}

SnapshotManifest SnapshotManager::take(Engine& engine, WalWriter* wal) {
    const std::uint64_t id = next_id_++;
    const std::string dir = snap_dir(id);
    fs::create_directories(dir);

    SnapshotManifest m;
    m.snapshot_id = id;
    {
        // Foreground acknowledgements and job execution pause for the flush
        // so the four components serialize as one consistent cut.
        auto guard = engine.quiesce();
        auto centroids = engine.centroids().snapshot();
        auto versions = engine.versions().snapshot();
        auto blockmap = engine.store().snapshot();
        m.wal_low_watermark = wal ? wal->next_sequence() : 1;
        m.next_posting_id = engine.next_posting_id();
        m.centroid_crc = crc32(centroids.data(), centroids.size());
        m.version_crc = crc32(versions.data(), versions.size());
        m.blockmap_crc = crc32(blockmap.data(), blockmap.size());

        engine.device().flush();
        write_file_bytes(dir + "/centroids.bin", centroids);
        write_file_bytes(dir + "/versions.bin", versions);
        write_file_bytes(dir + "/blockmap.bin", blockmap);

        if (fault_next_) {
            fault_next_ = false;
            raise(ErrorCode::io_error, "injected fault before manifest write");
        }
        write_file_atomic(dir + "/manifest.bin", encode_manifest(m));
    }

    // Only now may blocks freed since the previous snapshot be reused, and
    // the covered WAL prefix dropped.
    engine.store().promote_pre_release();
    if (wal) wal->truncate_below(m.wal_low_watermark);
    return m;
}

std::optional<SnapshotManifest> SnapshotManager::latest_valid() const {
    std::vector<std::uint64_t> ids;
    if (!fs::exists(dir_)) return std::nullopt;
    for (const auto& e : fs::directory_iterator(dir_)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("snap-", 0) != 0) continue;
        ids.push_back(std::strtoull(name.c_str() + 5, nullptr, 10));
    }
    std::sort(ids.rbegin(), ids.rend());
    for (std::uint64_t id : ids) {
        const std::string dir = snap_dir(id);
        try {
            auto m = decode_manifest(read_file_bytes(dir + "/manifest.bin"));
            auto c = read_file_bytes(dir + "/centroids.bin");
            auto v = read_file_bytes(dir + "/versions.bin");
            auto b = read_file_bytes(dir + "/blockmap.bin");
            if (crc32(c.data(), c.size()) != m.centroid_crc) continue;
            if (crc32(v.data(), v.size()) != m.version_crc) continue;
            if (crc32(b.data(), b.size()) != m.blockmap_crc) continue;
            return m;
        } catch (const Error&) {
            continue;  // missing or corrupt generation; fall back to the previous
        }
    }
    return std::nullopt;
}

SnapshotManifest SnapshotManager::restore_latest(Engine& engine) const {
    auto m = latest_valid();
    if (!m) raise(ErrorCode::unrecoverable, "no valid snapshot generation found");
    const std::string dir = snap_dir(m->snapshot_id);
    engine.centroids().restore(read_file_bytes(dir + "/centroids.bin"));
    engine.versions().restore(read_file_bytes(dir + "/versions.bin"));
    engine.store().restore(read_file_bytes(dir + "/blockmap.bin"));
    engine.set_next_posting_id(m->next_posting_id);
    return *m;
}

RecoveryResult recover(Engine& engine, const SnapshotManager& snaps, const std::string& wal_path) {
    RecoveryResult out;
    auto manifest = snaps.restore_latest(engine);
    out.snapshot_id = manifest.snapshot_id;
    out.next_wal_sequence = manifest.wal_low_watermark;

    auto wal = read_wal(wal_path, engine.config());
    for (const WalRecord& rec : wal.records) {
        if (rec.sequence < manifest.wal_low_watermark) continue;  // covered by the snapshot
        try {
            if (rec.op == WalRecord::Op::insert)
                engine.insert(rec.vector_id, rec.payload);
            else
                engine.remove(rec.vector_id);
        } catch (const Error& e) {
            // Replaying an operation the snapshot already caught: tolerated.
            if (e.code() != ErrorCode::conflict && e.code() != ErrorCode::not_found) throw;
        }
        ++out.replayed;
        out.next_wal_sequence = rec.sequence + 1;
    }

    engine.sweep_oversized();
    engine.drain_background();
    return out;
}

}  // namespace lire
