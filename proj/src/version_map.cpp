#include "lire/version_map.hpp"

#include <algorithm>
#include <mutex>

namespace lire {

namespace {
constexpr std::uint32_t kFormatVersion = 1;
constexpr char kMagic[4] = {'V', 'M', 'A', 'P'};
}  // namespace

std::atomic<std::uint8_t>* VersionMap::find(VectorId id) const {
    const Shard& s = shard(id);
    std::shared_lock lk(s.mu);
    auto it = s.map.find(id);
    if (it == s.map.end()) return nullptr;
    // Safe to hand out: nodes are never erased and rehash keeps them in place.
    return const_cast<std::atomic<std::uint8_t>*>(&it->second);
}

void VersionMap::register_id(VectorId id) {
    Shard& s = shard(id);
    std::unique_lock lk(s.mu);
    auto [it, inserted] = s.map.try_emplace(id, 0);
    if (!inserted) raise(ErrorCode::conflict, "vector id " + std::to_string(id) + " already known");
    live_.fetch_add(1, std::memory_order_relaxed);
}

std::optional<VersionEntry> VersionMap::lookup(VectorId id) const {
    auto* a = find(id);
    if (!a) return std::nullopt;
    return VersionEntry{a->load(std::memory_order_acquire)};
}

void VersionMap::mark_deleted(VectorId id) {
    auto* a = find(id);
    if (!a) raise(ErrorCode::not_found, "vector id " + std::to_string(id) + " unknown");
    std::uint8_t cur = a->load(std::memory_order_acquire);
    for (;;) {
        if (cur & VersionEntry::kDeletedBit)
            raise(ErrorCode::not_found, "vector id " + std::to_string(id) + " already deleted");
        if (a->compare_exchange_weak(cur, std::uint8_t(cur | VersionEntry::kDeletedBit),
                                     std::memory_order_acq_rel)) {
            live_.fetch_sub(1, std::memory_order_relaxed);
            return;
        }
    }
}

bool VersionMap::cas_bump(VectorId id, std::uint8_t observed_version) {
    auto* a = find(id);
    if (!a) return false;
    std::uint8_t expected = observed_version & VersionEntry::kVersionMask;
    std::uint8_t desired = VersionEntry::next_version(expected);
    return a->compare_exchange_strong(expected, desired, std::memory_order_acq_rel);
}

bool VersionMap::entry_is_current(VectorId id, std::uint8_t stored_version) const {
    auto* a = find(id);
    if (!a) return false;
    std::uint8_t raw = a->load(std::memory_order_acquire);
    if (raw & VersionEntry::kDeletedBit) return false;
    return (raw & VersionEntry::kVersionMask) == (stored_version & VersionEntry::kVersionMask);
}

std::vector<VectorId> VersionMap::live_ids() const {
    std::vector<VectorId> out;
    for (const Shard& s : shards_) {
        std::shared_lock lk(s.mu);
        for (const auto& [id, a] : s.map)
            if (!(a.load(std::memory_order_acquire) & VersionEntry::kDeletedBit)) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::uint8_t> VersionMap::snapshot() const {
    std::vector<std::pair<VectorId, std::uint8_t>> rows;
    for (const Shard& s : shards_) {
        std::shared_lock lk(s.mu);
        for (const auto& [id, a] : s.map) rows.emplace_back(id, a.load(std::memory_order_acquire));
    }
    std::sort(rows.begin(), rows.end());

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kFormatVersion);
    put_u64(out, rows.size());
    for (auto& [id, raw] : rows) {
        put_u64(out, id);
        put_u8(out, raw);
    }
    put_u32(out, crc32(out.data(), out.size()));
    return out;
}

void VersionMap::restore(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 + 4 + 8 + 4) raise(ErrorCode::corruption, "version snapshot too short");
    std::uint32_t stored_crc = 0;
    {
        ByteReader tail(bytes.data() + bytes.size() - 4, 4);
        stored_crc = tail.u32();
    }
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        raise(ErrorCode::corruption, "version snapshot checksum mismatch");

    ByteReader r(bytes.data(), bytes.size() - 4);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) raise(ErrorCode::corruption, "bad version snapshot magic");
    if (r.u32() != kFormatVersion) raise(ErrorCode::corruption, "unsupported version snapshot version");

    std::uint64_t n = r.u64();
    std::vector<std::pair<VectorId, std::uint8_t>> rows;
    rows.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        VectorId id = r.u64();
        std::uint8_t raw = r.u8();
        rows.emplace_back(id, raw);
    }
    if (r.remaining() != 0) raise(ErrorCode::corruption, "trailing bytes in version snapshot");

    for (Shard& s : shards_) {
        std::unique_lock lk(s.mu);
        s.map.clear();
    }
    std::uint64_t live = 0;
    for (auto& [id, raw] : rows) {
        Shard& s = shard(id);
        std::unique_lock lk(s.mu);
        s.map.try_emplace(id, raw);
        if (!(raw & VersionEntry::kDeletedBit)) ++live;
    }
    live_.store(live, std::memory_order_relaxed);
}

}  // namespace lire
