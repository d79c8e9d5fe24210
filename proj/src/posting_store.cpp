#include "lire/posting_store.hpp"

#include <algorithm>
#include <cmath>

namespace lire {

namespace {
constexpr std::uint32_t kFormatVersion = 1;
constexpr char kMagic[4] = {'B', 'M', 'A', 'P'};
}  // namespace

PostingStore::PostingStore(std::shared_ptr<BlockDevice> device, const IndexConfig& cfg)
    : device_(std::move(device)), cfg_(cfg) {
    cfg_.validate();
    if (device_->block_size() != cfg_.block_size)
        raise(ErrorCode::invalid_argument, "device/config block size mismatch");
    for (std::uint64_t b = 0; b < device_->block_count(); ++b) free_.insert(b);
}

std::vector<std::uint8_t> PostingStore::serialize_entries(
    const std::vector<PostingEntry>& entries) const {
    std::vector<std::uint8_t> out;
    out.reserve(entries.size() * cfg_.entry_width());
    for (const PostingEntry& e : entries) {
        if (e.vec.size() != cfg_.dim) raise(ErrorCode::invalid_argument, "entry dimension mismatch");
        put_u64(out, e.id);
        put_u8(out, e.version);
        if (cfg_.element_type == ElementType::float32) {
            for (float f : e.vec) put_f32(out, f);
        } else {
            for (float f : e.vec) put_u8(out, static_cast<std::uint8_t>(std::lround(f)));
        }
    }
    return out;
}

std::vector<PostingEntry> PostingStore::read_entries(const MapEntry& e) const {
    const std::size_t bs = cfg_.block_size;
    const std::size_t w = cfg_.entry_width();
    const std::size_t bytes = std::size_t(e.entry_count) * w;
    if ((bytes + bs - 1) / bs != e.offsets.size())
        raise(ErrorCode::corruption, "block list inconsistent with entry count");

    std::vector<std::uint8_t> raw(e.offsets.size() * bs);
    for (std::size_t i = 0; i < e.offsets.size(); ++i)
        device_->read_block(e.offsets[i], std::span(raw.data() + i * bs, bs));

    std::vector<PostingEntry> out;
    out.reserve(e.entry_count);
    ByteReader r(raw.data(), bytes);
    for (std::uint32_t i = 0; i < e.entry_count; ++i) {
        PostingEntry pe;
        pe.id = r.u64();
        pe.version = r.u8();
        pe.vec.resize(cfg_.dim);
        if (cfg_.element_type == ElementType::float32) {
            for (std::uint32_t d = 0; d < cfg_.dim; ++d) pe.vec[d] = r.f32();
        } else {
            for (std::uint32_t d = 0; d < cfg_.dim; ++d) pe.vec[d] = float(r.u8());
        }
        out.push_back(std::move(pe));
    }
    return out;
}

std::vector<PostingEntry> PostingStore::get(PostingId posting_id) const {
    MapEntry e;
    {
        std::shared_lock lk(map_mu_);
        auto it = map_.find(posting_id);
        if (it == map_.end())
            raise(ErrorCode::not_found, "posting " + std::to_string(posting_id) + " unknown");
        e = it->second;
    }
    return read_entries(e);
}

PostingStore::ParallelGetResult PostingStore::parallel_get(
    const std::vector<PostingId>& posting_ids) const {
    ParallelGetResult res;
    res.postings.resize(posting_ids.size());
    std::vector<std::uint8_t> miss(posting_ids.size(), 0);

    // Entry lookups are snapshotted first so every read in the batch sees the
    // map as of one point; block reads then overlap freely.
    std::vector<std::optional<MapEntry>> entries(posting_ids.size());
    {
        std::shared_lock lk(map_mu_);
        for (std::size_t i = 0; i < posting_ids.size(); ++i) {
            auto it = map_.find(posting_ids[i]);
            if (it != map_.end())
                entries[i] = it->second;
            else
                miss[i] = 1;
        }
    }

    const bool overlap = device_->concurrent_reads_help() && posting_ids.size() > 1;
#pragma omp parallel for schedule(dynamic, 1) if (overlap)
    for (long i = 0; i < long(posting_ids.size()); ++i) {
        if (entries[i]) res.postings[i] = read_entries(*entries[i]);
    }

    for (std::size_t i = 0; i < posting_ids.size(); ++i)
        if (miss[i]) res.missing.push_back(GetMiss{posting_ids[i]});
    return res;
}

std::vector<std::uint64_t> PostingStore::allocate(std::size_t n) {
    std::lock_guard lk(pool_mu_);
    if (free_.size() < n) raise(ErrorCode::out_of_space, "device full");
    std::vector<std::uint64_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = free_.begin();
        out.push_back(*it);
        free_.erase(it);
    }
    return out;
}

void PostingStore::release_to_pre(const std::vector<std::uint64_t>& offsets) {
    std::lock_guard lk(pool_mu_);
    for (auto o : offsets) pre_release_.insert(o);
}

void PostingStore::return_to_free(const std::vector<std::uint64_t>& offsets) {
    std::lock_guard lk(pool_mu_);
    for (auto o : offsets) free_.insert(o);
}

IoBreakdown PostingStore::append(PostingId posting_id, const std::vector<PostingEntry>& new_entries) {
    IoBreakdown io;
    if (new_entries.empty()) return io;

    const std::size_t bs = cfg_.block_size;
    const std::size_t w = cfg_.entry_width();
    std::vector<std::uint8_t> new_bytes = serialize_entries(new_entries);

    for (;;) {
        io = IoBreakdown{};
        MapEntry seen;
        {
            std::shared_lock lk(map_mu_);
            auto it = map_.find(posting_id);
            if (it == map_.end())
                raise(ErrorCode::not_found, "posting " + std::to_string(posting_id) + " unknown");
            seen = it->second;
        }

        const std::size_t old_bytes = std::size_t(seen.entry_count) * w;
        const std::size_t tail_fill = old_bytes % bs;

        // Tail rebuild: the partially filled last block is read once and its
        // contents carried into fresh blocks; full blocks are never touched.
        std::vector<std::uint8_t> stream;
        stream.reserve(tail_fill + new_bytes.size());
        if (tail_fill > 0) {
            std::vector<std::uint8_t> tail(bs);
            device_->read_block(seen.offsets.back(), std::span(tail.data(), bs));
            io.existing_block_reads = 1;
            stream.insert(stream.end(), tail.begin(), tail.begin() + tail_fill);
        }
        stream.insert(stream.end(), new_bytes.begin(), new_bytes.end());

        const std::size_t fresh_count = (stream.size() + bs - 1) / bs;
        std::vector<std::uint64_t> fresh = allocate(fresh_count);
        stream.resize(fresh_count * bs, 0);
        for (std::size_t i = 0; i < fresh_count; ++i)
            device_->write_block(fresh[i], std::span<const std::uint8_t>(stream.data() + i * bs, bs));
        io.blocks_written = std::uint32_t(fresh_count);

        MapEntry next;
        next.entry_count = seen.entry_count + std::uint32_t(new_entries.size());
        next.offsets.assign(seen.offsets.begin(),
                            tail_fill > 0 ? seen.offsets.end() - 1 : seen.offsets.end());
        next.offsets.insert(next.offsets.end(), fresh.begin(), fresh.end());

        {
            std::unique_lock lk(map_mu_);
            auto it = map_.find(posting_id);
            if (it != map_.end() && it->second.entry_count == seen.entry_count &&
                it->second.offsets == seen.offsets) {
                it->second = std::move(next);
                if (tail_fill > 0) {
                    release_to_pre({seen.offsets.back()});
                    io.blocks_released = 1;
                }
                io.resulting_entry_count = seen.entry_count + std::uint32_t(new_entries.size());
                return io;
            }
        }
        // Entry changed underneath us (or the posting vanished): the fresh
        // blocks were never published, so they go straight back to free.
        return_to_free(fresh);
    }
}

IoBreakdown PostingStore::put(PostingId posting_id, const std::vector<PostingEntry>& entries) {
    IoBreakdown io;
    const std::size_t bs = cfg_.block_size;
    std::vector<std::uint8_t> stream = serialize_entries(entries);
    const std::size_t fresh_count = (stream.size() + bs - 1) / bs;

    std::vector<std::uint64_t> fresh = allocate(fresh_count);
    stream.resize(fresh_count * bs, 0);
    for (std::size_t i = 0; i < fresh_count; ++i)
        device_->write_block(fresh[i], std::span<const std::uint8_t>(stream.data() + i * bs, bs));
    io.blocks_written = std::uint32_t(fresh_count);

    MapEntry next;
    next.entry_count = std::uint32_t(entries.size());
    next.offsets = std::move(fresh);

    std::vector<std::uint64_t> replaced;
    {
        std::unique_lock lk(map_mu_);
        auto it = map_.find(posting_id);
        if (it != map_.end()) replaced = std::move(it->second.offsets);
        map_[posting_id] = std::move(next);
    }
    if (!replaced.empty()) {
        io.blocks_released = std::uint32_t(replaced.size());
        release_to_pre(replaced);
    }
    io.resulting_entry_count = std::uint32_t(entries.size());
    return io;
}

void PostingStore::delete_posting(PostingId posting_id) {
    std::vector<std::uint64_t> blocks;
    {
        std::unique_lock lk(map_mu_);
        auto it = map_.find(posting_id);
        if (it == map_.end())
            raise(ErrorCode::not_found, "posting " + std::to_string(posting_id) + " unknown");
        blocks = std::move(it->second.offsets);
        map_.erase(it);
    }
    release_to_pre(blocks);
}

bool PostingStore::exists(PostingId posting_id) const {
    std::shared_lock lk(map_mu_);
    return map_.count(posting_id) != 0;
}

std::uint32_t PostingStore::entry_count(PostingId posting_id) const {
    std::shared_lock lk(map_mu_);
    auto it = map_.find(posting_id);
    if (it == map_.end())
        raise(ErrorCode::not_found, "posting " + std::to_string(posting_id) + " unknown");
    return it->second.entry_count;
}

std::vector<std::pair<PostingId, std::uint32_t>> PostingStore::posting_sizes() const {
    std::shared_lock lk(map_mu_);
    std::vector<std::pair<PostingId, std::uint32_t>> out;
    out.reserve(map_.size());
    for (const auto& [pid, e] : map_) out.emplace_back(pid, e.entry_count);
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t PostingStore::block_count_of(PostingId posting_id) const {
    std::shared_lock lk(map_mu_);
    auto it = map_.find(posting_id);
    if (it == map_.end())
        raise(ErrorCode::not_found, "posting " + std::to_string(posting_id) + " unknown");
    return it->second.offsets.size();
}

std::vector<std::uint64_t> PostingStore::blocks_of(PostingId posting_id) const {
    std::shared_lock lk(map_mu_);
    auto it = map_.find(posting_id);
    if (it == map_.end())
        raise(ErrorCode::not_found, "posting " + std::to_string(posting_id) + " unknown");
    return it->second.offsets;
}

bool PostingStore::block_referenced(std::uint64_t offset) const {
    std::shared_lock lk(map_mu_);
    for (const auto& [pid, e] : map_)
        for (auto o : e.offsets)
            if (o == offset) return true;
    return false;
}

std::vector<std::uint8_t> PostingStore::snapshot() const {
    std::shared_lock lk(map_mu_);
    std::lock_guard plk(pool_mu_);

    std::vector<PostingId> pids;
    pids.reserve(map_.size());
    for (const auto& [pid, e] : map_) pids.push_back(pid);
    std::sort(pids.begin(), pids.end());

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kFormatVersion);
    put_u32(out, cfg_.block_size);
    put_u64(out, device_->block_count());
    put_u64(out, pids.size());
    for (PostingId pid : pids) {
        const MapEntry& e = map_.at(pid);
        put_u64(out, pid);
        put_u32(out, e.entry_count);
        put_u32(out, std::uint32_t(e.offsets.size()));
        for (auto o : e.offsets) put_u64(out, o);
    }
    put_u64(out, free_.size());
    for (auto o : free_) put_u64(out, o);
    put_u32(out, crc32(out.data(), out.size()));
    return out;
}

void PostingStore::restore(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 + 4 + 4 + 8 + 8 + 8 + 4)
        raise(ErrorCode::corruption, "store snapshot too short");
    std::uint32_t stored_crc = 0;
    {
        ByteReader tail(bytes.data() + bytes.size() - 4, 4);
        stored_crc = tail.u32();
    }
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        raise(ErrorCode::corruption, "store snapshot checksum mismatch");

    ByteReader r(bytes.data(), bytes.size() - 4);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) raise(ErrorCode::corruption, "bad store snapshot magic");
    if (r.u32() != kFormatVersion) raise(ErrorCode::corruption, "unsupported store snapshot version");
    if (r.u32() != cfg_.block_size) raise(ErrorCode::corruption, "snapshot block size mismatch");
    if (r.u64() != device_->block_count())
        raise(ErrorCode::corruption, "snapshot block count mismatch");

    std::unordered_map<PostingId, MapEntry> map;
    std::set<std::uint64_t> referenced;
    std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        PostingId pid = r.u64();
        MapEntry e;
        e.entry_count = r.u32();
        std::uint32_t m = r.u32();
        e.offsets.reserve(m);
        for (std::uint32_t j = 0; j < m; ++j) {
            std::uint64_t o = r.u64();
            if (o >= device_->block_count()) raise(ErrorCode::corruption, "offset out of range");
            if (!referenced.insert(o).second) raise(ErrorCode::corruption, "offset referenced twice");
            e.offsets.push_back(o);
        }
        map[pid] = std::move(e);
    }
    std::set<std::uint64_t> free;
    std::uint64_t fn = r.u64();
    for (std::uint64_t i = 0; i < fn; ++i) {
        std::uint64_t o = r.u64();
        if (o >= device_->block_count()) raise(ErrorCode::corruption, "free offset out of range");
        if (referenced.count(o)) raise(ErrorCode::corruption, "offset both free and referenced");
        free.insert(o);
    }
    if (r.remaining() != 0) raise(ErrorCode::corruption, "trailing bytes in store snapshot");

    // Anything neither free nor referenced was pre-release at snapshot time
    // (or freed afterwards); it stays withheld until the next snapshot.
    std::set<std::uint64_t> pre;
    for (std::uint64_t o = 0; o < device_->block_count(); ++o)
        if (!free.count(o) && !referenced.count(o)) pre.insert(o);

    std::unique_lock lk(map_mu_);
    std::lock_guard plk(pool_mu_);
    map_ = std::move(map);
    free_ = std::move(free);
    pre_release_ = std::move(pre);
}

void PostingStore::promote_pre_release() {
    std::lock_guard lk(pool_mu_);
    free_.merge(pre_release_);
    pre_release_.clear();
}

std::size_t PostingStore::free_blocks() const {
    std::lock_guard lk(pool_mu_);
    return free_.size();
}

std::size_t PostingStore::pre_release_blocks() const {
    std::lock_guard lk(pool_mu_);
    return pre_release_.size();
}

std::size_t PostingStore::live_postings() const {
    std::shared_lock lk(map_mu_);
    return map_.size();
}

void PostingStore::verify_conservation() const {
    std::shared_lock lk(map_mu_);
    std::lock_guard plk(pool_mu_);
    std::vector<std::uint8_t> seen(device_->block_count(), 0);
    auto mark = [&](std::uint64_t o, const char* what) {
        if (o >= seen.size()) raise(ErrorCode::corruption, std::string(what) + ": offset out of range");
        if (seen[o]++) raise(ErrorCode::corruption, std::string(what) + ": offset in two sets");
    };
    for (auto o : free_) mark(o, "free");
    for (auto o : pre_release_) mark(o, "pre_release");
    for (const auto& [pid, e] : map_)
        for (auto o : e.offsets) mark(o, "map");
    for (std::uint64_t o = 0; o < seen.size(); ++o)
        if (!seen[o]) raise(ErrorCode::corruption, "orphaned block offset");
}

}  // namespace lire
