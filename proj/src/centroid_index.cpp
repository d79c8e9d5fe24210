#include "lire/centroid_index.hpp"

#include <algorithm>
#include <mutex>

namespace lire {

namespace {
constexpr std::uint32_t kFormatVersion = 1;
constexpr char kMagic[4] = {'C', 'I', 'D', 'X'};
}  // namespace

void CentroidIndex::add_locked(PostingId posting_id, Vector centroid) {
    auto it = slot_.find(posting_id);
    if (it != slot_.end() && entries_[it->second].live)
        raise(ErrorCode::conflict, "posting " + std::to_string(posting_id) + " already live");
    entries_.push_back(Entry{posting_id, std::move(centroid), true});
    slot_[posting_id] = entries_.size() - 1;
    ++live_;
}

void CentroidIndex::remove_locked(PostingId posting_id) {
    auto it = slot_.find(posting_id);
    if (it == slot_.end() || !entries_[it->second].live)
        raise(ErrorCode::not_found, "posting " + std::to_string(posting_id) + " not live");
    entries_[it->second].live = false;
    --live_;
}

void CentroidIndex::add(PostingId posting_id, Vector centroid) {
    std::unique_lock lk(mu_);
    add_locked(posting_id, std::move(centroid));
}

void CentroidIndex::remove(PostingId posting_id) {
    std::unique_lock lk(mu_);
    remove_locked(posting_id);
}

void CentroidIndex::replace(const std::vector<PostingId>& removed,
                            std::vector<std::pair<PostingId, Vector>> added) {
    std::unique_lock lk(mu_);
    for (PostingId pid : removed) remove_locked(pid);
    for (auto& [pid, c] : added) add_locked(pid, std::move(c));
}

std::vector<std::pair<PostingId, float>> CentroidIndex::search(const Vector& q,
                                                               std::size_t k) const {
    std::shared_lock lk(mu_);
    TopK top(k);
    for (const Entry& e : entries_) {
        if (!e.live) continue;
        top.offer(squared_l2(q, e.centroid), e.posting_id);
    }
    auto pairs = top.take();
    std::vector<std::pair<PostingId, float>> out;
    out.reserve(pairs.size());
    for (auto& [d, id] : pairs) out.emplace_back(id, d);
    return out;
}

bool CentroidIndex::is_live(PostingId posting_id) const {
    std::shared_lock lk(mu_);
    auto it = slot_.find(posting_id);
    return it != slot_.end() && entries_[it->second].live;
}

std::optional<Vector> CentroidIndex::centroid_of(PostingId posting_id) const {
    std::shared_lock lk(mu_);
    auto it = slot_.find(posting_id);
    if (it == slot_.end() || !entries_[it->second].live) return std::nullopt;
    return entries_[it->second].centroid;
}

std::size_t CentroidIndex::live_count() const {
    std::shared_lock lk(mu_);
    return live_;
}

std::vector<std::pair<PostingId, Vector>> CentroidIndex::live_entries() const {
    std::shared_lock lk(mu_);
    std::vector<std::pair<PostingId, Vector>> out;
    out.reserve(live_);
    for (const Entry& e : entries_)
        if (e.live) out.emplace_back(e.posting_id, e.centroid);
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

std::vector<std::uint8_t> CentroidIndex::snapshot() const {
    std::shared_lock lk(mu_);
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kFormatVersion);
    put_u64(out, entries_.size());
    for (const Entry& e : entries_) {
        put_u64(out, e.posting_id);
        put_u8(out, e.live ? 1 : 0);
        put_u32(out, static_cast<std::uint32_t>(e.centroid.size()));
        for (float f : e.centroid) put_f32(out, f);
    }
    put_u32(out, crc32(out.data(), out.size()));
    return out;
}

void CentroidIndex::restore(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 + 4 + 8 + 4) raise(ErrorCode::corruption, "centroid snapshot too short");
    std::uint32_t stored_crc = 0;
    {
        ByteReader tail(bytes.data() + bytes.size() - 4, 4);
        stored_crc = tail.u32();
    }
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        raise(ErrorCode::corruption, "centroid snapshot checksum mismatch");

    ByteReader r(bytes.data(), bytes.size() - 4);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) raise(ErrorCode::corruption, "bad centroid snapshot magic");
    if (r.u32() != kFormatVersion) raise(ErrorCode::corruption, "unsupported centroid snapshot version");

    std::vector<Entry> entries;
    std::unordered_map<PostingId, std::size_t> slot;
    std::size_t live = 0;
    std::uint64_t n = r.u64();
    entries.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Entry e;
        e.posting_id = r.u64();
        e.live = r.u8() != 0;
        std::uint32_t dim = r.u32();
        e.centroid.resize(dim);
        for (std::uint32_t d = 0; d < dim; ++d) e.centroid[d] = r.f32();
        entries.push_back(std::move(e));
        slot[entries.back().posting_id] = entries.size() - 1;
        if (entries.back().live) ++live;
    }
    if (r.remaining() != 0) raise(ErrorCode::corruption, "trailing bytes in centroid snapshot");

    std::unique_lock lk(mu_);
    entries_ = std::move(entries);
    slot_ = std::move(slot);
    live_ = live;
}

}  // namespace lire
