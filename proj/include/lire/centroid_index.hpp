#pragma once

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lire/common.hpp"
#include "lire/distance.hpp"

namespace lire {

// In-memory navigation structure over posting centroids. Search is an exact
// scan over the live set, so its output equals brute force by construction;
// the interface allows swapping in an approximate structure later.
//
// Writers (add/remove/replace) are serialized; any number of readers may
// search concurrently. A replace is published atomically: a reader sees the
// centroid set either before or after it, never in between.
class CentroidIndex {
  public:
    struct Entry {
        PostingId posting_id;
        Vector centroid;
        bool live;
    };

    void add(PostingId posting_id, Vector centroid);
    void remove(PostingId posting_id);

    // Atomic remove-then-add, used to publish split/merge results.
    void replace(const std::vector<PostingId>& removed,
                 std::vector<std::pair<PostingId, Vector>> added);

    // Up to k nearest live centroids, ascending by (distance, posting_id).
    // An empty index yields an empty list.
    std::vector<std::pair<PostingId, float>> search(const Vector& q, std::size_t k) const;

    bool is_live(PostingId posting_id) const;
    std::optional<Vector> centroid_of(PostingId posting_id) const;  // live entries only
    std::size_t live_count() const;
    // Snapshot of the live set (posting_id ascending).
    std::vector<std::pair<PostingId, Vector>> live_entries() const;

    std::vector<std::uint8_t> snapshot() const;
    // Replaces the current contents. Throws corruption on a bad stream and
    // leaves the index untouched in that case.
    void restore(const std::vector<std::uint8_t>& bytes);

  private:
    void add_locked(PostingId posting_id, Vector centroid);
    void remove_locked(PostingId posting_id);

    mutable std::shared_mutex mu_;
    std::vector<Entry> entries_;  // append-only; tombstoned entries are never mutated back
    std::unordered_map<PostingId, std::size_t> slot_;  // id -> newest entry index
    std::size_t live_ = 0;
};

}  // namespace lire
