#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lire/centroid_index.hpp"
#include "lire/config.hpp"
#include "lire/posting_store.hpp"
#include "lire/version_map.hpp"

namespace lire {

// Sink for foreground updates, written before an operation is acknowledged.
class UpdateLog {
  public:
    virtual ~UpdateLog() = default;
    virtual void log_insert(VectorId id, const Vector& v) = 0;
    virtual void log_delete(VectorId id) = 0;
};

struct RebuildJob {
    enum class Kind : std::uint8_t { split, merge, reassign };
    Kind kind;
    PostingId posting_id = 0;            // split / merge
    VectorId vector_id = 0;              // reassign
    Vector vec;                          // reassign
    std::uint8_t observed_version = 0;   // reassign
};

struct SearchResult {
    std::vector<VectorId> ids;
    std::vector<float> distances;
    // Per-query I/O accounting, the latency proxy.
    std::uint32_t postings_scanned = 0;
    std::uint32_t blocks_read = 0;
};

struct ReassignCandidate {
    VectorId id;
    Vector vec;
    std::uint8_t observed_version;
};

struct BalancedSplitResult {
    Vector centroid_a;
    Vector centroid_b;
    std::vector<std::size_t> members_a;  // indices into the input
    std::vector<std::size_t> members_b;
};

// Balanced two-way clustering: cluster sizes differ by at most
// max(1, 10% of input); each member is nearer to its own centroid than to
// the other except where the balance constraint forces it. Deterministic,
// ties broken by ascending id. Throws on fewer than two entries.
BalancedSplitResult balanced_split(const std::vector<std::pair<VectorId, Vector>>& entries);

// Necessary condition for a vector of the split posting to be reassigned:
// the deleted centroid is at least as close as both new ones.
bool needs_reassign_split_member(const Vector& v, const Vector& old_centroid,
                                 const std::vector<Vector>& new_centroids);
// Necessary condition for a vector of a nearby posting: some new centroid is
// at least as close as the deleted one.
bool needs_reassign_neighbor(const Vector& v, const Vector& old_centroid,
                             const std::vector<Vector>& new_centroids);

struct EngineOptions {
    // 0 = deterministic mode: rebuild jobs queue up and run inline, in order,
    // inside drain_background(). N >= 1 starts N background workers.
    std::uint32_t background_workers = 0;
    bool enable_split = true;
    bool enable_merge = true;
    bool enable_reassign = true;
    // Records ids touched by split garbage collection and reassignment, for
    // audits restricted to split-affected regions.
    bool track_split_touched = false;
    // Backpressure for the threaded pipeline: a foreground trigger waits for
    // the queue to fall below this depth before enqueueing, keeping the
    // updater/rebuilder stages balanced. Background cascades are exempt so
    // rebuilds can always make progress. Ignored in deterministic mode.
    std::size_t max_queue_depth = 4096;
};

// Foreground updater plus background local rebuilder over one posting store.
// Foreground threads insert/delete/search and only enqueue rebuild jobs;
// workers consume them. Per-posting write locks serialize mutations of one
// posting; reads are lock-free apart from the block-map snapshot.
class Engine {
  public:
    Engine(IndexConfig cfg, std::shared_ptr<BlockDevice> device, EngineOptions opts = {});
    ~Engine();

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    // Builds the initial index: hierarchical balanced clustering down to
    // split_limit, then nearest-centroid (plus replica) assignment. Runs with
    // every rebuild operator enabled so all modes start from the same state.
    void build_static(const std::map<VectorId, Vector>& dataset);

    void insert(VectorId id, const Vector& v);
    void remove(VectorId id);
    SearchResult search(const Vector& q, std::size_t k);

    // Blocks until the job queue is empty and all in-flight jobs, including
    // cascades, have completed. Idempotent.
    void drain_background();

    // Fraction of live vectors whose primary posting is not their true
    // nearest live centroid (brute force over centroids). The filtered form
    // restricts the audit to the given ids.
    double npa_audit() const;
    double npa_audit(const std::unordered_set<VectorId>& subset) const;

    // Ordered replica targets for a vector: nearest centroid first, then up
    // to replica_count-1 more within replica_distance_ratio of it.
    std::vector<PostingId> assign_replicas(const Vector& v) const;

    std::vector<ReassignCandidate> collect_reassign_candidates(
        const Vector& old_centroid, const std::vector<Vector>& new_centroids,
        const std::vector<PostingId>& new_posting_ids, std::uint32_t range) const;

    // Direct job submission, used by harnesses to exercise concurrency paths.
    void submit_reassign(VectorId id, const Vector& v, std::uint8_t observed_version);

    std::map<std::string, std::uint64_t> stats() const;
    std::unordered_set<VectorId> split_touched_ids() const;

    // Live (current-version, not deleted) entry count per live posting, from
    // a full disk scan. Quiescent-state diagnostic.
    std::vector<std::pair<PostingId, std::uint32_t>> live_posting_sizes() const;

    const IndexConfig& config() const { return cfg_; }
    CentroidIndex& centroids() { return cidx_; }
    const CentroidIndex& centroids() const { return cidx_; }
    VersionMap& versions() { return vmap_; }
    const VersionMap& versions() const { return vmap_; }
    PostingStore& store() { return store_; }
    const PostingStore& store() const { return store_; }
    BlockDevice& device() { return *device_; }

    PostingId next_posting_id() const { return next_posting_id_.load(); }
    void set_next_posting_id(PostingId id) { next_posting_id_.store(id); }

    void set_update_log(UpdateLog* log) { update_log_ = log; }

    std::uint64_t live_vectors() const { return vmap_.live_count(); }
    std::size_t live_postings() const { return cidx_.live_count(); }
    std::size_t queued_jobs() const;

    // Blocks foreground acknowledgements and job execution for the lifetime
    // of the returned guard; snapshots serialize component state under it.
    struct QuiesceGuard {
        std::unique_lock<std::shared_mutex> fg;
        std::unique_lock<std::shared_mutex> jobs;
    };
    QuiesceGuard quiesce();

    // Recovery hook: enqueues split jobs for any posting left above the
    // split limit by a crash, then lets drain_background repair it.
    void sweep_oversized();

  private:
    struct Stats {
        std::atomic<std::uint64_t> inserts{0}, deletes{0}, searches{0};
        std::atomic<std::uint64_t> splits{0}, split_compactions{0}, split_aborts{0};
        std::atomic<std::uint64_t> posting_drops{0};
        std::atomic<std::uint64_t> merges{0}, merge_aborts{0};
        std::atomic<std::uint64_t> reassigns_executed{0}, reassigns_aborted{0};
        std::atomic<std::uint64_t> reassign_noops{0}, reassign_requeues{0};
        std::atomic<std::uint64_t> cas_failures{0};
        std::atomic<std::uint64_t> jobs_executed{0};
        std::atomic<std::uint64_t> job_failures{0};
        std::atomic<std::uint64_t> postings_scanned_total{0};
    };

    class PostingLock;
    std::mutex& posting_mutex(PostingId pid);

    // foreground=true applies queue backpressure; callers must hold no
    // posting lock when they pass it.
    void enqueue(RebuildJob job, bool foreground);
    void enqueue_split(PostingId pid, bool foreground);
    void enqueue_merge(PostingId pid, bool foreground);
    void enqueue_reassign(VectorId id, Vector v, std::uint8_t observed_version);

    void worker_loop();
    bool pop_job(RebuildJob& out);
    void execute_job(const RebuildJob& job);
    void do_split(PostingId pid);
    void do_merge(PostingId pid);
    void do_reassign(VectorId id, const Vector& v, std::uint8_t observed_version);

    // Appends (id, version, v) to every replica target, retrying placement
    // when a target vanishes underneath a concurrent split or merge.
    void place_vector(VectorId id, const Vector& v, std::uint8_t version);

    void validate_vector(const Vector& v) const;
    double npa_audit_impl(const std::unordered_set<VectorId>* subset) const;
    void record_touched(const std::vector<PostingEntry>& entries);

    IndexConfig cfg_;
    EngineOptions opts_;
    std::shared_ptr<BlockDevice> device_;
    PostingStore store_;
    CentroidIndex cidx_;
    VersionMap vmap_;

    std::atomic<PostingId> next_posting_id_{0};
    std::atomic<UpdateLog*> update_log_{nullptr};

    std::shared_mutex fg_gate_;
    std::shared_mutex job_gate_;

    mutable std::mutex q_mu_;
    std::condition_variable q_cv_;
    std::condition_variable idle_cv_;
    std::condition_variable space_cv_;
    std::deque<RebuildJob> queue_;
    std::size_t in_flight_ = 0;
    bool stopping_ = false;
    std::unordered_set<PostingId> pending_split_;
    std::unordered_set<PostingId> pending_merge_;
    std::vector<std::thread> workers_;

    std::mutex lock_table_mu_;
    std::unordered_map<PostingId, std::unique_ptr<std::mutex>> lock_table_;

    mutable std::mutex touched_mu_;
    std::unordered_set<VectorId> split_touched_;

    Stats st_;
};

}  // namespace lire
