#include "lire/engine.hpp"

#include <algorithm>
#include <chrono>
#include <thread>
#include <cmath>
#include <functional>

namespace lire {

// ---------------------------------------------------------------------------
// Balanced two-way clustering

namespace {
constexpr int kMaxClusterIters = 10;

Vector mean_of(const std::vector<std::pair<VectorId, Vector>>& entries,
               const std::vector<std::size_t>& members) {
    Vector m(entries[members[0]].second.size(), 0.0f);
    for (std::size_t i : members) {
        const Vector& v = entries[i].second;
        for (std::size_t d = 0; d < m.size(); ++d) m[d] += v[d];
    }
    for (float& f : m) f /= float(members.size());
    return m;
}
}  // namespace

BalancedSplitResult balanced_split(const std::vector<std::pair<VectorId, Vector>>& entries) {
    const std::size_t n = entries.size();
    if (n < 2) raise(ErrorCode::invalid_argument, "balanced_split needs at least two entries");

    const std::size_t slack = std::max<std::size_t>(1, n / 10);
    const std::size_t n1_min = (n - slack + 1) / 2;
    const std::size_t n1_max = (n + slack) / 2;

    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;

    // Farthest-point seeding from the global mean, deterministic.
    Vector m = mean_of(entries, all);
    std::size_t s1 = 0;
    float best = -1.0f;
    for (std::size_t i = 0; i < n; ++i) {
        float d = squared_l2(entries[i].second, m);
        if (d > best) {
            best = d;
            s1 = i;
        }
    }
    std::size_t s2 = s1;
    best = -1.0f;
    for (std::size_t i = 0; i < n; ++i) {
        float d = squared_l2(entries[i].second, entries[s1].second);
        if (d > best) {
            best = d;
            s2 = i;
        }
    }
    Vector c1 = entries[s1].second;
    Vector c2 = entries[s2].second;

    std::vector<std::size_t> order(n);
    std::vector<float> margin(n);
    std::vector<std::uint8_t> side(n, 0), prev_side(n, 2);

    std::size_t n1 = 0;
    for (int iter = 0; iter < kMaxClusterIters; ++iter) {
        for (std::size_t i = 0; i < n; ++i)
            margin[i] = squared_l2(entries[i].second, c1) - squared_l2(entries[i].second, c2);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (margin[a] != margin[b]) return margin[a] < margin[b];
            return entries[a].first < entries[b].first;
        });

        std::size_t natural = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (margin[i] < 0.0f) ++natural;
        n1 = std::clamp(natural, n1_min, n1_max);

        for (std::size_t i = 0; i < n; ++i) side[order[i]] = i < n1 ? 1 : 2;
        if (side == prev_side) break;
        prev_side = side;

        std::vector<std::size_t> a, b;
        for (std::size_t i = 0; i < n; ++i) (side[i] == 1 ? a : b).push_back(i);
        c1 = mean_of(entries, a);
        c2 = mean_of(entries, b);
    }

    BalancedSplitResult out;
    for (std::size_t i = 0; i < n; ++i) (side[i] == 1 ? out.members_a : out.members_b).push_back(i);
    out.centroid_a = mean_of(entries, out.members_a);
    out.centroid_b = mean_of(entries, out.members_b);
    return out;
}

bool needs_reassign_split_member(const Vector& v, const Vector& old_centroid,
                                 const std::vector<Vector>& new_centroids) {
    float d_old = squared_l2(v, old_centroid);
    for (const Vector& c : new_centroids)
        if (d_old > squared_l2(v, c)) return false;
    return true;
}

bool needs_reassign_neighbor(const Vector& v, const Vector& old_centroid,
                             const std::vector<Vector>& new_centroids) {
    float d_old = squared_l2(v, old_centroid);
    for (const Vector& c : new_centroids)
        if (squared_l2(v, c) <= d_old) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(IndexConfig cfg, std::shared_ptr<BlockDevice> device, EngineOptions opts)
    : cfg_(cfg), opts_(opts), device_(device), store_(std::move(device), cfg) {
    cfg_.validate();
    for (std::uint32_t i = 0; i < opts_.background_workers; ++i)
        workers_.emplace_back([this] { worker_loop(); });
}

Engine::~Engine() {
    {
        std::lock_guard lk(q_mu_);
        stopping_ = true;
    }
    q_cv_.notify_all();
    space_cv_.notify_all();
    for (auto& t : workers_) t.join();
}

void Engine::validate_vector(const Vector& v) const {
    if (v.size() != cfg_.dim) raise(ErrorCode::invalid_argument, "vector dimension mismatch");
    for (float f : v)
        if (!std::isfinite(f)) raise(ErrorCode::invalid_argument, "non-finite vector component");
}

std::mutex& Engine::posting_mutex(PostingId pid) {
    std::lock_guard lk(lock_table_mu_);
    auto& slot = lock_table_[pid];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

// --- job queue -------------------------------------------------------------

void Engine::enqueue(RebuildJob job, bool foreground) {
    {
        std::unique_lock lk(q_mu_);
        if (foreground && opts_.background_workers > 0 && opts_.max_queue_depth > 0)
            space_cv_.wait(lk, [&] {
                return queue_.size() < opts_.max_queue_depth || stopping_;
            });
        queue_.push_back(std::move(job));
    }
    q_cv_.notify_one();
}

void Engine::enqueue_split(PostingId pid, bool foreground) {
    if (!opts_.enable_split) return;
    {
        std::unique_lock lk(q_mu_);
        if (pending_split_.count(pid)) return;  // one pending split per posting
        if (foreground && opts_.background_workers > 0 && opts_.max_queue_depth > 0)
            space_cv_.wait(lk, [&] {
                return queue_.size() < opts_.max_queue_depth || stopping_;
            });
        if (!pending_split_.insert(pid).second) return;
        queue_.push_back(RebuildJob{RebuildJob::Kind::split, pid, 0, {}, 0});
    }
    q_cv_.notify_one();
}

void Engine::enqueue_merge(PostingId pid, bool foreground) {
    if (!opts_.enable_merge) return;
    {
        std::unique_lock lk(q_mu_);
        if (pending_merge_.count(pid)) return;
        if (foreground && opts_.background_workers > 0 && opts_.max_queue_depth > 0)
            space_cv_.wait(lk, [&] {
                return queue_.size() < opts_.max_queue_depth || stopping_;
            });
        if (!pending_merge_.insert(pid).second) return;
        queue_.push_back(RebuildJob{RebuildJob::Kind::merge, pid, 0, {}, 0});
    }
    q_cv_.notify_one();
}

void Engine::enqueue_reassign(VectorId id, Vector v, std::uint8_t observed_version) {
    if (!opts_.enable_reassign) return;
    enqueue(RebuildJob{RebuildJob::Kind::reassign, 0, id, std::move(v), observed_version},
            /*foreground=*/false);
}

void Engine::submit_reassign(VectorId id, const Vector& v, std::uint8_t observed_version) {
    enqueue(RebuildJob{RebuildJob::Kind::reassign, 0, id, v, observed_version},
            /*foreground=*/true);
}

std::size_t Engine::queued_jobs() const {
    std::lock_guard lk(q_mu_);
    return queue_.size() + in_flight_;
}

bool Engine::pop_job(RebuildJob& out) {
    std::unique_lock lk(q_mu_);
    q_cv_.wait(lk, [&] { return stopping_ || !queue_.empty(); });
    if (stopping_) return false;
    out = std::move(queue_.front());
    queue_.pop_front();
    ++in_flight_;
    if (queue_.size() < opts_.max_queue_depth) space_cv_.notify_all();
    return true;
}

void Engine::worker_loop() {
    RebuildJob job;
    while (pop_job(job)) {
        try {
            std::shared_lock gate(job_gate_);
            execute_job(job);
        } catch (const std::exception&) {
            st_.job_failures.fetch_add(1, std::memory_order_relaxed);
        }
        std::lock_guard lk(q_mu_);
        --in_flight_;
        if (queue_.empty() && in_flight_ == 0) idle_cv_.notify_all();
    }
}

void Engine::drain_background() {
    if (opts_.background_workers > 0) {
        std::unique_lock lk(q_mu_);
        idle_cv_.wait(lk, [&] { return queue_.empty() && in_flight_ == 0; });
        return;
    }
    // Deterministic mode: run queued jobs inline, strictly FIFO. The valve
    // only exists to turn a non-terminating cascade into a loud failure.
    const std::uint64_t limit = 1'000'000 + 50 * vmap_.live_count();
    std::uint64_t executed = 0;
    for (;;) {
        RebuildJob job;
        {
            std::lock_guard lk(q_mu_);
            if (queue_.empty()) return;
            job = std::move(queue_.front());
            queue_.pop_front();
        }
        {
            std::shared_lock gate(job_gate_);
            execute_job(job);
        }
        if (++executed > limit)
            raise(ErrorCode::invalid_state, "rebuild cascade failed to terminate");
    }
}

void Engine::execute_job(const RebuildJob& job) {
    st_.jobs_executed.fetch_add(1, std::memory_order_relaxed);
    switch (job.kind) {
        case RebuildJob::Kind::split: do_split(job.posting_id); break;
        case RebuildJob::Kind::merge: do_merge(job.posting_id); break;
        case RebuildJob::Kind::reassign: do_reassign(job.vector_id, job.vec, job.observed_version); break;
    }
}

// --- foreground ------------------------------------------------------------

std::vector<PostingId> Engine::assign_replicas(const Vector& v) const {
    auto near = cidx_.search(v, cfg_.replica_count);
    std::vector<PostingId> out;
    if (near.empty()) return out;
    out.push_back(near[0].first);
    const double bound =
        cfg_.replica_distance_ratio * cfg_.replica_distance_ratio * double(near[0].second);
    for (std::size_t i = 1; i < near.size(); ++i) {
        if (double(near[i].second) <= bound) out.push_back(near[i].first);
    }
    return out;
}

void Engine::place_vector(VectorId id, const Vector& v, std::uint8_t version) {
    std::unordered_set<PostingId> appended;
    std::vector<PostingId> oversized;
    for (int attempt = 0;; ++attempt) {
        if (attempt > 256) raise(ErrorCode::invalid_state, "vector placement kept racing rebuilds");
        if (attempt > 8)  // let a rebuild wave over the target region pass
            std::this_thread::sleep_for(std::chrono::microseconds(50) * attempt);
        auto targets = assign_replicas(v);
        if (targets.empty()) {
            // Empty index: the vector seeds the first posting as its centroid.
            PostingId pid = next_posting_id_.fetch_add(1);
            store_.put(pid, {PostingEntry{id, version, v}});
            cidx_.add(pid, v);
            return;
        }
        bool retry = false;
        for (PostingId pid : targets) {
            if (appended.count(pid)) continue;
            std::lock_guard plk(posting_mutex(pid));
            if (!cidx_.is_live(pid)) {
                retry = true;
                break;
            }
            IoBreakdown io;
            try {
                io = store_.append(pid, {PostingEntry{id, version, v}});
            } catch (const Error& e) {
                if (e.code() == ErrorCode::not_found) {
                    retry = true;
                    break;
                }
                throw;
            }
            appended.insert(pid);
            if (io.resulting_entry_count > cfg_.split_limit) oversized.push_back(pid);
        }
        if (retry) continue;
        // Split triggers wait for queue space, so they run with no posting
        // lock held.
        for (PostingId pid : oversized) enqueue_split(pid, /*foreground=*/true);
        return;
    }
}

void Engine::insert(VectorId id, const Vector& v) {
    validate_vector(v);
    std::shared_lock fg(fg_gate_);
    if (vmap_.lookup(id))
        raise(ErrorCode::conflict, "vector id " + std::to_string(id) + " already known");
    if (auto* log = update_log_.load()) log->log_insert(id, v);
    vmap_.register_id(id);
    place_vector(id, v, 0);
    st_.inserts.fetch_add(1, std::memory_order_relaxed);
}

void Engine::remove(VectorId id) {
    std::shared_lock fg(fg_gate_);
    auto ve = vmap_.lookup(id);
    if (!ve || ve->deleted())
        raise(ErrorCode::not_found, "vector id " + std::to_string(id) + " not live");
    if (auto* log = update_log_.load()) log->log_delete(id);
    vmap_.mark_deleted(id);
    st_.deletes.fetch_add(1, std::memory_order_relaxed);
}

SearchResult Engine::search(const Vector& q, std::size_t k) {
    validate_vector(q);
    SearchResult out;
    auto cands = cidx_.search(q, cfg_.nprobe);
    if (cands.empty()) return out;

    std::vector<PostingId> pids;
    pids.reserve(cands.size());
    for (auto& [pid, d] : cands) pids.push_back(pid);
    auto fetched = store_.parallel_get(pids);

    const std::size_t w = cfg_.entry_width();
    const std::size_t bs = cfg_.block_size;
    TopK top(k);
    std::unordered_set<VectorId> seen;
    for (std::size_t i = 0; i < pids.size(); ++i) {
        if (!fetched.postings[i]) continue;  // vanished under a concurrent rebuild
        const auto& entries = *fetched.postings[i];
        ++out.postings_scanned;
        out.blocks_read += std::uint32_t((entries.size() * w + bs - 1) / bs);
        if (entries.size() < cfg_.merge_threshold) enqueue_merge(pids[i], /*foreground=*/true);
        for (const PostingEntry& e : entries) {
            // Tombstoned ids and stale replica versions are dropped here.
            if (!vmap_.entry_is_current(e.id, e.version)) continue;
            if (!seen.insert(e.id).second) continue;
            top.offer(squared_l2(q, e.vec), e.id);
        }
    }
    auto pairs = top.take();
    out.ids.reserve(pairs.size());
    out.distances.reserve(pairs.size());
    for (auto& [d, id] : pairs) {
        out.ids.push_back(id);
        out.distances.push_back(d);
    }
    st_.searches.fetch_add(1, std::memory_order_relaxed);
    st_.postings_scanned_total.fetch_add(out.postings_scanned, std::memory_order_relaxed);
    return out;
}

// --- build -----------------------------------------------------------------

void Engine::build_static(const std::map<VectorId, Vector>& dataset) {
    if (dataset.empty()) raise(ErrorCode::invalid_argument, "empty dataset");
    if (cidx_.live_count() != 0 || vmap_.live_count() != 0)
        raise(ErrorCode::invalid_state, "index already built");

    // The build always runs with every rebuild operator on, so every serving
    // mode starts from the same index.
    EngineOptions saved = opts_;
    opts_.enable_split = opts_.enable_merge = opts_.enable_reassign = true;

    std::vector<std::pair<VectorId, Vector>> all(dataset.begin(), dataset.end());
    for (auto& [id, v] : all) validate_vector(v);

    // Hierarchical balanced clustering produces the initial centroid set;
    // membership comes from assignment afterwards. Leaves stop at half the
    // split limit so that replica assignment lands under the limit instead
    // of triggering an immediate split wave, matching the half-full state
    // that later splits converge to.
    const std::size_t leaf_target = std::max<std::size_t>(1, cfg_.split_limit / 2);
    std::vector<Vector> centroids;
    std::function<void(std::vector<std::size_t>)> recurse = [&](std::vector<std::size_t> idx) {
        if (idx.size() <= leaf_target) {
            Vector m(cfg_.dim, 0.0f);
            for (std::size_t i : idx)
                for (std::size_t d = 0; d < m.size(); ++d) m[d] += all[i].second[d];
            for (float& f : m) f /= float(idx.size());
            centroids.push_back(std::move(m));
            return;
        }
        std::vector<std::pair<VectorId, Vector>> sub;
        sub.reserve(idx.size());
        for (std::size_t i : idx) sub.push_back(all[i]);
        auto bs = balanced_split(sub);
        std::vector<std::size_t> left, right;
        for (std::size_t i : bs.members_a) left.push_back(idx[i]);
        for (std::size_t i : bs.members_b) right.push_back(idx[i]);
        recurse(std::move(left));
        recurse(std::move(right));
    };
    std::vector<std::size_t> root(all.size());
    for (std::size_t i = 0; i < root.size(); ++i) root[i] = i;
    recurse(std::move(root));

    for (std::size_t p = 0; p < centroids.size(); ++p)
        cidx_.add(PostingId(p), centroids[p]);
    next_posting_id_.store(centroids.size());

    // Replica assignment against the full centroid set. Parallel search,
    // serial bucket fill so posting contents stay id-ordered.
    std::vector<std::vector<PostingId>> targets(all.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (long i = 0; i < long(all.size()); ++i) targets[i] = assign_replicas(all[i].second);

    std::vector<std::vector<PostingEntry>> bucket(centroids.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        vmap_.register_id(all[i].first);
        for (PostingId pid : targets[i])
            bucket[pid].push_back(PostingEntry{all[i].first, 0, all[i].second});
    }

    for (std::size_t p = 0; p < centroids.size(); ++p) {
        if (bucket[p].empty()) {
            cidx_.remove(PostingId(p));  // a centroid that attracted nothing
            continue;
        }
        store_.put(PostingId(p), bucket[p]);
        if (bucket[p].size() > cfg_.split_limit) enqueue_split(PostingId(p), /*foreground=*/true);
    }

    // Assignment can still overflow the limit; the normal machinery repairs it.
    drain_background();
    opts_ = saved;
}

// --- background operators ----------------------------------------------------

void Engine::record_touched(const std::vector<PostingEntry>& entries) {
    if (!opts_.track_split_touched) return;
    std::lock_guard lk(touched_mu_);
    for (const auto& e : entries) split_touched_.insert(e.id);
}

std::unordered_set<VectorId> Engine::split_touched_ids() const {
    std::lock_guard lk(touched_mu_);
    return split_touched_;
}

void Engine::do_split(PostingId pid) {
    {
        std::lock_guard lk(q_mu_);
        pending_split_.erase(pid);
    }
    std::lock_guard plk(posting_mutex(pid));
    if (!cidx_.is_live(pid)) {
        st_.split_aborts.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    std::vector<PostingEntry> entries;
    try {
        entries = store_.get(pid);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::not_found) {
            st_.split_aborts.fetch_add(1, std::memory_order_relaxed);
            return;
        }
        throw;
    }

    // Garbage collection: only current-version, live entries survive.
    std::vector<PostingEntry> live;
    live.reserve(entries.size());
    for (auto& e : entries)
        if (vmap_.entry_is_current(e.id, e.version)) live.push_back(std::move(e));

    if (live.empty()) {
        cidx_.remove(pid);
        store_.delete_posting(pid);
        st_.posting_drops.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    if (live.size() <= cfg_.split_limit) {
        store_.put(pid, live);  // compaction was enough
        st_.split_compactions.fetch_add(1, std::memory_order_relaxed);
        return;
    }

    record_touched(live);
    Vector old_centroid = *cidx_.centroid_of(pid);

    std::vector<std::pair<VectorId, Vector>> points;
    points.reserve(live.size());
    for (const auto& e : live) points.emplace_back(e.id, e.vec);
    auto split = balanced_split(points);

    PostingId pa = next_posting_id_.fetch_add(1);
    PostingId pb = next_posting_id_.fetch_add(1);
    std::vector<PostingEntry> ea, eb;
    ea.reserve(split.members_a.size());
    eb.reserve(split.members_b.size());
    for (std::size_t i : split.members_a) ea.push_back(live[i]);
    for (std::size_t i : split.members_b) eb.push_back(live[i]);
    store_.put(pa, ea);
    store_.put(pb, eb);

    // One atomic publication: searchers see the old centroid or both new
    // ones, never neither.
    cidx_.replace({pid}, {{pa, split.centroid_a}, {pb, split.centroid_b}});
    store_.delete_posting(pid);
    st_.splits.fetch_add(1, std::memory_order_relaxed);

    auto cands = collect_reassign_candidates(old_centroid, {split.centroid_a, split.centroid_b},
                                             {pa, pb}, cfg_.reassign_range);
    if (opts_.track_split_touched && !cands.empty()) {
        std::lock_guard lk(touched_mu_);
        for (const auto& c : cands) split_touched_.insert(c.id);
    }
    for (auto& c : cands) enqueue_reassign(c.id, std::move(c.vec), c.observed_version);
}

std::vector<ReassignCandidate> Engine::collect_reassign_candidates(
    const Vector& old_centroid, const std::vector<Vector>& new_centroids,
    const std::vector<PostingId>& new_posting_ids, std::uint32_t range) const {
    std::vector<ReassignCandidate> out;
    std::unordered_set<VectorId> picked;

    auto consider = [&](const PostingEntry& e, bool in_split_posting) {
        if (!vmap_.entry_is_current(e.id, e.version)) return;
        bool hit = in_split_posting ? needs_reassign_split_member(e.vec, old_centroid, new_centroids)
                                    : needs_reassign_neighbor(e.vec, old_centroid, new_centroids);
        if (!hit || !picked.insert(e.id).second) return;
        auto ve = vmap_.lookup(e.id);
        out.push_back(ReassignCandidate{e.id, e.vec, ve->version()});
    };

    auto fetched = store_.parallel_get(new_posting_ids);
    for (const auto& posting : fetched.postings)
        if (posting)
            for (const PostingEntry& e : *posting) consider(e, true);

    if (range > 0) {
        auto near = cidx_.search(old_centroid, std::size_t(range) + new_posting_ids.size());
        std::vector<PostingId> neighbors;
        for (auto& [pid, d] : near) {
            if (std::find(new_posting_ids.begin(), new_posting_ids.end(), pid) !=
                new_posting_ids.end())
                continue;
            neighbors.push_back(pid);
            if (neighbors.size() == range) break;
        }
        auto nb = store_.parallel_get(neighbors);
        for (const auto& posting : nb.postings)
            if (posting)
                for (const PostingEntry& e : *posting) consider(e, false);
    }
    return out;
}

void Engine::do_merge(PostingId pid) {
    {
        std::lock_guard lk(q_mu_);
        pending_merge_.erase(pid);
    }
    if (!cidx_.is_live(pid)) {
        st_.merge_aborts.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    auto centroid = cidx_.centroid_of(pid);
    if (!centroid) {
        st_.merge_aborts.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    auto near = cidx_.search(*centroid, 2);
    PostingId partner = pid;
    for (auto& [cand, d] : near)
        if (cand != pid) {
            partner = cand;
            break;
        }
    if (partner == pid) {  // no other posting exists
        st_.merge_aborts.fetch_add(1, std::memory_order_relaxed);
        return;
    }

    // Global posting-id lock order avoids deadlock with concurrent merges.
    PostingId lo = std::min(pid, partner), hi = std::max(pid, partner);
    std::lock_guard l1(posting_mutex(lo));
    std::lock_guard l2(posting_mutex(hi));

    if (!cidx_.is_live(pid) || !cidx_.is_live(partner)) {
        st_.merge_aborts.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    std::uint32_t count = 0;
    try {
        count = store_.entry_count(pid);
    } catch (const Error&) {
        st_.merge_aborts.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    if (count >= cfg_.merge_threshold) {  // grew since the search saw it
        st_.merge_aborts.fetch_add(1, std::memory_order_relaxed);
        return;
    }

    auto live_of = [&](PostingId p) {
        std::vector<PostingEntry> live;
        for (auto& e : store_.get(p))
            if (vmap_.entry_is_current(e.id, e.version)) live.push_back(std::move(e));
        return live;
    };
    std::vector<PostingEntry> live_pid, live_partner;
    try {
        live_pid = live_of(pid);
        live_partner = live_of(partner);
    } catch (const Error&) {
        st_.merge_aborts.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    if (live_pid.size() + live_partner.size() > cfg_.split_limit) {
        st_.merge_aborts.fetch_add(1, std::memory_order_relaxed);
        return;
    }

    PostingId doomed = pid, survivor = partner;
    if (live_partner.size() < live_pid.size() ||
        (live_partner.size() == live_pid.size() && partner > pid)) {
        doomed = partner;
        survivor = pid;
    }
    const auto& moved = doomed == pid ? live_pid : live_partner;

    IoBreakdown io;
    if (!moved.empty()) io = store_.append(survivor, moved);
    cidx_.replace({doomed}, {});
    store_.delete_posting(doomed);
    st_.merges.fetch_add(1, std::memory_order_relaxed);

    if (!moved.empty() && io.resulting_entry_count > cfg_.split_limit)
        enqueue_split(survivor, /*foreground=*/false);
    // Merge-triggered reassign needs no neighbor scan: only the moved
    // vectors can have lost their nearest posting.
    for (const auto& e : moved) enqueue_reassign(e.id, e.vec, e.version);
}

void Engine::do_reassign(VectorId id, const Vector& v, std::uint8_t observed_version) {
    auto ve = vmap_.lookup(id);
    if (!ve || ve->deleted() || ve->version() != observed_version) {
        st_.reassigns_aborted.fetch_add(1, std::memory_order_relaxed);
        return;
    }

    for (int attempt = 0;; ++attempt) {
        if (attempt > 256) raise(ErrorCode::invalid_state, "reassign kept racing rebuilds");
        if (attempt > 8)
            std::this_thread::sleep_for(std::chrono::microseconds(50) * attempt);
        auto targets = assign_replicas(v);
        if (targets.empty()) {
            st_.reassigns_aborted.fetch_add(1, std::memory_order_relaxed);
            return;
        }
        // False-positive elimination: when the computed primary (and every
        // replica target) already holds the current copy, nothing moves and
        // no version is burned.
        auto fetched = store_.parallel_get(targets);
        bool stale_view = false, all_have = true;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (!fetched.postings[i]) {
                stale_view = true;
                break;
            }
            bool has = false;
            for (const auto& e : *fetched.postings[i])
                if (e.id == id && e.version == observed_version) {
                    has = true;
                    break;
                }
            all_have = all_have && has;
        }
        if (stale_view) continue;  // a target vanished between search and read
        if (all_have) {
            st_.reassign_noops.fetch_add(1, std::memory_order_relaxed);
            return;
        }

        if (!vmap_.cas_bump(id, observed_version)) {
            st_.cas_failures.fetch_add(1, std::memory_order_relaxed);
            st_.reassigns_aborted.fetch_add(1, std::memory_order_relaxed);
            return;
        }
        const std::uint8_t nv = VersionEntry::next_version(observed_version);

        for (PostingId pid : targets) {
            std::lock_guard plk(posting_mutex(pid));
            bool gone = !cidx_.is_live(pid);
            IoBreakdown io;
            if (!gone) {
                try {
                    io = store_.append(pid, {PostingEntry{id, nv, v}});
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::not_found) throw;
                    gone = true;
                }
            }
            if (gone) {
                // Target deleted by a concurrent split or merge: re-execute
                // the whole reassign against the new layout.
                enqueue_reassign(id, v, nv);
                st_.reassign_requeues.fetch_add(1, std::memory_order_relaxed);
                return;
            }
            if (io.resulting_entry_count > cfg_.split_limit)
                enqueue_split(pid, /*foreground=*/false);
        }
        st_.reassigns_executed.fetch_add(1, std::memory_order_relaxed);
        return;
    }
}

// --- audits & stats ----------------------------------------------------------

double Engine::npa_audit() const { return npa_audit_impl(nullptr); }

double Engine::npa_audit(const std::unordered_set<VectorId>& subset) const {
    return npa_audit_impl(&subset);
}

double Engine::npa_audit_impl(const std::unordered_set<VectorId>* subset) const {
    auto cents = cidx_.live_entries();
    if (cents.empty()) return 0.0;

    const std::size_t dim = cfg_.dim;
    std::vector<PostingId> cent_ids(cents.size());
    std::vector<float> cent_data(cents.size() * dim);
    for (std::size_t i = 0; i < cents.size(); ++i) {
        cent_ids[i] = cents[i].first;
        std::copy(cents[i].second.begin(), cents[i].second.end(), cent_data.begin() + i * dim);
    }

    struct Placement {
        float dist;
        PostingId pid;
        Vector vec;
    };
    std::unordered_map<VectorId, Placement> primary;
    for (auto& [pid, centroid] : cents) {
        std::vector<PostingEntry> entries;
        try {
            entries = store_.get(pid);
        } catch (const Error&) {
            continue;
        }
        for (auto& e : entries) {
            if (!vmap_.entry_is_current(e.id, e.version)) continue;
            float d = squared_l2(e.vec, centroid);
            auto it = primary.find(e.id);
            if (it == primary.end() || d < it->second.dist ||
                (d == it->second.dist && pid < it->second.pid))
                primary[e.id] = Placement{d, pid, e.vec};
        }
    }

    std::vector<VectorId> audited;
    for (VectorId id : vmap_.live_ids())
        if (!subset || subset->count(id)) audited.push_back(id);
    if (audited.empty()) return 0.0;

    std::uint64_t violations = 0;
#pragma omp parallel for schedule(dynamic, 64) reduction(+ : violations)
    for (long i = 0; i < long(audited.size()); ++i) {
        auto it = primary.find(audited[i]);
        if (it == primary.end()) {
            violations += 1;  // a live id with no current on-disk copy is lost
            continue;
        }
        const Vector& v = it->second.vec;
        float best = -1.0f;
        PostingId best_pid = 0;
        for (std::size_t c = 0; c < cent_ids.size(); ++c) {
            float d = squared_l2(std::span<const float>(v),
                                 std::span<const float>(cent_data.data() + c * dim, dim));
            if (best < 0.0f || d < best || (d == best && cent_ids[c] < best_pid)) {
                best = d;
                best_pid = cent_ids[c];
            }
        }
        if (best_pid != it->second.pid) violations += 1;
    }
    return double(violations) / double(audited.size());
}

std::vector<std::pair<PostingId, std::uint32_t>> Engine::live_posting_sizes() const {
    std::vector<std::pair<PostingId, std::uint32_t>> out;
    for (auto& [pid, centroid] : cidx_.live_entries()) {
        std::uint32_t live = 0;
        std::vector<PostingEntry> entries;
        try {
            entries = store_.get(pid);
        } catch (const Error&) {
            continue;
        }
        for (const auto& e : entries)
            if (vmap_.entry_is_current(e.id, e.version)) ++live;
        out.emplace_back(pid, live);
    }
    return out;
}

Engine::QuiesceGuard Engine::quiesce() {
    QuiesceGuard g;
    g.fg = std::unique_lock(fg_gate_);
    g.jobs = std::unique_lock(job_gate_);
    return g;
}

void Engine::sweep_oversized() {
    for (auto& [pid, count] : store_.posting_sizes())
        if (count > cfg_.split_limit) enqueue_split(pid, /*foreground=*/true);
}

std::map<std::string, std::uint64_t> Engine::stats() const {
    std::map<std::string, std::uint64_t> m;
    m["inserts"] = st_.inserts.load();
    m["deletes"] = st_.deletes.load();
    m["searches"] = st_.searches.load();
    m["splits"] = st_.splits.load();
    m["split_compactions"] = st_.split_compactions.load();
    m["split_aborts"] = st_.split_aborts.load();
    m["posting_drops"] = st_.posting_drops.load();
    m["merges"] = st_.merges.load();
    m["merge_aborts"] = st_.merge_aborts.load();
    m["reassigns_executed"] = st_.reassigns_executed.load();
    m["reassigns_aborted"] = st_.reassigns_aborted.load();
    m["reassign_noops"] = st_.reassign_noops.load();
    m["reassign_requeues"] = st_.reassign_requeues.load();
    m["cas_failures"] = st_.cas_failures.load();
    m["jobs_executed"] = st_.jobs_executed.load();
    m["job_failures"] = st_.job_failures.load();
    m["postings_scanned_total"] = st_.postings_scanned_total.load();
    m["block_reads"] = device_->reads();
    m["block_writes"] = device_->writes();
    m["live_vectors"] = vmap_.live_count();
    m["live_postings"] = cidx_.live_count();
    m["free_blocks"] = store_.free_blocks();
    m["pre_release_blocks"] = store_.pre_release_blocks();
    m["queued_jobs"] = queued_jobs();
    return m;
}

}  // namespace lire
