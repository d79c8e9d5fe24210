#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lire/engine.hpp"
#include "lire/workload.hpp"

namespace lire {

enum class Mode : std::uint8_t { lire, append_only, split_only };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);

struct EpochMetrics {
    std::uint32_t epoch = 0;
    double recall_at_10 = 0.0;
    // p99 over the epoch's queries of per-query block reads — the tail
    // latency proxy for posting scans.
    std::uint64_t postings_scanned_p99 = 0;
    std::uint64_t block_reads = 0;   // device delta over the epoch's updates + rebuilds + queries
    std::uint64_t block_writes = 0;
    std::uint64_t splits = 0;
    std::uint64_t merges = 0;
    std::uint64_t reassigns = 0;
    std::uint64_t reassign_aborts = 0;
    double npa_violation_fraction = 0.0;
    std::uint64_t live_vectors = 0;
    std::uint64_t live_postings = 0;
};

struct SimulationOptions {
    std::uint32_t k = 10;
    std::uint32_t background_workers = 0;  // 0 = deterministic mode
    // Cross-checks the maintained ground-truth set against one rebuilt from
    // the op streams each epoch; meant for small runs.
    bool verify_ground_truth = false;
    std::uint64_t device_blocks = 0;  // 0 = sized from the workload
    bool track_split_touched = false;
    // Observation point after each epoch's drain (epoch 0 = post-build).
    std::function<void(Engine&, std::uint32_t)> epoch_hook;
};

struct SimulationResult {
    std::vector<EpochMetrics> rows;
    std::map<std::string, std::uint64_t> final_stats;
    std::map<VectorId, Vector> final_live;
    std::vector<Vector> queries;
};

SimulationResult run_simulation(const WorkloadSpec& spec, const IndexConfig& cfg, Mode mode,
                                const SimulationOptions& opts = {});

// Evaluates a prebuilt engine against queries with a known-truth set.
struct EvalResult {
    double recall = 0.0;
    std::uint64_t p99_blocks = 0;
    std::vector<std::uint32_t> per_query_blocks;
};
EvalResult evaluate_queries(Engine& engine, const std::map<VectorId, Vector>& live,
                            const std::vector<Vector>& queries, std::uint32_t k);

std::string metrics_csv(const std::vector<EpochMetrics>& rows);

struct SweepRow {
    std::string param;
    std::uint64_t value = 0;
    EpochMetrics final_epoch;
    double mean_recall = 0.0;  // recall_at_10 averaged over all epoch rows
    std::uint64_t splits_total = 0;
    std::uint64_t reassigns_total = 0;
};

// Runs one simulation per value with everything else held fixed and reports
// the final-epoch recall / scan-cost trade-off per value.
std::vector<SweepRow> parameter_sweep(const WorkloadSpec& spec, const IndexConfig& cfg,
                                      const std::string& param,
                                      const std::vector<std::uint64_t>& values,
                                      const SimulationOptions& opts = {});
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct CrashPointReport {
    std::uint64_t point = 0;
    bool pass = false;
    std::string detail;
};

struct CrashTestReport {
    std::vector<CrashPointReport> points;
    bool all_pass = true;
};

struct CrashTestOptions {
    std::uint32_t snapshot_every = 100;        // acknowledged ops per snapshot
    std::vector<std::uint64_t> fault_snapshots;  // snapshot ordinals that lose their manifest
    std::uint32_t golden_queries = 20;
};

// Runs the op stream to each crash point against real files, drops all
// in-memory state, recovers, and verifies live-set and golden-query equality.
CrashTestReport crash_test(const WorkloadSpec& spec, const IndexConfig& cfg,
                           const std::vector<std::uint64_t>& crash_points,
                           const std::string& work_dir, const CrashTestOptions& opts = {});

}  // namespace lire
