#include "lire/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cinttypes>
#include <cstdio>
#include <filesystem>

#include "lire/block_device.hpp"
#include "lire/distance.hpp"
#include "lire/snapshot.hpp"

namespace fs = std::filesystem;

namespace lire {

Mode mode_from_string(const std::string& s) {
    if (s == "lire") return Mode::lire;
    if (s == "append_only") return Mode::append_only;
    if (s == "split_only") return Mode::split_only;
    raise(ErrorCode::invalid_argument, "unknown mode: " + s);
}

std::string to_string(Mode m) {
    switch (m) {
        case Mode::lire: return "lire";
        case Mode::append_only: return "append_only";
        case Mode::split_only: return "split_only";
    }
    return "?";
}

namespace {

EngineOptions options_for(Mode mode, const SimulationOptions& opts) {
    EngineOptions eo;
    eo.background_workers = opts.background_workers;
    switch (mode) {
        case Mode::lire: break;
        case Mode::append_only:
            eo.enable_split = eo.enable_merge = eo.enable_reassign = false;
            break;
        case Mode::split_only: eo.enable_reassign = false; break;
    }
    return eo;
}

std::uint64_t auto_device_blocks(const WorkloadSpec& spec, const IndexConfig& cfg) {
    const std::uint64_t total =
        (spec.base_size + std::uint64_t(spec.epochs) * spec.updates_per_epoch()) *
        cfg.replica_count;
    const std::uint64_t data_blocks = (total * cfg.entry_width() + cfg.block_size - 1) / cfg.block_size;
    const std::uint64_t posting_pad = (total / std::max<std::uint64_t>(1, cfg.split_limit) + 1) * 8;
    return std::max<std::uint64_t>(4096, data_blocks * 4 + posting_pad);
}

std::uint64_t percentile_nearest_rank(std::vector<std::uint32_t> values, double pct) {
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    std::size_t rank = std::size_t(std::ceil(pct / 100.0 * double(values.size())));
    if (rank == 0) rank = 1;
    return values[rank - 1];
}

struct CounterDeltas {
    std::map<std::string, std::uint64_t> prev;

    std::uint64_t take(const std::map<std::string, std::uint64_t>& now, const std::string& key) {
        std::uint64_t cur = now.count(key) ? now.at(key) : 0;
        std::uint64_t d = cur - prev[key];
        prev[key] = cur;
        return d;
    }
};

}  // namespace

EvalResult evaluate_queries(Engine& engine, const std::map<VectorId, Vector>& live,
                            const std::vector<Vector>& queries, std::uint32_t k) {
    EvalResult out;
    if (queries.empty() || live.empty()) return out;
    const std::uint32_t kk = std::uint32_t(std::min<std::size_t>(k, live.size()));

    std::vector<VectorId> ids;
    std::vector<float> data;
    ids.reserve(live.size());
    data.reserve(live.size() * engine.config().dim);
    for (const auto& [id, v] : live) {
        ids.push_back(id);
        data.insert(data.end(), v.begin(), v.end());
    }
    auto truth = exact_knn_batch(ids, data, engine.config().dim, queries, kk);

    double recall_sum = 0.0;
    out.per_query_blocks.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        SearchResult r = engine.search(queries[i], kk);
        recall_sum += r.ids.empty() ? 0.0 : recall_at_k(r.ids, truth[i]);
        out.per_query_blocks.push_back(r.blocks_read);
    }
    out.recall = recall_sum / double(queries.size());
    out.p99_blocks = percentile_nearest_rank(out.per_query_blocks, 99.0);
    return out;
}

SimulationResult run_simulation(const WorkloadSpec& spec, const IndexConfig& cfg, Mode mode,
                                const SimulationOptions& opts) {
    spec.validate();
    cfg.validate();
    if (spec.dim != cfg.dim || spec.element_type != cfg.element_type)
        raise(ErrorCode::invalid_argument, "workload and index config disagree on vector layout");

    Workload w = generate_workload(spec);

    const std::uint64_t blocks = opts.device_blocks ? opts.device_blocks
                                                    : auto_device_blocks(spec, cfg);
    auto device = std::make_shared<MemBlockDevice>(cfg.block_size, blocks);
    EngineOptions eo = options_for(mode, opts);
    eo.track_split_touched = opts.track_split_touched;
    Engine engine(cfg, device, eo);
    engine.build_static(w.base);
    if (opts.epoch_hook) opts.epoch_hook(engine, 0);

    SimulationResult result;
    result.queries = w.queries;
    std::map<VectorId, Vector> live = w.base;

    CounterDeltas deltas;
    auto emit_row = [&](std::uint32_t epoch) {
        auto stats = engine.stats();
        EpochMetrics row;
        row.epoch = epoch;
        row.splits = deltas.take(stats, "splits");
        row.merges = deltas.take(stats, "merges");
        row.reassigns = deltas.take(stats, "reassigns_executed");
        row.reassign_aborts = deltas.take(stats, "reassigns_aborted");

        EvalResult ev = evaluate_queries(engine, live, w.queries, opts.k);
        row.recall_at_10 = ev.recall;
        row.postings_scanned_p99 = ev.p99_blocks;

        // Device deltas cover the epoch's updates, rebuild work and the
        // evaluation searches; the audit below is excluded.
        auto stats2 = engine.stats();
        row.block_reads = deltas.take(stats2, "block_reads");
        row.block_writes = deltas.take(stats2, "block_writes");

        row.npa_violation_fraction = engine.npa_audit();
        row.live_vectors = engine.live_vectors();
        row.live_postings = std::uint64_t(engine.live_postings());
        // The audit reads every posting; drop its device traffic from the
        // next epoch's deltas.
        auto stats3 = engine.stats();
        deltas.take(stats3, "block_reads");
        deltas.take(stats3, "block_writes");
        result.rows.push_back(row);
    };

    emit_row(0);

    for (std::uint32_t e = 0; e < spec.epochs; ++e) {
        const EpochStream& stream = w.epochs[e];
        for (VectorId id : stream.deletes) {
            engine.remove(id);
            live.erase(id);
        }
        for (const auto& [id, v] : stream.inserts) {
            engine.insert(id, v);
            live.emplace(id, v);
        }
        engine.drain_background();
        engine.store().promote_pre_release();  // simulated snapshot point
        if (opts.epoch_hook) opts.epoch_hook(engine, e + 1);

        if (opts.verify_ground_truth) {
            std::map<VectorId, Vector> scratch = w.base;
            for (std::uint32_t f = 0; f <= e; ++f) {
                for (VectorId id : w.epochs[f].deletes) scratch.erase(id);
                for (const auto& [id, v] : w.epochs[f].inserts) scratch.emplace(id, v);
            }
            if (scratch != live)
                raise(ErrorCode::invalid_state, "maintained ground truth diverged from scratch");
        }
        emit_row(e + 1);
    }

    result.final_stats = engine.stats();
    result.final_live = std::move(live);
    return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
    std::string out =
        "epoch,recall_at_10,postings_scanned_p99,block_reads,block_writes,splits,merges,"
        "reassigns,reassign_aborts,npa_violation_fraction,live_vectors,live_postings\n";
    char buf[512];
    for (const EpochMetrics& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%u,%.6f,%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64
                      ",%" PRIu64 ",%" PRIu64 ",%.6f,%" PRIu64 ",%" PRIu64 "\n",
                      r.epoch, r.recall_at_10, r.postings_scanned_p99, r.block_reads,
                      r.block_writes, r.splits, r.merges, r.reassigns, r.reassign_aborts,
                      r.npa_violation_fraction, r.live_vectors, r.live_postings);
        out += buf;
    }
    return out;
}

std::vector<SweepRow> parameter_sweep(const WorkloadSpec& spec, const IndexConfig& cfg,
                                      const std::string& param,
                                      const std::vector<std::uint64_t>& values,
                                      const SimulationOptions& opts) {
    if (values.empty()) raise(ErrorCode::invalid_argument, "sweep needs at least one value");
    if (param != "reassign_range" && param != "nprobe")
        raise(ErrorCode::invalid_argument, "unknown sweep parameter: " + param);

    std::vector<SweepRow> rows;
    for (std::uint64_t v : values) {
        IndexConfig c = cfg;
        if (param == "reassign_range")
            c.reassign_range = std::uint32_t(v);
        else
            c.nprobe = std::uint32_t(v);
        auto sim = run_simulation(spec, c, Mode::lire, opts);
        SweepRow row;
        row.param = param;
        row.value = v;
        row.final_epoch = sim.rows.back();
        double sum = 0.0;
        for (const auto& r : sim.rows) sum += r.recall_at_10;
        row.mean_recall = sum / double(sim.rows.size());
        row.splits_total = sim.final_stats.at("splits");
        row.reassigns_total = sim.final_stats.at("reassigns_executed");
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out =
        "param,value,recall_at_10,mean_recall_at_10,postings_scanned_p99,block_reads,block_writes,"
        "splits,merges,reassigns,reassign_aborts,npa_violation_fraction,live_vectors,live_postings,"
        "splits_total,reassigns_total\n";
    char buf[512];
    for (const SweepRow& s : rows) {
        const EpochMetrics& r = s.final_epoch;
        std::snprintf(buf, sizeof(buf),
                      "%s,%" PRIu64 ",%.6f,%.6f,%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64
                      ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%.6f,%" PRIu64 ",%" PRIu64 ",%" PRIu64
                      ",%" PRIu64 "\n",
                      s.param.c_str(), s.value, r.recall_at_10, s.mean_recall,
                      r.postings_scanned_p99, r.block_reads, r.block_writes, r.splits, r.merges,
                      r.reassigns, r.reassign_aborts, r.npa_violation_fraction, r.live_vectors,
                      r.live_postings, s.splits_total, s.reassigns_total);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Crash testing

namespace {

struct FlatOp {
    bool is_insert;
    VectorId id;
    Vector vec;
};

std::vector<FlatOp> flatten_ops(const Workload& w) {
    std::vector<FlatOp> ops;
    for (const EpochStream& s : w.epochs) {
        for (VectorId id : s.deletes) ops.push_back(FlatOp{false, id, {}});
        for (const auto& [id, v] : s.inserts) ops.push_back(FlatOp{true, id, v});
    }
    return ops;
}

}  // namespace

CrashTestReport crash_test(const WorkloadSpec& spec, const IndexConfig& cfg,
                           const std::vector<std::uint64_t>& crash_points,
                           const std::string& work_dir, const CrashTestOptions& opts) {
    spec.validate();
    cfg.validate();
    Workload w = generate_workload(spec);
    auto ops = flatten_ops(w);
    const std::uint64_t blocks = auto_device_blocks(spec, cfg);

    CrashTestReport report;
    for (std::size_t idx = 0; idx < crash_points.size(); ++idx) {
        const std::uint64_t point = crash_points[idx];
        CrashPointReport pr;
        pr.point = point;
        if (point > ops.size()) {
            pr.detail = "crash point beyond op stream";
            report.points.push_back(pr);
            report.all_pass = false;
            continue;
        }

        const std::string dir = work_dir + "/pt" + std::to_string(idx);
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string device_path = dir + "/device.bin";
        const std::string wal_path = dir + "/wal.log";

        std::map<VectorId, Vector> expected = w.base;
        try {
            {
                auto device = std::make_shared<FileBlockDevice>(device_path, cfg.block_size, blocks);
                Engine engine(cfg, device, EngineOptions{});
                engine.build_static(w.base);
                engine.drain_background();

                SnapshotManager snaps(dir + "/snaps");
                WalWriter wal(wal_path, cfg, 1);
                snaps.take(engine, &wal);  // baseline covering the build
                engine.set_update_log(&wal);

                std::uint64_t snapshot_ordinal = 0;
                for (std::uint64_t i = 0; i < point; ++i) {
                    const FlatOp& op = ops[i];
                    if (op.is_insert) {
                        engine.insert(op.id, op.vec);
                        expected.emplace(op.id, op.vec);
                    } else {
                        engine.remove(op.id);
                        expected.erase(op.id);
                    }
                    engine.drain_background();
                    if ((i + 1) % opts.snapshot_every == 0) {
                        ++snapshot_ordinal;
                        bool fault = std::find(opts.fault_snapshots.begin(),
                                               opts.fault_snapshots.end(),
                                               snapshot_ordinal) != opts.fault_snapshots.end();
                        if (fault) snaps.fail_next_before_manifest();
                        try {
                            snaps.take(engine, &wal);
                        } catch (const Error& e) {
                            if (e.code() != ErrorCode::io_error) throw;
                            // mid-snapshot crash: manifest missing, WAL kept
                        }
                    }
                }
                // Engine, WAL handle and device drop here: the crash.
            }

            IndexConfig exact_cfg = cfg;
            exact_cfg.nprobe = 1u << 20;  // recovery checks compare against exact search
            auto device = std::make_shared<FileBlockDevice>(device_path, cfg.block_size, blocks);
            Engine engine(exact_cfg, device, EngineOptions{});
            SnapshotManager snaps(dir + "/snaps");
            recover(engine, snaps, wal_path);

            // Live-set equality.
            std::vector<VectorId> expected_ids;
            expected_ids.reserve(expected.size());
            for (const auto& [id, v] : expected) expected_ids.push_back(id);
            auto got_ids = engine.versions().live_ids();
            if (got_ids != expected_ids) {
                pr.detail = "live set mismatch: expected " + std::to_string(expected_ids.size()) +
                            " ids, recovered " + std::to_string(got_ids.size());
                report.points.push_back(pr);
                report.all_pass = false;
                continue;
            }

            // Golden queries: exact-mode search must equal brute force over
            // the expected live set, distances and order included.
            bool golden_ok = true;
            const std::size_t nq = std::min<std::size_t>(opts.golden_queries, w.queries.size());
            for (std::size_t qi = 0; qi < nq && golden_ok; ++qi) {
                const std::size_t kk = std::min<std::size_t>(10, expected.size());
                if (kk == 0) break;
                auto truth = brute_force_knn(expected, w.queries[qi], kk);
                auto got = engine.search(w.queries[qi], kk);
                if (got.ids != truth) {
                    golden_ok = false;
                    pr.detail = "golden query " + std::to_string(qi) + " diverged";
                }
            }
            if (!golden_ok) {
                report.points.push_back(pr);
                report.all_pass = false;
                continue;
            }

            engine.store().verify_conservation();
            pr.pass = true;
            pr.detail = "ok";
        } catch (const std::exception& e) {
            pr.pass = false;
            pr.detail = std::string("exception: ") + e.what();
        }
        report.points.push_back(pr);
        if (!pr.pass) report.all_pass = false;
    }
    return report;
}

}  // namespace lire
