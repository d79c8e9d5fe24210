// Desk-scale benchmark harness: builds indices from vector files, replays
// update workloads in the three maintenance modes, sweeps parameters and
// exercises crash recovery.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lire/block_device.hpp"
#include "lire/engine.hpp"
#include "lire/io_format.hpp"
#include "lire/simulation.hpp"
#include "lire/snapshot.hpp"
#include "lire/wal.hpp"

namespace fs = std::filesystem;
using namespace lire;

namespace {

IndexConfig load_config(const std::string& path) {
    if (path.empty()) return IndexConfig{};
    return config_from_kv(parse_kv_file(path));
}

WorkloadSpec load_spec(const std::string& path, std::uint64_t seed_override, bool has_seed) {
    WorkloadSpec spec = path.empty() ? WorkloadSpec{} : spec_from_kv(parse_kv_file(path));
    if (has_seed) spec.seed = seed_override;
    return spec;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        out.push_back(std::stoull(csv.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cluster-based vector index update benchmark"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::uint64_t seed = 42;
    bool deterministic = true;
    std::uint32_t workers = 0;
    bool seed_given = false;
    app.add_flag("--deterministic,!--no-deterministic", deterministic,
                 "run rebuild jobs inline for reproducible output (default on)");
    auto* seed_opt = app.add_option("--seed", seed, "workload seed override");
    app.add_option("--threads", workers, "background workers in non-deterministic mode");

    // build
    auto* build = app.add_subcommand("build", "build a static index from a vector file");
    std::string build_input, build_config, build_out = "index_out";
    build->add_option("--input", build_input, "vector file (dim u32 + elements per record)")
        ->required();
    build->add_option("--config", build_config, "index config (key=value)");
    build->add_option("--out", build_out, "output index directory");

    // simulate
    auto* sim = app.add_subcommand("simulate", "replay an update workload and emit metrics");
    std::string sim_mode = "lire", sim_spec, sim_config, sim_out = "metrics.csv";
    sim->add_option("--mode", sim_mode, "lire | append_only | split_only");
    sim->add_option("--spec", sim_spec, "workload spec (key=value)");
    sim->add_option("--config", sim_config, "index config (key=value)");
    sim->add_option("--out", sim_out, "metrics csv path");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "parameter study over repeated simulations");
    std::string sweep_param = "reassign_range", sweep_values = "0,2,4,8,16";
    std::string sweep_spec, sweep_config, sweep_out = "sweep.csv";
    sweep->add_option("--param", sweep_param, "reassign_range | nprobe");
    sweep->add_option("--values", sweep_values, "comma-separated values");
    sweep->add_option("--spec", sweep_spec, "workload spec (key=value)");
    sweep->add_option("--config", sweep_config, "index config (key=value)");
    sweep->add_option("--out", sweep_out, "sweep csv path");

    // crash-test
    auto* crash = app.add_subcommand("crash-test", "crash/recovery verification over an op stream");
    std::string crash_points = "0,25,50,100", crash_spec, crash_config;
    std::string crash_dir = "crash_work";
    std::uint32_t crash_snap_every = 100;
    std::string crash_faults;
    crash->add_option("--points", crash_points, "comma-separated crash points (op index)");
    crash->add_option("--spec", crash_spec, "workload spec (key=value)");
    crash->add_option("--config", crash_config, "index config (key=value)");
    crash->add_option("--work-dir", crash_dir, "scratch directory");
    crash->add_option("--snapshot-every", crash_snap_every, "ops per snapshot");
    crash->add_option("--fault-snapshots", crash_faults,
                      "snapshot ordinals that lose their manifest (fault injection)");

    CLI11_PARSE(app, argc, argv);
    seed_given = seed_opt->count() > 0;

    try {
        if (*build) {
            IndexConfig cfg = load_config(build_config);
            auto vecs = read_vector_file(build_input, cfg.element_type);
            if (vecs.empty()) {
                std::cerr << "no vectors in " << build_input << "\n";
                return 1;
            }
            cfg.dim = std::uint32_t(vecs[0].size());
            std::map<VectorId, Vector> dataset;
            for (std::size_t i = 0; i < vecs.size(); ++i) dataset.emplace(VectorId(i + 1), vecs[i]);

            fs::create_directories(build_out);
            const std::uint64_t blocks = std::max<std::uint64_t>(
                4096, vecs.size() * cfg.entry_width() * cfg.replica_count * 4 / cfg.block_size);
            auto device = std::make_shared<FileBlockDevice>(build_out + "/device.bin",
                                                            cfg.block_size, blocks);
            EngineOptions eo;
            eo.background_workers = deterministic ? 0 : workers;
            Engine engine(cfg, device, eo);
            engine.build_static(dataset);
            engine.drain_background();

            SnapshotManager snaps(build_out + "/snaps");
            WalWriter wal(build_out + "/wal.log", cfg, 1);
            snaps.take(engine, &wal);
            for (const auto& [key, value] : engine.stats())
                std::printf("%s=%llu\n", key.c_str(), static_cast<unsigned long long>(value));
            std::printf("index written to %s\n", build_out.c_str());
        } else if (*sim) {
            WorkloadSpec spec = load_spec(sim_spec, seed, seed_given);
            IndexConfig cfg = load_config(sim_config);
            cfg.dim = spec.dim;
            cfg.element_type = spec.element_type;
            SimulationOptions so;
            so.background_workers = deterministic ? 0 : workers;
            auto result = run_simulation(spec, cfg, mode_from_string(sim_mode), so);
            std::string csv = metrics_csv(result.rows);
            write_file_bytes(sim_out, std::vector<std::uint8_t>(csv.begin(), csv.end()));
            std::printf("%s", csv.c_str());
            std::printf("metrics written to %s\n", sim_out.c_str());
        } else if (*sweep) {
            WorkloadSpec spec = load_spec(sweep_spec, seed, seed_given);
            IndexConfig cfg = load_config(sweep_config);
            cfg.dim = spec.dim;
            cfg.element_type = spec.element_type;
            SimulationOptions so;
            so.background_workers = deterministic ? 0 : workers;
            auto rows = parameter_sweep(spec, cfg, sweep_param, parse_u64_list(sweep_values), so);
            std::string csv = sweep_csv(rows);
            write_file_bytes(sweep_out, std::vector<std::uint8_t>(csv.begin(), csv.end()));
            std::printf("%s", csv.c_str());
            std::printf("sweep written to %s\n", sweep_out.c_str());
        } else if (*crash) {
            WorkloadSpec spec = load_spec(crash_spec, seed, seed_given);
            IndexConfig cfg = load_config(crash_config);
            cfg.dim = spec.dim;
            cfg.element_type = spec.element_type;
            CrashTestOptions co;
            co.snapshot_every = crash_snap_every;
            if (!crash_faults.empty()) co.fault_snapshots = parse_u64_list(crash_faults);
            auto report = crash_test(spec, cfg, parse_u64_list(crash_points), crash_dir, co);
            for (const auto& p : report.points)
                std::printf("point %llu: %s (%s)\n", static_cast<unsigned long long>(p.point),
                            p.pass ? "PASS" : "FAIL", p.detail.c_str());
            std::printf("crash-test %s\n", report.all_pass ? "PASS" : "FAIL");
            return report.all_pass ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
