/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * miniio.cpp : command line front end of the workload harness
 *
 * Exit codes: 0 ok, 2 verification mismatch, 3 configuration error,
 * 4 runtime failure.
 */

#include "miniio/container/reader.hpp"
#include "miniio/core/error.hpp"
#include "miniio/harness/bench.hpp"
#include "miniio/harness/part_file.hpp"
#include "miniio/harness/run.hpp"
#include "miniio/harness/verify.hpp"
#include "miniio/staging/dataplane_bench.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

using namespace miniio;
using namespace miniio::harness;

namespace
{

enum Exit
{
    kOk = 0,
    kMismatch = 2,
    kConfig = 3,
    kRuntime = 4
};

struct Overrides
{
    std::string config;
    std::optional<std::string> mode, codec, bb_dir, out, name, dataplane, queue_policy, grid;
    std::optional<int> ranks, ranks_per_node, ratio, queue_limit, level, nvars, two_phase_writers;
    std::optional<double> pfs_bw_mbps, compute_ms, timeout_s, noise;
    std::optional<std::uint32_t> comm_latency_us, pfs_op_latency_us;
    std::optional<std::uint64_t> seed, steps;
    std::optional<bool> shuffle, drain;

    void add_to(CLI::App &app)
    {
        app.add_option("--config", config, "JSON file with workload, engine, out and name")
            ->check(CLI::ExistingFile);
        app.add_option("--mode", mode,
                       "serial_funnel, file_per_process, shared_two_phase, aggregated_subfile "
                       "or staging");
        app.add_option("--ranks", ranks, "rank processes");
        app.add_option("--ranks-per-node", ranks_per_node, "ranks per simulated node");
        app.add_option("--ratio", ratio, "ranks per aggregator (0 = one per node)");
        app.add_option("--codec", codec, "none, lz4, zstd or zlib");
        app.add_option("--level", level, "codec level (defaults per codec)");
        app.add_option("--shuffle", shuffle, "byte shuffle before compression");
        app.add_option("--queue-limit", queue_limit, "staging queue limit (0 = unbounded)");
        app.add_option("--queue-policy", queue_policy, "block or discard");
        app.add_option("--dataplane", dataplane, "tcp or shm");
        app.add_option("--bb-dir", bb_dir, "burst-buffer directory");
        app.add_option("--drain", drain, "drain the burst buffer to the PFS");
        app.add_option("--pfs-bw-mbps", pfs_bw_mbps, "simulated PFS bandwidth");
        app.add_option("--pfs-op-latency-us", pfs_op_latency_us, "per-request PFS cost");
        app.add_option("--comm-latency-us", comm_latency_us, "latency of inter-node messages");
        app.add_option("--two-phase-writers", two_phase_writers, "two-phase region owners");
        app.add_option("--seed", seed, "field seed");
        app.add_option("--steps", steps, "history steps");
        app.add_option("--grid", grid, "NXxNYxNZ");
        app.add_option("--nvars", nvars, "variables per step");
        app.add_option("--compute-ms", compute_ms, "simulated compute per step");
        app.add_option("--noise", noise, "relative noise amplitude");
        app.add_option("--timeout", timeout_s, "run timeout in seconds");
        app.add_option("--out", out, "run directory");
        app.add_option("--name", name, "output name");
    }

    RunConfig build() const
    {
        RunConfig c;
        if (!config.empty())
        {
            std::ifstream f(config);
            nlohmann::json j;
            try
            {
                f >> j;
            }
            catch (const nlohmann::json::exception &e)
            {
                throw ConfigError(config + ": " + e.what());
            }
            from_json(j, c);
        }
        auto &w = c.workload;
        auto &e = c.engine;
        if (mode)
            e.mode = mode_from_string(*mode);
        if (ranks)
            w.ranks = *ranks;
        if (ranks_per_node)
            w.ranks_per_node = *ranks_per_node;
        if (ratio)
            e.aggregation_ratio = *ratio;
        if (codec)
        {
            e.codec = CodecSpec::with_defaults(codec_from_string(*codec));
        }
        if (level)
            e.codec.level = *level;
        if (shuffle)
            e.codec.shuffle = *shuffle;
        e.codec = e.codec.normalized();
        if (queue_limit)
            e.queue_limit = *queue_limit;
        if (queue_policy)
            e.queue_full_policy = queue_policy_from_string(*queue_policy);
        if (dataplane)
            e.dataplane = dataplane_from_string(*dataplane);
        if (bb_dir)
            e.bb_dir = *bb_dir;
        if (drain)
            e.drain = *drain;
        if (pfs_bw_mbps)
            e.pfs_bw_mbps = *pfs_bw_mbps;
        if (pfs_op_latency_us)
            e.pfs_op_latency_us = *pfs_op_latency_us;
        if (comm_latency_us)
            e.comm_latency_us = *comm_latency_us;
        if (two_phase_writers)
            e.two_phase_writers = *two_phase_writers;
        if (seed)
            w.seed = *seed;
        if (steps)
            w.steps = *steps;
        if (grid)
        {
            unsigned long long x = 0, y = 0, z = 0;
            char tail = 0;
            if (std::sscanf(grid->c_str(), "%llux%llux%llu%c", &x, &y, &z, &tail) != 3)
                throw ConfigError("--grid expects NXxNYxNZ, got \"" + *grid + "\"");
            w.nx = x;
            w.ny = y;
            w.nz = z;
        }
        if (nvars)
            w.nvars = *nvars;
        if (compute_ms)
            w.compute_ms = *compute_ms;
        if (noise)
            w.noise = *noise;
        if (timeout_s)
            c.timeout_s = *timeout_s;
        if (out)
            c.out = *out;
        if (name)
            c.name = *name;
        c.validate();
        return c;
    }
};

void print_verify(const VerifyResult &v)
{
    std::cout << (v.ok ? "verify: PASS " : "verify: FAIL ") << v.message << '\n';
}

} // end anonymous namespace

int main(int argc, char **argv)
{
    CLI::App app{"miniio: step-based parallel I/O and staging workload harness"};
    app.require_subcommand(1);

    Overrides run_opts;
    bool no_verify = false;
    auto *run_cmd = app.add_subcommand("run", "run the synthetic workload once");
    run_opts.add_to(*run_cmd);
    run_cmd->add_flag("--no-verify", no_verify, "skip the oracle check of the output");

    Overrides verify_opts;
    std::string verify_path;
    auto *verify_cmd = app.add_subcommand("verify", "compare an output with the field oracle");
    verify_cmd->add_option("artifact", verify_path, "run dir, container, flat or part file")
        ->required();
    verify_opts.add_to(*verify_cmd);

    std::string stitch_in, stitch_out;
    auto *stitch_cmd = app.add_subcommand("stitch", "merge part files into one flat file");
    stitch_cmd->add_option("parts", stitch_in, "any part file or the shared prefix")->required();
    stitch_cmd->add_option("output", stitch_out, "flat file to write")->required();

    std::string cons_in, cons_out;
    auto *cons_cmd = app.add_subcommand("consolidate", "rewrite a container as one flat file");
    cons_cmd->add_option("container", cons_in, "container directory")->required();
    cons_cmd->add_option("output", cons_out, "flat file to write")->required();

    Overrides bench_opts;
    std::string preset = "table1";
    int reps = 5;
    bool keep = false;
    auto *bench_cmd = app.add_subcommand("bench-sweep", "repeat runs over a preset matrix");
    bench_opts.add_to(*bench_cmd);
    bench_cmd->add_option("--preset", preset, "table1, ratio, codec, bb or modes");
    bench_cmd->add_option("--reps", reps, "repetitions per cell");
    bench_cmd->add_flag("--keep-data", keep, "keep every repetition's output");

    std::vector<std::uint64_t> sizes{0, 4096, 65536, 1 << 20, 8 << 20};
    std::uint64_t blocks = 32;
    std::string dp_out;
    auto *dp_cmd = app.add_subcommand("dataplane-bench", "time tcp against shm transfers");
    dp_cmd->add_option("--sizes", sizes, "payload sizes in bytes")->delimiter(',');
    dp_cmd->add_option("--blocks", blocks, "payloads per size");
    dp_cmd->add_option("--out", dp_out, "CSV file (stdout when omitted)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try
    {
        if (*run_cmd)
        {
            const auto cfg = run_opts.build();
            const auto rep = run(cfg);
            std::printf("%s: %zu steps, io_sum %.6f s, wall %.3f s -> %s\n",
                        std::string(to_string(cfg.engine.mode)).c_str(), rep.steps.size(),
                        rep.io_sum_s, rep.wall_s, rep.config.out.c_str());
            if (!rep.ok())
            {
                std::cerr << "run failed: " << *rep.failure << '\n';
                return kRuntime;
            }
            if (!no_verify)
            {
                const auto v = verify_run(rep.config.out);
                print_verify(v);
                if (!v.ok)
                    return kMismatch;
            }
            return kOk;
        }
        if (*verify_cmd)
        {
            const auto cfg = verify_opts.build();
            const auto v = verify(verify_path, cfg.workload);
            print_verify(v);
            return v.ok ? kOk : kMismatch;
        }
        if (*stitch_cmd)
        {
            const auto r = stitch(stitch_in, stitch_out);
            std::printf("stitched %zu parts, %llu steps in %.6f s -> %s\n", r.parts,
                        static_cast<unsigned long long>(r.steps), r.seconds, stitch_out.c_str());
            return kOk;
        }
        if (*cons_cmd)
        {
            const auto r = container::consolidate(cons_in, cons_out);
            std::printf("consolidated %llu steps in %.6f s -> %s\n",
                        static_cast<unsigned long long>(r.steps), r.total_seconds,
                        cons_out.c_str());
            return kOk;
        }
        if (*bench_cmd)
        {
            auto base = bench_opts.build();
            const auto work = base.out;
            const auto cells = preset_cells(preset, base, work);
            const auto res = bench_sweep(preset, cells, reps, work, keep);
            write_sweep(res, work);
            std::cout << sweep_csv(res);
            bool failed = false;
            for (const auto &c : res.cells)
                failed = failed || !c.failure.empty();
            if (res.summary.contains("table1"))
                std::cout << "table1 ordering: "
                          << (res.summary["table1"]["pass"].get<bool>() ? "PASS" : "FAIL") << '\n';
            return failed ? kRuntime : kOk;
        }
        if (*dp_cmd)
        {
            const auto rows = staging::dataplane_bench(sizes, blocks);
            const auto csv = staging::dataplane_csv(rows);
            if (dp_out.empty())
                std::cout << csv;
            else
            {
                std::ofstream f(dp_out);
                f << csv;
                if (!f)
                    throw IOError("cannot write " + dp_out);
            }
            bool ok = true;
            for (const auto &r : rows)
                ok = ok && r.ok;
            return ok ? kOk : kRuntime;
        }
    }
    catch (const ConfigError &e)
    {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
