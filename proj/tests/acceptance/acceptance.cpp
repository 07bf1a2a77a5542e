/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * acceptance.cpp : one PASS/FAIL line per acceptance criterion
 */

#include "CLI11.hpp"

#include "miniio/container/flat_file.hpp"
#include "miniio/container/reader.hpp"
#include "miniio/core/error.hpp"
#include "miniio/harness/bench.hpp"
#include "miniio/harness/part_file.hpp"
#include "miniio/harness/run.hpp"
#include "miniio/harness/sinks.hpp"
#include "miniio/harness/verify.hpp"
#include "miniio/staging/stage_reader.hpp"
#include "miniio/staging/stage_writer.hpp"
#include "../unit/rank_group.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

using namespace miniio;
using namespace miniio::harness;
using miniio::testing::TempDir;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace
{

// Pinned tolerances.
constexpr double kRoundTripBudgetS = 120.0;
constexpr double kOracleBudgetS = 30.0;
constexpr double kTable1BudgetS = 300.0;
constexpr double kTable1MinGap = 0.15;
constexpr int kTable1Reps = 5;
constexpr int kTrendReps = 3;
constexpr double kBBFraction = 1.0 / 3.0;
constexpr double kMinZstdRatio = 2.0;
constexpr double kHoldToleranceS = 0.010;
constexpr double kNoStallS = 0.010;
constexpr auto kHold = std::chrono::milliseconds(150);

struct Outcome
{
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char *f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::vector<char> slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

RunConfig base_run(Mode m, const fs::path &out, std::uint64_t nx, std::uint64_t ny,
                   std::uint64_t nz, int ranks, int rpn, std::uint64_t steps)
{
    RunConfig c;
    c.workload.nx = nx;
    c.workload.ny = ny;
    c.workload.nz = nz;
    c.workload.ranks = ranks;
    c.workload.ranks_per_node = rpn;
    c.workload.steps = steps;
    c.engine.mode = m;
    c.out = out;
    c.timeout_s = 120;
    return c;
}

// The canonical file, built element by element from field_value.
std::vector<char> brute_force_flat(const WorkloadSpec &s)
{
    container::FlatHeader h;
    h.steps = s.steps;
    h.variables = workload_defs(s);
    const auto text = h.serialize();
    std::vector<char> out{'C', 'F', 'F', '1'};
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xff));
    out.insert(out.end(), text.begin(), text.end());
    for (std::uint64_t t = 0; t < s.steps; ++t)
        for (int v = 0; v < s.nvars; ++v)
            for (std::uint64_t z = 0; z < s.nz; ++z)
                for (std::uint64_t y = 0; y < s.ny; ++y)
                    for (std::uint64_t x = 0; x < s.nx; ++x)
                    {
                        const auto f =
                            static_cast<float>(field_value(v, x, y, z, t, s.seed, s.noise));
                        char b[4];
                        std::memcpy(b, &f, 4);
                        out.insert(out.end(), b, b + 4);
                    }
    return out;
}

Outcome round_trip()
{
    TempDir dir("miniio-acc-rt");
    const auto t0 = Clock::now();
    int runs = 0;
    std::vector<std::string> failed;
    auto attempt = [&](RunConfig c, const std::string &label) {
        ++runs;
        c.out = dir / ("r" + std::to_string(runs));
        try
        {
            const auto rep = run(c);
            if (!rep.ok())
            {
                failed.push_back(label + ": " + *rep.failure);
                return;
            }
            const auto v = verify_run(c.out);
            if (!v.ok)
                failed.push_back(label + ": " + v.message);
        }
        catch (const std::exception &e)
        {
            failed.push_back(label + ": " + e.what());
        }
        fs::remove_all(c.out);
        fs::remove_all(dir / "bb");
    };
    const auto cfg = [&](Mode m) { return base_run(m, dir.path(), 64, 48, 8, 4, 2, 3); };
    // codecs and BB exist only on the engines with block payloads
    for (auto m : {Mode::SerialFunnel, Mode::FilePerProcess, Mode::SharedTwoPhase})
        attempt(cfg(m), std::string(to_string(m)));
    for (auto m : {Mode::AggregatedSubfile, Mode::Staging})
        for (auto codec : {Codec::None, Codec::LZ4, Codec::Zstd, Codec::Zlib})
            for (bool shuffle : {false, true})
                for (int bb = 0; bb < (m == Mode::AggregatedSubfile ? 3 : 1); ++bb)
                {
                    if (codec == Codec::None && shuffle)
                        continue; // normalized away, same as unshuffled
                    auto c = cfg(m);
                    c.engine.codec = CodecSpec::with_defaults(codec);
                    c.engine.codec.shuffle = shuffle;
                    if (bb > 0)
                        c.engine.bb_dir = dir / "bb";
                    c.engine.drain = bb == 2;
                    attempt(c, std::string(to_string(m)) + "/" + std::string(to_string(codec)) +
                                   (shuffle ? "+shuffle" : "") +
                                   (bb == 1 ? "/bb" : bb == 2 ? "/bb+drain" : ""));
                }
    const double s = seconds_since(t0);
    Outcome o;
    o.pass = failed.empty() && s < kRoundTripBudgetS;
    o.detail = std::to_string(runs - failed.size()) + "/" + std::to_string(runs) +
               " configurations verified in " + fmt("%.1f s", s);
    if (!failed.empty())
        o.detail += "; first failure " + failed.front();
    return o;
}

Outcome oracle_equivalence()
{
    TempDir dir("miniio-acc-or");
    const auto t0 = Clock::now();
    auto cfg = [&](Mode m, const std::string &name) {
        return base_run(m, dir / name, 16, 16, 4, 4, 2, 3);
    };
    const auto want = brute_force_flat(cfg(Mode::SerialFunnel, "x").workload);
    std::vector<std::string> bad;
    auto compare = [&](const std::string &label, const fs::path &p) {
        if (slurp(p) != want)
            bad.push_back(label);
    };

    const auto agg = run(cfg(Mode::AggregatedSubfile, "agg"));
    container::consolidate(agg.artifact, dir / "consolidated.cff");
    compare("consolidate", dir / "consolidated.cff");

    const auto fpp = run(cfg(Mode::FilePerProcess, "fpp"));
    stitch(fpp.artifact, dir / "stitched.cff");
    compare("stitch", dir / "stitched.cff");

    compare("two_phase", run(cfg(Mode::SharedTwoPhase, "tp")).artifact);
    compare("funnel", run(cfg(Mode::SerialFunnel, "funnel")).artifact);

    const double s = seconds_since(t0);
    Outcome o;
    o.pass = bad.empty() && s < kOracleBudgetS;
    o.detail = bad.empty() ? "consolidate, stitch, two_phase, funnel byte-identical"
                           : "differs from the oracle: " + bad.front();
    o.detail += " in " + fmt("%.1f s", s);
    return o;
}

std::string cell_means(const SweepResult &r)
{
    std::string s;
    for (const auto &c : r.cells)
        s += (s.empty() ? "" : ", ") + c.label + "=" + fmt("%.3f", c.mean_s) +
             (c.failure.empty() ? "" : "(failed)");
    return s;
}

Outcome table1()
{
    TempDir dir("miniio-acc-t1");
    const auto t0 = Clock::now();
    RunConfig base;
    const auto cells = preset_cells("table1", base, dir.path());
    const auto res = bench_sweep("table1", cells, kTable1Reps, dir.path());
    const auto check = ordering_check(res.cells, kTable1MinGap);
    const double s = seconds_since(t0);
    Outcome o;
    o.pass = check.at("pass").get<bool>() && s < kTable1BudgetS;
    o.detail = cell_means(res) + "; gaps";
    for (const auto &g : check.at("gaps"))
        o.detail += " " + fmt("%.1f%%", 100.0 * g.at("gap").get<double>());
    o.detail += " (min " + fmt("%.0f%%", 100.0 * kTable1MinGap) + ") in " + fmt("%.0f s", s);
    return o;
}

Outcome ratio_law()
{
    TempDir dir("miniio-acc-ratio");
    RunConfig base;
    const auto cells = preset_cells("ratio", base, dir.path());
    const auto res = bench_sweep("ratio", cells, kTrendReps, dir.path());
    const std::vector<int> want{16, 8, 2};
    bool counts = res.cells.size() == 3;
    for (std::size_t i = 0; counts && i < 3; ++i)
        counts = res.cells[i].failure.empty() && res.cells[i].subfiles == want[i];
    const bool trend = counts && res.cells[0].mean_s >= res.cells[2].mean_s;
    Outcome o;
    o.pass = counts && trend;
    o.detail = "subfiles";
    for (const auto &c : res.cells)
        o.detail += " " + std::to_string(c.subfiles);
    o.detail += " (want 16 8 2); " + cell_means(res);
    return o;
}

Outcome bb_scaling()
{
    TempDir dir("miniio-acc-bb");
    RunConfig base;
    const auto cells = preset_cells("bb", base, dir.path());
    const auto res = bench_sweep("bb", cells, kTrendReps, dir.path());
    bool pass = res.cells.size() == 6;
    std::string detail;
    for (std::size_t i = 0; pass && i + 1 < res.cells.size(); i += 2)
    {
        const auto &off = res.cells[i];
        const auto &on = res.cells[i + 1];
        const double frac = on.mean_s / off.mean_s;
        detail += off.label.substr(0, off.label.find(',')) + " bb/pfs " + fmt("%.3f", frac) + "; ";
        if (!off.failure.empty() || !on.failure.empty())
            pass = false;
        else if (off.config.workload.nodes() >= 2 && frac > kBBFraction)
            pass = false;
    }

    // BB with and without drain holds exactly the bytes of the PFS-only run
    auto c = base_run(Mode::AggregatedSubfile, dir / "pfs", 64, 48, 8, 8, 4, 3);
    const auto pfs = run(c);
    c.out = dir / "bb_run";
    c.engine.bb_dir = dir / "bbdir";
    const auto bb = run(c);
    c.out = dir / "drain_run";
    c.engine.drain = true;
    const auto drained = run(c);
    bool same = pfs.ok() && bb.ok() && drained.ok();
    if (same)
    {
        container::consolidate(pfs.artifact, dir / "pfs.cff");
        container::consolidate(bb.artifact, dir / "bb.cff");
        container::consolidate(drained.artifact, dir / "drain.cff");
        const auto want = slurp(dir / "pfs.cff");
        same = slurp(dir / "bb.cff") == want && slurp(dir / "drain.cff") == want &&
               drained.artifact.parent_path() == c.out;
    }
    Outcome o;
    o.pass = pass && same;
    o.detail = detail + "byte check " + (same ? "ok" : "FAILED") + " (limit " +
               fmt("%.3f", kBBFraction) + " at 2+ nodes)";
    return o;
}

Outcome compression()
{
    TempDir dir("miniio-acc-codec");
    RunConfig base;
    const auto cells = preset_cells("codec", base, dir.path());
    const auto res = bench_sweep("codec", cells, kTrendReps, dir.path());
    bool pass = res.cells.size() == 4;
    const CellStats *none = nullptr;
    const CellStats *zstd = nullptr;
    for (const auto &c : res.cells)
    {
        pass = pass && c.failure.empty();
        if (c.config.engine.codec.codec == Codec::None)
            none = &c;
        if (c.config.engine.codec.codec == Codec::Zstd)
            zstd = &c;
    }
    pass = pass && none && zstd;
    std::string detail;
    if (pass)
    {
        const double ratio = double(zstd->raw_bytes) / double(zstd->stored_bytes);
        pass = ratio > kMinZstdRatio && zstd->config.engine.codec.shuffle;
        detail = "zstd+shuffle ratio " + fmt("%.2f", ratio) + "; stored";
        for (const auto &c : res.cells)
        {
            detail += " " + c.label + "=" + std::to_string(c.stored_bytes);
            if (&c != none)
                pass = pass && c.stored_bytes < none->stored_bytes;
        }
        pass = pass && zstd->mean_s < none->mean_s;
        detail += "; perceived " + cell_means(res);
    }
    Outcome o;
    o.pass = pass;
    o.detail = detail;
    return o;
}

std::vector<VariableDef> queue_defs()
{
    VariableDef d;
    d.name = "T";
    d.dtype = Dtype(DtypeTag::F32);
    d.shape = {64, 64};
    return {d};
}

struct QueueRun
{
    std::vector<double> end_step_s;
    std::size_t max_unreleased = 0;
};

// One writer rank, one reader that holds every step for kHold.
QueueRun queue_run(int limit)
{
    auto defs = queue_defs();
    EngineParams p;
    p.mode = Mode::Staging;
    {
        auto l = net::Listener::bind({"127.0.0.1", 0});
        p.control_endpoint = l.endpoint().str();
    }
    p.queue_limit = limit;
    p.queue_full_policy = QueueFullPolicy::Block;
    p.step_timeout_ms = 10000;
    QueueRun out;
    std::exception_ptr reader_error;
    std::thread reader([&] {
        try
        {
            staging::StageReader r(p.control_endpoint);
            while (auto idx = r.begin_step(std::chrono::seconds(10)))
            {
                (void)r.get("T");
                std::this_thread::sleep_for(kHold);
                r.end_step();
            }
        }
        catch (...)
        {
            reader_error = std::current_exception();
        }
    });
    miniio::testing::run_ranks(1, 1, [&](net::Comm &c) {
        staging::StageWriter w(p, defs, c);
        std::vector<std::byte> data(64 * 64 * 4, std::byte{1});
        for (std::uint64_t t = 0; t < 5; ++t)
        {
            w.put("T", t, Selection::whole(defs[0].shape), data);
            const auto t0 = Clock::now();
            w.end_step();
            out.end_step_s.push_back(seconds_since(t0));
        }
        out.max_unreleased = w.stats().max_unreleased;
        w.close();
    });
    reader.join();
    if (reader_error)
        std::rethrow_exception(reader_error);
    return out;
}

Outcome queue_limit()
{
    const double hold = std::chrono::duration<double>(kHold).count();
    const auto blocking = queue_run(1);
    bool pass = blocking.max_unreleased <= 1;
    double min_stall = 1e9;
    // step 0 has nothing queued ahead of it
    for (std::size_t i = 1; i < blocking.end_step_s.size(); ++i)
        min_stall = std::min(min_stall, blocking.end_step_s[i]);
    pass = pass && min_stall >= hold - kHoldToleranceS;

    const auto free_run = queue_run(0);
    double max_free = 0.0;
    for (double s : free_run.end_step_s)
        max_free = std::max(max_free, s);
    pass = pass && max_free < kNoStallS;

    bool bounded = true;
    for (int k : {2, 3})
        bounded = bounded && queue_run(k).max_unreleased <= static_cast<std::size_t>(k);
    pass = pass && bounded;

    Outcome o;
    o.pass = pass;
    o.detail = "limit=1 min stall " + fmt("%.1f ms", 1e3 * min_stall) + " (hold " +
               fmt("%.0f ms", 1e3 * hold) + "), max unreleased " +
               std::to_string(blocking.max_unreleased) + "; limit=0 max end_step " +
               fmt("%.2f ms", 1e3 * max_free) + "; limits 2,3 bounded " +
               (bounded ? "yes" : "no");
    return o;
}

Outcome transport()
{
    TempDir dir("miniio-acc-tr");
    auto c = base_run(Mode::AggregatedSubfile, dir / "container", 64, 48, 8, 4, 2, 3);
    const auto agg = run(c);
    container::consolidate(agg.artifact, dir / "container.cff");
    std::vector<std::string> bad;
    const auto want = slurp(dir / "container.cff");
    for (auto dp : {Dataplane::Tcp, Dataplane::Shm})
    {
        auto s = c;
        s.engine.mode = Mode::Staging;
        s.engine.dataplane = dp;
        s.out = dir / std::string(to_string(dp));
        const auto rep = run(s);
        if (!rep.ok() || slurp(rep.artifact) != want)
            bad.push_back(std::string(to_string(dp)));
    }
    Outcome o;
    o.pass = agg.ok() && bad.empty();
    o.detail = bad.empty() ? "container, staging/tcp, staging/shm bit-identical"
                           : "staging/" + bad.front() + " differs from the container";
    return o;
}

} // end anonymous namespace

int main(int argc, char **argv)
{
    CLI::App app{"acceptance checks"};
    std::vector<std::string> only;
    app.add_option("--only", only, "run only the named criteria");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"round_trip", round_trip},   {"oracle_equivalence", oracle_equivalence},
        {"table1_trend", table1},     {"aggregator_ratio", ratio_law},
        {"bb_scaling", bb_scaling},   {"compression", compression},
        {"queue_limit", queue_limit}, {"transport", transport}};

    int failed = 0;
    int ran = 0;
    for (const auto &[name, fn] : criteria)
    {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end())
            continue;
        ++ran;
        Outcome o;
        try
        {
            o = fn();
        }
        catch (const std::exception &e)
        {
            o.detail = std::string("threw: ") + e.what();
        }
        failed += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    if (ran == 0)
    {
        std::fprintf(stderr, "no criterion matched\n");
        return 2;
    }
    return failed == 0 ? 0 : 1;
}
