/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "doctest.h"

#include "miniio/codecs/codec.hpp"
#include "miniio/container/flat_file.hpp"
#include "miniio/container/reader.hpp"
#include "miniio/core/error.hpp"
#include "miniio/harness/bench.hpp"
#include "miniio/harness/part_file.hpp"
#include "miniio/harness/run.hpp"
#include "miniio/harness/sinks.hpp"
#include "miniio/harness/verify.hpp"
#include "miniio/net/socket.hpp"
#include "rank_group.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

using namespace miniio;
using namespace miniio::harness;
using miniio::testing::TempDir;

namespace
{

RunConfig small_run(Mode m, const std::filesystem::path &out, int ranks = 4, int rpn = 2)
{
    RunConfig c;
    c.workload.nx = 16;
    c.workload.ny = 16;
    c.workload.nz = 4;
    c.workload.nvars = 3;
    c.workload.steps = 3;
    c.workload.ranks = ranks;
    c.workload.ranks_per_node = rpn;
    c.engine.mode = m;
    c.out = out;
    c.timeout_s = 60;
    return c;
}

std::vector<char> slurp(const std::filesystem::path &p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Canonical flat file built element by element from field_value alone.
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
                        const auto f = static_cast<float>(field_value(v, x, y, z, t, s.seed, s.noise));
                        char b[4];
                        std::memcpy(b, &f, 4);
                        out.insert(out.end(), b, b + 4);
                    }
    return out;
}

struct ScopedEnv
{
    ScopedEnv(const char *k, const char *v) : key(k) { ::setenv(k, v, 1); }
    ~ScopedEnv() { ::unsetenv(key); }
    const char *key;
};

} // end anonymous namespace

TEST_CASE("field values are deterministic and seed dependent")
{
    for (int v = 0; v < 3; ++v)
    {
        const double a = field_value(v, 3, 5, 1, 2, 7, 1e-3);
        const double b = field_value(v, 3, 5, 1, 2, 7, 1e-3);
        CHECK(std::memcmp(&a, &b, sizeof a) == 0);
        CHECK(field_value(v, 3, 5, 1, 2, 8, 1e-3) != a);
    }
    // interleaved calls over variables and seeds must not disturb each other
    const double first = field_value(1, 9, 9, 2, 0, 3, 1e-3);
    (void)field_value(4, 0, 0, 0, 0, 11, 1e-3);
    CHECK(field_value(1, 9, 9, 2, 0, 3, 1e-3) == first);
}

TEST_CASE("noise free field equals the closed form sinusoid sum")
{
    for (int v = 0; v < 4; ++v)
    {
        const auto p = field_params(v, 42);
        for (std::uint64_t t : {0u, 3u})
            for (std::uint64_t x : {0u, 7u, 31u})
                for (std::uint64_t y : {0u, 13u})
                    for (std::uint64_t z : {0u, 5u})
                    {
                        double want = p.base;
                        for (const auto &w : p.waves)
                            want += w.amp * std::sin(w.kx * double(x) + w.ky * double(y) +
                                                     w.kz * double(z) + w.phase + w.drift * double(t));
                        CHECK(field_value(v, x, y, z, t, 42, 0.0) == want);
                        // noise stays within its relative bound
                        const double noisy = field_value(v, x, y, z, t, 42, 1e-3);
                        CHECK(std::abs(noisy - want) <= 1e-3 * p.amp_sum);
                    }
    }
}

TEST_CASE("smooth field compresses better than two to one with zstd and shuffle")
{
    WorkloadSpec s;
    s.nx = 64;
    s.ny = 64;
    s.nz = 8;
    const auto whole = Selection::whole({8, 64, 64});
    for (int v = 0; v < s.nvars; ++v)
    {
        const auto raw = fill(s, v, 0, whole);
        const auto z = codecs::encode(raw, 4, CodecSpec::with_defaults(Codec::Zstd));
        INFO("variable " << variable_name(v));
        CHECK(double(raw.size()) / double(z.body.size()) > 2.0);
        for (auto c : {Codec::LZ4, Codec::Zlib})
            CHECK(codecs::encode(raw, 4, CodecSpec::with_defaults(c)).body.size() < raw.size());
    }
}

TEST_CASE("fill matches field_value over a selection")
{
    WorkloadSpec s;
    s.nx = 10;
    s.ny = 6;
    s.nz = 3;
    s.dtype = Dtype(DtypeTag::F64);
    const Selection sel{{1, 2, 3}, {2, 3, 4}};
    const auto bytes = fill(s, 2, 5, sel);
    REQUIRE(bytes.size() == 24 * 8);
    std::size_t i = 0;
    for (std::uint64_t z = 1; z < 3; ++z)
        for (std::uint64_t y = 2; y < 5; ++y)
            for (std::uint64_t x = 3; x < 7; ++x, ++i)
            {
                double got;
                std::memcpy(&got, bytes.data() + i * 8, 8);
                CHECK(got == field_value(2, x, y, z, 5, s.seed, s.noise));
            }
}

TEST_CASE("decomposition tiles the grid with near square patches")
{
    for (int ranks : {1, 2, 3, 4, 6, 8, 12, 16})
        for (auto [nx, ny] : {std::pair<std::uint64_t, std::uint64_t>{16, 16}, {37, 23}, {256, 192}})
        {
            WorkloadSpec s;
            s.nx = nx;
            s.ny = ny;
            s.nz = 2;
            s.ranks = ranks;
            s.ranks_per_node = 1;
            const auto d = decompose(s);
            REQUIRE(d.px * d.py == ranks);
            // no other factorisation is closer to square
            for (int px = 1; px <= ranks; ++px)
                if (ranks % px == 0)
                    CHECK(std::abs(double(nx) / d.px - double(ny) / d.py) <=
                          std::abs(double(nx) / px - double(ny) / (ranks / px)) + 1e-12);
            std::vector<int> owner(nx * ny, -1);
            for (int r = 0; r < ranks; ++r)
            {
                const auto p = patch_of(s, r);
                CHECK(p.start[0] == 0);
                CHECK(p.count[0] == 2);
                for (auto y = p.start[1]; y < p.start[1] + p.count[1]; ++y)
                    for (auto x = p.start[2]; x < p.start[2] + p.count[2]; ++x)
                    {
                        CHECK(owner[y * nx + x] == -1);
                        owner[y * nx + x] = r;
                    }
                // remainders go to the low-index patches
                const auto base_x = nx / d.px;
                CHECK(p.count[2] == base_x + ((r % d.px) < int(nx % d.px) ? 1 : 0));
            }
            CHECK(std::count(owner.begin(), owner.end(), -1) == 0);
        }
}

TEST_CASE("workload validation and json round trip")
{
    WorkloadSpec s;
    s.ranks = 6;
    s.ranks_per_node = 4;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.ranks = 8;
    s.dtype = Dtype(DtypeTag::I32);
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.dtype = Dtype(DtypeTag::F32);
    s.nx = 2;
    s.ny = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);

    WorkloadSpec a;
    a.nx = 33;
    a.seed = 99;
    a.dtype = Dtype(DtypeTag::F64);
    a.compute_ms = 12.5;
    WorkloadSpec b;
    from_json(nlohmann::json(a), b);
    CHECK(nlohmann::json(b) == nlohmann::json(a));
    CHECK_THROWS_AS(from_json(nlohmann::json{{"nx", "wide"}}, b), ConfigError);
    CHECK(variable_name(0) == "T");
    CHECK(variable_name(9) == "VAR9");
}

TEST_CASE("two-phase regions partition the variable and owners follow nodes")
{
    for (std::uint64_t n : {0u, 1u, 7u, 128u, 1001u})
        for (int W : {1, 2, 3, 4, 7})
        {
            std::uint64_t next = 0;
            for (int w = 0; w < W; ++w)
            {
                const auto r = two_phase_region(n, W, w);
                CHECK(r.begin == next);
                CHECK(r.end >= r.begin);
                next = r.end;
            }
            CHECK(next == n);
        }
    CHECK(two_phase_owners(16, 4, 0) == std::vector<int>{0, 4, 8, 12});
    CHECK(two_phase_owners(8, 8, 0) == std::vector<int>{0});
    CHECK(two_phase_owners(8, 4, 2) == std::vector<int>{0, 4});
    CHECK(two_phase_owners(4, 4, 3) == std::vector<int>{0, 1, 2});
}

TEST_CASE("two-phase with two writers on two ranks equals the brute force file")
{
    TempDir dir("miniio-tp");
    auto c = small_run(Mode::SharedTwoPhase, dir / "run", 2, 2);
    c.workload.nx = 8;
    c.workload.ny = 4;
    c.workload.nz = 2;
    c.engine.two_phase_writers = 2;
    const auto rep = run(c);
    REQUIRE_MESSAGE(rep.ok(), rep.failure.value_or(""));
    CHECK(rep.extra.at("two_phase_writers") == 2);
    CHECK(slurp(rep.artifact) == brute_force_flat(c.workload));

    // one writer degenerates to a funnel through rank 0
    c.engine.two_phase_writers = 1;
    c.out = dir / "one";
    const auto one = run(c);
    REQUIRE(one.ok());
    CHECK(slurp(one.artifact) == brute_force_flat(c.workload));
}

TEST_CASE("serial funnel equals consolidate of the aggregated container")
{
    TempDir dir("miniio-fun");
    const auto funnel = run(small_run(Mode::SerialFunnel, dir / "funnel"));
    const auto agg = run(small_run(Mode::AggregatedSubfile, dir / "agg"));
    REQUIRE(funnel.ok());
    REQUIRE(agg.ok());
    container::consolidate(agg.artifact, dir / "agg.cff");
    CHECK(slurp(funnel.artifact) == slurp(dir / "agg.cff"));
    CHECK(slurp(funnel.artifact) == brute_force_flat(funnel.config.workload));
    CHECK(verify_run(dir / "funnel").ok);
    CHECK(verify_run(dir / "agg").ok);
}

TEST_CASE("file per process leaves one part per rank and stitches to the canonical file")
{
    TempDir dir("miniio-fpp");
    const auto rep = run(small_run(Mode::FilePerProcess, dir / "run"));
    REQUIRE(rep.ok());
    int parts = 0;
    for (const auto &e : std::filesystem::directory_iterator(dir / "run"))
        parts += e.path().filename().string().find(".part.") != std::string::npos;
    CHECK(parts == 4);
    const auto st = stitch(rep.artifact, dir / "stitched.cff");
    CHECK(st.parts == 4);
    CHECK(st.steps == 3);
    CHECK(st.seconds >= 0.0);
    CHECK(slurp(dir / "stitched.cff") == brute_force_flat(rep.config.workload));
    CHECK(verify(dir / "stitched.cff", rep.config.workload).ok);
    CHECK(verify(rep.artifact, rep.config.workload).ok);

    // a missing part is a format error, not a silent gap
    std::filesystem::remove(part_path(dir / "run", "wrfout", 2));
    CHECK_THROWS_AS(stitch(rep.artifact, dir / "again.cff"), FormatError);
    CHECK_FALSE(verify(rep.artifact, rep.config.workload).ok);
}

TEST_CASE("staging output verifies through the reader side capture")
{
    TempDir dir("miniio-stg");
    auto c = small_run(Mode::Staging, dir / "run");
    for (auto dp : {Dataplane::Tcp, Dataplane::Shm})
    {
        c.engine.dataplane = dp;
        const auto rep = run(c);
        REQUIRE_MESSAGE(rep.ok(), rep.failure.value_or(""));
        CHECK(rep.artifact == capture_output(rep.config));
        CHECK(rep.extra.at("captured_steps").size() == 3);
        const auto v = verify_run(dir / "run");
        CHECK_MESSAGE(v.ok, v.message);
        CHECK(slurp(rep.artifact) == brute_force_flat(c.workload));
    }
}

TEST_CASE("a flipped byte in data.0 names the variable, step and element")
{
    TempDir dir("miniio-flip");
    const auto rep = run(small_run(Mode::AggregatedSubfile, dir / "run"));
    REQUIRE(rep.ok());
    REQUIRE(verify_run(dir / "run").ok);

    // locate element 5 of U's block at step 1 in sub-file 0
    const container::Reader reader(rep.artifact);
    const BlockRecord *rec = nullptr;
    for (const auto &b : reader.step_index(1).blocks)
        if (b.var == "U" && b.subfile_id == 0)
            rec = &b;
    REQUIRE(rec != nullptr);
    const std::uint64_t j = 5;
    const auto &sel = rec->selection;
    const auto z = j / (sel.count[1] * sel.count[2]);
    const auto y = j / sel.count[2] % sel.count[1];
    const auto x = j % sel.count[2];
    const auto expect_index = ((sel.start[0] + z) * 16 + sel.start[1] + y) * 16 + sel.start[2] + x;
    {
        std::fstream f(container::data_file(rep.artifact, 0),
                       std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(static_cast<std::streamoff>(rec->offset + j * 4 + 1));
        char b = 0;
        f.read(&b, 1);
        b = static_cast<char>(b ^ 0x10);
        f.seekp(static_cast<std::streamoff>(rec->offset + j * 4 + 1));
        f.write(&b, 1);
    }
    const auto v = verify_run(dir / "run");
    CHECK_FALSE(v.ok);
    REQUIRE(v.mismatch.has_value());
    CHECK(v.mismatch->var == "U");
    CHECK(v.mismatch->step == 1);
    CHECK(v.mismatch->index == expect_index);
    CHECK(v.message.find("\"U\" step 1 element " + std::to_string(expect_index)) != std::string::npos);
}

TEST_CASE("report totals are the exact sum of the step column")
{
    TempDir dir("miniio-rep");
    auto c = small_run(Mode::AggregatedSubfile, dir / "run");
    c.workload.steps = 5;
    c.workload.compute_ms = 5;
    const auto rep = run(c);
    REQUIRE(rep.ok());
    REQUIRE(rep.steps.size() == 5);
    double sum = 0.0;
    for (const auto &s : rep.steps)
    {
        sum += s.perceived_write_s;
        CHECK(s.compute_s >= 0.005);
    }
    CHECK(rep.io_sum_s == sum);
    CHECK(rep.io_sum_s >= 0.0);

    // the files carry the same numbers bit for bit
    const auto loaded = load_report(dir / "run");
    CHECK(loaded.io_sum_s == rep.io_sum_s);
    std::ifstream csv(dir / "run" / "steps.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "step,perceived_write_s,compute_s");
    double csv_sum = 0.0;
    int rows = 0;
    while (std::getline(csv, line))
    {
        std::stringstream ss(line);
        std::string step, pw;
        std::getline(ss, step, ',');
        std::getline(ss, pw, ',');
        CHECK(std::stoull(step) == static_cast<unsigned long long>(rows));
        csv_sum += std::strtod(pw.c_str(), nullptr);
        ++rows;
    }
    CHECK(rows == 5);
    CHECK(csv_sum == rep.io_sum_s);
}

TEST_CASE("equal spec, params and seed give identical containers")
{
    TempDir dir("miniio-det");
    auto c = small_run(Mode::AggregatedSubfile, dir / "a");
    c.engine.codec = CodecSpec::with_defaults(Codec::Zstd);
    const auto a = run(c);
    c.out = dir / "b";
    const auto b = run(c);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK(slurp(a.artifact / container::kIndexFile) == slurp(b.artifact / container::kIndexFile));
    for (int k = 0; std::filesystem::exists(container::data_file(a.artifact, k)); ++k)
        CHECK(slurp(container::data_file(a.artifact, k)) == slurp(container::data_file(b.artifact, k)));
    // timing fields aside, the info files agree too
    auto ia = nlohmann::json::parse(slurp(a.artifact / container::kInfoFile));
    auto ib = nlohmann::json::parse(slurp(b.artifact / container::kInfoFile));
    ia.erase("created_unix_ms");
    ib.erase("created_unix_ms");
    CHECK(ia == ib);
}

TEST_CASE("a rank that dies leaves a partial report naming it")
{
    TempDir dir("miniio-crash");
    ScopedEnv fault("MINIIO_FAULT_RANK", "1:1");
    const auto rep = run(small_run(Mode::AggregatedSubfile, dir / "run"));
    REQUIRE_FALSE(rep.ok());
    CHECK(rep.failure->find("rank") != std::string::npos);
    CHECK(rep.steps.size() == 1);
    const auto loaded = load_report(dir / "run");
    CHECK(loaded.failure == rep.failure);
    CHECK_FALSE(verify_run(dir / "run").ok);
}

TEST_CASE("runtime open failure is reported, config errors throw before spawning")
{
    TempDir dir("miniio-fail");
    auto c = small_run(Mode::AggregatedSubfile, dir / "run");
    {
        std::ofstream blocker(dir / "not_a_dir");
    }
    c.engine.bb_dir = dir / "not_a_dir" / "bb";
    CHECK_THROWS(run(c));

    auto bad = small_run(Mode::SharedTwoPhase, dir / "bad");
    bad.engine.codec = CodecSpec::with_defaults(Codec::Zstd);
    CHECK_THROWS_AS(run(bad), ConfigError);
    bad = small_run(Mode::AggregatedSubfile, dir / "bad");
    bad.workload.ranks = 3;
    CHECK_THROWS_AS(run(bad), ConfigError);
}

TEST_CASE("throttled PFS writes take at least bytes over bandwidth")
{
    TempDir dir("miniio-bw");
    for (auto m : {Mode::SerialFunnel, Mode::AggregatedSubfile, Mode::SharedTwoPhase})
    {
        auto c = small_run(m, dir / std::string(to_string(m)));
        c.workload.nx = 64;
        c.workload.ny = 64;
        c.workload.nz = 8;
        c.workload.nvars = 4;
        c.engine.pfs_bw_mbps = 50.0;
        const auto rep = run(c);
        REQUIRE(rep.ok());
        const double bytes = double(c.workload.bytes_per_step() * c.workload.steps);
        const double floor_s = bytes / (50.0 * 1e6);
        INFO(to_string(m) << " io_sum " << rep.io_sum_s << " floor " << floor_s);
        CHECK(rep.io_sum_s >= 0.9 * floor_s);
    }
}

TEST_CASE("ratio sweep subfile counts follow the aggregator map")
{
    TempDir dir("miniio-ratio");
    RunConfig base;
    base.workload.nx = 16;
    base.workload.ny = 16;
    base.workload.nz = 2;
    base.workload.nvars = 2;
    base.workload.steps = 2;
    auto cells = preset_cells("ratio", base, dir.path());
    REQUIRE(cells.size() == 3);
    for (auto &c : cells)
        c.config.engine.pfs_bw_mbps.reset();
    const auto res = bench_sweep("ratio", cells, 1, dir.path());
    REQUIRE(res.cells.size() == 3);
    CHECK(res.cells[0].subfiles == 16);
    CHECK(res.cells[1].subfiles == 8);
    CHECK(res.cells[2].subfiles == 2);
    const auto csv = sweep_csv(res);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK_THROWS_AS(preset_cells("nope", base, dir.path()), ConfigError);
}

TEST_CASE("codec sweep stores fewer bytes than raw for every codec")
{
    TempDir dir("miniio-codec");
    RunConfig base;
    base.workload.nx = 64;
    base.workload.ny = 64;
    base.workload.nz = 8;
    base.workload.nvars = 2;
    base.workload.steps = 1;
    base.workload.ranks = 4;
    base.workload.ranks_per_node = 2;
    auto cells = preset_cells("codec", base, dir.path());
    for (auto &c : cells)
        c.config.engine.pfs_bw_mbps.reset();
    const auto res = bench_sweep("codec", cells, 2, dir.path());
    REQUIRE(res.cells.size() == 4);
    CHECK(res.cells[0].stored_bytes == res.cells[0].raw_bytes);
    for (std::size_t i = 1; i < 4; ++i)
    {
        CHECK(res.cells[i].failure.empty());
        CHECK(res.cells[i].samples.size() == 2);
        CHECK(res.cells[i].stored_bytes < res.cells[i].raw_bytes);
        CHECK(res.cells[i].min_s <= res.cells[i].mean_s);
        CHECK(res.cells[i].mean_s <= res.cells[i].max_s);
    }
}

TEST_CASE("ordering check needs strict order and the minimum gap")
{
    auto cell = [](const char *label, double mean) {
        CellStats c;
        c.label = label;
        c.mean_s = mean;
        return c;
    };
    CHECK(ordering_check({cell("a", 10), cell("b", 8), cell("c", 6)}, 0.15)["pass"] == true);
    CHECK(ordering_check({cell("a", 10), cell("b", 9), cell("c", 6)}, 0.15)["pass"] == false);
    CHECK(ordering_check({cell("a", 10), cell("b", 11)}, 0.0)["pass"] == false);
    auto failed = cell("x", 1);
    failed.failure = "boom";
    CHECK(ordering_check({cell("a", 10), failed}, 0.15)["pass"] == false);
}
