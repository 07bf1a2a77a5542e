/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "doctest.h"
#include "oracle.hpp"
#include "rank_group.hpp"

#include "miniio/container/aggregator_map.hpp"
#include "miniio/container/file.hpp"
#include "miniio/container/flat_file.hpp"
#include "miniio/container/reader.hpp"
#include "miniio/container/writer.hpp"
#include "miniio/core/error.hpp"

#include <chrono>
#include <cstring>
#include <fstream>
#include <set>

using namespace miniio;
using namespace miniio::container;
using miniio::testing::run_ranks;
using miniio::testing::TempDir;
using namespace miniio::testing::oracle;

namespace
{
void write_steps(Writer &w, net::Comm &c, const std::vector<VariableDef> &defs,
                 std::uint64_t steps)
{
    for (std::uint64_t t = 0; t < steps; ++t)
    {
        for (std::size_t v = 0; v < defs.size(); ++v)
        {
            const auto sel = row_split(defs[v], c.rank(), c.world_size());
            w.put(defs[v].name, t, sel, patch(defs[v], v, t, sel));
        }
        w.end_step();
    }
}

std::string slurp(const std::filesystem::path &p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_data_files(const std::filesystem::path &dir)
{
    std::size_t n = 0;
    for (const auto &e : std::filesystem::directory_iterator(dir))
        if (e.path().filename().string().starts_with("data."))
            ++n;
    return n;
}

EngineParams params_in(const TempDir &tmp)
{
    EngineParams p;
    p.pfs_dir = tmp / "pfs";
    p.step_timeout_ms = 10000;
    return p;
}
} // end anonymous namespace

TEST_CASE("aggregator_map examples")
{
    const auto m = aggregator_map(8, 4, 4);
    CHECK(m.aggregators() == std::vector<int>{0, 4});
    CHECK(m.num_subfiles() == 2);
    for (int r = 0; r < 4; ++r)
        CHECK(m.assignment[r] == AggregatorAssignment{0, 0});
    for (int r = 4; r < 8; ++r)
        CHECK(m.assignment[r] == AggregatorAssignment{4, 1});

    const auto big = aggregator_map(288, 36, 36);
    CHECK(big.num_subfiles() == 8);
    CHECK(big.aggregators().size() == 8);

    const auto solo = aggregator_map(4, 4, 1);
    CHECK(solo.num_subfiles() == 4);
    for (int r = 0; r < 4; ++r)
        CHECK(solo.is_aggregator(r));

    CHECK_THROWS_AS(aggregator_map(8, 4, 5), ConfigError);
    CHECK_THROWS_AS(aggregator_map(8, 4, 0), ConfigError);
    CHECK_THROWS_AS(aggregator_map(6, 4, 2), ConfigError);
}

TEST_CASE("aggregator_map invariants over many shapes")
{
    for (int rpn = 1; rpn <= 9; ++rpn)
        for (int nodes = 1; nodes <= 4; ++nodes)
            for (int ratio = 1; ratio <= rpn; ++ratio)
            {
                const int world = rpn * nodes;
                const auto m = aggregator_map(world, rpn, ratio);
                std::set<int> ids;
                for (int r = 0; r < world; ++r)
                {
                    const auto a = m.assignment[r];
                    REQUIRE(a.aggregator_rank / rpn == r / rpn); // same node
                    REQUIRE(a.aggregator_rank <= r);
                    REQUIRE(m.is_aggregator(a.aggregator_rank));
                    REQUIRE(r - a.aggregator_rank < ratio);
                    ids.insert(a.subfile_id);
                }
                const int per_node = (rpn + ratio - 1) / ratio;
                CHECK(m.num_subfiles() == per_node * nodes);
                CHECK(static_cast<int>(ids.size()) == m.num_subfiles());
                CHECK(*ids.rbegin() == m.num_subfiles() - 1);
                if (rpn % ratio == 0)
                    CHECK(m.num_subfiles() == world / ratio);
            }
}

TEST_CASE("flat file layout and reader validation")
{
    TempDir tmp;
    FlatHeader h;
    h.steps = 2;
    h.variables = two_vars({3, 2});
    auto w = FlatFileWriter::create(tmp / "a.cff", h);
    for (std::uint64_t t = 0; t < 2; ++t)
        for (std::size_t v = 0; v < 2; ++v)
            w.write_var(t, v, whole(h.variables[v], v, t));
    w.sync();
    CHECK_THROWS_AS(w.write_var(0, 0, std::vector<std::byte>(4)), ShapeError);

    const auto bytes = slurp(tmp / "a.cff");
    REQUIRE(bytes.substr(0, 4) == "CFF1");
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i)
        hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
    const auto header = nlohmann::json::parse(bytes.substr(12, hlen));
    CHECK(header.at("format_version") == 1);
    CHECK(header.at("steps") == 2);
    CHECK(header.at("variables").size() == 2);
    CHECK_FALSE(header.contains("step_ids"));
    CHECK(bytes.size() == 12 + hlen + 2 * 2 * 6 * 4);
    // step 1, variable U starts after step 0 and after T of step 1
    float first;
    std::memcpy(&first, bytes.data() + 12 + hlen + (2 * 6 + 6) * 4, 4);
    CHECK(first == value_at(1, 1, 0));

    FlatFileReader r(tmp / "a.cff");
    CHECK(r.header().steps == 2);
    CHECK(r.read_var(1, 0) == whole(h.variables[0], 0, 1));
    CHECK(FlatFileReader::is_flat_file(tmp / "a.cff"));

    std::filesystem::resize_file(tmp / "a.cff", bytes.size() - 1);
    CHECK_THROWS_AS(FlatFileReader(tmp / "a.cff"), FormatError);
    std::ofstream(tmp / "junk.bin") << "nope";
    CHECK_FALSE(FlatFileReader::is_flat_file(tmp / "junk.bin"));
    CHECK_THROWS_AS(FlatFileReader(tmp / "junk.bin"), FormatError);
}

TEST_CASE("pfs throttle charges latency plus size over bandwidth")
{
    TempDir tmp;
    const double bw = 100.0;
    PfsThrottle th(tmp / ".pfs_throttle", bw, 1000);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 4; ++i)
        th.charge(1'000'000); // 10 ms + 1 ms each
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(dt >= 0.044 * 0.9);
    CHECK(dt < 0.044 * 3);

    // two independent handles on the same state serialize their requests
    auto a = std::make_shared<PfsThrottle>(tmp / ".pfs_throttle", bw, 0);
    auto b = std::make_shared<PfsThrottle>(tmp / ".pfs_throttle", bw, 0);
    const auto t1 = std::chrono::steady_clock::now();
    std::thread ta([&] { a->charge(2'000'000); });
    std::thread tb([&] { b->charge(2'000'000); });
    ta.join();
    tb.join();
    const double dt2 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    CHECK(dt2 >= 0.040 * 0.9);
}

TEST_CASE("two ranks write disjoint halves and read back")
{
    TempDir tmp;
    const auto defs = two_vars({8, 6});
    auto params = params_in(tmp);
    params.codec = CodecSpec::default_compressed();
    run_ranks(2, 2, [&](net::Comm &c) {
        Writer w("out", params, defs, c);
        write_steps(w, c, defs, 3);
        w.close();
    });
    const Reader r(tmp / "pfs" / "out.mbp");
    CHECK(r.steps() == std::vector<std::uint64_t>{0, 1, 2});
    CHECK(r.info().world_size == 2);
    CHECK(r.info().codec == CodecSpec::default_compressed());
    const auto &idx = r.step_index(1);
    CHECK(idx.complete);
    REQUIRE(idx.blocks.size() == 4);
    CHECK(idx.blocks[0].var == "T");
    CHECK(idx.blocks[0].selection == row_split(defs[0], 0, 2));
    CHECK(idx.blocks[1].selection == row_split(defs[0], 1, 2));
    CHECK_FALSE(intersect(idx.blocks[0].selection, idx.blocks[1].selection).has_value());

    for (std::uint64_t t = 0; t < 3; ++t)
        for (std::size_t v = 0; v < 2; ++v)
        {
            CHECK(r.read(defs[v].name, t) == whole(defs[v], v, t));
            const auto mine = row_split(defs[v], 1, 2);
            CHECK(r.read(defs[v].name, t, mine) == patch(defs[v], v, t, mine));
        }
    // spans both writers' blocks
    const Selection straddle{{2, 1}, {5, 3}};
    CHECK(r.read("U", 2, straddle) == patch(defs[1], 1, 2, straddle));

    // every record lies within its sub-file
    for (auto s : r.steps())
        for (const auto &b : r.step_index(s).blocks)
        {
            CHECK(b.offset + b.stored_nbytes <=
                  std::filesystem::file_size(data_file(r.dir(), b.subfile_id)));
            CHECK(b.raw_nbytes == b.selection.element_count() * 4);
            CHECK(b.stat_min <= b.stat_max);
            if (b.codec.codec == Codec::None)
                CHECK(b.stored_nbytes == b.raw_nbytes);
        }

    const auto info = nlohmann::json::parse(slurp(tmp / "pfs" / "out.mbp" / "info.json"));
    for (const char *k : {"format_version", "created_unix_ms", "world_size", "ranks_per_node",
                          "aggregation_ratio", "variables", "params"})
        CHECK(info.contains(k));
    CHECK(info["params"]["codec"] == "zstd");
}

TEST_CASE("sub-file count follows the aggregator map")
{
    for (int ratio : {1, 2, 4})
    {
        TempDir tmp;
        const auto defs = two_vars({16, 4});
        auto params = params_in(tmp);
        params.aggregation_ratio = ratio;
        run_ranks(8, 4, [&](net::Comm &c) {
            Writer w("out", params, defs, c);
            write_steps(w, c, defs, 1);
            w.close();
        });
        CHECK(count_data_files(tmp / "pfs" / "out.mbp") ==
              static_cast<std::size_t>(aggregator_map(8, 4, ratio).num_subfiles()));
        const Reader r(tmp / "pfs" / "out.mbp");
        CHECK(r.read("T", 0) == whole(defs[0], 0, 0));
    }
}

TEST_CASE("put errors")
{
    TempDir tmp;
    const auto defs = two_vars({4, 4});
    run_ranks(1, 1, [&](net::Comm &c) {
        Writer w("out", params_in(tmp), defs, c);
        const auto all = Selection::whole(defs[0].shape);
        const auto data = whole(defs[0], 0, 0);
        CHECK_THROWS_AS(w.put("T", 1, all, data), StepOrderError);
        CHECK_THROWS_AS(w.put("Q", 0, all, data), IndexError);
        CHECK_THROWS_AS(w.put("T", 0, {{2, 0}, {4, 4}}, data), ShapeError);
        w.put("T", 0, all, data);
        CHECK_THROWS_AS(w.put("T", 0, all, data), DuplicateBlock);
        w.put("U", 0, all, whole(defs[1], 1, 0));
        const auto rep = w.end_step();
        CHECK(rep.step == 0);
        CHECK(rep.perceived_write_seconds > 0.0);
        CHECK(w.current_step() == 1);
        CHECK_THROWS_AS(w.put("T", 3, all, data), StepOrderError);
        w.close();
    });
}

TEST_CASE("ranks declaring different variables fail to open")
{
    TempDir tmp;
    int open_errors = 0;
    std::mutex mu;
    run_ranks(2, 2, [&](net::Comm &c) {
        auto defs = two_vars({4, 4});
        if (c.rank() == 1)
            defs[0].shape = {4, 5};
        try
        {
            Writer w("out", params_in(tmp), defs, c);
        }
        catch (const OpenError &)
        {
            std::lock_guard lock(mu);
            ++open_errors;
        }
    });
    CHECK(open_errors == 2);
}

TEST_CASE("unreachable directory fails to open")
{
    TempDir tmp;
    std::ofstream(tmp / "file") << "x";
    auto params = params_in(tmp);
    params.pfs_dir = tmp / "file" / "sub";
    run_ranks(1, 1, [&](net::Comm &c) {
        CHECK_THROWS_AS(Writer("out", params, two_vars({2, 2}), c), OpenError);
    });
}

TEST_CASE("a step without every rank's blocks is incomplete")
{
    TempDir tmp;
    auto params = params_in(tmp);
    params.step_timeout_ms = 300;
    const auto defs = two_vars({4, 4});
    std::atomic<int> incomplete{0};
    run_ranks(2, 1, [&](net::Comm &c) {
        Writer w("out", params, defs, c);
        if (c.rank() == 0)
        {
            for (std::size_t v = 0; v < 2; ++v)
            {
                const auto sel = row_split(defs[v], 0, 2);
                w.put(defs[v].name, 0, sel, patch(defs[v], v, 0, sel));
            }
            try
            {
                w.end_step();
            }
            catch (const IncompleteStep &)
            {
                ++incomplete;
            }
        }
        else
        {
            // rank 1 stalls past the timeout; its commit wait sees the verdict
            std::this_thread::sleep_for(std::chrono::milliseconds(600));
            try
            {
                c.expect(0, 14, std::chrono::seconds(5));
            }
            catch (const Error &)
            {
            }
        }
    });
    CHECK(incomplete == 1);
    const Reader r(tmp / "pfs" / "out.mbp");
    CHECK(r.steps().empty());
}

TEST_CASE("crash consistency")
{
    TempDir tmp;
    const auto defs = two_vars({6, 4});
    run_ranks(2, 2, [&](net::Comm &c) {
        Writer w("out", params_in(tmp), defs, c);
        write_steps(w, c, defs, 2);
        // step 2 is put but never ended; the writer is dropped without close
        const auto sel = row_split(defs[0], c.rank(), 2);
        w.put("T", 2, sel, patch(defs[0], 0, 2, sel));
    });
    const auto dir = tmp / "pfs" / "out.mbp";
    {
        const Reader r(dir);
        CHECK(r.steps() == std::vector<std::uint64_t>{0, 1});
        CHECK(r.read("U", 1) == whole(defs[1], 1, 1));
    }
    // truncation after any complete line, or inside a line
    const auto index = slurp(dir / "index.jsonl");
    const auto first_nl = index.find('\n');
    for (std::size_t cut : {first_nl + 1, first_nl + 10, index.size() - 1, std::size_t{5}})
    {
        std::filesystem::resize_file(dir / "index.jsonl", cut);
        const Reader r(dir);
        const auto expect = cut > first_nl ? 1u : 0u;
        CHECK(r.steps().size() == expect);
        if (expect)
            CHECK(r.read("T", 0) == whole(defs[0], 0, 0));
        std::ofstream(dir / "index.jsonl", std::ios::binary | std::ios::trunc) << index;
    }
}

TEST_CASE("empty container and reader refresh")
{
    TempDir tmp;
    const auto defs = two_vars({4, 2});
    run_ranks(1, 1, [&](net::Comm &c) {
        Writer w("out", params_in(tmp), defs, c);
        Reader r(tmp / "pfs" / "out.mbp");
        CHECK(r.steps().empty());
        write_steps(w, c, defs, 1);
        CHECK(r.refresh() == 1);
        CHECK(r.steps() == std::vector<std::uint64_t>{0});
        CHECK(r.refresh() == 0);
        w.close();
    });
    CHECK_THROWS_AS(Reader(tmp / "missing.mbp"), OpenError);
}

TEST_CASE("corrupt stored byte and coverage gap")
{
    TempDir tmp;
    const auto defs = two_vars({8, 6});
    auto params = params_in(tmp);
    params.codec = {Codec::LZ4, 1, true};
    run_ranks(2, 2, [&](net::Comm &c) {
        Writer w("out", params, defs, c);
        write_steps(w, c, defs, 1);
        // step 1: rank 1 leaves its last row out
        for (std::size_t v = 0; v < 2; ++v)
        {
            auto sel = row_split(defs[v], c.rank(), 2);
            if (c.rank() == 1)
                sel.count[0] -= 1;
            w.put(defs[v].name, 1, sel, patch(defs[v], v, 1, sel));
        }
        w.end_step();
        w.close();
    });
    const auto dir = tmp / "pfs" / "out.mbp";
    {
        const Reader r(dir);
        CHECK_THROWS_AS(r.read("T", 1), CoverageError);
        CHECK(r.read("T", 1, {{0, 0}, {7, 6}}) == patch(defs[0], 0, 1, {{0, 0}, {7, 6}}));
        CHECK_THROWS_AS(consolidate(dir, tmp / "gap.cff"), CoverageError);
    }
    const Reader r(dir);
    const auto rec = r.step_index(0).blocks[1];
    {
        std::fstream f(data_file(dir, rec.subfile_id), std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(static_cast<std::streamoff>(rec.offset + rec.stored_nbytes / 2));
        char ch;
        f.read(&ch, 1);
        ch = static_cast<char>(ch ^ 0x40);
        f.seekp(static_cast<std::streamoff>(rec.offset + rec.stored_nbytes / 2));
        f.write(&ch, 1);
    }
    try
    {
        r.read(rec.var, 0);
        FAIL("corruption not detected");
    }
    catch (const CorruptBlock &e)
    {
        CHECK(e.subfile() == rec.subfile_id);
        CHECK(e.offset() == rec.offset);
    }
}

TEST_CASE("burst buffer placement without drain")
{
    TempDir tmp;
    const auto defs = two_vars({8, 4});
    auto params = params_in(tmp);
    params.bb_dir = tmp / "bb";
    run_ranks(4, 4, [&](net::Comm &c) {
        Writer w("out", params, defs, c);
        CHECK(w.paths().final_dir() == tmp / "bb" / "out.mbp");
        write_steps(w, c, defs, 2);
        w.close();
    });
    CHECK(count_data_files(tmp / "bb" / "out.mbp") == 1);
    CHECK_FALSE(std::filesystem::exists(tmp / "pfs" / "out.mbp"));
    const Reader r(tmp / "bb" / "out.mbp");
    CHECK(r.read("U", 1) == whole(defs[1], 1, 1));
}

TEST_CASE("drained container equals a direct PFS container byte for byte")
{
    TempDir tmp;
    const auto defs = two_vars({32, 16});
    auto direct = params_in(tmp);
    direct.pfs_dir = tmp / "direct";
    direct.codec = CodecSpec::default_compressed();
    direct.aggregation_ratio = 2;
    auto drained = direct;
    drained.pfs_dir = tmp / "drained";
    drained.bb_dir = tmp / "bb";
    drained.drain = true;
    drained.pfs_bw_mbps = 200.0;

    run_ranks(4, 4, [&](net::Comm &c) {
        Writer w("out", direct, defs, c);
        write_steps(w, c, defs, 3);
        w.close();
    });
    std::atomic<std::uint64_t> pending_after{99};
    run_ranks(4, 4, [&](net::Comm &c) {
        Writer w("out", drained, defs, c);
        write_steps(w, c, defs, 3);
        const auto summary = w.close();
        CHECK(summary.steps == 3);
        if (c.rank() == 0)
            pending_after = w.drain_stats().bytes_pending;
        if (w.aggregator_map().is_aggregator(c.rank()))
        {
            CHECK(summary.bytes_drained > 0);
            CHECK(*w.drain_stats().drained_through_step == 2);
        }
    });
    CHECK(pending_after == 0);

    const auto a = tmp / "direct" / "out.mbp";
    const auto b = tmp / "drained" / "out.mbp";
    CHECK(count_data_files(b) == 2);
    for (const char *f : {"data.0", "data.1", "index.jsonl"})
        CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
    auto ia = nlohmann::json::parse(slurp(a / "info.json"));
    auto ib = nlohmann::json::parse(slurp(b / "info.json"));
    ia.erase("created_unix_ms");
    ib.erase("created_unix_ms");
    CHECK(ia == ib);
}

TEST_CASE("consolidate to the canonical flat file")
{
    TempDir tmp;
    const auto defs = two_vars({4, 4});
    run_ranks(2, 2, [&](net::Comm &c) {
        auto params = params_in(tmp);
        params.codec = {Codec::Zlib, 6, true};
        Writer w("out", params, defs, c);
        write_steps(w, c, defs, 2);
        w.close();
    });
    const auto rep = consolidate(tmp / "pfs" / "out.mbp", tmp / "out.cff");
    CHECK(rep.steps == 2);
    CHECK(rep.step_seconds.size() == 2);

    // oracle: header then T,U of step 0 then T,U of step 1, each row-major
    FlatHeader h;
    h.steps = 2;
    h.variables = defs;
    std::string expect = "CFF1";
    const auto text = h.serialize();
    for (int i = 0; i < 8; ++i)
        expect.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xFF));
    expect += text;
    for (std::uint64_t t = 0; t < 2; ++t)
        for (std::size_t v = 0; v < 2; ++v)
            for (std::uint64_t i = 0; i < 16; ++i)
            {
                const float x = value_at(v, t, i);
                expect.append(reinterpret_cast<const char *>(&x), 4);
            }
    CHECK(slurp(tmp / "out.cff") == expect);

    // flat input is copied unchanged
    consolidate(tmp / "out.cff", tmp / "again.cff");
    CHECK(slurp(tmp / "again.cff") == expect);
}
