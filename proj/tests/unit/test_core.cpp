/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "doctest.h"

#include "miniio/core/crc32c.hpp"
#include "miniio/core/error.hpp"
#include "miniio/core/params.hpp"
#include "miniio/core/step_index.hpp"
#include "miniio/core/types.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <string>

using namespace miniio;

namespace
{
// Bit-at-a-time reflected CRC32C, the reference the table code must match.
std::uint32_t crc32c_bitwise(std::span<const std::byte> data)
{
    std::uint32_t crc = 0xFFFFFFFFu;
    for (auto b : data)
    {
        crc ^= static_cast<std::uint8_t>(b);
        for (int k = 0; k < 8; ++k)
            crc = (crc >> 1) ^ (0x82F63B78u & (0u - (crc & 1u)));
    }
    return crc ^ 0xFFFFFFFFu;
}

std::span<const std::byte> as_bytes(const std::string &s)
{
    return std::as_bytes(std::span(s.data(), s.size()));
}

BlockRecord make_block(const std::string &var, int rank, std::uint64_t step = 2)
{
    BlockRecord b;
    b.var = var;
    b.step = step;
    b.writer_rank = rank;
    b.selection = {{static_cast<std::uint64_t>(rank) * 4, 0}, {4, 3}};
    b.subfile_id = rank / 2;
    b.offset = 1000u * static_cast<std::uint64_t>(rank);
    b.raw_nbytes = 48;
    b.stored_nbytes = 31;
    b.codec = {Codec::Zstd, 3, true};
    b.checksum_raw = 0x0000ABCDu + static_cast<std::uint32_t>(rank);
    b.stat_min = -1.25;
    b.stat_max = 300.0625 + rank;
    return b;
}
} // end anonymous namespace

TEST_CASE("crc32c reference values")
{
    const std::string check = "123456789";
    CHECK(crc32c_bitwise(as_bytes(check)) == 0xE3069283u);
    CHECK(crc32c(as_bytes(check)) == 0xE3069283u);
    CHECK(crc32c(std::span<const std::byte>{}) == 0u);
}

TEST_CASE("crc32c matches the bitwise oracle on random input of every length")
{
    std::mt19937_64 rng(7);
    for (std::size_t n = 0; n < 300; ++n)
    {
        std::vector<std::byte> buf(n);
        for (auto &b : buf)
            b = static_cast<std::byte>(rng());
        REQUIRE(crc32c(buf) == crc32c_bitwise(buf));
        // unaligned start
        if (n > 3)
        {
            std::span<const std::byte> tail(buf.data() + 3, n - 3);
            REQUIRE(crc32c(tail) == crc32c_bitwise(tail));
        }
    }
}

TEST_CASE("crc32c extend equals one-shot and a bit flip changes the value")
{
    std::vector<std::byte> buf(4097);
    std::mt19937 rng(3);
    for (auto &b : buf)
        b = static_cast<std::byte>(rng());
    const auto whole = crc32c(buf);
    const auto first = crc32c(std::span(buf).first(1000));
    CHECK(crc32c_extend(first, std::span(buf).subspan(1000)) == whole);
    const auto copy = buf;
    for (std::size_t i : {0u, 17u, 4096u})
    {
        buf[i] ^= std::byte{0x10};
        CHECK(crc32c(buf) != whole);
        buf[i] ^= std::byte{0x10};
    }
    CHECK(buf == copy);
}

TEST_CASE("dtype sizes")
{
    CHECK(Dtype(DtypeTag::F32).elem_size() == 4);
    CHECK(Dtype(DtypeTag::F64).elem_size() == 8);
    CHECK(Dtype(DtypeTag::I32).elem_size() == 4);
    CHECK(Dtype(DtypeTag::I64).elem_size() == 8);
    CHECK(Dtype(DtypeTag::U8).elem_size() == 1);
    for (auto t : {DtypeTag::F32, DtypeTag::F64, DtypeTag::I32, DtypeTag::I64, DtypeTag::U8})
        CHECK(Dtype::from_name(Dtype(t).name()) == Dtype(t));
    CHECK_THROWS_AS(Dtype::from_name("f16"), ConfigError);
}

TEST_CASE("canonical_offset examples")
{
    CHECK(canonical_offset({1, 2, 0}, {4, 3, 2}) == 10);
    CHECK(canonical_offset({0, 0, 0}, {4, 3, 2}) == 0);
    CHECK(canonical_offset({3, 2, 1}, {4, 3, 2}) == 23);
    CHECK_THROWS_AS(canonical_offset({4, 0, 0}, {4, 3, 2}), IndexError);
    CHECK_THROWS_AS(canonical_offset({0, 0}, {4, 3, 2}), IndexError);
}

TEST_CASE("canonical_offset is a bijection for shapes up to 5x5x5")
{
    for (std::uint64_t a = 1; a <= 5; ++a)
        for (std::uint64_t b = 1; b <= 5; ++b)
            for (std::uint64_t c = 1; c <= 5; ++c)
            {
                const Dims shape{a, b, c};
                std::vector<bool> seen(a * b * c, false);
                for (std::uint64_t i = 0; i < a; ++i)
                    for (std::uint64_t j = 0; j < b; ++j)
                        for (std::uint64_t k = 0; k < c; ++k)
                        {
                            const auto off = canonical_offset({i, j, k}, shape);
                            REQUIRE(off < seen.size());
                            REQUIRE_FALSE(seen[off]);
                            seen[off] = true;
                        }
                CHECK(std::all_of(seen.begin(), seen.end(), [](bool s) { return s; }));
            }
}

TEST_CASE("validate_selection")
{
    const VariableDef def{"T", Dtype(DtypeTag::F32), {4, 3}, true};
    CHECK_FALSE(validate_selection({{0, 0}, {4, 3}}, def).has_value());
    const auto over = validate_selection({{2, 0}, {3, 3}}, def);
    REQUIRE(over.has_value());
    CHECK(over->find("axis 0") != std::string::npos);
    const auto rank = validate_selection({{0}, {4}}, def);
    REQUIRE(rank.has_value());
    CHECK(rank->find("rank") != std::string::npos);
    const auto zero = validate_selection({{0, 0}, {4, 0}}, def);
    REQUIRE(zero.has_value());
    CHECK(zero->find("axis 1") != std::string::npos);
}

TEST_CASE("validate_defs")
{
    const Dtype f(DtypeTag::F32);
    CHECK_NOTHROW(validate_defs({{"T", f, {4, 3}, true}, {"U", f, {2}, true}}));
    CHECK_THROWS_AS(validate_defs({{"T", f, {4}, true}, {"T", f, {4}, true}}), ConfigError);
    CHECK_THROWS_AS(validate_defs({{"", f, {4}, true}}), ConfigError);
    CHECK_THROWS_AS(validate_defs({{"T", f, {4, 0}, true}}), ConfigError);
    CHECK_THROWS_AS(validate_defs({{"T", f, {}, true}}), ConfigError);
    CHECK_THROWS_AS(validate_defs({{"T", f, {1, 1, 1, 1, 1}, true}}), ConfigError);
}

TEST_CASE("intersect and copy_region against a brute-force copy")
{
    const Selection a{{1, 2}, {4, 5}};
    const Selection b{{3, 0}, {4, 4}};
    const auto isect = intersect(a, b);
    REQUIRE(isect.has_value());
    CHECK(*isect == Selection{{3, 2}, {2, 2}});
    CHECK_FALSE(intersect(a, Selection{{5, 0}, {1, 1}}).has_value());

    // src laid out as a, dst as b; each element carries its global index.
    const Dims shape{8, 8};
    std::vector<std::uint16_t> src(a.element_count()), dst(b.element_count(), 0xFFFF);
    for (std::uint64_t i = 0; i < 4; ++i)
        for (std::uint64_t j = 0; j < 5; ++j)
            src[i * 5 + j] = static_cast<std::uint16_t>(canonical_offset({1 + i, 2 + j}, shape));
    copy_region(reinterpret_cast<const std::byte *>(src.data()), a,
                reinterpret_cast<std::byte *>(dst.data()), b, *isect, 2);
    for (std::uint64_t i = 0; i < 4; ++i)
        for (std::uint64_t j = 0; j < 4; ++j)
        {
            const auto gi = 3 + i, gj = j;
            const bool inside = gi >= 3 && gi < 5 && gj >= 2 && gj < 4;
            const auto v = dst[i * 4 + j];
            if (inside)
                CHECK(v == canonical_offset({gi, gj}, shape));
            else
                CHECK(v == 0xFFFF);
        }
}

TEST_CASE("index_merge")
{
    SUBCASE("complete world")
    {
        StepIndex f0{2, {make_block("T", 0), make_block("U", 0)}, false};
        StepIndex f1{2, {make_block("U", 1), make_block("T", 1)}, false};
        const auto m = index_merge({f1, f0}, 2);
        CHECK(m.complete);
        CHECK(m.step == 2);
        REQUIRE(m.blocks.size() == 4);
        CHECK(m.blocks[0].var == "T");
        CHECK(m.blocks[0].writer_rank == 0);
        CHECK(m.blocks[1].writer_rank == 1);
        CHECK(m.blocks[2].var == "U");
    }
    SUBCASE("missing rank")
    {
        StepIndex f0{2, {make_block("T", 0)}, false};
        CHECK_FALSE(index_merge({f0}, 2).complete);
    }
    SUBCASE("duplicate")
    {
        StepIndex f0{2, {make_block("T", 0)}, false};
        StepIndex g0{2, {make_block("T", 0)}, false};
        CHECK_THROWS_AS(index_merge({f0, g0}, 2), DuplicateBlock);
    }
    SUBCASE("mixed steps")
    {
        StepIndex f0{2, {make_block("T", 0)}, false};
        StepIndex f1{3, {make_block("T", 1, 3)}, false};
        CHECK_THROWS_AS(index_merge({f0, f1}, 2), IndexError);
    }
}

TEST_CASE("index_merge is order-insensitive")
{
    std::vector<StepIndex> frags;
    for (int r = 0; r < 5; ++r)
        frags.push_back({2, {make_block("V", r), make_block("A", r), make_block("T", r)}, false});
    const auto ref = index_merge(frags, 5);
    std::mt19937 rng(11);
    for (int trial = 0; trial < 20; ++trial)
    {
        std::shuffle(frags.begin(), frags.end(), rng);
        for (auto &f : frags)
            std::shuffle(f.blocks.begin(), f.blocks.end(), rng);
        CHECK(index_merge(frags, 5) == ref);
    }
}

TEST_CASE("index serialize and parse")
{
    StepIndex idx{2, {make_block("T", 0), make_block("T", 1), make_block("U", 0)}, true};
    idx.blocks[2].codec = {Codec::None, 0, false};
    idx.blocks[2].stored_nbytes = idx.blocks[2].raw_nbytes;
    const auto line = index_serialize(idx);
    CHECK(line == index_serialize(idx));
    CHECK(line.find('\n') == std::string::npos);
    CHECK(line.find(": ") == std::string::npos);
    CHECK(index_parse(line) == idx);

    // key order is part of the format
    const std::vector<std::string> keys = {"\"step\"", "\"complete\"", "\"blocks\"",
                                           "\"var\"", "\"rank\"", "\"start\"", "\"count\"",
                                           "\"subfile\"", "\"offset\"", "\"stored\"",
                                           "\"raw\"", "\"codec\"", "\"level\"", "\"shuffle\"",
                                           "\"crc32c\"", "\"min\"", "\"max\""};
    std::size_t pos = 0;
    for (const auto &k : keys)
    {
        const auto at = line.find(k, pos);
        REQUIRE_MESSAGE(at != std::string::npos, k);
        pos = at;
    }
    CHECK(line.find("\"crc32c\":\"0000abcd\"") != std::string::npos);
}

TEST_CASE("index_parse rejects malformed lines with a position")
{
    StepIndex idx{0, {make_block("T", 0, 0)}, true};
    const auto line = index_serialize(idx);
    for (std::size_t cut : {line.size() - 1, line.size() / 2, std::size_t{1}})
    {
        try
        {
            index_parse(line.substr(0, cut));
            FAIL("truncated line accepted");
        }
        catch (const ParseError &e)
        {
            CHECK(e.position() <= cut);
        }
    }
    CHECK_THROWS_AS(index_parse(""), ParseError);
    CHECK_THROWS_AS(index_parse("{\"step\":0}"), ParseError);
    CHECK_THROWS_AS(index_parse("[1,2]"), ParseError);
}

TEST_CASE("engine params validation and json")
{
    EngineParams p;
    CHECK_NOTHROW(p.validate());
    p.drain = true;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.bb_dir = "/tmp/bb";
    CHECK_NOTHROW(p.validate());

    EngineParams tp;
    tp.mode = Mode::SharedTwoPhase;
    tp.codec = CodecSpec::default_compressed();
    CHECK_THROWS_AS(tp.validate(), ConfigError);

    EngineParams q;
    q.mode = Mode::Staging;
    q.queue_limit = 0;
    q.queue_full_policy = QueueFullPolicy::Discard;
    q.dataplane = Dataplane::Shm;
    q.pfs_bw_mbps = 100.0;
    q.comm_latency_us = 200;
    q.codec = {Codec::LZ4, 1, true};
    nlohmann::json j = q;
    EngineParams back = j.get<EngineParams>();
    CHECK(back.mode == Mode::Staging);
    CHECK(back.queue_limit == 0);
    CHECK(back.queue_full_policy == QueueFullPolicy::Discard);
    CHECK(back.dataplane == Dataplane::Shm);
    CHECK(*back.pfs_bw_mbps == 100.0);
    CHECK(*back.comm_latency_us == 200);
    CHECK(back.codec == q.codec);
    CHECK(back.effective_op_latency_us() == 2000);

    CHECK(mode_from_string("11") == Mode::SharedTwoPhase);
    CHECK(mode_from_string("102") == Mode::FilePerProcess);
    CHECK(mode_from_string("2") == Mode::SerialFunnel);
    CHECK(io_form_label(Mode::AggregatedSubfile) == "adios2");
    CHECK_THROWS_AS(mode_from_string("bogus"), ConfigError);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"codec":"brotli"})").get<EngineParams>(),
                    ConfigError);
}
