/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "doctest.h"

#include "miniio/codecs/block.hpp"
#include "miniio/codecs/codec.hpp"
#include "miniio/core/crc32c.hpp"
#include "miniio/core/error.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace miniio;
using namespace miniio::codecs;

namespace
{
std::vector<CodecSpec> all_specs()
{
    std::vector<CodecSpec> out{{Codec::None, 0, false}};
    for (bool sh : {false, true})
    {
        out.push_back({Codec::LZ4, 1, sh});
        out.push_back({Codec::LZ4, 9, sh});
        out.push_back({Codec::Zstd, 1, sh});
        out.push_back({Codec::Zstd, 3, sh});
        out.push_back({Codec::Zstd, 19, sh});
        out.push_back({Codec::Zlib, 1, sh});
        out.push_back({Codec::Zlib, 6, sh});
    }
    return out;
}

Bytes random_bytes(std::size_t n, std::mt19937_64 &rng)
{
    Bytes b(n);
    for (auto &x : b)
        x = static_cast<std::byte>(rng());
    return b;
}

Bytes smooth_floats(std::size_t n)
{
    Bytes b(n * 4);
    for (std::size_t i = 0; i < n; ++i)
    {
        const float v = 280.0f + 10.0f * std::sin(0.01f * static_cast<float>(i));
        std::memcpy(b.data() + 4 * i, &v, 4);
    }
    return b;
}
} // end anonymous namespace

TEST_CASE("shuffle examples and inverse")
{
    const Bytes raw{std::byte{0xa0}, std::byte{0xa1}, std::byte{0xb0}, std::byte{0xb1}};
    const Bytes expect{std::byte{0xa0}, std::byte{0xb0}, std::byte{0xa1}, std::byte{0xb1}};
    CHECK(shuffle_bytes(raw, 2) == expect);
    CHECK(shuffle_bytes(raw, 1) == raw);
    std::mt19937_64 rng(5);
    for (std::size_t es : {1u, 4u, 8u})
    {
        const auto x = random_bytes(es * 37, rng);
        CHECK(unshuffle_bytes(shuffle_bytes(x, es), es) == x);
    }
    CHECK_THROWS_AS(shuffle_bytes(Bytes(7), 4), ShapeError);
}

TEST_CASE("shuffle matches its definition")
{
    std::mt19937_64 rng(9);
    const std::size_t es = 4, n = 23;
    const auto raw = random_bytes(es * n, rng);
    const auto out = shuffle_bytes(raw, es);
    for (std::size_t i = 0; i < es; ++i)
        for (std::size_t j = 0; j < n; ++j)
            REQUIRE(out[i * n + j] == raw[j * es + i]);
}

TEST_CASE("zeros compress to a tiny body")
{
    const Bytes zeros(4096);
    const auto p = encode(zeros, 4, {Codec::Zstd, 3, false});
    CHECK(p.header.spec.codec == Codec::Zstd);
    CHECK(p.body.size() < 64);
    CHECK(decode(p) == zeros);
}

TEST_CASE("codec none is the identity")
{
    std::mt19937_64 rng(1);
    const auto x = random_bytes(1000, rng);
    const auto p = encode(x, 4, {Codec::None, 0, false});
    CHECK(p.body == x);
    CHECK(p.header.raw_nbytes == 1000);
}

TEST_CASE("lossless round trip for every codec setting")
{
    std::mt19937_64 rng(42);
    for (const auto &spec : all_specs())
    {
        CAPTURE(std::string(to_string(spec.codec)));
        CAPTURE(spec.level);
        CAPTURE(spec.shuffle);
        for (int i = 0; i < 10; ++i)
        {
            const auto x = random_bytes(8 * (1 + rng() % 500), rng);
            const auto p = encode(x, 8, spec);
            REQUIRE(decode(p) == x);
            CHECK(p.body.size() <= x.size());
            if (p.header.spec.codec == Codec::None)
                CHECK(p.body.size() == x.size());
        }
        const auto s = smooth_floats(4096);
        const auto p = encode(s, 4, spec);
        REQUIRE(decode(p) == s);
        if (spec.codec != Codec::None && spec.shuffle)
            CHECK(p.body.size() < s.size());
        CHECK(decode(encode(Bytes{}, 4, spec)).empty());
    }
}

TEST_CASE("incompressible data falls back to raw storage")
{
    std::mt19937_64 rng(2);
    const auto x = random_bytes(1 << 16, rng);
    for (auto c : {Codec::LZ4, Codec::Zstd, Codec::Zlib})
    {
        const auto p = encode(x, 1, {c, 1, false});
        CHECK(p.header.spec.codec == Codec::None);
        CHECK(p.body == x);
    }
}

TEST_CASE("damaged bodies are rejected")
{
    const auto s = smooth_floats(2048);
    for (auto c : {Codec::LZ4, Codec::Zstd, Codec::Zlib})
    {
        CAPTURE(std::string(to_string(c)));
        auto p = encode(s, 4, {c, 3, true});
        REQUIRE(p.header.spec.codec == c);
        auto truncated = p.body;
        truncated.pop_back();
        CHECK_THROWS_AS(decode(p.header, truncated), Error);
        auto bad = p.header;
        bad.raw_nbytes += 4;
        CHECK_THROWS_AS(decode(bad, p.body), Error);
        auto garbage = p.body;
        for (std::size_t i = 0; i < garbage.size(); i += 3)
            garbage[i] ^= std::byte{0x5a};
        try
        {
            const auto out = decode(p.header, garbage);
            CHECK(out != s);
        }
        catch (const CodecError &)
        {
        }
        catch (const FormatError &)
        {
        }
    }
    PayloadHeader none{8, {Codec::None, 0, false}, 4};
    CHECK_THROWS_AS(decode(none, Bytes(7)), FormatError);
}

TEST_CASE("codec level validation")
{
    CHECK_NOTHROW((CodecSpec{Codec::Zstd, 22, true}).validate());
    CHECK_THROWS_AS((CodecSpec{Codec::Zstd, 0, true}).validate(), ConfigError);
    CHECK_THROWS_AS((CodecSpec{Codec::Zlib, 10, true}).validate(), ConfigError);
    CHECK_THROWS_AS((CodecSpec{Codec::LZ4, 13, true}).validate(), ConfigError);
    CHECK((CodecSpec{Codec::None, 5, true}).normalized() == CodecSpec{Codec::None, 0, false});
    CHECK_THROWS_AS(codec_from_string("blosclz"), ConfigError);
}

TEST_CASE("prepare_block fills record fields and decode_checked catches damage")
{
    const VariableDef def{"T", Dtype(DtypeTag::F32), {8, 6}, true};
    const Selection sel{{0, 0}, {4, 6}};
    Bytes raw(4 * 24);
    for (int i = 0; i < 24; ++i)
    {
        const float v = i == 5 ? NAN : static_cast<float>(i) - 3.5f;
        std::memcpy(raw.data() + 4 * i, &v, 4);
    }
    const auto b = prepare_block(def, 0, sel, raw, {Codec::Zstd, 3, true});
    CHECK(b.stat_min == -3.5);
    CHECK(b.stat_max == 19.5);
    CHECK(b.checksum_raw == crc32c(raw));
    const auto rec = b.record(4, 1, 0, 128);
    CHECK(rec.raw_nbytes == raw.size());
    CHECK(rec.stored_nbytes == b.payload.body.size());
    CHECK(rec.offset == 128);
    CHECK(decode_checked(rec, def.dtype, b.payload.body) == raw);

    auto bad = rec;
    bad.checksum_raw ^= 1;
    CHECK_THROWS_AS(decode_checked(bad, def.dtype, b.payload.body), CorruptBlock);

    CHECK_THROWS_AS(prepare_block(def, 0, {{6, 0}, {4, 6}}, raw, {}), ShapeError);
    CHECK_THROWS_AS(prepare_block(def, 0, sel, std::span(raw).first(8), {}), ShapeError);

    std::vector<std::int32_t> ints{7, -9, 4};
    const auto [lo, hi] = block_stats(std::as_bytes(std::span(ints)), Dtype(DtypeTag::I32));
    CHECK(lo == -9.0);
    CHECK(hi == 7.0);
}
