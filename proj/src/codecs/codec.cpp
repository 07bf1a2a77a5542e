/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/codecs/codec.hpp"
#include "miniio/core/error.hpp"

#include <lz4frame.h>
#include <zlib.h>
#include <zstd.h>

#include <cstring>
#include <memory>
#include <string>

namespace miniio::codecs
{

Bytes shuffle_bytes(std::span<const std::byte> raw, std::size_t elem_size)
{
    if (elem_size == 0 || raw.size() % elem_size != 0)
        throw ShapeError("shuffle: " + std::to_string(raw.size()) +
                         " bytes not divisible by element size " +
                         std::to_string(elem_size));
    Bytes out(raw.size());
    const std::size_t n = raw.size() / elem_size;
    if (elem_size == 1)
    {
        std::memcpy(out.data(), raw.data(), raw.size());
        return out;
    }
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < elem_size; ++i)
            out[i * n + j] = raw[j * elem_size + i];
    return out;
}

Bytes unshuffle_bytes(std::span<const std::byte> shuffled, std::size_t elem_size)
{
    if (elem_size == 0 || shuffled.size() % elem_size != 0)
        throw ShapeError("unshuffle: " + std::to_string(shuffled.size()) +
                         " bytes not divisible by element size " +
                         std::to_string(elem_size));
    Bytes out(shuffled.size());
    const std::size_t n = shuffled.size() / elem_size;
    if (elem_size == 1)
    {
        std::memcpy(out.data(), shuffled.data(), shuffled.size());
        return out;
    }
    for (std::size_t i = 0; i < elem_size; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out[j * elem_size + i] = shuffled[i * n + j];
    return out;
}

namespace
{

Bytes compress_zstd(std::span<const std::byte> in, int level)
{
    Bytes out(ZSTD_compressBound(in.size()));
    const auto n = ZSTD_compress(out.data(), out.size(), in.data(), in.size(), level);
    if (ZSTD_isError(n))
        throw CodecError(std::string("zstd: ") + ZSTD_getErrorName(n));
    out.resize(n);
    return out;
}

void decompress_zstd(std::span<const std::byte> in, std::span<std::byte> out)
{
    const auto n = ZSTD_decompress(out.data(), out.size(), in.data(), in.size());
    if (ZSTD_isError(n))
        throw CodecError(std::string("zstd: ") + ZSTD_getErrorName(n));
    if (n != out.size())
        throw CodecError("zstd: decoded " + std::to_string(n) + " bytes, expected " +
                         std::to_string(out.size()));
}

Bytes compress_lz4(std::span<const std::byte> in, int level)
{
    LZ4F_preferences_t prefs;
    std::memset(&prefs, 0, sizeof(prefs));
    prefs.compressionLevel = level;
    prefs.frameInfo.contentSize = in.size();
    Bytes out(LZ4F_compressFrameBound(in.size(), &prefs));
    const auto n = LZ4F_compressFrame(out.data(), out.size(), in.data(), in.size(), &prefs);
    if (LZ4F_isError(n))
        throw CodecError(std::string("lz4: ") + LZ4F_getErrorName(n));
    out.resize(n);
    return out;
}

void decompress_lz4(std::span<const std::byte> in, std::span<std::byte> out)
{
    LZ4F_dctx *raw_ctx = nullptr;
    if (LZ4F_isError(LZ4F_createDecompressionContext(&raw_ctx, LZ4F_VERSION)))
        throw CodecError("lz4: cannot create decompression context");
    std::unique_ptr<LZ4F_dctx, decltype(&LZ4F_freeDecompressionContext)> ctx(
        raw_ctx, &LZ4F_freeDecompressionContext);

    std::size_t in_pos = 0, out_pos = 0;
    while (true)
    {
        std::size_t src_size = in.size() - in_pos;
        std::size_t dst_size = out.size() - out_pos;
        const auto hint = LZ4F_decompress(ctx.get(), out.data() + out_pos, &dst_size,
                                          in.data() + in_pos, &src_size, nullptr);
        if (LZ4F_isError(hint))
            throw CodecError(std::string("lz4: ") + LZ4F_getErrorName(hint));
        in_pos += src_size;
        out_pos += dst_size;
        if (hint == 0)
            break;
        if (in_pos == in.size())
            throw CodecError("lz4: truncated frame");
        if (src_size == 0 && dst_size == 0)
            throw CodecError("lz4: decoder made no progress");
    }
    if (in_pos != in.size())
        throw CodecError("lz4: trailing bytes after frame");
    if (out_pos != out.size())
        throw CodecError("lz4: decoded " + std::to_string(out_pos) +
                         " bytes, expected " + std::to_string(out.size()));
}

Bytes compress_zlib(std::span<const std::byte> in, int level)
{
    uLongf n = compressBound(static_cast<uLong>(in.size()));
    Bytes out(n);
    const int rc = compress2(reinterpret_cast<Bytef *>(out.data()), &n,
                             reinterpret_cast<const Bytef *>(in.data()),
                             static_cast<uLong>(in.size()), level);
    if (rc != Z_OK)
        throw CodecError("zlib: compress2 failed with code " + std::to_string(rc));
    out.resize(n);
    return out;
}

void decompress_zlib(std::span<const std::byte> in, std::span<std::byte> out)
{
    z_stream zs;
    std::memset(&zs, 0, sizeof(zs));
    if (inflateInit(&zs) != Z_OK)
        throw CodecError("zlib: inflateInit failed");
    zs.next_in = reinterpret_cast<Bytef *>(const_cast<std::byte *>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = reinterpret_cast<Bytef *>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    const auto produced = zs.total_out;
    const auto remaining = zs.avail_in;
    inflateEnd(&zs);
    if (rc != Z_STREAM_END)
        throw CodecError("zlib: inflate failed with code " + std::to_string(rc));
    if (remaining != 0)
        throw CodecError("zlib: trailing bytes after stream");
    if (produced != out.size())
        throw CodecError("zlib: decoded " + std::to_string(produced) +
                         " bytes, expected " + std::to_string(out.size()));
}

} // end anonymous namespace

StoredPayload encode(std::span<const std::byte> raw, std::size_t elem_size,
                     const CodecSpec &requested)
{
    const CodecSpec spec = requested.normalized();
    spec.validate();

    StoredPayload p;
    p.header.raw_nbytes = raw.size();
    p.header.elem_size = static_cast<std::uint32_t>(elem_size);

    if (spec.codec != Codec::None)
    {
        Bytes shuffled;
        std::span<const std::byte> src = raw;
        if (spec.shuffle)
        {
            shuffled = shuffle_bytes(raw, elem_size);
            src = shuffled;
        }
        Bytes body;
        switch (spec.codec)
        {
        case Codec::Zstd:
            body = compress_zstd(src, spec.level);
            break;
        case Codec::LZ4:
            body = compress_lz4(src, spec.level);
            break;
        case Codec::Zlib:
            body = compress_zlib(src, spec.level);
            break;
        case Codec::None:
            break;
        }
        if (body.size() < raw.size())
        {
            p.header.spec = spec;
            p.body = std::move(body);
            return p;
        }
    }

    p.header.spec = CodecSpec{};
    p.body.assign(raw.begin(), raw.end());
    return p;
}

Bytes decode(const PayloadHeader &header, std::span<const std::byte> body)
{
    const CodecSpec spec = header.spec.normalized();
    if (spec.codec == Codec::None)
    {
        if (body.size() != header.raw_nbytes)
            throw FormatError("raw payload has " + std::to_string(body.size()) +
                              " bytes, header says " +
                              std::to_string(header.raw_nbytes));
        return Bytes(body.begin(), body.end());
    }
    if (spec.shuffle && (header.elem_size == 0 || header.raw_nbytes % header.elem_size != 0))
        throw FormatError("raw size " + std::to_string(header.raw_nbytes) +
                          " not divisible by element size " +
                          std::to_string(header.elem_size));
    if (body.empty())
        throw FormatError("empty body for compressed payload");

    Bytes out(header.raw_nbytes);
    switch (spec.codec)
    {
    case Codec::Zstd:
        decompress_zstd(body, out);
        break;
    case Codec::LZ4:
        decompress_lz4(body, out);
        break;
    case Codec::Zlib:
        decompress_zlib(body, out);
        break;
    case Codec::None:
        break;
    }
    if (spec.shuffle)
        out = unshuffle_bytes(out, header.elem_size);
    return out;
}

} // end namespace miniio::codecs
