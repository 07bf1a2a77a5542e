/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * codec.hpp : in-line lossless block compression with optional byte shuffle
 *
 * Bodies are standard lz4-frame, zstd-frame and zlib streams, so foreign
 * tools can decode a payload once the shuffle (if any) is undone. The
 * Blosc-style configuration is shuffle=true with lz4.
 */

#ifndef MINIIO_CODECS_CODEC_HPP
#define MINIIO_CODECS_CODEC_HPP

#include "miniio/codecs/codec_spec.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace miniio::codecs
{

using Bytes = std::vector<std::byte>;

struct PayloadHeader
{
    std::uint64_t raw_nbytes = 0;
    /// The codec actually applied; Codec::None after the store-raw fallback.
    CodecSpec spec;
    std::uint32_t elem_size = 1;

    friend bool operator==(const PayloadHeader &, const PayloadHeader &) = default;
};

struct StoredPayload
{
    PayloadHeader header;
    Bytes body;
};

/// out[i*n + j] = raw[j*elem_size + i], n = element count.
/// Throws ShapeError when raw.size() is not a multiple of elem_size.
Bytes shuffle_bytes(std::span<const std::byte> raw, std::size_t elem_size);
Bytes unshuffle_bytes(std::span<const std::byte> shuffled, std::size_t elem_size);

/// Never fails on valid input: if compression does not shrink the block the
/// payload stores the raw bytes with Codec::None in its header.
StoredPayload encode(std::span<const std::byte> raw, std::size_t elem_size,
                     const CodecSpec &spec);

/// CodecError on a corrupt body, FormatError when the body cannot match the
/// header's size.
Bytes decode(const PayloadHeader &header, std::span<const std::byte> body);

inline Bytes decode(const StoredPayload &p) { return decode(p.header, p.body); }

} // end namespace miniio::codecs

#endif // MINIIO_CODECS_CODEC_HPP
