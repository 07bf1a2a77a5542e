/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/codecs/block.hpp"
#include "miniio/core/crc32c.hpp"
#include "miniio/core/error.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <tuple>

namespace miniio::codecs
{

namespace
{
template <class T>
std::pair<double, double> minmax_of(std::span<const std::byte> raw)
{
    const std::size_t n = raw.size() / sizeof(T);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
    {
        T v;
        std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
        const auto d = static_cast<double>(v);
        if (std::isnan(d))
            continue;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    if (lo > hi)
        return {0.0, 0.0};
    return {lo, hi};
}
} // end anonymous namespace

std::pair<double, double> block_stats(std::span<const std::byte> raw, Dtype dtype)
{
    switch (dtype.tag())
    {
    case DtypeTag::F32:
        return minmax_of<float>(raw);
    case DtypeTag::F64:
        return minmax_of<double>(raw);
    case DtypeTag::I32:
        return minmax_of<std::int32_t>(raw);
    case DtypeTag::I64:
        return minmax_of<std::int64_t>(raw);
    case DtypeTag::U8:
        return minmax_of<std::uint8_t>(raw);
    }
    return {0.0, 0.0};
}

BlockRecord PreparedBlock::record(std::uint64_t step, int rank, int subfile,
                                  std::uint64_t offset) const
{
    BlockRecord r;
    r.var = var;
    r.step = step;
    r.writer_rank = rank;
    r.selection = selection;
    r.subfile_id = subfile;
    r.offset = offset;
    r.stored_nbytes = payload.body.size();
    r.raw_nbytes = payload.header.raw_nbytes;
    r.codec = payload.header.spec;
    r.checksum_raw = checksum_raw;
    r.stat_min = stat_min;
    r.stat_max = stat_max;
    return r;
}

PreparedBlock prepare_block(const VariableDef &def, std::size_t var_index,
                            const Selection &sel, std::span<const std::byte> raw,
                            const CodecSpec &spec)
{
    if (auto violation = validate_selection(sel, def))
        throw ShapeError("selection for \"" + def.name + "\": " + *violation);
    const auto expected = sel.element_count() * def.dtype.elem_size();
    if (raw.size() != expected)
        throw ShapeError("block for \"" + def.name + "\" has " + std::to_string(raw.size()) +
                         " bytes, selection needs " + std::to_string(expected));
    PreparedBlock b;
    b.var = def.name;
    b.var_index = var_index;
    b.selection = sel;
    b.checksum_raw = crc32c(raw);
    std::tie(b.stat_min, b.stat_max) = block_stats(raw, def.dtype);
    b.payload = encode(raw, def.dtype.elem_size(), spec);
    return b;
}

PayloadHeader header_of(const BlockRecord &rec, Dtype dtype)
{
    PayloadHeader h;
    h.raw_nbytes = rec.raw_nbytes;
    h.spec = rec.codec;
    h.elem_size = static_cast<std::uint32_t>(dtype.elem_size());
    return h;
}

Bytes decode_checked(const BlockRecord &rec, Dtype dtype, std::span<const std::byte> body)
{
    Bytes raw;
    try
    {
        raw = decode(header_of(rec, dtype), body);
    }
    catch (const CodecError &e)
    {
        throw CorruptBlock(std::string("undecodable block of \"") + rec.var + "\": " + e.what(),
                           rec.subfile_id, rec.offset);
    }
    catch (const FormatError &e)
    {
        throw CorruptBlock(std::string("malformed block of \"") + rec.var + "\": " + e.what(),
                           rec.subfile_id, rec.offset);
    }
    if (crc32c(raw) != rec.checksum_raw)
        throw CorruptBlock("checksum mismatch in block of \"" + rec.var + "\"", rec.subfile_id,
                           rec.offset);
    return raw;
}

} // end namespace miniio::codecs
