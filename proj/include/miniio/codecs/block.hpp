/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * block.hpp : turning one put() into a stored block and back
 */

#ifndef MINIIO_CODECS_BLOCK_HPP
#define MINIIO_CODECS_BLOCK_HPP

#include "miniio/codecs/codec.hpp"
#include "miniio/core/step_index.hpp"
#include "miniio/core/types.hpp"

#include <span>
#include <string>
#include <utility>

namespace miniio::codecs
{

/// Minimum and maximum of little-endian elements as float64. NaNs are
/// skipped; an all-NaN or empty block yields {0, 0}.
std::pair<double, double> block_stats(std::span<const std::byte> raw, Dtype dtype);

/// A block ready to be placed: everything of its BlockRecord except the
/// placement fields (writer_rank, subfile_id, offset).
struct PreparedBlock
{
    std::string var;
    std::size_t var_index = 0;
    Selection selection;
    StoredPayload payload;
    std::uint32_t checksum_raw = 0;
    double stat_min = 0.0;
    double stat_max = 0.0;

    BlockRecord record(std::uint64_t step, int rank, int subfile,
                       std::uint64_t offset) const;
};

PreparedBlock prepare_block(const VariableDef &def, std::size_t var_index,
                            const Selection &sel, std::span<const std::byte> raw,
                            const CodecSpec &spec);

/// Header needed to decode a block described by an index record.
PayloadHeader header_of(const BlockRecord &rec, Dtype dtype);

/// Decodes a stored body and checks it against the record's checksum;
/// CorruptBlock on mismatch or undecodable body.
Bytes decode_checked(const BlockRecord &rec, Dtype dtype, std::span<const std::byte> body);

} // end namespace miniio::codecs

#endif // MINIIO_CODECS_BLOCK_HPP
