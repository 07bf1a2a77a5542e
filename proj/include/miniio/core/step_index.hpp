/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * step_index.hpp : block records and the per-step metadata index
 *
 * One StepIndex is serialized as one JSON line (index.jsonl in a container,
 * STEP_ANNOUNCE payload in staging). Key order is fixed and the serializer
 * emits no whitespace, so equal indices produce byte-identical lines.
 */

#ifndef MINIIO_CORE_STEP_INDEX_HPP
#define MINIIO_CORE_STEP_INDEX_HPP

#include "miniio/codecs/codec_spec.hpp"
#include "miniio/core/types.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace miniio
{

struct BlockRecord
{
    std::string var;
    std::uint64_t step = 0;
    int writer_rank = 0;
    Selection selection;
    int subfile_id = 0;
    std::uint64_t offset = 0;
    std::uint64_t stored_nbytes = 0;
    std::uint64_t raw_nbytes = 0;
    CodecSpec codec;
    std::uint32_t checksum_raw = 0;
    double stat_min = 0.0;
    double stat_max = 0.0;

    friend bool operator==(const BlockRecord &, const BlockRecord &) = default;
};

struct StepIndex
{
    std::uint64_t step = 0;
    std::vector<BlockRecord> blocks;
    bool complete = false;

    friend bool operator==(const StepIndex &, const StepIndex &) = default;
};

/// Merges per-rank fragments of one step. Blocks end up sorted by
/// (var, writer_rank); complete is set iff every rank in [0, world_size)
/// contributed at least one block. Throws DuplicateBlock on a repeated
/// (var, writer_rank) pair and IndexError if fragments disagree on step.
StepIndex index_merge(const std::vector<StepIndex> &fragments, int world_size);

std::string index_serialize(const StepIndex &idx);

/// Throws ParseError with the byte position of the defect.
StepIndex index_parse(std::string_view line);

} // end namespace miniio

#endif // MINIIO_CORE_STEP_INDEX_HPP
