/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * reader.hpp : step-indexed reading of a container directory
 */

#ifndef MINIIO_CONTAINER_READER_HPP
#define MINIIO_CONTAINER_READER_HPP

#include "miniio/codecs/codec.hpp"
#include "miniio/container/file.hpp"
#include "miniio/container/layout.hpp"
#include "miniio/core/step_index.hpp"

#include <filesystem>
#include <map>
#include <vector>

namespace miniio::container
{

/// Sees exactly the complete index lines present when opened or last
/// refreshed; a trailing partial line is ignored.
class Reader
{
public:
    /// Throws OpenError if dir is not a container, FormatError if its
    /// metadata is malformed.
    explicit Reader(std::filesystem::path dir);

    const ContainerInfo &info() const noexcept { return m_Info; }
    const std::vector<VariableDef> &variables() const noexcept { return m_Info.variables; }
    const VariableDef &variable(const std::string &name) const;
    const std::filesystem::path &dir() const noexcept { return m_Dir; }

    /// Step ids in commit order.
    std::vector<std::uint64_t> steps() const;
    const StepIndex &step_index(std::uint64_t step) const;
    /// Picks up index lines appended since the last call; returns how many.
    std::size_t refresh();

    /// Assembles sel of var at step in canonical layout, checking the
    /// checksum of every block touched. CorruptBlock, CoverageError.
    codecs::Bytes read(const std::string &var, std::uint64_t step, const Selection &sel) const;
    codecs::Bytes read(const std::string &var, std::uint64_t step) const
    {
        return read(var, step, Selection::whole(variable(var).shape));
    }

    /// Stored payload of one block as it sits in its sub-file.
    codecs::Bytes read_stored(const BlockRecord &rec) const;
    /// Decoded block without checksum verification; decode errors still throw.
    codecs::Bytes read_block_unchecked(const BlockRecord &rec) const;

private:
    const File &subfile(int k) const;

    std::filesystem::path m_Dir;
    ContainerInfo m_Info;
    std::vector<StepIndex> m_Steps;
    std::map<std::uint64_t, std::size_t> m_ByStep;
    std::uint64_t m_IndexConsumed = 0;
    mutable std::map<int, File> m_Subfiles;
};

struct ConsolidateReport
{
    std::uint64_t steps = 0;
    std::vector<double> step_seconds;
    double total_seconds = 0.0;
};

/// Writes the canonical flat file for a container, or copies a flat file
/// unchanged. Throws CoverageError when a step has gaps.
ConsolidateReport consolidate(const std::filesystem::path &source,
                              const std::filesystem::path &out_path);

} // end namespace miniio::container

#endif // MINIIO_CONTAINER_READER_HPP
