/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * part_file.hpp : one-file-per-process output and the stitch routine
 *
 *   "CFP1" | u64le header length | header JSON | data
 *
 * The header names the writing rank and the patch it owns; data holds, for
 * each step and each variable in definition order, the patch bytes in
 * row-major order. Part files of one run are <stem>.part.<rank>.
 */

#ifndef MINIIO_HARNESS_PART_FILE_HPP
#define MINIIO_HARNESS_PART_FILE_HPP

#include "miniio/container/file.hpp"
#include "miniio/core/types.hpp"

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace miniio::harness
{

inline constexpr char kPartMagic[4] = {'C', 'F', 'P', '1'};

struct PartHeader
{
    int format_version = 1;
    int rank = 0;
    int world_size = 1;
    std::vector<VariableDef> variables;
    Selection selection;

    std::string serialize() const;
    /// Bytes one step occupies in the part file.
    std::uint64_t step_bytes() const noexcept;
};

std::filesystem::path part_path(const std::filesystem::path &dir, const std::string &stem, int rank);

class PartWriter
{
public:
    /// Creates the part file; the header write is its first throttled request.
    PartWriter(const std::filesystem::path &path, PartHeader header,
               std::shared_ptr<container::PfsThrottle> throttle);

    /// Appends the patch of the next variable in definition order.
    void append(std::span<const std::byte> patch);
    const PartHeader &header() const noexcept { return m_Header; }

private:
    container::File m_File;
    PartHeader m_Header;
};

class PartFile
{
public:
    /// Throws FormatError on a bad magic or header.
    explicit PartFile(const std::filesystem::path &path);

    const PartHeader &header() const noexcept { return m_Header; }
    /// Complete steps present, derived from the file size.
    std::uint64_t steps() const noexcept { return m_Steps; }
    std::vector<std::byte> read_patch(std::uint64_t step, std::size_t var) const;

    static bool is_part_file(const std::filesystem::path &path);

private:
    container::File m_File;
    PartHeader m_Header;
    std::uint64_t m_DataOffset = 0;
    std::uint64_t m_Steps = 0;
};

/// All part files of one run, in rank order.
class PartSet
{
public:
    /// path is any one part file or the shared <dir>/<stem> prefix. Throws
    /// FormatError when ranks are missing or the parts disagree.
    explicit PartSet(const std::filesystem::path &path);

    const std::vector<VariableDef> &variables() const noexcept { return m_Variables; }
    std::uint64_t steps() const noexcept { return m_Steps; }
    std::size_t parts() const noexcept { return m_Parts.size(); }
    /// Whole variable at step, assembled from every part. CoverageError on
    /// a gap.
    std::vector<std::byte> assemble(std::uint64_t step, std::size_t var) const;

private:
    std::vector<std::unique_ptr<PartFile>> m_Parts;
    std::vector<VariableDef> m_Variables;
    std::uint64_t m_Steps = 0;
};

struct StitchReport
{
    std::uint64_t steps = 0;
    std::size_t parts = 0;
    double seconds = 0.0;
};

/// Merges the part files into one canonical flat file.
StitchReport stitch(const std::filesystem::path &parts, const std::filesystem::path &out_path);

} // end namespace miniio::harness

#endif // MINIIO_HARNESS_PART_FILE_HPP
