/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * flat_file.hpp : the canonical single-file layout
 *
 *   "CFF1" | u64le header length | header JSON | data
 *
 * data holds, for each step and each variable in definition order, the full
 * global array in row-major little-endian layout. Element (step s, var v,
 * linear index i) therefore sits at a fixed offset every writer can compute.
 */

#ifndef MINIIO_CONTAINER_FLAT_FILE_HPP
#define MINIIO_CONTAINER_FLAT_FILE_HPP

#include "miniio/container/file.hpp"
#include "miniio/core/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace miniio::container
{

inline constexpr char kFlatMagic[4] = {'C', 'F', 'F', '1'};

struct FlatHeader
{
    int format_version = 1;
    std::uint64_t steps = 0;
    std::vector<VariableDef> variables;
    /// Present only when the stored steps are not 0..steps-1 (a staging
    /// capture after discarded steps).
    std::optional<std::vector<std::uint64_t>> step_ids;

    std::string serialize() const;
    std::uint64_t step_bytes() const noexcept;
    std::uint64_t step_id(std::uint64_t position) const
    {
        return step_ids ? step_ids->at(position) : position;
    }
};

/// Byte layout derived from a header.
class FlatLayout
{
public:
    explicit FlatLayout(FlatHeader header);

    const FlatHeader &header() const noexcept { return m_Header; }
    std::uint64_t data_offset() const noexcept { return m_DataOffset; }
    std::uint64_t var_offset(std::uint64_t step_pos, std::size_t var) const;
    std::uint64_t total_size() const noexcept;
    /// Index of a variable by name; throws FormatError when absent.
    std::size_t var_index(const std::string &name) const;

private:
    FlatHeader m_Header;
    std::string m_HeaderText;
    std::uint64_t m_DataOffset;
    std::vector<std::uint64_t> m_VarPrefix;
};

class FlatFileWriter
{
public:
    /// Creates (truncating) the file and writes the header.
    static FlatFileWriter create(const std::filesystem::path &path, FlatHeader header,
                                 std::shared_ptr<PfsThrottle> throttle = nullptr);
    /// Opens a file another process created with the same header.
    static FlatFileWriter attach(const std::filesystem::path &path, FlatHeader header,
                                 std::shared_ptr<PfsThrottle> throttle = nullptr);

    const FlatLayout &layout() const noexcept { return m_Layout; }

    void write_var(std::uint64_t step_pos, std::size_t var, std::span<const std::byte> data);
    void write_at(std::uint64_t offset, std::span<const std::byte> data);
    void sync() { m_File.sync(); }

private:
    FlatFileWriter(File file, FlatLayout layout)
    : m_File(std::move(file)), m_Layout(std::move(layout))
    {
    }
    File m_File;
    FlatLayout m_Layout;
};

class FlatFileReader
{
public:
    /// Throws FormatError when the magic or header is wrong.
    explicit FlatFileReader(const std::filesystem::path &path);

    const FlatHeader &header() const noexcept { return m_Layout.header(); }
    const FlatLayout &layout() const noexcept { return m_Layout; }
    std::vector<std::byte> read_var(std::uint64_t step_pos, std::size_t var) const;

    static bool is_flat_file(const std::filesystem::path &path);

private:
    static FlatLayout read_layout(const File &file);
    File m_File;
    FlatLayout m_Layout;
};

} // end namespace miniio::container

#endif // MINIIO_CONTAINER_FLAT_FILE_HPP
