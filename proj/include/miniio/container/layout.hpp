/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * layout.hpp : names and metadata of a <name>.mbp container directory
 */

#ifndef MINIIO_CONTAINER_LAYOUT_HPP
#define MINIIO_CONTAINER_LAYOUT_HPP

#include "miniio/core/params.hpp"
#include "miniio/core/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace miniio::container
{

inline constexpr const char *kInfoFile = "info.json";
inline constexpr const char *kIndexFile = "index.jsonl";

inline std::filesystem::path data_file(const std::filesystem::path &dir, int subfile)
{
    return dir / ("data." + std::to_string(subfile));
}

/// Directory name for a container; ".mbp" is appended when missing.
std::string container_dirname(const std::string &name);

/// Where a writer session places its container.
struct ContainerPaths
{
    std::filesystem::path pfs;
    std::optional<std::filesystem::path> bb;
    bool drain = false;

    /// The directory the aggregators append to: the burst buffer when set.
    const std::filesystem::path &primary() const { return bb ? *bb : pfs; }
    /// The directory that holds the finished container after close.
    const std::filesystem::path &final_dir() const { return bb && !drain ? *bb : pfs; }
};

ContainerPaths container_paths(const EngineParams &params, const std::string &name);

struct ContainerInfo
{
    int format_version = 1;
    std::uint64_t created_unix_ms = 0;
    int world_size = 1;
    int ranks_per_node = 1;
    int aggregation_ratio = 1;
    std::vector<VariableDef> variables;
    CodecSpec codec;
    Mode mode = Mode::AggregatedSubfile;

    std::string serialize() const;
    /// Throws FormatError.
    static ContainerInfo parse(const std::string &text);
};

} // end namespace miniio::container

#endif // MINIIO_CONTAINER_LAYOUT_HPP
