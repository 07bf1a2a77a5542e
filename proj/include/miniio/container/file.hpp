/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * file.hpp : positional file I/O and the shared PFS bandwidth model
 */

#ifndef MINIIO_CONTAINER_FILE_HPP
#define MINIIO_CONTAINER_FILE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace miniio::container
{

/// Models the parallel file system as one FIFO server shared by every
/// process that attaches to the same state file: a request of n bytes
/// occupies the server for op_latency + n / bandwidth and the caller is
/// held until its request has been served. The reservation cursor lives
/// in a MAP_SHARED page so separate rank processes contend for it.
class PfsThrottle
{
public:
    PfsThrottle(const std::filesystem::path &state_file, double bw_mbps,
                std::uint32_t op_latency_us);
    ~PfsThrottle();
    PfsThrottle(const PfsThrottle &) = delete;
    PfsThrottle &operator=(const PfsThrottle &) = delete;

    /// Blocks until a request of nbytes issued now would complete.
    void charge(std::size_t nbytes);

    double bandwidth_mbps() const noexcept { return m_BwMbps; }

    /// Name of the state file inside a PFS root directory.
    static constexpr const char *kStateFile = ".pfs_throttle";

    /// Attaches to <pfs_dir>/.pfs_throttle, or returns null when bw is unset.
    static std::shared_ptr<PfsThrottle> for_dir(const std::filesystem::path &pfs_dir,
                                                const double *bw_mbps,
                                                std::uint32_t op_latency_us);

private:
    void *m_Map = nullptr;
    double m_BwMbps;
    std::uint32_t m_OpLatencyUs;
};

/// RAII file descriptor with positional helpers. Writes go through the
/// throttle when one is attached.
class File
{
public:
    enum class Mode
    {
        Read,
        ReadWrite,
        Create,  // create or truncate
        Append   // create if missing, writes at end
    };

    File() = default;
    File(const std::filesystem::path &path, Mode mode,
         std::shared_ptr<PfsThrottle> throttle = nullptr);
    File(File &&other) noexcept;
    File &operator=(File &&other) noexcept;
    File(const File &) = delete;
    File &operator=(const File &) = delete;
    ~File();

    bool is_open() const noexcept { return m_Fd >= 0; }
    const std::filesystem::path &path() const noexcept { return m_Path; }

    void write_at(std::uint64_t offset, std::span<const std::byte> data);
    void append(std::span<const std::byte> data);
    /// Throws IOError on a short read.
    void read_at(std::uint64_t offset, std::span<std::byte> out) const;
    std::vector<std::byte> read_at(std::uint64_t offset, std::size_t n) const;
    std::uint64_t size() const;
    void sync();
    void close() noexcept;

private:
    int m_Fd = -1;
    std::filesystem::path m_Path;
    std::shared_ptr<PfsThrottle> m_Throttle;
};

std::vector<std::byte> read_whole_file(const std::filesystem::path &path);
void write_whole_file(const std::filesystem::path &path, std::span<const std::byte> data,
                      std::shared_ptr<PfsThrottle> throttle = nullptr);

} // end namespace miniio::container

#endif // MINIIO_CONTAINER_FILE_HPP
