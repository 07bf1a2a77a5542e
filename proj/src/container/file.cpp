/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/container/file.hpp"
#include "miniio/core/error.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <thread>
#include <unistd.h>

namespace miniio::container
{

namespace
{

constexpr std::size_t kStateBytes = 64;

std::string errno_text(const std::string &what)
{
    return what + ": " + std::strerror(errno);
}

std::int64_t now_ns()
{
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

static_assert(std::atomic<std::int64_t>::is_always_lock_free);

} // end anonymous namespace

PfsThrottle::PfsThrottle(const std::filesystem::path &state_file, double bw_mbps,
                         std::uint32_t op_latency_us)
: m_BwMbps(bw_mbps), m_OpLatencyUs(op_latency_us)
{
    if (!(bw_mbps > 0.0))
        throw ConfigError("throttle bandwidth must be positive");
    const int fd = ::open(state_file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0)
        throw OpenError(errno_text("open " + state_file.string()));
    struct stat st;
    if (::fstat(fd, &st) == 0 && st.st_size < static_cast<off_t>(kStateBytes))
        (void)!::ftruncate(fd, kStateBytes);
    m_Map = ::mmap(nullptr, kStateBytes, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
    ::close(fd);
    if (m_Map == MAP_FAILED)
    {
        m_Map = nullptr;
        throw OpenError(errno_text("mmap " + state_file.string()));
    }
}

PfsThrottle::~PfsThrottle()
{
    if (m_Map)
        ::munmap(m_Map, kStateBytes);
}

void PfsThrottle::charge(std::size_t nbytes)
{
    // bytes per nanosecond = MB/s * 1e6 / 1e9
    const double bytes_per_ns = m_BwMbps * 1e-3;
    const auto cost = static_cast<std::int64_t>(m_OpLatencyUs) * 1000 +
                      static_cast<std::int64_t>(static_cast<double>(nbytes) / bytes_per_ns);

    auto *cursor = static_cast<std::atomic<std::int64_t> *>(m_Map);
    std::int64_t cur = cursor->load();
    std::int64_t finish;
    while (true)
    {
        const std::int64_t start = std::max(cur, now_ns());
        finish = start + cost;
        if (cursor->compare_exchange_weak(cur, finish))
            break;
    }
    const auto wait = finish - now_ns();
    if (wait > 0)
        std::this_thread::sleep_for(std::chrono::nanoseconds(wait));
}

std::shared_ptr<PfsThrottle> PfsThrottle::for_dir(const std::filesystem::path &pfs_dir,
                                                  const double *bw_mbps,
                                                  std::uint32_t op_latency_us)
{
    if (!bw_mbps)
        return nullptr;
    std::filesystem::create_directories(pfs_dir);
    return std::make_shared<PfsThrottle>(pfs_dir / kStateFile, *bw_mbps, op_latency_us);
}

File::File(const std::filesystem::path &path, Mode mode,
           std::shared_ptr<PfsThrottle> throttle)
: m_Path(path), m_Throttle(std::move(throttle))
{
    int flags = O_CLOEXEC;
    switch (mode)
    {
    case Mode::Read:
        flags |= O_RDONLY;
        break;
    case Mode::ReadWrite:
        flags |= O_RDWR;
        break;
    case Mode::Create:
        flags |= O_RDWR | O_CREAT | O_TRUNC;
        break;
    case Mode::Append:
        flags |= O_WRONLY | O_CREAT | O_APPEND;
        break;
    }
    m_Fd = ::open(path.c_str(), flags, 0644);
    if (m_Fd < 0)
        throw IOError(errno_text("open " + path.string()));
}

File::File(File &&other) noexcept
: m_Fd(other.m_Fd), m_Path(std::move(other.m_Path)), m_Throttle(std::move(other.m_Throttle))
{
    other.m_Fd = -1;
}

File &File::operator=(File &&other) noexcept
{
    if (this != &other)
    {
        close();
        m_Fd = other.m_Fd;
        other.m_Fd = -1;
        m_Path = std::move(other.m_Path);
        m_Throttle = std::move(other.m_Throttle);
    }
    return *this;
}

File::~File() { close(); }

void File::close() noexcept
{
    if (m_Fd >= 0)
    {
        ::close(m_Fd);
        m_Fd = -1;
    }
}

void File::write_at(std::uint64_t offset, std::span<const std::byte> data)
{
    std::size_t done = 0;
    while (done < data.size())
    {
        const auto n = ::pwrite(m_Fd, data.data() + done, data.size() - done,
                                static_cast<off_t>(offset + done));
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            throw IOError(errno_text("pwrite " + m_Path.string()));
        }
        done += static_cast<std::size_t>(n);
    }
    if (m_Throttle)
        m_Throttle->charge(data.size());
}

void File::append(std::span<const std::byte> data)
{
    std::size_t done = 0;
    while (done < data.size())
    {
        const auto n = ::write(m_Fd, data.data() + done, data.size() - done);
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            throw IOError(errno_text("write " + m_Path.string()));
        }
        done += static_cast<std::size_t>(n);
    }
    if (m_Throttle)
        m_Throttle->charge(data.size());
}

void File::read_at(std::uint64_t offset, std::span<std::byte> out) const
{
    std::size_t done = 0;
    while (done < out.size())
    {
        const auto n = ::pread(m_Fd, out.data() + done, out.size() - done,
                               static_cast<off_t>(offset + done));
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            throw IOError(errno_text("pread " + m_Path.string()));
        }
        if (n == 0)
            throw IOError("short read from " + m_Path.string() + " at offset " +
                          std::to_string(offset + done));
        done += static_cast<std::size_t>(n);
    }
}

std::vector<std::byte> File::read_at(std::uint64_t offset, std::size_t n) const
{
    std::vector<std::byte> out(n);
    read_at(offset, out);
    return out;
}

std::uint64_t File::size() const
{
    struct stat st;
    if (::fstat(m_Fd, &st) != 0)
        throw IOError(errno_text("fstat " + m_Path.string()));
    return static_cast<std::uint64_t>(st.st_size);
}

void File::sync()
{
    if (::fsync(m_Fd) != 0)
        throw IOError(errno_text("fsync " + m_Path.string()));
}

std::vector<std::byte> read_whole_file(const std::filesystem::path &path)
{
    File f(path, File::Mode::Read);
    return f.read_at(0, f.size());
}

void write_whole_file(const std::filesystem::path &path, std::span<const std::byte> data,
                      std::shared_ptr<PfsThrottle> throttle)
{
    File f(path, File::Mode::Create, std::move(throttle));
    f.write_at(0, data);
}

} // end namespace miniio::container
