/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/container/drain.hpp"
#include "miniio/core/error.hpp"

#include <atomic>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <sys/mman.h>
#include <unistd.h>

namespace miniio::container
{

namespace
{
std::size_t table_bytes(int n) { return static_cast<std::size_t>(n) * 8; }

std::atomic<std::uint64_t> *slot(void *map, int k)
{
    return static_cast<std::atomic<std::uint64_t> *>(map) + k;
}

static_assert(std::atomic<std::uint64_t>::is_always_lock_free);
} // end anonymous namespace

DrainProgress::DrainProgress(const std::filesystem::path &path, int n, bool create) : m_N(n)
{
    if (n <= 0)
        throw ConfigError("drain progress needs at least one subfile");
    const int flags = O_RDWR | O_CLOEXEC | (create ? O_CREAT | O_TRUNC : 0);
    const int fd = ::open(path.c_str(), flags, 0644);
    if (fd < 0)
        throw OpenError("open " + path.string() + ": " + std::strerror(errno));
    if (create && ::ftruncate(fd, static_cast<off_t>(table_bytes(n))) != 0)
    {
        ::close(fd);
        throw OpenError("size " + path.string() + ": " + std::strerror(errno));
    }
    m_Map = ::mmap(nullptr, table_bytes(n), PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
    ::close(fd);
    if (m_Map == MAP_FAILED)
    {
        m_Map = nullptr;
        throw OpenError("mmap " + path.string() + ": " + std::strerror(errno));
    }
}

DrainProgress::~DrainProgress()
{
    if (m_Map)
        ::munmap(m_Map, table_bytes(m_N));
}

std::uint64_t DrainProgress::get(int subfile) const
{
    return slot(m_Map, subfile)->load(std::memory_order_acquire);
}

void DrainProgress::set(int subfile, std::uint64_t drained_end)
{
    slot(m_Map, subfile)->store(drained_end, std::memory_order_release);
}

DrainWorker::DrainWorker(std::filesystem::path bb_file, const std::filesystem::path &pfs_file,
                         std::shared_ptr<PfsThrottle> throttle, DrainProgress *progress,
                         int subfile)
: m_BbPath(std::move(bb_file)), m_Pfs(pfs_file, File::Mode::Create, std::move(throttle)),
  m_Progress(progress), m_Subfile(subfile)
{
    m_Thread = std::thread([this] { run(); });
}

DrainWorker::~DrainWorker()
{
    {
        std::lock_guard lock(m_Mutex);
        m_Stop = true;
    }
    m_Cv.notify_all();
    if (m_Thread.joinable())
        m_Thread.join();
}

void DrainWorker::enqueue(std::uint64_t step, std::uint64_t offset, std::uint64_t length)
{
    {
        std::lock_guard lock(m_Mutex);
        m_Queue.push_back({step, offset, length});
        m_Stats.bytes_pending += length;
    }
    m_Cv.notify_all();
}

void DrainWorker::wait_idle()
{
    std::unique_lock lock(m_Mutex);
    m_Cv.wait(lock, [&] { return (m_Queue.empty() && !m_Busy) || m_Error.has_value(); });
}

void DrainWorker::abandon()
{
    {
        std::lock_guard lock(m_Mutex);
        m_Queue.clear();
        m_Stats.bytes_pending = 0;
        m_Stop = true;
    }
    m_Cv.notify_all();
}

void DrainWorker::sync() { m_Pfs.sync(); }

DrainStats DrainWorker::stats() const
{
    std::lock_guard lock(m_Mutex);
    return m_Stats;
}

std::optional<std::string> DrainWorker::error() const
{
    std::lock_guard lock(m_Mutex);
    return m_Error;
}

void DrainWorker::run()
{
    File bb;
    while (true)
    {
        Segment seg;
        {
            std::unique_lock lock(m_Mutex);
            m_Cv.wait(lock, [&] { return !m_Queue.empty() || m_Stop; });
            if (m_Queue.empty() || m_Error)
                return;
            seg = m_Queue.front();
            m_Queue.pop_front();
            m_Busy = true;
        }
        try
        {
            if (!bb.is_open())
                bb = File(m_BbPath, File::Mode::Read);
            const auto data = bb.read_at(seg.offset, static_cast<std::size_t>(seg.length));
            m_Pfs.write_at(seg.offset, data);
            if (m_Progress)
                m_Progress->set(m_Subfile, seg.offset + seg.length);
            std::lock_guard lock(m_Mutex);
            m_Stats.bytes_pending -= seg.length;
            m_Stats.bytes_drained += seg.length;
            m_Stats.drained_through_step = seg.step;
            m_Busy = false;
        }
        catch (const std::exception &e)
        {
            std::lock_guard lock(m_Mutex);
            m_Error = "drain of " + m_BbPath.string() + " failed: " + e.what();
            m_Busy = false;
        }
        m_Cv.notify_all();
    }
}

IndexPropagator::IndexPropagator(const std::filesystem::path &pfs_index,
                                 std::shared_ptr<PfsThrottle> throttle,
                                 DrainProgress *progress)
: m_Index(pfs_index, File::Mode::Append, std::move(throttle)), m_Progress(progress)
{
    m_Thread = std::thread([this] { run(); });
}

IndexPropagator::~IndexPropagator()
{
    {
        std::lock_guard lock(m_Mutex);
        m_Stop = true;
    }
    m_Cv.notify_all();
    if (m_Thread.joinable())
        m_Thread.join();
}

void IndexPropagator::enqueue(std::string line,
                              std::vector<std::pair<int, std::uint64_t>> ends)
{
    {
        std::lock_guard lock(m_Mutex);
        m_Queue.push_back({std::move(line), std::move(ends)});
    }
    m_Cv.notify_all();
}

void IndexPropagator::wait_idle()
{
    std::unique_lock lock(m_Mutex);
    m_Cv.wait(lock, [&] { return m_Queue.empty() || m_Error.has_value() || m_Abandon; });
}

void IndexPropagator::abandon()
{
    {
        std::lock_guard lock(m_Mutex);
        m_Abandon = true;
        m_Queue.clear();
    }
    m_Cv.notify_all();
}

void IndexPropagator::sync() { m_Index.sync(); }

std::optional<std::string> IndexPropagator::error() const
{
    std::lock_guard lock(m_Mutex);
    return m_Error;
}

bool IndexPropagator::ready(const Pending &p) const
{
    for (const auto &[k, end] : p.ends)
        if (m_Progress->get(k) < end)
            return false;
    return true;
}

void IndexPropagator::run()
{
    while (true)
    {
        Pending next;
        {
            std::unique_lock lock(m_Mutex);
            // Aggregators report progress through shared memory, so poll.
            m_Cv.wait_for(lock, std::chrono::milliseconds(1), [&] {
                return m_Abandon || (!m_Queue.empty() && ready(m_Queue.front())) ||
                       (m_Stop && m_Queue.empty());
            });
            if (m_Abandon || m_Error || (m_Stop && m_Queue.empty()))
                return;
            if (m_Queue.empty() || !ready(m_Queue.front()))
                continue;
            next = m_Queue.front();
        }
        try
        {
            m_Index.append(std::as_bytes(std::span(next.line.data(), next.line.size())));
            std::lock_guard lock(m_Mutex);
            if (!m_Queue.empty())
                m_Queue.pop_front();
        }
        catch (const std::exception &e)
        {
            std::lock_guard lock(m_Mutex);
            m_Error = std::string("index propagation failed: ") + e.what();
        }
        m_Cv.notify_all();
    }
}

} // end namespace miniio::container
