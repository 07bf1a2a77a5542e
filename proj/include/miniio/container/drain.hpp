/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * drain.hpp : background copy of burst-buffer sub-file segments to the PFS
 */

#ifndef MINIIO_CONTAINER_DRAIN_HPP
#define MINIIO_CONTAINER_DRAIN_HPP

#include "miniio/container/file.hpp"

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace miniio::container
{

/// Per-subfile count of bytes already copied to the PFS. Lives in a
/// MAP_SHARED file so rank 0 can follow aggregators in other processes.
class DrainProgress
{
public:
    /// Creates (zeroed) or attaches to a table of n counters.
    DrainProgress(const std::filesystem::path &path, int n, bool create);
    ~DrainProgress();
    DrainProgress(const DrainProgress &) = delete;
    DrainProgress &operator=(const DrainProgress &) = delete;

    std::uint64_t get(int subfile) const;
    void set(int subfile, std::uint64_t drained_end);
    int size() const noexcept { return m_N; }

    static constexpr const char *kFileName = ".drain_progress";

private:
    void *m_Map = nullptr;
    int m_N = 0;
};

struct DrainStats
{
    std::uint64_t bytes_pending = 0;
    std::uint64_t bytes_drained = 0;
    /// Last step whose segment reached the PFS; unset before the first.
    std::optional<std::uint64_t> drained_through_step;
};

/// Copies completed per-step segments of one sub-file from the burst
/// buffer to the PFS at identical offsets, in step order, on its own thread.
class DrainWorker
{
public:
    DrainWorker(std::filesystem::path bb_file, const std::filesystem::path &pfs_file,
                std::shared_ptr<PfsThrottle> throttle, DrainProgress *progress, int subfile);
    /// Finishes the queue unless abandon() was called.
    ~DrainWorker();
    DrainWorker(const DrainWorker &) = delete;
    DrainWorker &operator=(const DrainWorker &) = delete;

    void enqueue(std::uint64_t step, std::uint64_t offset, std::uint64_t length);
    /// Blocks until the queue is empty or the worker failed.
    void wait_idle();
    /// Stops after the segment in flight; queued segments are dropped.
    void abandon();
    void sync();

    DrainStats stats() const;
    std::optional<std::string> error() const;

private:
    struct Segment
    {
        std::uint64_t step;
        std::uint64_t offset;
        std::uint64_t length;
    };
    void run();

    std::filesystem::path m_BbPath;
    File m_Pfs;
    DrainProgress *m_Progress;
    int m_Subfile;

    mutable std::mutex m_Mutex;
    std::condition_variable m_Cv;
    std::deque<Segment> m_Queue;
    bool m_Busy = false;
    bool m_Stop = false;
    DrainStats m_Stats;
    std::optional<std::string> m_Error;
    std::thread m_Thread;
};

/// Rank 0 side: appends index lines to the PFS container once every
/// sub-file segment the line refers to has been drained.
class IndexPropagator
{
public:
    IndexPropagator(const std::filesystem::path &pfs_index,
                    std::shared_ptr<PfsThrottle> throttle, DrainProgress *progress);
    ~IndexPropagator();
    IndexPropagator(const IndexPropagator &) = delete;
    IndexPropagator &operator=(const IndexPropagator &) = delete;

    /// `ends` lists (subfile, end offset) pairs the line depends on.
    void enqueue(std::string line, std::vector<std::pair<int, std::uint64_t>> ends);
    void wait_idle();
    void abandon();
    void sync();
    std::optional<std::string> error() const;

private:
    struct Pending
    {
        std::string line;
        std::vector<std::pair<int, std::uint64_t>> ends;
    };
    bool ready(const Pending &p) const;
    void run();

    File m_Index;
    DrainProgress *m_Progress;
    mutable std::mutex m_Mutex;
    std::condition_variable m_Cv;
    std::deque<Pending> m_Queue;
    bool m_Stop = false;
    bool m_Abandon = false;
    std::optional<std::string> m_Error;
    std::thread m_Thread;
};

} // end namespace miniio::container

#endif // MINIIO_CONTAINER_DRAIN_HPP
