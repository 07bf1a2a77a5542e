/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * writer.hpp : aggregated sub-file writer session, one per rank process
 */

#ifndef MINIIO_CONTAINER_WRITER_HPP
#define MINIIO_CONTAINER_WRITER_HPP

#include "miniio/codecs/block.hpp"
#include "miniio/container/aggregator_map.hpp"
#include "miniio/container/drain.hpp"
#include "miniio/container/file.hpp"
#include "miniio/container/layout.hpp"
#include "miniio/core/params.hpp"
#include "miniio/core/types.hpp"
#include "miniio/net/comm.hpp"

#include <memory>
#include <string>
#include <vector>

namespace miniio::container
{

struct CloseSummary
{
    std::uint64_t steps = 0;
    /// Time close() spent waiting for the burst-buffer drain.
    double drain_wait_seconds = 0.0;
    std::uint64_t bytes_drained = 0;
};

/// Collective writer: every rank of the Comm constructs one with the same
/// arguments. Ranks ship encoded blocks to their aggregator, aggregators
/// append one segment per step to their sub-file, and rank 0 commits the
/// step by appending its index line.
class Writer
{
public:
    /// Throws OpenError when the directory cannot be created or the ranks
    /// disagree on the variable definitions.
    Writer(const std::string &name, EngineParams params, std::vector<VariableDef> defs,
           net::Comm &comm);
    /// Without a prior close() the session is abandoned: pending steps and
    /// drains are dropped and no further index line is written.
    ~Writer();
    Writer(const Writer &) = delete;
    Writer &operator=(const Writer &) = delete;

    /// Steps start at 0 and advance with end_step().
    std::uint64_t current_step() const noexcept { return m_Step; }

    void put(const std::string &var, std::uint64_t step, const Selection &sel,
             std::span<const std::byte> data);
    StepReport end_step();
    CloseSummary close();

    const AggregatorMap &aggregator_map() const noexcept { return m_Map; }
    const ContainerPaths &paths() const noexcept { return m_Paths; }
    /// Drain state of this rank's sub-file; zeros on non-aggregators.
    DrainStats drain_stats() const;

private:
    void open_collective();
    void aggregate_step();
    void commit_step();
    std::size_t var_index(const std::string &var) const;
    std::shared_ptr<PfsThrottle> throttle_for(const std::filesystem::path &dir) const;

    EngineParams m_Params;
    std::vector<VariableDef> m_Defs;
    net::Comm &m_Comm;
    AggregatorMap m_Map;
    ContainerPaths m_Paths;
    std::shared_ptr<PfsThrottle> m_Throttle;

    std::uint64_t m_Step = 0;
    std::vector<codecs::PreparedBlock> m_Pending;
    double m_PutSeconds = 0.0;
    bool m_Closed = false;

    // aggregator state
    File m_Data;
    std::uint64_t m_Cursor = 0;
    std::unique_ptr<DrainProgress> m_Progress;
    std::unique_ptr<DrainWorker> m_Drain;

    // rank 0 state
    File m_Index;
    std::unique_ptr<IndexPropagator> m_Propagator;
};

} // end namespace miniio::container

#endif // MINIIO_CONTAINER_WRITER_HPP
