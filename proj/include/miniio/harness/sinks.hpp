/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * sinks.hpp : the per-rank output path of each comparator mode
 */

#ifndef MINIIO_HARNESS_SINKS_HPP
#define MINIIO_HARNESS_SINKS_HPP

#include "miniio/harness/report.hpp"
#include "miniio/net/comm.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <span>

namespace miniio::harness
{

/// One rank's handle on the run's output. Every call is collective in the
/// sense that all ranks make the same sequence of calls.
class Sink
{
public:
    virtual ~Sink() = default;
    /// Variables are put in definition order, once per step.
    virtual void put(std::size_t var, std::uint64_t step, const Selection &sel,
                     std::span<const std::byte> data) = 0;
    virtual StepReport end_step() = 0;
    virtual void close() = 0;
    /// The run's output as seen after close.
    virtual std::filesystem::path artifact() const = 0;
    virtual nlohmann::json extra() const { return nlohmann::json::object(); }
};

/// Opens the sink of cfg.engine.mode. cfg.engine.pfs_dir must be the run
/// directory.
std::unique_ptr<Sink> open_sink(const RunConfig &cfg, net::Comm &comm);

/// Output paths inside a run directory.
std::filesystem::path flat_output(const RunConfig &cfg);
std::filesystem::path capture_output(const RunConfig &cfg);

/// Ranks that own a region in the two-phase write: one per node, or
/// `writers` spread evenly over the world.
std::vector<int> two_phase_owners(int world, int ranks_per_node, int writers);

/// Element range [begin, end) of region w when a variable of n elements is
/// split into W contiguous regions.
struct Region
{
    std::uint64_t begin = 0;
    std::uint64_t end = 0;
};
Region two_phase_region(std::uint64_t n, int W, int w);

struct CaptureSummary
{
    std::vector<std::uint64_t> step_ids;
    std::uint64_t bytes = 0;
};

/// Reads a staging stream to its end and writes every received step into a
/// flat file; step ids are recorded when steps were dropped.
CaptureSummary capture_stream(const std::string &endpoint, const std::filesystem::path &out,
                              std::chrono::milliseconds timeout);

} // end namespace miniio::harness

#endif // MINIIO_HARNESS_SINKS_HPP
