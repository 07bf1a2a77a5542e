/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * params.hpp : runtime engine configuration
 */

#ifndef MINIIO_CORE_PARAMS_HPP
#define MINIIO_CORE_PARAMS_HPP

#include "miniio/codecs/codec_spec.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace miniio
{

/// The five comparator I/O paths. The legacy three mirror WRF io_form 2,
/// 102 and 11; AggregatedSubfile is the sub-file engine and Staging the
/// network staging engine.
enum class Mode
{
    SerialFunnel,
    FilePerProcess,
    SharedTwoPhase,
    AggregatedSubfile,
    Staging
};

std::string_view to_string(Mode m) noexcept;
Mode mode_from_string(std::string_view name);
/// "2", "102", "11", "adios2", "sst".
std::string_view io_form_label(Mode m) noexcept;

enum class QueueFullPolicy
{
    Block,
    Discard
};

enum class Dataplane
{
    Tcp,
    Shm
};

std::string_view to_string(QueueFullPolicy p) noexcept;
std::string_view to_string(Dataplane d) noexcept;
QueueFullPolicy queue_policy_from_string(std::string_view name);
Dataplane dataplane_from_string(std::string_view name);

struct EngineParams
{
    Mode mode = Mode::AggregatedSubfile;
    /// Ranks per aggregator inside a node; 0 selects ranks_per_node.
    int aggregation_ratio = 0;
    std::filesystem::path pfs_dir = ".";
    std::optional<std::filesystem::path> bb_dir;
    bool drain = false;
    /// close() waits for the burst-buffer drain unless this is false.
    bool drain_wait = true;
    CodecSpec codec;
    int queue_limit = 1;
    QueueFullPolicy queue_full_policy = QueueFullPolicy::Block;
    Dataplane dataplane = Dataplane::Tcp;
    /// host:port of the staging control listener; port 0 picks one.
    std::string control_endpoint = "127.0.0.1:0";
    std::uint32_t step_timeout_ms = 60000;
    /// Staging writers wait in open until this many readers have connected.
    int rendezvous_readers = 1;
    /// Shared bandwidth of the simulated parallel file system.
    std::optional<double> pfs_bw_mbps;
    /// Fixed service cost charged per PFS write request while throttled.
    /// Unset means the default of 2000 us whenever pfs_bw_mbps is set.
    std::optional<std::uint32_t> pfs_op_latency_us;
    /// Latency injected into every message that crosses a node boundary.
    std::optional<std::uint32_t> comm_latency_us;
    /// Writers of the two-phase collective; 0 selects one per node.
    int two_phase_writers = 0;

    int effective_ratio(int ranks_per_node) const noexcept
    {
        return aggregation_ratio > 0 ? aggregation_ratio : ranks_per_node;
    }
    std::uint32_t effective_op_latency_us() const noexcept
    {
        if (!pfs_bw_mbps)
            return pfs_op_latency_us.value_or(0);
        return pfs_op_latency_us.value_or(2000);
    }

    /// Throws ConfigError on an inconsistent combination.
    void validate() const;
};

void to_json(nlohmann::json &j, const EngineParams &p);
/// Missing keys keep their defaults; wrong types raise ConfigError.
void from_json(const nlohmann::json &j, EngineParams &p);

} // end namespace miniio

#endif // MINIIO_CORE_PARAMS_HPP
