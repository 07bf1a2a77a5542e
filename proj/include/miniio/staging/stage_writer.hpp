/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * stage_writer.hpp : writer side of the network staging engine
 *
 * Rank 0 owns the control listener that readers connect to; every rank owns
 * a data listener serving its own blocks. A step stays buffered on a rank
 * until every reader it was announced to has released it.
 */

#ifndef MINIIO_STAGING_STAGE_WRITER_HPP
#define MINIIO_STAGING_STAGE_WRITER_HPP

#include "miniio/codecs/block.hpp"
#include "miniio/core/params.hpp"
#include "miniio/core/types.hpp"
#include "miniio/net/comm.hpp"
#include "miniio/staging/protocol.hpp"

#include <memory>
#include <string>
#include <vector>

namespace miniio::staging
{

struct StageStats
{
    std::uint64_t steps_announced = 0;
    std::uint64_t steps_skipped = 0;
    /// Largest number of steps this rank held unreleased at once.
    std::size_t max_unreleased = 0;
    std::size_t held_steps = 0;
    std::uint64_t held_bytes = 0;
};

class StageWriter
{
public:
    /// Collective. Throws OpenError when the control listener cannot be
    /// bound, TimeoutError when the rendezvous readers do not show up.
    StageWriter(EngineParams params, std::vector<VariableDef> defs, net::Comm &comm);
    ~StageWriter();
    StageWriter(const StageWriter &) = delete;
    StageWriter &operator=(const StageWriter &) = delete;

    std::uint64_t current_step() const noexcept { return m_Step; }
    void put(const std::string &var, std::uint64_t step, const Selection &sel,
             std::span<const std::byte> data);
    /// Collective. Blocks while the queue is full under the block policy
    /// (StallError after step_timeout_ms); under discard the step is dropped
    /// and the report says skipped.
    StepReport end_step();
    /// Sends CLOSE to readers and waits for outstanding releases.
    void close();

    /// Where readers connect; meaningful on rank 0.
    net::Endpoint control_endpoint() const;
    /// Readers currently registered with rank 0.
    std::size_t readers() const;
    StageStats stats() const;

    struct Impl;

private:
    std::unique_ptr<Impl> m_Impl;
    std::uint64_t m_Step = 0;
};

} // end namespace miniio::staging

#endif // MINIIO_STAGING_STAGE_WRITER_HPP
