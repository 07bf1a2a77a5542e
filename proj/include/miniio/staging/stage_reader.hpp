/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * stage_reader.hpp : reader side of the network staging engine
 */

#ifndef MINIIO_STAGING_STAGE_READER_HPP
#define MINIIO_STAGING_STAGE_READER_HPP

#include "miniio/codecs/codec.hpp"
#include "miniio/core/step_index.hpp"
#include "miniio/staging/protocol.hpp"
#include "miniio/staging/shm.hpp"

#include <chrono>
#include <map>
#include <optional>
#include <vector>

namespace miniio::staging
{

/// Sees every step announced after it connected, in order. Each step must
/// be released with end_step() before the next begin_step().
class StageReader
{
public:
    /// Connects to the writer's control endpoint (MINIIO_ENDPOINT wins when
    /// set) and to every writer rank's data endpoint. ProtocolError when the
    /// writer refuses the handshake.
    explicit StageReader(const std::string &endpoint,
                         std::chrono::milliseconds timeout = std::chrono::seconds(30));
    ~StageReader();
    StageReader(const StageReader &) = delete;
    StageReader &operator=(const StageReader &) = delete;

    int reader_id() const noexcept { return m_Hello.reader_id; }
    int world_size() const noexcept { return m_Hello.world_size; }
    const std::vector<VariableDef> &variables() const noexcept { return m_Hello.variables; }
    const VariableDef &variable(const std::string &name) const;
    Dataplane dataplane() const noexcept { return m_Hello.dataplane.kind; }

    /// Next announced step, or nullopt once the writer closed the stream.
    /// TimeoutError if nothing arrives in time.
    std::optional<StepIndex> begin_step(std::chrono::milliseconds timeout =
                                            std::chrono::seconds(60));
    /// Assembles sel of var for the current step. ProtocolError if no step
    /// is current or the writer rejects the request; CorruptBlock on a
    /// checksum mismatch; CoverageError on a gap.
    codecs::Bytes get(const std::string &var, const Selection &sel);
    codecs::Bytes get(const std::string &var)
    {
        return get(var, Selection::whole(variable(var).shape));
    }
    /// Releases the current step on every writer rank.
    void end_step();
    void close();

    bool in_step() const noexcept { return m_Current.has_value(); }
    bool ended() const noexcept { return m_Ended; }

private:
    codecs::Bytes fetch(const BlockRecord &rec, const VariableDef &def);

    HelloW m_Hello;
    net::Socket m_Control;
    std::vector<net::Socket> m_Data;
    std::optional<StepIndex> m_Current;
    std::map<int, ShmSegment> m_Mapped;
    std::chrono::milliseconds m_Timeout;
    bool m_Ended = false;
};

} // end namespace miniio::staging

#endif // MINIIO_STAGING_STAGE_READER_HPP
