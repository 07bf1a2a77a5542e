/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/container/writer.hpp"
#include "miniio/core/def_json.hpp"
#include "miniio/core/error.hpp"
#include "miniio/core/step_index.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <map>

namespace miniio::container
{

namespace
{
constexpr std::uint8_t kTagDefs = 10;
constexpr std::uint8_t kTagOpen = 11;
constexpr std::uint8_t kTagBlocks = 12;
constexpr std::uint8_t kTagFragment = 13;
constexpr std::uint8_t kTagCommit = 14;
constexpr std::uint8_t kTagCloseStatus = 15;
constexpr std::uint8_t kTagCloseDone = 16;

constexpr std::string_view kOk = "ok";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::span<const std::byte> bytes_of(std::string_view s)
{
    return std::as_bytes(std::span(s.data(), s.size()));
}

std::uint64_t unix_ms()
{
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::system_clock::now().time_since_epoch())
                                          .count());
}

/// Splits "u32 meta length | meta | bodies".
std::pair<std::string_view, std::span<const std::byte>> split_blocks(const net::Frame &f)
{
    if (f.payload.size() < 4)
        throw ProtocolError("short block message");
    const auto len = net::get_u32le(f.payload.data());
    if (len > f.payload.size() - 4)
        throw ProtocolError("block message metadata overruns frame");
    const std::string_view meta(reinterpret_cast<const char *>(f.payload.data()) + 4, len);
    return {meta, std::span(f.payload).subspan(4 + len)};
}
} // end anonymous namespace

Writer::Writer(const std::string &name, EngineParams params, std::vector<VariableDef> defs,
               net::Comm &comm)
: m_Params(std::move(params)), m_Defs(std::move(defs)), m_Comm(comm)
{
    m_Params.validate();
    validate_defs(m_Defs);
    const auto &topo = comm.topology();
    m_Map = container::aggregator_map(topo.world_size, topo.ranks_per_node,
                                      m_Params.effective_ratio(topo.ranks_per_node));
    m_Paths = container_paths(m_Params, name);
    open_collective();
}

Writer::~Writer()
{
    if (!m_Closed)
    {
        if (m_Drain)
            m_Drain->abandon();
        if (m_Propagator)
            m_Propagator->abandon();
    }
}

std::shared_ptr<PfsThrottle> Writer::throttle_for(const std::filesystem::path &dir) const
{
    return dir == m_Paths.pfs ? m_Throttle : nullptr;
}

void Writer::open_collective()
{
    const int rank = m_Comm.rank();
    const int world = m_Comm.world_size();
    const auto timeout = std::chrono::milliseconds(m_Params.step_timeout_ms);
    const auto my_defs = defs_to_json(m_Defs).dump();
    const double *bw = m_Params.pfs_bw_mbps ? &*m_Params.pfs_bw_mbps : nullptr;
    const bool drain = m_Paths.bb && m_Paths.drain;

    std::string status(kOk);
    if (rank == 0)
    {
        for (int r = 1; r < world; ++r)
        {
            const auto f = m_Comm.expect(r, kTagDefs, timeout);
            if (status == kOk && f.text() != my_defs)
                status = "rank " + std::to_string(r) +
                         " declared variables that differ from rank 0";
        }
        if (status == kOk)
        {
            try
            {
                m_Throttle = PfsThrottle::for_dir(m_Params.pfs_dir, bw,
                                                  m_Params.effective_op_latency_us());
                ContainerInfo info;
                info.created_unix_ms = unix_ms();
                info.world_size = world;
                info.ranks_per_node = m_Map.ranks_per_node;
                info.aggregation_ratio = m_Map.aggregation_ratio;
                info.variables = m_Defs;
                info.codec = m_Params.codec.normalized();
                info.mode = m_Params.mode;
                const auto text = info.serialize();

                std::vector<std::filesystem::path> dirs{m_Paths.primary()};
                if (drain)
                    dirs.push_back(m_Paths.pfs);
                for (const auto &d : dirs)
                {
                    std::filesystem::remove_all(d);
                    std::filesystem::create_directories(d);
                    write_whole_file(d / kInfoFile, bytes_of(text), throttle_for(d));
                }
                m_Index = File(m_Paths.primary() / kIndexFile, File::Mode::Append,
                               throttle_for(m_Paths.primary()));
                if (drain)
                {
                    m_Progress = std::make_unique<DrainProgress>(
                        *m_Paths.bb / DrainProgress::kFileName, m_Map.num_subfiles(), true);
                    m_Propagator = std::make_unique<IndexPropagator>(
                        m_Paths.pfs / kIndexFile, m_Throttle, m_Progress.get());
                }
            }
            catch (const std::exception &e)
            {
                status = std::string("cannot create container: ") + e.what();
            }
        }
        for (int r = 1; r < world; ++r)
            m_Comm.send(r, kTagOpen, status);
    }
    else
    {
        m_Comm.send(0, kTagDefs, my_defs);
        status = std::string(m_Comm.expect(0, kTagOpen, timeout * 2).text());
        if (status == kOk)
            m_Throttle = PfsThrottle::for_dir(m_Params.pfs_dir, bw,
                                              m_Params.effective_op_latency_us());
    }
    if (status != kOk)
        throw OpenError(status);

    if (m_Map.is_aggregator(rank))
    {
        const int k = m_Map.assignment[static_cast<std::size_t>(rank)].subfile_id;
        try
        {
            m_Data = File(data_file(m_Paths.primary(), k), File::Mode::Create,
                          throttle_for(m_Paths.primary()));
            if (drain)
            {
                if (!m_Progress)
                    m_Progress = std::make_unique<DrainProgress>(
                        *m_Paths.bb / DrainProgress::kFileName, m_Map.num_subfiles(), false);
                m_Drain = std::make_unique<DrainWorker>(data_file(*m_Paths.bb, k),
                                                        data_file(m_Paths.pfs, k), m_Throttle,
                                                        m_Progress.get(), k);
            }
        }
        catch (const Error &e)
        {
            throw OpenError(std::string("cannot create sub-file: ") + e.what());
        }
    }
}

std::size_t Writer::var_index(const std::string &var) const
{
    for (std::size_t i = 0; i < m_Defs.size(); ++i)
        if (m_Defs[i].name == var)
            return i;
    throw IndexError("unknown variable \"" + var + "\"");
}

void Writer::put(const std::string &var, std::uint64_t step, const Selection &sel,
                 std::span<const std::byte> data)
{
    const auto t0 = Clock::now();
    if (m_Closed)
        throw StepOrderError("put after close");
    if (step != m_Step)
        throw StepOrderError("put for step " + std::to_string(step) + " while at step " +
                             std::to_string(m_Step));
    const auto vi = var_index(var);
    for (const auto &b : m_Pending)
        if (b.var_index == vi)
            throw DuplicateBlock("variable \"" + var + "\" already put in step " +
                                 std::to_string(step));
    m_Pending.push_back(codecs::prepare_block(m_Defs[vi], vi, sel, data, m_Params.codec));
    m_PutSeconds += seconds_since(t0);
}

StepReport Writer::end_step()
{
    const auto t0 = Clock::now();
    if (m_Closed)
        throw StepOrderError("end_step after close");
    const int rank = m_Comm.rank();
    const int agg = m_Map.assignment[static_cast<std::size_t>(rank)].aggregator_rank;

    // Ship this rank's blocks to its aggregator. Offsets are relative to the
    // start of the body area; the aggregator rebases them.
    std::sort(m_Pending.begin(), m_Pending.end(),
              [](const auto &a, const auto &b) { return a.var_index < b.var_index; });
    StepIndex mine{m_Step, {}, false};
    std::uint64_t body_size = 0;
    for (const auto &b : m_Pending)
    {
        mine.blocks.push_back(b.record(m_Step, rank, 0, body_size));
        body_size += b.payload.body.size();
    }
    std::vector<std::byte> bodies;
    bodies.reserve(body_size);
    for (const auto &b : m_Pending)
        bodies.insert(bodies.end(), b.payload.body.begin(), b.payload.body.end());
    const auto meta = index_serialize(mine);
    std::vector<std::byte> prefix(4 + meta.size());
    net::put_u32le(prefix.data(), static_cast<std::uint32_t>(meta.size()));
    std::memcpy(prefix.data() + 4, meta.data(), meta.size());
    m_Comm.send(agg, kTagBlocks, prefix, bodies);
    m_Pending.clear();
    bodies = {};

    if (agg == rank)
        aggregate_step();
    commit_step();

    StepReport report;
    report.step = m_Step;
    report.perceived_write_seconds = m_PutSeconds + seconds_since(t0);
    m_PutSeconds = 0.0;
    ++m_Step;
    return report;
}

void Writer::aggregate_step()
{
    const int rank = m_Comm.rank();
    const auto timeout = std::chrono::milliseconds(m_Params.step_timeout_ms);
    const int subfile = m_Map.assignment[static_cast<std::size_t>(rank)].subfile_id;

    StepIndex frag{m_Step, {}, false};
    std::vector<std::byte> segment;
    std::string status(kOk);
    for (int member : m_Map.members(rank))
    {
        try
        {
            const auto f = m_Comm.expect(member, kTagBlocks, timeout);
            const auto [meta, bodies] = split_blocks(f);
            auto part = index_parse(meta);
            for (auto &b : part.blocks)
            {
                if (b.offset + b.stored_nbytes > bodies.size())
                    throw ProtocolError("block body overruns message");
                b.subfile_id = subfile;
                b.offset += m_Cursor + segment.size();
                frag.blocks.push_back(std::move(b));
            }
            segment.insert(segment.end(), bodies.begin(), bodies.end());
        }
        catch (const TimeoutError &)
        {
            // the merge on rank 0 reports the step incomplete
        }
        catch (const Error &e)
        {
            status = std::string("error: aggregator ") + std::to_string(rank) + ": " + e.what();
        }
    }
    if (status == kOk)
    {
        try
        {
            if (!segment.empty())
            {
                m_Data.write_at(m_Cursor, segment);
                if (m_Drain)
                    m_Drain->enqueue(m_Step, m_Cursor, segment.size());
                m_Cursor += segment.size();
            }
        }
        catch (const Error &e)
        {
            status = std::string("error: aggregator ") + std::to_string(rank) + ": " + e.what();
        }
    }
    m_Comm.send(0, kTagFragment, status == kOk ? index_serialize(frag) : status);
}

void Writer::commit_step()
{
    const int rank = m_Comm.rank();
    const auto timeout = std::chrono::milliseconds(m_Params.step_timeout_ms);
    std::string status(kOk);
    if (rank == 0)
    {
        std::vector<StepIndex> frags;
        for (int a : m_Map.aggregators())
        {
            try
            {
                const auto f = m_Comm.expect(a, kTagFragment, timeout);
                if (f.text().starts_with("error:"))
                {
                    status = std::string(f.text());
                    continue;
                }
                frags.push_back(index_parse(f.text()));
            }
            catch (const TimeoutError &)
            {
            }
        }
        if (status == kOk)
        {
            try
            {
                auto merged = index_merge(frags, m_Comm.world_size());
                merged.step = m_Step;
                if (!merged.complete)
                    status = "incomplete: step " + std::to_string(m_Step) +
                             " is missing blocks from at least one rank";
                else
                {
                    std::string line = index_serialize(merged);
                    line.push_back('\n');
                    m_Index.append(bytes_of(line));
                    if (m_Propagator)
                    {
                        std::map<int, std::uint64_t> ends;
                        for (const auto &b : merged.blocks)
                            ends[b.subfile_id] =
                                std::max(ends[b.subfile_id], b.offset + b.stored_nbytes);
                        m_Propagator->enqueue(std::move(line), {ends.begin(), ends.end()});
                    }
                }
            }
            catch (const Error &e)
            {
                status = std::string("error: ") + e.what();
            }
        }
        for (int r = 1; r < m_Comm.world_size(); ++r)
            m_Comm.send(r, kTagCommit, status);
    }
    else
    {
        status = std::string(m_Comm.expect(0, kTagCommit, timeout * 3).text());
    }
    if (status.starts_with("incomplete:"))
        throw IncompleteStep(status.substr(12));
    if (status != kOk)
        throw IOError(status);
}

CloseSummary Writer::close()
{
    CloseSummary summary;
    summary.steps = m_Step;
    if (m_Closed)
        return summary;
    m_Pending.clear();
    const auto t0 = Clock::now();
    const bool wait = m_Params.drain_wait;

    std::string status(kOk);
    try
    {
        if (m_Drain && wait)
        {
            m_Drain->wait_idle();
            if (auto err = m_Drain->error())
                status = *err;
            else
                m_Drain->sync();
        }
        if (m_Data.is_open())
            m_Data.sync();
    }
    catch (const Error &e)
    {
        status = e.what();
    }

    const int world = m_Comm.world_size();
    if (m_Comm.rank() == 0)
    {
        for (int r = 1; r < world; ++r)
        {
            const auto f = m_Comm.expect(r, kTagCloseStatus);
            if (status == kOk && f.text() != kOk)
                status = std::string(f.text());
        }
        try
        {
            if (m_Propagator && wait && status == kOk)
            {
                m_Propagator->wait_idle();
                if (auto err = m_Propagator->error())
                    status = *err;
                else
                    m_Propagator->sync();
            }
            m_Index.sync();
        }
        catch (const Error &e)
        {
            status = e.what();
        }
        for (int r = 1; r < world; ++r)
            m_Comm.send(r, kTagCloseDone, status);
    }
    else
    {
        m_Comm.send(0, kTagCloseStatus, status);
        status = std::string(m_Comm.expect(0, kTagCloseDone).text());
    }

    summary.drain_wait_seconds = seconds_since(t0);
    if (m_Drain)
        summary.bytes_drained = m_Drain->stats().bytes_drained;
    if (status != kOk)
    {
        if (m_Drain)
            m_Drain->abandon();
        if (m_Propagator)
            m_Propagator->abandon();
        m_Closed = true;
        throw IOError(status);
    }
    m_Closed = true;
    return summary;
}

DrainStats Writer::drain_stats() const { return m_Drain ? m_Drain->stats() : DrainStats{}; }

} // end namespace miniio::container
