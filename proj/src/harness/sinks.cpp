/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/harness/sinks.hpp"
#include "miniio/container/flat_file.hpp"
#include "miniio/container/writer.hpp"
#include "miniio/core/error.hpp"
#include "miniio/harness/part_file.hpp"
#include "miniio/staging/stage_reader.hpp"
#include "miniio/staging/stage_writer.hpp"

#include <cstring>
#include <exception>
#include <thread>

namespace miniio::harness
{

namespace
{

constexpr std::uint8_t kTagFunnel = 40;
constexpr std::uint8_t kTagPieces = 41;
constexpr std::uint8_t kTagWarm = 42;

std::shared_ptr<container::PfsThrottle> throttle_of(const RunConfig &cfg)
{
    const auto &e = cfg.engine;
    const double *bw = e.pfs_bw_mbps ? &*e.pfs_bw_mbps : nullptr;
    return container::PfsThrottle::for_dir(e.pfs_dir, bw, e.effective_op_latency_us());
}

container::FlatHeader flat_header(const RunConfig &cfg)
{
    container::FlatHeader h;
    h.steps = cfg.workload.steps;
    h.variables = workload_defs(cfg.workload);
    return h;
}

/// Every variable is gathered to rank 0, which writes the whole array.
class FunnelSink final : public Sink
{
public:
    FunnelSink(const RunConfig &cfg, net::Comm &comm) : m_Cfg(cfg), m_Comm(comm)
    {
        m_Defs = workload_defs(cfg.workload);
        if (comm.rank() == 0)
            m_File.emplace(container::FlatFileWriter::create(flat_output(cfg), flat_header(cfg),
                                                             throttle_of(cfg)));
    }

    void put(std::size_t var, std::uint64_t step, const Selection &sel,
             std::span<const std::byte> data) override
    {
        if (m_Comm.rank() != 0)
        {
            m_Comm.send(0, kTagFunnel, data);
            return;
        }
        const auto &def = m_Defs[var];
        const auto whole = Selection::whole(def.shape);
        const auto es = def.dtype.elem_size();
        std::vector<std::byte> global(def.nbytes());
        copy_region(data.data(), sel, global.data(), whole, sel, es);
        for (int src = 1; src < m_Comm.world_size(); ++src)
        {
            const auto f = m_Comm.expect(src, kTagFunnel);
            const auto patch = patch_of(m_Cfg.workload, src);
            if (f.payload.size() != patch.element_count() * es)
                throw ProtocolError("funnel patch of rank " + std::to_string(src) +
                                    " has the wrong size");
            copy_region(f.payload.data(), patch, global.data(), whole, patch, es);
        }
        m_File->write_var(step, var, global);
    }

    StepReport end_step() override { return {m_Step++, 0.0, false}; }
    void close() override { m_Comm.barrier(); }
    std::filesystem::path artifact() const override { return flat_output(m_Cfg); }

private:
    RunConfig m_Cfg;
    net::Comm &m_Comm;
    std::vector<VariableDef> m_Defs;
    std::optional<container::FlatFileWriter> m_File;
    std::uint64_t m_Step = 0;
};

/// Each rank appends its patches to its own part file.
class FilePerProcessSink final : public Sink
{
public:
    FilePerProcessSink(const RunConfig &cfg, net::Comm &comm) : m_Cfg(cfg), m_Comm(comm)
    {
        PartHeader h;
        h.rank = comm.rank();
        h.world_size = comm.world_size();
        h.variables = workload_defs(cfg.workload);
        h.selection = patch_of(cfg.workload, comm.rank());
        m_Part.emplace(part_path(cfg.engine.pfs_dir, cfg.name, comm.rank()), std::move(h),
                       throttle_of(cfg));
    }

    void put(std::size_t, std::uint64_t, const Selection &, std::span<const std::byte> data) override
    {
        m_Part->append(data);
    }
    StepReport end_step() override { return {m_Step++, 0.0, false}; }
    void close() override { m_Comm.barrier(); }
    std::filesystem::path artifact() const override
    {
        return part_path(m_Cfg.engine.pfs_dir, m_Cfg.name, 0);
    }

private:
    RunConfig m_Cfg;
    net::Comm &m_Comm;
    std::optional<PartWriter> m_Part;
    std::uint64_t m_Step = 0;
};

/// Collective write of one shared file, one collective per variable:
/// patches are redistributed to the region owners, which then each issue
/// one contiguous write.
class TwoPhaseSink final : public Sink
{
public:
    TwoPhaseSink(const RunConfig &cfg, net::Comm &comm) : m_Cfg(cfg), m_Comm(comm)
    {
        m_Defs = workload_defs(cfg.workload);
        m_Owners = two_phase_owners(comm.world_size(), comm.topology().ranks_per_node,
                                    cfg.engine.two_phase_writers);
        for (std::size_t w = 0; w < m_Owners.size(); ++w)
            if (m_Owners[w] == comm.rank())
                m_MyRegion = static_cast<int>(w);

        if (comm.rank() == 0)
            m_File.emplace(container::FlatFileWriter::create(flat_output(cfg), flat_header(cfg),
                                                             throttle_of(cfg)));
        comm.barrier();
        if (comm.rank() != 0)
            m_File.emplace(container::FlatFileWriter::attach(flat_output(cfg), flat_header(cfg),
                                                             throttle_of(cfg)));
        // open every channel now so connection setup is not charged to step 0
        for (int o : m_Owners)
            comm.send(o, kTagWarm, std::string_view{});
        if (m_MyRegion >= 0)
            for (int r = 0; r < comm.world_size(); ++r)
                comm.expect(r, kTagWarm);
        comm.barrier();
    }

    void put(std::size_t var, std::uint64_t step, const Selection &sel,
             std::span<const std::byte> data) override
    {
        const auto &def = m_Defs[var];
        const auto es = def.dtype.elem_size();
        const auto n = def.element_count();
        const int W = static_cast<int>(m_Owners.size());
        const auto &shape = def.shape;

        // phase 1: cut the patch rows at region boundaries
        struct Message
        {
            std::vector<std::byte> prefix{4};
            std::vector<std::byte> body;
            std::uint32_t pieces = 0;
        };
        std::vector<Message> msgs(static_cast<std::size_t>(W));
        const auto cx = sel.count[2];
        std::uint64_t src = 0;
        for (std::uint64_t z = sel.start[0]; z < sel.start[0] + sel.count[0]; ++z)
            for (std::uint64_t y = sel.start[1]; y < sel.start[1] + sel.count[1]; ++y, src += cx)
            {
                const auto e0 = (z * shape[1] + y) * shape[2] + sel.start[2];
                const auto e1 = e0 + cx;
                for (int w = 0; w < W; ++w)
                {
                    const auto r = two_phase_region(n, W, w);
                    const auto lo = std::max(e0, r.begin), hi = std::min(e1, r.end);
                    if (lo >= hi)
                        continue;
                    auto &m = msgs[static_cast<std::size_t>(w)];
                    std::byte rec[12];
                    net::put_u64le(rec, lo);
                    net::put_u32le(rec + 8, static_cast<std::uint32_t>(hi - lo));
                    m.prefix.insert(m.prefix.end(), rec, rec + 12);
                    const auto *p = data.data() + (src + (lo - e0)) * es;
                    m.body.insert(m.body.end(), p, p + (hi - lo) * es);
                    ++m.pieces;
                }
            }

        std::exception_ptr send_error;
        std::thread sender([&] {
            try
            {
                for (int w = 0; w < W; ++w)
                {
                    auto &m = msgs[static_cast<std::size_t>(w)];
                    net::put_u32le(m.prefix.data(), m.pieces);
                    m_Comm.send(m_Owners[static_cast<std::size_t>(w)], kTagPieces, m.prefix, m.body);
                }
            }
            catch (...)
            {
                send_error = std::current_exception();
            }
        });

        std::exception_ptr recv_error;
        if (m_MyRegion >= 0)
        {
            try
            {
                receive_and_write(var, step, es, two_phase_region(n, W, m_MyRegion));
            }
            catch (...)
            {
                recv_error = std::current_exception();
            }
        }
        sender.join();
        if (recv_error)
            std::rethrow_exception(recv_error);
        if (send_error)
            std::rethrow_exception(send_error);
    }

    StepReport end_step() override { return {m_Step++, 0.0, false}; }
    void close() override { m_Comm.barrier(); }
    std::filesystem::path artifact() const override { return flat_output(m_Cfg); }
    nlohmann::json extra() const override { return {{"two_phase_writers", m_Owners.size()}}; }

private:
    // phase 2: assemble the owned region and write it in one request
    void receive_and_write(std::size_t var, std::uint64_t step, std::size_t es, Region region)
    {
        std::vector<std::byte> buf((region.end - region.begin) * es);
        std::uint64_t filled = 0;
        for (int r = 0; r < m_Comm.world_size(); ++r)
        {
            const auto f = m_Comm.expect(r, kTagPieces);
            const auto *p = f.payload.data();
            const auto size = f.payload.size();
            if (size < 4)
                throw ProtocolError("short two-phase message");
            const auto pieces = net::get_u32le(p);
            std::uint64_t body = 4 + std::uint64_t{pieces} * 12;
            if (body > size)
                throw ProtocolError("truncated two-phase piece list");
            for (std::uint32_t i = 0; i < pieces; ++i)
            {
                const auto off = net::get_u64le(p + 4 + i * 12);
                const auto len = net::get_u32le(p + 12 + i * 12);
                if (off < region.begin || off + len > region.end || body + len * es > size)
                    throw ProtocolError("two-phase piece from rank " + std::to_string(r) +
                                        " lies outside the owner's region");
                std::memcpy(buf.data() + (off - region.begin) * es, p + body, len * es);
                body += len * es;
                filled += len;
            }
        }
        if (filled != region.end - region.begin)
            throw CoverageError("two-phase region of \"" + m_Defs[var].name + "\" received " +
                                std::to_string(filled) + " of " +
                                std::to_string(region.end - region.begin) + " elements");
        if (!buf.empty())
            m_File->write_at(m_File->layout().var_offset(step, var) + region.begin * es, buf);
    }

    RunConfig m_Cfg;
    net::Comm &m_Comm;
    std::vector<VariableDef> m_Defs;
    std::vector<int> m_Owners;
    int m_MyRegion = -1;
    std::optional<container::FlatFileWriter> m_File;
    std::uint64_t m_Step = 0;
};

class AggregatedSink final : public Sink
{
public:
    AggregatedSink(const RunConfig &cfg, net::Comm &comm)
    : m_Defs(workload_defs(cfg.workload)), m_Writer(cfg.name, cfg.engine, m_Defs, comm)
    {
    }

    void put(std::size_t var, std::uint64_t step, const Selection &sel,
             std::span<const std::byte> data) override
    {
        m_Writer.put(m_Defs[var].name, step, sel, data);
    }
    StepReport end_step() override { return m_Writer.end_step(); }
    void close() override { m_Summary = m_Writer.close(); }
    std::filesystem::path artifact() const override { return m_Writer.paths().final_dir(); }
    nlohmann::json extra() const override
    {
        return {{"subfiles", m_Writer.aggregator_map().num_subfiles()},
                {"drain_wait_s", m_Summary.drain_wait_seconds}};
    }

private:
    std::vector<VariableDef> m_Defs;
    container::Writer m_Writer;
    container::CloseSummary m_Summary;
};

class StagingSink final : public Sink
{
public:
    StagingSink(const RunConfig &cfg, net::Comm &comm)
    : m_Cfg(cfg), m_Defs(workload_defs(cfg.workload)), m_Writer(cfg.engine, m_Defs, comm)
    {
    }

    void put(std::size_t var, std::uint64_t step, const Selection &sel,
             std::span<const std::byte> data) override
    {
        m_Writer.put(m_Defs[var].name, step, sel, data);
    }
    StepReport end_step() override { return m_Writer.end_step(); }
    void close() override { m_Writer.close(); }
    std::filesystem::path artifact() const override { return capture_output(m_Cfg); }
    nlohmann::json extra() const override
    {
        const auto s = m_Writer.stats();
        return {{"steps_announced", s.steps_announced},
                {"steps_skipped", s.steps_skipped},
                {"max_unreleased", s.max_unreleased}};
    }

private:
    RunConfig m_Cfg;
    std::vector<VariableDef> m_Defs;
    staging::StageWriter m_Writer;
};

} // end anonymous namespace

std::filesystem::path flat_output(const RunConfig &cfg)
{
    return cfg.engine.pfs_dir / (cfg.name + ".cff");
}

std::filesystem::path capture_output(const RunConfig &cfg)
{
    return cfg.engine.pfs_dir / (cfg.name + ".capture.cff");
}

std::unique_ptr<Sink> open_sink(const RunConfig &cfg, net::Comm &comm)
{
    switch (cfg.engine.mode)
    {
    case Mode::SerialFunnel:
        return std::make_unique<FunnelSink>(cfg, comm);
    case Mode::FilePerProcess:
        return std::make_unique<FilePerProcessSink>(cfg, comm);
    case Mode::SharedTwoPhase:
        return std::make_unique<TwoPhaseSink>(cfg, comm);
    case Mode::AggregatedSubfile:
        return std::make_unique<AggregatedSink>(cfg, comm);
    case Mode::Staging:
        return std::make_unique<StagingSink>(cfg, comm);
    }
    throw ConfigError("unknown mode");
}

std::vector<int> two_phase_owners(int world, int ranks_per_node, int writers)
{
    std::vector<int> owners;
    if (writers <= 0)
    {
        for (int r = 0; r < world; r += ranks_per_node)
            owners.push_back(r);
        return owners;
    }
    const int W = std::min(writers, world);
    for (int w = 0; w < W; ++w)
        owners.push_back(static_cast<int>(static_cast<long long>(w) * world / W));
    return owners;
}

Region two_phase_region(std::uint64_t n, int W, int w)
{
    const auto uw = static_cast<std::uint64_t>(W), k = static_cast<std::uint64_t>(w);
    return {n * k / uw, n * (k + 1) / uw};
}

CaptureSummary capture_stream(const std::string &endpoint, const std::filesystem::path &out,
                              std::chrono::milliseconds timeout)
{
    staging::StageReader reader(endpoint, timeout);
    const auto defs = reader.variables();
    const auto tmp = std::filesystem::path(out.string() + ".part");
    CaptureSummary sum;
    {
        container::File data(tmp, container::File::Mode::Create);
        while (auto step = reader.begin_step(timeout))
        {
            for (const auto &d : defs)
            {
                const auto bytes = reader.get(d.name);
                data.append(bytes);
                sum.bytes += bytes.size();
            }
            sum.step_ids.push_back(step->step);
            reader.end_step();
        }
    }
    reader.close();

    container::FlatHeader h;
    h.steps = sum.step_ids.size();
    h.variables = defs;
    for (std::size_t i = 0; i < sum.step_ids.size(); ++i)
        if (sum.step_ids[i] != i)
        {
            h.step_ids = sum.step_ids;
            break;
        }
    auto w = container::FlatFileWriter::create(out, h);
    const container::File data(tmp, container::File::Mode::Read);
    std::uint64_t off = 0;
    for (std::uint64_t s = 0; s < h.steps; ++s)
        for (std::size_t v = 0; v < defs.size(); ++v)
        {
            const auto n = defs[v].nbytes();
            w.write_var(s, v, data.read_at(off, static_cast<std::size_t>(n)));
            off += n;
        }
    w.sync();
    std::filesystem::remove(tmp);
    return sum;
}

} // end namespace miniio::harness
