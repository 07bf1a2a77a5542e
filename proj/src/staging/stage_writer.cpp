/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * stage_writer.cpp
 *
 * Per step: every rank packs its stored bodies into one segment and sends
 * the block records to rank 0. Rank 0 merges them, applies the queue
 * policy and broadcasts the decision with the set of readers the step is
 * meant for. Ranks buffer the segment, acknowledge, and only then does
 * rank 0 announce the step, so a GET can never outrun the buffer.
 */

#include "miniio/staging/stage_writer.hpp"
#include "miniio/core/def_json.hpp"
#include "miniio/core/error.hpp"
#include "miniio/core/step_index.hpp"
#include "miniio/staging/shm.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

namespace miniio::staging
{

namespace
{

using Clock = std::chrono::steady_clock;
using std::chrono::milliseconds;

constexpr std::uint8_t kTagOpenEndpoint = 30;
constexpr std::uint8_t kTagOpenStatus = 31;
constexpr std::uint8_t kTagFragment = 32;
constexpr std::uint8_t kTagDecision = 33;
constexpr std::uint8_t kTagAck = 34;
constexpr std::uint8_t kTagRendezvous = 35;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string random_token()
{
    std::random_device rd;
    std::mt19937_64 gen((static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
                        static_cast<std::uint64_t>(::getpid()));
    static const char *hex = "0123456789abcdef";
    std::string out;
    auto v = gen();
    for (int i = 0; i < 12; ++i, v >>= 4)
        out.push_back(hex[v & 15]);
    return out;
}

/// Self-pipe used to wake a thread blocked in poll().
class Wakeup
{
public:
    Wakeup()
    {
        if (::pipe2(m_Fds, O_CLOEXEC | O_NONBLOCK) != 0)
            throw IOError("pipe2 failed");
    }
    ~Wakeup()
    {
        ::close(m_Fds[0]);
        ::close(m_Fds[1]);
    }
    Wakeup(const Wakeup &) = delete;
    Wakeup &operator=(const Wakeup &) = delete;
    int fd() const noexcept { return m_Fds[0]; }
    void signal() noexcept
    {
        const char c = 1;
        [[maybe_unused]] auto n = ::write(m_Fds[1], &c, 1);
    }
    void drain() noexcept
    {
        char buf[64];
        while (::read(m_Fds[0], buf, sizeof(buf)) > 0)
        {
        }
    }

private:
    int m_Fds[2] = {-1, -1};
};

/// One rank's share of one step, kept until every reader released it.
struct HeldStep
{
    std::vector<std::byte> heap;
    ShmSegment shm;
    std::vector<BlockRecord> blocks;
    std::set<int> pending;

    std::span<const std::byte> bytes() const
    {
        return shm.valid() ? shm.bytes() : std::span<const std::byte>(heap);
    }
};

struct Decision
{
    std::string status = "ok";
    std::vector<int> readers;

    std::string dump() const
    {
        nlohmann::json j;
        j["status"] = status;
        j["readers"] = readers;
        return j.dump();
    }
    static Decision parse(std::string_view text)
    {
        const auto j = nlohmann::json::parse(text);
        return {j.at("status").get<std::string>(), j.at("readers").get<std::vector<int>>()};
    }
};

} // end anonymous namespace

struct StageWriter::Impl
{
    Impl(EngineParams p, std::vector<VariableDef> d, net::Comm &c)
    : params(std::move(p)), defs(std::move(d)), comm(c)
    {
    }
    ~Impl() { shutdown_threads(); }

    EngineParams params;
    std::vector<VariableDef> defs;
    net::Comm &comm;

    std::vector<codecs::PreparedBlock> pending;
    double put_seconds = 0.0;
    bool closed = false;
    std::string shm_prefix;

    net::Listener data_listener;
    net::Listener control_listener;
    DataplaneDescriptor descriptor;

    // Everything below is shared with the service threads.
    mutable std::mutex mu;
    std::condition_variable cv;
    std::map<std::uint64_t, std::unique_ptr<HeldStep>> held;
    std::set<int> departed;
    StageStats stats;
    std::map<int, std::shared_ptr<net::Socket>> active;
    int next_reader = 0;

    std::atomic<bool> stop{false};
    Wakeup data_wake;
    Wakeup control_wake;
    std::thread data_thread;
    std::thread control_thread;

    std::size_t var_index(const std::string &var) const
    {
        for (std::size_t i = 0; i < defs.size(); ++i)
            if (defs[i].name == var)
                return i;
        throw IndexError("no variable named \"" + var + "\"");
    }

    void open();
    void rendezvous();
    void serve_data();
    void serve_control();
    void release(int reader, std::uint64_t step);
    void depart(int reader);
    void handle_get(net::Socket &sock, int reader, const net::Frame &frame);
    Decision decide(std::uint64_t step, std::vector<StepIndex> frags, std::string &line);
    std::string buffer_step(std::uint64_t step, const Decision &d, std::vector<std::byte> bytes,
                            std::vector<BlockRecord> blocks);
    void announce(const std::string &line, const std::vector<int> &readers);
    void shutdown_threads();

    void update_counters()
    {
        stats.held_steps = held.size();
        std::uint64_t b = 0;
        for (const auto &[s, h] : held)
            b += h->bytes().size();
        stats.held_bytes = b;
        stats.max_unreleased = std::max(stats.max_unreleased, held.size());
    }
};

void StageWriter::Impl::open()
{
    const int rank = comm.rank();
    const auto control = resolve_endpoint(params.control_endpoint);
    data_listener = net::Listener::bind({control.host, 0});

    nlohmann::json hello;
    hello["data"] = data_listener.endpoint().str();
    hello["defs"] = defs_to_json(defs);
    comm.send(0, kTagOpenEndpoint, hello.dump());

    std::string status = "ok";
    if (rank == 0)
    {
        const auto mine = nlohmann::json::parse(defs_to_json(defs).dump());
        descriptor.kind = params.dataplane;
        for (int r = 0; r < comm.world_size(); ++r)
        {
            const auto f = comm.expect(r, kTagOpenEndpoint,
                                       milliseconds(params.step_timeout_ms));
            const auto j = nlohmann::json::parse(f.text());
            descriptor.endpoints.push_back(net::Endpoint::parse(j.at("data").get<std::string>()));
            if (j.at("defs") != mine && status == "ok")
                status = "rank " + std::to_string(r) + " declared different variables";
        }
        if (status == "ok")
        {
            try
            {
                control_listener = net::Listener::bind(control);
            }
            catch (const Error &e)
            {
                status = e.what();
            }
        }
        shm_prefix = "/miniio-" + random_token();
        descriptor.shm_prefix = shm_prefix;
        const auto msg = status == "ok" ? "ok " + shm_prefix : status;
        for (int r = 1; r < comm.world_size(); ++r)
            comm.send(r, kTagOpenStatus, msg);
    }
    else
    {
        const auto f = comm.expect(0, kTagOpenStatus, milliseconds(params.step_timeout_ms) * 2);
        const auto text = std::string(f.text());
        if (text.starts_with("ok "))
            shm_prefix = text.substr(3);
        else
            status = text;
    }
    if (status != "ok")
        throw OpenError("staging open failed: " + status);

    data_thread = std::thread([this] { serve_data(); });
    if (rank == 0)
        control_thread = std::thread([this] { serve_control(); });
    rendezvous();
}

void StageWriter::Impl::rendezvous()
{
    std::string status = "ok";
    if (comm.rank() == 0)
    {
        std::unique_lock lock(mu);
        const auto want = static_cast<std::size_t>(params.rendezvous_readers);
        if (!cv.wait_for(lock, milliseconds(params.step_timeout_ms),
                         [&] { return active.size() >= want; }))
            status = "only " + std::to_string(active.size()) + " of " + std::to_string(want) +
                     " readers connected in time";
        lock.unlock();
        for (int r = 1; r < comm.world_size(); ++r)
            comm.send(r, kTagRendezvous, status);
    }
    else
        status = std::string(comm.expect(0, kTagRendezvous, milliseconds(params.step_timeout_ms) * 4).text());
    if (status != "ok")
    {
        shutdown_threads();
        throw TimeoutError("staging rendezvous: " + status);
    }
}

void StageWriter::Impl::release(int reader, std::uint64_t step)
{
    std::lock_guard lock(mu);
    const auto it = held.find(step);
    if (it == held.end())
        return;
    it->second->pending.erase(reader);
    if (it->second->pending.empty())
        held.erase(it);
    update_counters();
    cv.notify_all();
}

void StageWriter::Impl::depart(int reader)
{
    if (reader < 0)
        return;
    std::lock_guard lock(mu);
    departed.insert(reader);
    for (auto it = held.begin(); it != held.end();)
    {
        it->second->pending.erase(reader);
        it = it->second->pending.empty() ? held.erase(it) : std::next(it);
    }
    update_counters();
    cv.notify_all();
}

void StageWriter::Impl::handle_get(net::Socket &sock, int reader, const net::Frame &frame)
{
    const auto req = GetReq::parse(frame.text());
    std::span<const std::byte> body;
    codecs::PayloadHeader header;
    std::string error;
    {
        std::lock_guard lock(mu);
        const auto it = held.find(req.step);
        if (req.rank != comm.rank())
            error = "rank " + std::to_string(comm.rank()) + " does not hold blocks of rank " +
                    std::to_string(req.rank);
        else if (it == held.end() || !it->second->pending.contains(reader))
            error = "step " + std::to_string(req.step) + " is not held for this reader";
        else
        {
            const auto &blocks = it->second->blocks;
            const auto b = std::find_if(blocks.begin(), blocks.end(),
                                        [&](const auto &rec) { return rec.var == req.var; });
            if (b == blocks.end())
                error = "step " + std::to_string(req.step) + " has no block of \"" + req.var +
                        "\" on rank " + std::to_string(req.rank);
            else
            {
                header = codecs::header_of(*b, defs[var_index(b->var)].dtype);
                body = it->second->bytes().subspan(b->offset, b->stored_nbytes);
            }
        }
    }
    // The step cannot be freed while we send: only this thread releases.
    if (!error.empty())
        sock.send_frame(tag(MsgType::Err), err_payload(error));
    else
        sock.send_frame(tag(MsgType::Data), data_prefix(header), body);
}

void StageWriter::Impl::serve_data()
{
    struct Conn
    {
        net::Socket sock;
        int reader = -1;
    };
    std::vector<std::unique_ptr<Conn>> conns;
    while (!stop.load())
    {
        std::vector<pollfd> fds{{data_wake.fd(), POLLIN, 0}, {data_listener.fd(), POLLIN, 0}};
        for (const auto &c : conns)
            fds.push_back({c->sock.fd(), POLLIN, 0});
        if (::poll(fds.data(), fds.size(), -1) < 0)
            continue;
        if (fds[0].revents)
            data_wake.drain();
        if (stop.load())
            break;
        if (fds[1].revents & POLLIN)
        {
            try
            {
                conns.push_back(std::make_unique<Conn>(Conn{data_listener.accept(), -1}));
            }
            catch (const Error &)
            {
            }
        }
        std::vector<std::size_t> dead;
        for (std::size_t i = 0; i + 2 < fds.size(); ++i)
        {
            if (!fds[i + 2].revents)
                continue;
            auto &c = *conns[i];
            try
            {
                const auto frame = c.sock.recv_frame();
                if (!frame)
                {
                    dead.push_back(i);
                    continue;
                }
                const auto type = static_cast<MsgType>(frame->type);
                if (type == MsgType::HelloR)
                {
                    const auto h = HelloR::parse(frame->text());
                    if (h.version != kProtocolVersion || h.role != "data" || h.reader_id < 0)
                    {
                        c.sock.send_frame(tag(MsgType::Err),
                                          err_payload("unsupported data hello (version " +
                                                      std::to_string(h.version) + ")"));
                        dead.push_back(i);
                        continue;
                    }
                    c.reader = h.reader_id;
                }
                else if (c.reader < 0)
                {
                    c.sock.send_frame(tag(MsgType::Err), err_payload("HELLO_R expected first"));
                    dead.push_back(i);
                }
                else if (type == MsgType::GetReq)
                    handle_get(c.sock, c.reader, *frame);
                else if (type == MsgType::StepRelease)
                    release(c.reader, parse_release(frame->text()));
                else
                    c.sock.send_frame(tag(MsgType::Err),
                                      err_payload("unexpected message type " +
                                                  std::to_string(frame->type)));
            }
            catch (const Error &)
            {
                dead.push_back(i);
            }
        }
        for (auto it = dead.rbegin(); it != dead.rend(); ++it)
        {
            depart(conns[*it]->reader);
            conns.erase(conns.begin() + static_cast<std::ptrdiff_t>(*it));
        }
    }
}

void StageWriter::Impl::serve_control()
{
    struct Conn
    {
        std::shared_ptr<net::Socket> sock;
        int reader = -1;
    };
    std::vector<Conn> conns;
    const auto host = local_host();
    while (!stop.load())
    {
        std::vector<pollfd> fds{{control_wake.fd(), POLLIN, 0},
                                {control_listener.fd(), POLLIN, 0}};
        for (const auto &c : conns)
            fds.push_back({c.sock->fd(), POLLIN, 0});
        if (::poll(fds.data(), fds.size(), -1) < 0)
            continue;
        if (fds[0].revents)
            control_wake.drain();
        if (stop.load())
            break;
        if (fds[1].revents & POLLIN)
        {
            try
            {
                conns.push_back({std::make_shared<net::Socket>(control_listener.accept()), -1});
            }
            catch (const Error &)
            {
            }
        }
        std::vector<std::size_t> dead;
        for (std::size_t i = 0; i + 2 < fds.size(); ++i)
        {
            if (!fds[i + 2].revents)
                continue;
            auto &c = conns[i];
            try
            {
                const auto frame = c.sock->recv_frame();
                if (!frame)
                {
                    dead.push_back(i);
                    continue;
                }
                if (static_cast<MsgType>(frame->type) != MsgType::HelloR)
                {
                    c.sock->send_frame(tag(MsgType::Err),
                                       err_payload("only HELLO_R is accepted on control"));
                    dead.push_back(i);
                    continue;
                }
                const auto h = HelloR::parse(frame->text());
                if (h.version != kProtocolVersion)
                {
                    c.sock->send_frame(tag(MsgType::Err),
                                       err_payload("protocol version " +
                                                   std::to_string(h.version) +
                                                   " not supported; writer speaks " +
                                                   std::to_string(kProtocolVersion)));
                    dead.push_back(i);
                    continue;
                }
                if (h.role == "control" && c.reader < 0)
                {
                    HelloW w;
                    {
                        std::lock_guard lock(mu);
                        c.reader = next_reader++;
                    }
                    w.reader_id = c.reader;
                    w.world_size = comm.world_size();
                    w.variables = defs;
                    w.dataplane = descriptor;
                    if (descriptor.kind == Dataplane::Shm && h.host != host)
                        w.dataplane.kind = Dataplane::Tcp;
                    w.queue_limit = params.queue_limit;
                    c.sock->send_frame(tag(MsgType::HelloW), w.dump());
                }
                else if (h.role == "ready" && c.reader >= 0)
                {
                    // data connections are up; from now on steps go to this reader
                    std::lock_guard lock(mu);
                    active[c.reader] = c.sock;
                    cv.notify_all();
                }
                else
                {
                    c.sock->send_frame(tag(MsgType::Err), err_payload("unexpected hello role"));
                    dead.push_back(i);
                }
            }
            catch (const Error &)
            {
                dead.push_back(i);
            }
        }
        for (auto it = dead.rbegin(); it != dead.rend(); ++it)
        {
            {
                std::lock_guard lock(mu);
                active.erase(conns[*it].reader);
                cv.notify_all();
            }
            conns[*it].sock->close();
            conns.erase(conns.begin() + static_cast<std::ptrdiff_t>(*it));
        }
    }
}

Decision StageWriter::Impl::decide(std::uint64_t step, std::vector<StepIndex> frags,
                                   std::string &line)
{
    Decision d;
    try
    {
        auto merged = index_merge(frags, comm.world_size());
        merged.step = step;
        if (!merged.complete)
            return {"incomplete: step " + std::to_string(step) +
                        " is missing blocks from at least one rank",
                    {}};
        line = index_serialize(merged);
    }
    catch (const Error &e)
    {
        return {std::string("error: ") + e.what(), {}};
    }

    const auto k = static_cast<std::size_t>(params.queue_limit);
    std::unique_lock lock(mu);
    if (k > 0 && params.queue_full_policy == QueueFullPolicy::Block)
    {
        if (!cv.wait_for(lock, milliseconds(params.step_timeout_ms),
                         [&] { return !active.empty() && held.size() < k; }))
            return {active.empty()
                        ? std::string("stall: no reader connected")
                        : "stall: " + std::to_string(held.size()) + " steps still unreleased",
                    {}};
    }
    else if (k > 0 && held.size() >= k)
        return {"skip", {}};
    for (const auto &[id, sock] : active)
        d.readers.push_back(id);
    return d;
}

std::string StageWriter::Impl::buffer_step(std::uint64_t step, const Decision &d,
                                           std::vector<std::byte> bytes,
                                           std::vector<BlockRecord> blocks)
{
    try
    {
        auto h = std::make_unique<HeldStep>();
        if (params.dataplane == Dataplane::Shm)
            h->shm = ShmSegment::create(
                shm_prefix + "-" + std::to_string(comm.rank()) + "-" + std::to_string(step),
                bytes);
        else
            h->heap = std::move(bytes);
        h->blocks = std::move(blocks);

        const auto k = static_cast<std::size_t>(params.queue_limit);
        std::unique_lock lock(mu);
        for (int r : d.readers)
            if (!departed.contains(r))
                h->pending.insert(r);
        if (h->pending.empty())
            return "ok";
        // Rank 0 saw room; other ranks may still be waiting for the release
        // of the oldest step to reach them.
        if (k > 0 && !cv.wait_for(lock, milliseconds(params.step_timeout_ms),
                                  [&] { return held.size() < k; }))
            return "stall: rank " + std::to_string(comm.rank()) + " queue stayed full";
        held[step] = std::move(h);
        update_counters();
        return "ok";
    }
    catch (const Error &e)
    {
        return std::string("error: ") + e.what();
    }
}

void StageWriter::Impl::announce(const std::string &line, const std::vector<int> &readers)
{
    std::lock_guard lock(mu);
    for (int r : readers)
    {
        const auto it = active.find(r);
        if (it == active.end())
            continue;
        try
        {
            it->second->send_frame(tag(MsgType::StepAnnounce), line);
        }
        catch (const Error &)
        {
            // the control thread notices the broken connection
        }
    }
    ++stats.steps_announced;
}

void StageWriter::Impl::shutdown_threads()
{
    stop.store(true);
    data_wake.signal();
    control_wake.signal();
    if (data_thread.joinable())
        data_thread.join();
    if (control_thread.joinable())
        control_thread.join();
}

StageWriter::StageWriter(EngineParams params, std::vector<VariableDef> defs, net::Comm &comm)
{
    params.validate();
    validate_defs(defs);
    m_Impl = std::make_unique<Impl>(std::move(params), std::move(defs), comm);
    m_Impl->open();
}

StageWriter::~StageWriter()
{
    if (m_Impl)
        m_Impl->shutdown_threads();
}

void StageWriter::put(const std::string &var, std::uint64_t step, const Selection &sel,
                      std::span<const std::byte> data)
{
    auto &im = *m_Impl;
    const auto t0 = Clock::now();
    if (im.closed)
        throw StepOrderError("put after close");
    if (step != m_Step)
        throw StepOrderError("put for step " + std::to_string(step) + " while at step " +
                             std::to_string(m_Step));
    const auto vi = im.var_index(var);
    for (const auto &b : im.pending)
        if (b.var_index == vi)
            throw DuplicateBlock("variable \"" + var + "\" already put in step " +
                                 std::to_string(step));
    im.pending.push_back(codecs::prepare_block(im.defs[vi], vi, sel, data, im.params.codec));
    im.put_seconds += seconds_since(t0);
}

StepReport StageWriter::end_step()
{
    auto &im = *m_Impl;
    const auto t0 = Clock::now();
    if (im.closed)
        throw StepOrderError("end_step after close");
    const int rank = im.comm.rank();
    const int world = im.comm.world_size();
    const auto timeout = milliseconds(im.params.step_timeout_ms);

    std::sort(im.pending.begin(), im.pending.end(),
              [](const auto &a, const auto &b) { return a.var_index < b.var_index; });
    StepIndex mine{m_Step, {}, false};
    std::vector<std::byte> bytes;
    for (const auto &b : im.pending)
    {
        mine.blocks.push_back(b.record(m_Step, rank, rank, bytes.size()));
        bytes.insert(bytes.end(), b.payload.body.begin(), b.payload.body.end());
    }
    im.pending.clear();
    im.comm.send(0, kTagFragment, index_serialize(mine));

    Decision d;
    std::string line;
    if (rank == 0)
    {
        std::vector<StepIndex> frags;
        std::string error;
        for (int r = 0; r < world; ++r)
        {
            try
            {
                frags.push_back(index_parse(im.comm.expect(r, kTagFragment, timeout).text()));
            }
            catch (const TimeoutError &)
            {
            }
        }
        d = im.decide(m_Step, std::move(frags), line);
        for (int r = 1; r < world; ++r)
            im.comm.send(r, kTagDecision, d.dump());
    }
    else
        d = Decision::parse(im.comm.expect(0, kTagDecision, timeout * 3).text());

    StepReport report;
    report.step = m_Step;
    if (d.status == "ok")
    {
        auto ack = im.buffer_step(m_Step, d, std::move(bytes), std::move(mine.blocks));
        if (rank == 0)
        {
            for (int r = 1; r < world; ++r)
            {
                auto other = std::string(im.comm.expect(r, kTagAck, timeout * 2).text());
                if (ack == "ok")
                    ack = std::move(other);
            }
            if (ack == "ok")
                im.announce(line, d.readers);
        }
        else
            im.comm.send(0, kTagAck, ack);
        if (ack.starts_with("stall:"))
            throw StallError(ack);
        if (ack != "ok")
            throw IOError(ack);
    }
    else if (d.status == "skip")
    {
        report.skipped = true;
        std::lock_guard lock(im.mu);
        ++im.stats.steps_skipped;
    }
    else if (d.status.starts_with("incomplete:"))
        throw IncompleteStep(d.status.substr(12));
    else if (d.status.starts_with("stall:"))
        throw StallError(d.status);
    else
        throw IOError(d.status);

    report.perceived_write_seconds = im.put_seconds + seconds_since(t0);
    im.put_seconds = 0.0;
    ++m_Step;
    return report;
}

void StageWriter::close()
{
    auto &im = *m_Impl;
    if (im.closed)
        return;
    im.closed = true;
    im.pending.clear();
    if (im.comm.rank() == 0)
    {
        std::lock_guard lock(im.mu);
        for (const auto &[id, sock] : im.active)
        {
            try
            {
                sock->send_frame(tag(MsgType::Close), std::string_view("{}"));
            }
            catch (const Error &)
            {
            }
        }
    }
    {
        std::unique_lock lock(im.mu);
        im.cv.wait_for(lock, milliseconds(im.params.step_timeout_ms),
                       [&] { return im.held.empty(); });
    }
    im.comm.barrier();
    im.shutdown_threads();
    std::lock_guard lock(im.mu);
    im.held.clear();
    im.update_counters();
}

net::Endpoint StageWriter::control_endpoint() const
{
    return m_Impl->control_listener.valid() ? m_Impl->control_listener.endpoint()
                                            : net::Endpoint{};
}

std::size_t StageWriter::readers() const
{
    std::lock_guard lock(m_Impl->mu);
    return m_Impl->active.size();
}

StageStats StageWriter::stats() const
{
    std::lock_guard lock(m_Impl->mu);
    return m_Impl->stats;
}

} // end namespace miniio::staging
