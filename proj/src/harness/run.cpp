/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/harness/run.hpp"
#include "miniio/container/layout.hpp"
#include "miniio/core/error.hpp"
#include "miniio/harness/sinks.hpp"
#include "miniio/net/comm.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <thread>

namespace miniio::harness
{

namespace
{

using Clock = std::chrono::steady_clock;

enum : std::uint8_t
{
    kHello = 1,
    kPeers = 2,
    kReport = 3,
    kFail = 4,
    kStep = 5
};

constexpr int kCaptureRank = -1;

double since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::chrono::milliseconds timeout_of(const RunConfig &cfg)
{
    return std::chrono::milliseconds(static_cast<long long>(cfg.timeout_s * 1000.0));
}

/// MINIIO_FAULT_RANK=<rank>:<step> kills that rank before it writes the step.
bool fault_requested(int rank, std::uint64_t step)
{
    const char *v = std::getenv("MINIIO_FAULT_RANK");
    if (!v)
        return false;
    int r = -2;
    unsigned long long s = 0;
    return std::sscanf(v, "%d:%llu", &r, &s) == 2 && r == rank && s == step;
}

void send_fail(net::Socket &ctl, int rank, const std::string &what) noexcept
{
    try
    {
        if (ctl.valid())
            ctl.send_frame(kFail, nlohmann::json{{"rank", rank}, {"error", what}}.dump());
    }
    catch (...)
    {
    }
}

int rank_process(const RunConfig &cfg, int rank, const net::Endpoint &coord, Clock::time_point t0)
{
    net::Socket ctl;
    try
    {
        ctl = net::Socket::connect(coord);
        auto listener = net::Listener::bind({"127.0.0.1", 0});
        ctl.send_frame(kHello,
                       nlohmann::json{{"rank", rank}, {"endpoint", listener.endpoint().str()}}.dump());
        const auto pf = ctl.recv_frame(timeout_of(cfg));
        if (!pf || pf->type != kPeers)
            throw ProtocolError("coordinator did not send the peer list");
        std::vector<net::Endpoint> peers;
        const auto peer_list = nlohmann::json::parse(pf->text());
        for (const auto &e : peer_list.at("endpoints"))
            peers.push_back(net::Endpoint::parse(e.get<std::string>()));

        const auto &w = cfg.workload;
        net::Comm comm({rank, w.ranks, w.ranks_per_node}, std::move(listener), peers,
                       cfg.engine.comm_latency_us.value_or(0));
        auto sink = open_sink(cfg, comm);
        const double init_s = since(t0);

        const auto sel = patch_of(w, rank);
        std::vector<std::vector<std::byte>> patches(static_cast<std::size_t>(w.nvars));
        for (std::uint64_t t = 0; t < w.steps; ++t)
        {
            const auto tc = Clock::now();
            for (int v = 0; v < w.nvars; ++v)
                patches[static_cast<std::size_t>(v)] = fill(w, v, t, sel);
            if (w.compute_ms > 0)
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(w.compute_ms));
            comm.barrier();
            const double compute_s = since(tc);
            if (fault_requested(rank, t))
                ::raise(SIGKILL);

            const auto tw = Clock::now();
            for (std::size_t v = 0; v < patches.size(); ++v)
                sink->put(v, t, sel, patches[v]);
            const auto rep = sink->end_step();
            const double write_s = since(tw);
            ctl.send_frame(kStep, nlohmann::json{{"step", t},
                                                 {"perceived_write_s", write_s},
                                                 {"compute_s", compute_s},
                                                 {"skipped", rep.skipped}}
                                      .dump());
        }
        const auto tcl = Clock::now();
        sink->close();
        const double close_s = since(tcl);
        ctl.send_frame(kReport, nlohmann::json{{"rank", rank},
                                               {"init_s", init_s},
                                               {"close_s", close_s},
                                               {"artifact", sink->artifact().string()},
                                               {"extra", sink->extra()}}
                                    .dump());
        sink.reset();
        comm.shutdown();
        return 0;
    }
    catch (const std::exception &e)
    {
        send_fail(ctl, rank, e.what());
        return 4;
    }
}

int capture_process(const RunConfig &cfg, const net::Endpoint &coord)
{
    net::Socket ctl;
    try
    {
        ctl = net::Socket::connect(coord);
        ctl.send_frame(kHello, nlohmann::json{{"rank", kCaptureRank}}.dump());
        const auto sum = capture_stream(cfg.engine.control_endpoint, capture_output(cfg),
                                        timeout_of(cfg));
        ctl.send_frame(kReport, nlohmann::json{{"rank", kCaptureRank},
                                               {"captured_steps", sum.step_ids},
                                               {"captured_bytes", sum.bytes}}
                                    .dump());
        return 0;
    }
    catch (const std::exception &e)
    {
        send_fail(ctl, kCaptureRank, std::string("capture consumer: ") + e.what());
        return 4;
    }
}

/// Removes what an earlier run of the same name left in the run directory.
void clear_outputs(const RunConfig &cfg)
{
    const auto prefix = cfg.name + ".";
    auto sweep = [&](const std::filesystem::path &dir) {
        std::error_code ec;
        if (!std::filesystem::is_directory(dir, ec))
            return;
        for (const auto &e : std::filesystem::directory_iterator(dir, ec))
            if (e.path().filename().string().rfind(prefix, 0) == 0)
                std::filesystem::remove_all(e.path(), ec);
    };
    sweep(cfg.out);
    if (cfg.engine.bb_dir)
        sweep(*cfg.engine.bb_dir);
    std::error_code ec;
    std::filesystem::remove(cfg.out / "report.json", ec);
    std::filesystem::remove(cfg.out / "steps.csv", ec);
}

struct Participant
{
    net::Socket sock;
    int rank = -2;
    bool done = false;
    nlohmann::json report;
};

std::string describe_status(int status)
{
    if (WIFSIGNALED(status))
        return "killed by signal " + std::to_string(WTERMSIG(status));
    if (WIFEXITED(status))
        return "exit status " + std::to_string(WEXITSTATUS(status));
    return "status " + std::to_string(status);
}

} // end anonymous namespace

RunReport run(RunConfig cfg)
{
    cfg.validate();
    std::filesystem::create_directories(cfg.out);
    cfg.out = std::filesystem::absolute(cfg.out);
    cfg.engine.pfs_dir = cfg.out;
    if (cfg.engine.bb_dir)
    {
        cfg.engine.bb_dir = std::filesystem::absolute(*cfg.engine.bb_dir);
        std::filesystem::create_directories(*cfg.engine.bb_dir);
    }
    const bool staging = cfg.engine.mode == Mode::Staging;
    if (staging)
    {
        auto ep = net::Endpoint::parse(cfg.engine.control_endpoint);
        if (ep.port == 0)
        {
            auto probe = net::Listener::bind(ep);
            ep.port = probe.endpoint().port;
        }
        cfg.engine.control_endpoint = ep.str();
        cfg.engine.rendezvous_readers = 1;
    }
    clear_outputs(cfg);

    RunReport rep;
    rep.config = cfg;
    const int world = cfg.workload.ranks;
    auto coord = net::Listener::bind({"127.0.0.1", 0});
    const auto coord_ep = coord.endpoint();

    const auto t0 = Clock::now();
    std::map<pid_t, int> children;
    std::fflush(nullptr);
    auto spawn = [&](int rank) {
        const pid_t pid = ::fork();
        if (pid < 0)
            throw IOError("fork failed");
        if (pid == 0)
        {
            coord.close();
            const auto start = Clock::now();
            const int code = rank == kCaptureRank ? capture_process(cfg, coord_ep)
                                                  : rank_process(cfg, rank, coord_ep, start);
            std::fflush(nullptr);
            ::_exit(code);
        }
        children[pid] = rank;
    };
    try
    {
        if (staging)
            spawn(kCaptureRank);
        for (int r = 0; r < world; ++r)
            spawn(r);
    }
    catch (const std::exception &e)
    {
        rep.failure = e.what();
    }

    const std::size_t expected = static_cast<std::size_t>(world) + (staging ? 1 : 0);
    std::vector<std::unique_ptr<Participant>> parts;
    std::map<int, std::string> endpoints;
    std::map<int, std::vector<nlohmann::json>> step_frames;
    std::map<int, nlohmann::json> reports;
    bool peers_sent = false;
    const auto deadline = t0 + timeout_of(cfg);

    auto fail = [&](const std::string &why) {
        if (!rep.failure)
            rep.failure = why;
    };

    auto who = [](int rank) {
        return rank == kCaptureRank ? std::string("capture consumer")
                                    : "rank " + std::to_string(rank);
    };
    auto read_frame = [](Participant &p, std::chrono::milliseconds wait) {
        std::optional<net::Frame> f;
        try
        {
            if (p.sock.wait_readable(wait))
                f = p.sock.recv_frame();
        }
        catch (const std::exception &)
        {
        }
        return f;
    };
    // false on EOF
    auto handle = [&](Participant &p, const std::optional<net::Frame> &f) {
        if (!f)
            return false;
        const auto j = nlohmann::json::parse(f->text(), nullptr, false);
        if (j.is_discarded() || !j.is_object())
        {
            fail("malformed message from " + who(p.rank));
            return true;
        }
        switch (f->type)
        {
        case kHello:
            p.rank = j.value("rank", -2);
            if (p.rank != kCaptureRank)
                endpoints[p.rank] = j.value("endpoint", std::string());
            break;
        case kStep:
            step_frames[p.rank].push_back(j);
            break;
        case kReport:
            p.done = true;
            reports[p.rank] = j;
            break;
        case kFail:
            fail((p.rank == kCaptureRank ? std::string() : who(p.rank) + ": ") +
                 j.value("error", std::string("unknown error")));
            break;
        default:
            fail("unexpected message type " + std::to_string(f->type) + " from " + who(p.rank));
        }
        return true;
    };

    while (!rep.failure && reports.size() < expected)
    {
        if (Clock::now() > deadline)
        {
            fail("run exceeded its timeout of " + std::to_string(cfg.timeout_s) + " s");
            break;
        }
        std::vector<pollfd> fds;
        fds.push_back({coord.fd(), POLLIN, 0});
        for (const auto &p : parts)
            fds.push_back({p->done ? -1 : p->sock.fd(), POLLIN, 0});
        ::poll(fds.data(), fds.size(), 100);

        if (fds[0].revents & POLLIN)
            if (auto s = coord.accept(std::chrono::milliseconds(0)))
            {
                parts.push_back(std::make_unique<Participant>());
                parts.back()->sock = std::move(*s);
            }
        for (std::size_t i = 1; i < fds.size() && !rep.failure; ++i)
        {
            if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR)))
                continue;
            auto &p = *parts[i - 1];
            if (!handle(p, read_frame(p, std::chrono::milliseconds(0))))
                fail(who(p.rank) + " exited without a report");
        }
        if (!peers_sent && static_cast<int>(endpoints.size()) == world)
        {
            nlohmann::json peers = {{"endpoints", nlohmann::json::array()}};
            for (const auto &[r, ep] : endpoints)
                peers["endpoints"].push_back(ep);
            const auto text = peers.dump();
            for (auto &p : parts)
                if (p->rank >= 0)
                    p->sock.send_frame(kPeers, text);
            peers_sent = true;
        }
        // a child that dies before connecting never shows up as EOF
        for (auto it = children.begin(); it != children.end() && !rep.failure;)
        {
            int status = 0;
            if (::waitpid(it->first, &status, WNOHANG) != it->first)
            {
                ++it;
                continue;
            }
            const int rank = it->second;
            it = children.erase(it);
            // frames it sent before exiting may still be queued
            for (auto &p : parts)
                if (p->rank == rank)
                    while (!p->done && !rep.failure &&
                           handle(*p, read_frame(*p, std::chrono::milliseconds(200))))
                    {
                    }
            if (!reports.count(rank))
                fail(who(rank) + " died (" + describe_status(status) + ")");
        }
    }

    if (rep.failure)
        for (const auto &[pid, rank] : children)
            ::kill(pid, SIGKILL);
    for (const auto &[pid, rank] : children)
    {
        int status = 0;
        ::waitpid(pid, &status, 0);
    }
    rep.wall_s = since(t0);

    // steps every rank completed
    std::uint64_t complete = cfg.workload.steps;
    for (int r = 0; r < world; ++r)
        complete = std::min<std::uint64_t>(complete, step_frames[r].size());
    double io_sum = 0.0;
    for (std::uint64_t t = 0; t < complete; ++t)
    {
        StepTiming st{t, 0.0, 0.0};
        for (int r = 0; r < world; ++r)
        {
            const auto &j = step_frames[r][t];
            st.perceived_write_s = std::max(st.perceived_write_s, j.at("perceived_write_s").get<double>());
            st.compute_s = std::max(st.compute_s, j.at("compute_s").get<double>());
        }
        if (step_frames[0][t].at("skipped").get<bool>())
            rep.skipped_steps.push_back(t);
        io_sum += st.perceived_write_s;
        rep.steps.push_back(st);
    }
    rep.io_sum_s = io_sum;
    for (const auto &[r, j] : reports)
    {
        if (r == kCaptureRank)
        {
            rep.extra["captured_steps"] = j.at("captured_steps");
            rep.extra["captured_bytes"] = j.at("captured_bytes");
            continue;
        }
        rep.init_s = std::max(rep.init_s, j.at("init_s").get<double>());
        rep.close_s = std::max(rep.close_s, j.at("close_s").get<double>());
        if (r == 0)
        {
            rep.artifact = j.at("artifact").get<std::string>();
            for (const auto &[k, v] : j.at("extra").items())
                rep.extra[k] = v;
        }
    }
    write_report(rep);
    return rep;
}

} // end namespace miniio::harness
