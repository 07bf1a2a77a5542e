/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "doctest.h"
#include "oracle.hpp"
#include "rank_group.hpp"

#include "miniio/container/reader.hpp"
#include "miniio/container/writer.hpp"
#include "miniio/core/error.hpp"
#include "miniio/staging/dataplane_bench.hpp"
#include "miniio/staging/stage_reader.hpp"
#include "miniio/staging/stage_writer.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <thread>

using namespace miniio;
using namespace miniio::staging;
using namespace miniio::testing::oracle;
using miniio::testing::run_ranks;
using miniio::testing::TempDir;
using std::chrono::milliseconds;

namespace
{
using Clock = std::chrono::steady_clock;

std::string free_endpoint()
{
    auto l = net::Listener::bind({"127.0.0.1", 0});
    return l.endpoint().str();
}

EngineParams stage_params(int readers = 1)
{
    EngineParams p;
    p.mode = Mode::Staging;
    p.control_endpoint = free_endpoint();
    p.rendezvous_readers = readers;
    p.step_timeout_ms = 10000;
    return p;
}

using ReaderFn = std::function<void(const std::string &)>;

/// Runs writer ranks and reader threads together; rethrows the first error.
void stage_run(int world, const EngineParams &p,
               const std::function<void(net::Comm &)> &writer_fn,
               const std::vector<ReaderFn> &readers)
{
    std::vector<std::exception_ptr> errors(readers.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < readers.size(); ++i)
        threads.emplace_back([&, i] {
            try
            {
                readers[i](p.control_endpoint);
            }
            catch (...)
            {
                errors[i] = std::current_exception();
            }
        });
    std::exception_ptr writer_error;
    try
    {
        run_ranks(world, world, writer_fn);
    }
    catch (...)
    {
        writer_error = std::current_exception();
    }
    for (auto &t : threads)
        t.join();
    if (writer_error)
        std::rethrow_exception(writer_error);
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

void put_step(StageWriter &w, net::Comm &c, const std::vector<VariableDef> &defs,
              std::uint64_t t)
{
    for (std::size_t v = 0; v < defs.size(); ++v)
    {
        const auto sel = row_split(defs[v], c.rank(), c.world_size());
        w.put(defs[v].name, t, sel, patch(defs[v], v, t, sel));
    }
}

using StepData = std::map<std::string, std::vector<std::byte>>;

/// Reads every variable of every step until end-of-stream.
std::map<std::uint64_t, StepData> drain_stream(StageReader &r, milliseconds hold = milliseconds(0))
{
    std::map<std::uint64_t, StepData> out;
    while (auto idx = r.begin_step(milliseconds(10000)))
    {
        auto &slot = out[idx->step];
        for (const auto &def : r.variables())
            slot[def.name] = r.get(def.name);
        if (hold.count() > 0)
            std::this_thread::sleep_for(hold);
        r.end_step();
    }
    return out;
}

void check_oracle(const std::map<std::uint64_t, StepData> &got,
                  const std::vector<VariableDef> &defs)
{
    for (const auto &[t, vars] : got)
        for (std::size_t v = 0; v < defs.size(); ++v)
            CHECK(vars.at(defs[v].name) == whole(defs[v], v, t));
}

std::size_t shm_entries()
{
    std::size_t n = 0;
    std::error_code ec;
    for (const auto &e : std::filesystem::directory_iterator("/dev/shm", ec))
        if (e.path().filename().string().starts_with("miniio-"))
            ++n;
    return n;
}
} // end anonymous namespace

TEST_CASE("staging message type codes")
{
    CHECK(tag(MsgType::HelloR) == 1);
    CHECK(tag(MsgType::HelloW) == 2);
    CHECK(tag(MsgType::StepAnnounce) == 3);
    CHECK(tag(MsgType::GetReq) == 4);
    CHECK(tag(MsgType::Data) == 5);
    CHECK(tag(MsgType::StepRelease) == 6);
    CHECK(tag(MsgType::Close) == 7);
    CHECK(tag(MsgType::Err) == 8);
}

TEST_CASE("staging hello and data payloads round-trip")
{
    HelloW w;
    w.reader_id = 3;
    w.world_size = 2;
    w.variables = two_vars({4, 5});
    w.dataplane.kind = Dataplane::Shm;
    w.dataplane.endpoints = {{"127.0.0.1", 9000}, {"127.0.0.1", 9001}};
    w.dataplane.shm_prefix = "/miniio-abc";
    const auto back = HelloW::parse(w.dump());
    CHECK(back.variables == w.variables);
    CHECK(back.dataplane.endpoints == w.dataplane.endpoints);
    CHECK(back.dataplane.kind == Dataplane::Shm);
    CHECK(back.dataplane.segment_name(1, 7) == "/miniio-abc-1-7");

    codecs::PayloadHeader h{40, CodecSpec{Codec::Zstd, 3, true}, 4};
    net::Frame f;
    f.type = tag(MsgType::Data);
    f.payload = data_prefix(h);
    const std::vector<std::byte> body{std::byte{1}, std::byte{2}, std::byte{3}};
    f.payload.insert(f.payload.end(), body.begin(), body.end());
    const auto p = parse_data(f);
    CHECK(p.header == h);
    CHECK(p.body == body);

    f.payload.resize(2);
    CHECK_THROWS_AS(parse_data(f), ProtocolError);
    CHECK_THROWS_AS(HelloR::parse("{"), ProtocolError);
}

TEST_CASE("staging handshake, ordered steps and end-of-stream")
{
    const auto defs = two_vars({6, 5});
    auto p = stage_params();
    std::map<std::uint64_t, StepData> got;
    std::vector<VariableDef> seen_defs;
    int seen_world = 0;
    stage_run(
        2, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            for (std::uint64_t t = 0; t < 4; ++t)
            {
                put_step(w, c, defs, t);
                const auto rep = w.end_step();
                CHECK_FALSE(rep.skipped);
            }
            w.close();
        },
        {[&](const std::string &ep) {
            StageReader r(ep);
            seen_defs = r.variables();
            seen_world = r.world_size();
            got = drain_stream(r);
            CHECK(r.ended());
        }});
    CHECK(seen_defs == defs);
    CHECK(seen_world == 2);
    REQUIRE(got.size() == 4);
    std::uint64_t expect = 0;
    for (const auto &[t, vars] : got)
        CHECK(t == expect++);
    check_oracle(got, defs);
}

TEST_CASE("staging close after step 1 yields 0, 1, end")
{
    const auto defs = two_vars({4, 4});
    auto p = stage_params();
    std::vector<std::uint64_t> steps;
    bool ended = false;
    stage_run(
        1, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            for (std::uint64_t t = 0; t < 2; ++t)
            {
                put_step(w, c, defs, t);
                w.end_step();
            }
            w.close();
        },
        {[&](const std::string &ep) {
            StageReader r(ep);
            while (auto idx = r.begin_step(milliseconds(10000)))
            {
                steps.push_back(idx->step);
                r.end_step();
            }
            ended = r.ended();
            CHECK_FALSE(r.begin_step(milliseconds(10)).has_value());
        }});
    CHECK(steps == std::vector<std::uint64_t>{0, 1});
    CHECK(ended);
}

TEST_CASE("staging shm and tcp dataplanes deliver identical bytes")
{
    const auto defs = two_vars({9, 7});
    std::map<Dataplane, std::map<std::uint64_t, StepData>> got;
    const auto before = shm_entries();
    for (const auto dp : {Dataplane::Tcp, Dataplane::Shm})
    {
        auto p = stage_params();
        p.dataplane = dp;
        p.codec = CodecSpec{Codec::Zstd, 3, true};
        Dataplane negotiated = Dataplane::Tcp;
        stage_run(
            3, p,
            [&](net::Comm &c) {
                StageWriter w(p, defs, c);
                for (std::uint64_t t = 0; t < 3; ++t)
                {
                    put_step(w, c, defs, t);
                    w.end_step();
                }
                w.close();
            },
            {[&](const std::string &ep) {
                StageReader r(ep);
                negotiated = r.dataplane();
                got[dp] = drain_stream(r);
            }});
        CHECK(negotiated == dp);
    }
    REQUIRE(got[Dataplane::Tcp].size() == 3);
    CHECK(got[Dataplane::Tcp] == got[Dataplane::Shm]);
    check_oracle(got[Dataplane::Shm], defs);
    CHECK(shm_entries() == before);
}

TEST_CASE("staging read equals container read of the same inputs")
{
    const auto defs = two_vars({8, 6});
    TempDir tmp("stage");
    EngineParams fp;
    fp.pfs_dir = tmp / "pfs";
    fp.codec = CodecSpec{Codec::LZ4, 1, true};
    run_ranks(4, 2, [&](net::Comm &c) {
        container::Writer w("eq", fp, defs, c);
        for (std::uint64_t t = 0; t < 3; ++t)
        {
            for (std::size_t v = 0; v < defs.size(); ++v)
            {
                const auto sel = row_split(defs[v], c.rank(), c.world_size());
                w.put(defs[v].name, t, sel, patch(defs[v], v, t, sel));
            }
            w.end_step();
        }
        w.close();
    });
    const container::Reader file(tmp / "pfs" / "eq.mbp");

    auto p = stage_params();
    p.codec = fp.codec;
    std::map<std::uint64_t, StepData> got;
    stage_run(
        4, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            for (std::uint64_t t = 0; t < 3; ++t)
            {
                put_step(w, c, defs, t);
                w.end_step();
            }
            w.close();
        },
        {[&](const std::string &ep) {
            StageReader r(ep);
            got = drain_stream(r);
        }});
    REQUIRE(got.size() == 3);
    for (const auto &[t, vars] : got)
        for (const auto &def : defs)
            CHECK(vars.at(def.name) == file.read(def.name, t));
}

TEST_CASE("staging partial selections straddle rank blocks")
{
    const auto defs = two_vars({10, 4});
    auto p = stage_params();
    stage_run(
        3, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            put_step(w, c, defs, 0);
            w.end_step();
            w.close();
        },
        {[&](const std::string &ep) {
            StageReader r(ep);
            auto idx = r.begin_step(milliseconds(10000));
            REQUIRE(idx);
            const Selection sel{{2, 1}, {6, 2}};
            CHECK(r.get("U", sel) == patch(defs[1], 1, 0, sel));
            CHECK_THROWS_AS(r.get("U", Selection{{9, 0}, {2, 4}}), ShapeError);
            r.end_step();
            CHECK_FALSE(r.begin_step(milliseconds(10000)));
        }});
}

TEST_CASE("staging get for an unannounced variable or after release is a protocol error")
{
    const auto defs = two_vars({4, 4});
    auto p = stage_params();
    stage_run(
        2, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            // only T is put, so U is never announced
            const auto sel = row_split(defs[0], c.rank(), c.world_size());
            w.put("T", 0, sel, patch(defs[0], 0, 0, sel));
            w.end_step();
            w.close();
        },
        {[&](const std::string &ep) {
            StageReader r(ep);
            REQUIRE(r.begin_step(milliseconds(10000)));
            CHECK(r.get("T") == whole(defs[0], 0, 0));
            CHECK_THROWS_AS(r.get("U"), ProtocolError);
            CHECK_THROWS_AS(r.get("NOPE"), IndexError);
            CHECK_THROWS_AS(r.begin_step(milliseconds(10)), ProtocolError);
            r.end_step();
            CHECK_THROWS_AS(r.get("T"), ProtocolError);
            CHECK_THROWS_AS(r.end_step(), ProtocolError);
            CHECK_FALSE(r.begin_step(milliseconds(10000)));
        }});
}

TEST_CASE("staging writer rejects a GET for a released step")
{
    const auto defs = two_vars({4, 4});
    auto p = stage_params(0);
    run_ranks(1, 1, [&](net::Comm &c) {
        StageWriter w(p, defs, c);
        // drive the protocol by hand, as a foreign reader would
        auto ctl = net::Socket::connect(w.control_endpoint());
        HelloR hello;
        hello.host = local_host();
        ctl.send_frame(tag(MsgType::HelloR), hello.dump());
        const auto hw = HelloW::parse(ctl.recv_frame(milliseconds(5000))->text());
        auto data = net::Socket::connect(hw.dataplane.endpoints.at(0));
        HelloR dh = hello;
        dh.role = "data";
        dh.reader_id = hw.reader_id;
        data.send_frame(tag(MsgType::HelloR), dh.dump());
        dh.role = "ready";
        ctl.send_frame(tag(MsgType::HelloR), dh.dump());
        for (int i = 0; i < 200 && w.readers() == 0; ++i)
            std::this_thread::sleep_for(milliseconds(5));
        REQUIRE(w.readers() == 1);

        put_step(w, c, defs, 0);
        w.end_step();
        const auto ann = ctl.recv_frame(milliseconds(5000));
        REQUIRE(ann);
        CHECK(ann->type == tag(MsgType::StepAnnounce));
        CHECK(index_parse(ann->text()).step == 0);

        data.send_frame(tag(MsgType::GetReq), GetReq{0, "T", 0}.dump());
        const auto ok = data.recv_frame(milliseconds(5000));
        REQUIRE(ok);
        CHECK(ok->type == tag(MsgType::Data));

        data.send_frame(tag(MsgType::StepRelease), release_payload(0));
        data.send_frame(tag(MsgType::GetReq), GetReq{0, "T", 0}.dump());
        const auto err = data.recv_frame(milliseconds(5000));
        REQUIRE(err);
        CHECK(err->type == tag(MsgType::Err));
        CHECK(w.stats().held_steps == 0);
        data.close();
        ctl.close();
        w.close();
    });
}

TEST_CASE("staging version-mismatched hello gets ERR then close")
{
    const auto defs = two_vars({4, 4});
    auto p = stage_params(0);
    run_ranks(1, 1, [&](net::Comm &c) {
        StageWriter w(p, defs, c);
        auto sock = net::Socket::connect(w.control_endpoint());
        HelloR hello;
        hello.version = 2;
        sock.send_frame(tag(MsgType::HelloR), hello.dump());
        const auto f = sock.recv_frame(milliseconds(5000));
        REQUIRE(f);
        CHECK(f->type == tag(MsgType::Err));
        CHECK(parse_err(f->text()).find("version 2") != std::string::npos);
        CHECK_FALSE(sock.recv_frame(milliseconds(5000)).has_value());
        CHECK(w.readers() == 0);
        w.close();
    });
}

TEST_CASE("staging queue_limit=1 block stalls behind a slow reader")
{
    const auto defs = two_vars({16, 16});
    auto p = stage_params();
    p.queue_limit = 1;
    p.queue_full_policy = QueueFullPolicy::Block;
    std::vector<StepReport> reps;
    std::size_t max_held = 0;
    stage_run(
        1, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            for (std::uint64_t t = 0; t < 4; ++t)
            {
                put_step(w, c, defs, t);
                reps.push_back(w.end_step());
            }
            max_held = w.stats().max_unreleased;
            w.close();
        },
        {[&](const std::string &ep) {
            StageReader r(ep);
            const auto got = drain_stream(r, milliseconds(120));
            CHECK(got.size() == 4);
        }});
    REQUIRE(reps.size() == 4);
    for (std::size_t i = 1; i < reps.size(); ++i)
        CHECK(reps[i].perceived_write_seconds >= 0.110);
    CHECK(max_held == 1);
}

TEST_CASE("staging queue_limit=0 never blocks on a slow reader")
{
    const auto defs = two_vars({16, 16});
    auto p = stage_params();
    p.queue_limit = 0;
    std::vector<StepReport> reps;
    stage_run(
        1, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            for (std::uint64_t t = 0; t < 4; ++t)
            {
                put_step(w, c, defs, t);
                reps.push_back(w.end_step());
            }
            w.close();
        },
        {[&](const std::string &ep) {
            StageReader r(ep);
            const auto got = drain_stream(r, milliseconds(120));
            CHECK(got.size() == 4);
            check_oracle(got, defs);
        }});
    for (const auto &rep : reps)
        CHECK(rep.perceived_write_seconds < 0.010);
}

TEST_CASE("staging discard policy drops incoming steps instead of stalling")
{
    const auto defs = two_vars({16, 16});
    auto p = stage_params();
    p.queue_limit = 1;
    p.queue_full_policy = QueueFullPolicy::Discard;
    std::vector<StepReport> reps;
    std::vector<std::uint64_t> seen;
    StageStats stats;
    stage_run(
        2, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            for (std::uint64_t t = 0; t < 5; ++t)
            {
                put_step(w, c, defs, t);
                const auto rep = w.end_step();
                if (c.rank() == 0)
                    reps.push_back(rep);
            }
            if (c.rank() == 0)
                stats = w.stats();
            w.close();
        },
        {[&](const std::string &ep) {
            StageReader r(ep);
            while (auto idx = r.begin_step(milliseconds(10000)))
            {
                seen.push_back(idx->step);
                for (const auto &def : r.variables())
                    CHECK(r.get(def.name) ==
                          whole(def, def.name == "T" ? 0 : 1, idx->step));
                std::this_thread::sleep_for(milliseconds(120));
                r.end_step();
            }
        }});
    REQUIRE(reps.size() == 5);
    std::vector<std::uint64_t> kept;
    for (const auto &rep : reps)
    {
        CHECK(rep.perceived_write_seconds < 0.050);
        if (!rep.skipped)
            kept.push_back(rep.step);
    }
    CHECK(kept.size() < 5);
    CHECK(stats.steps_skipped == 5 - kept.size());
    // skipped steps never show up at the reader
    CHECK(seen == kept);
}

TEST_CASE("staging queue-limit law holds on every rank with two readers")
{
    const auto defs = two_vars({12, 8});
    auto p = stage_params(2);
    p.queue_limit = 2;
    std::vector<std::size_t> max_held(3);
    std::map<std::uint64_t, StepData> a, b;
    stage_run(
        3, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            for (std::uint64_t t = 0; t < 12; ++t)
            {
                put_step(w, c, defs, t);
                w.end_step();
            }
            max_held[static_cast<std::size_t>(c.rank())] = w.stats().max_unreleased;
            w.close();
        },
        {[&](const std::string &ep) {
             StageReader r(ep);
             a = drain_stream(r, milliseconds(7));
         },
         [&](const std::string &ep) {
             StageReader r(ep);
             b = drain_stream(r, milliseconds(19));
         }});
    for (const auto m : max_held)
    {
        CHECK(m <= 2);
        CHECK(m >= 1);
    }
    CHECK(a.size() == 12);
    CHECK(a == b);
    check_oracle(a, defs);
}

TEST_CASE("staging second reader joining later gets subsequent steps")
{
    const auto defs = two_vars({4, 4});
    auto p = stage_params(1);
    std::vector<std::uint64_t> first, second;
    std::atomic<bool> first_done_2{false};
    stage_run(
        1, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            for (std::uint64_t t = 0; t < 6; ++t)
            {
                if (t == 3)
                {
                    for (int i = 0; i < 2000 && w.readers() < 2; ++i)
                        std::this_thread::sleep_for(milliseconds(2));
                    CHECK(w.readers() == 2);
                }
                put_step(w, c, defs, t);
                w.end_step();
            }
            w.close();
        },
        {[&](const std::string &ep) {
             StageReader r(ep);
             while (auto idx = r.begin_step(milliseconds(10000)))
             {
                 first.push_back(idx->step);
                 CHECK(r.get("T") == whole(defs[0], 0, idx->step));
                 r.end_step();
                 if (idx->step == 2)
                 {
                     first_done_2 = true;
                     first_done_2.notify_all();
                 }
             }
         },
         [&](const std::string &ep) {
             // join once steps 0..2 are already consumed
             first_done_2.wait(false);
             StageReader r(ep);
             while (auto idx = r.begin_step(milliseconds(10000)))
             {
                 second.push_back(idx->step);
                 CHECK(r.get("U") == whole(defs[1], 1, idx->step));
                 r.end_step();
             }
         }});
    CHECK(first == std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5});
    CHECK(second == std::vector<std::uint64_t>{3, 4, 5});
}

TEST_CASE("staging releases leave no step behind over 100 steps")
{
    const auto defs = two_vars({8, 8});
    for (const auto dp : {Dataplane::Tcp, Dataplane::Shm})
    {
        auto p = stage_params();
        p.dataplane = dp;
        p.queue_limit = 3;
        const auto before = shm_entries();
        StageStats end_stats, after_close;
        std::size_t mid_shm = 0;
        stage_run(
            2, p,
            [&](net::Comm &c) {
                StageWriter w(p, defs, c);
                for (std::uint64_t t = 0; t < 100; ++t)
                {
                    put_step(w, c, defs, t);
                    w.end_step();
                }
                // the reader releases the last steps shortly after
                for (int i = 0; i < 1000 && w.stats().held_steps > 0; ++i)
                    std::this_thread::sleep_for(milliseconds(2));
                c.barrier();
                if (c.rank() == 0)
                {
                    end_stats = w.stats();
                    mid_shm = shm_entries();
                }
                c.barrier();
                w.close();
                if (c.rank() == 0)
                    after_close = w.stats();
            },
            {[&](const std::string &ep) {
                StageReader r(ep);
                CHECK(drain_stream(r).size() == 100);
            }});
        CHECK(end_stats.held_steps == 0);
        CHECK(end_stats.held_bytes == 0);
        CHECK(end_stats.steps_announced == 100);
        CHECK(end_stats.max_unreleased <= 3);
        CHECK(after_close.held_steps == 0);
        CHECK(mid_shm == before);
        CHECK(shm_entries() == before);
    }
}

TEST_CASE("staging block policy with no reader stalls after the step timeout")
{
    const auto defs = two_vars({4, 4});
    auto p = stage_params(0);
    p.step_timeout_ms = 200;
    run_ranks(2, 2, [&](net::Comm &c) {
        StageWriter w(p, defs, c);
        put_step(w, c, defs, 0);
        const auto t0 = Clock::now();
        CHECK_THROWS_AS(w.end_step(), StallError);
        if (c.rank() == 0)
            CHECK(Clock::now() - t0 >= milliseconds(200));
        w.close();
    });
}

TEST_CASE("staging rendezvous timeout and bind failure")
{
    const auto defs = two_vars({4, 4});
    auto p = stage_params(1);
    p.step_timeout_ms = 100;
    CHECK_THROWS_AS(run_ranks(2, 2, [&](net::Comm &c) { StageWriter w(p, defs, c); }),
                    TimeoutError);

    auto busy = net::Listener::bind({"127.0.0.1", 0});
    p.control_endpoint = busy.endpoint().str();
    p.rendezvous_readers = 0;
    std::atomic<int> failures{0};
    run_ranks(2, 2, [&](net::Comm &c) {
        try
        {
            StageWriter w(p, defs, c);
        }
        catch (const OpenError &)
        {
            ++failures;
        }
    });
    CHECK(failures == 2);
}

TEST_CASE("staging reader times out when nothing is announced")
{
    const auto defs = two_vars({4, 4});
    auto p = stage_params();
    stage_run(
        1, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            std::this_thread::sleep_for(milliseconds(150));
            w.close();
        },
        {[&](const std::string &ep) {
            StageReader r(ep);
            CHECK_THROWS_AS(r.begin_step(milliseconds(30)), TimeoutError);
            CHECK_FALSE(r.begin_step(milliseconds(10000)));
        }});
}

TEST_CASE("staging endpoint comes from MINIIO_ENDPOINT when set")
{
    const auto defs = two_vars({4, 4});
    auto p = stage_params();
    const auto real = p.control_endpoint;
    p.control_endpoint = "127.0.0.1:1";
    ::setenv("MINIIO_ENDPOINT", real.c_str(), 1);
    std::size_t steps = 0;
    stage_run(
        1, p,
        [&](net::Comm &c) {
            StageWriter w(p, defs, c);
            CHECK(w.control_endpoint().str() == real);
            put_step(w, c, defs, 0);
            w.end_step();
            w.close();
        },
        {[&](const std::string &) {
            StageReader r("127.0.0.1:1");
            steps = drain_stream(r).size();
        }});
    ::unsetenv("MINIIO_ENDPOINT");
    CHECK(steps == 1);
}

TEST_CASE("dataplane bench emits two correct rows per size")
{
    const auto rows = dataplane_bench({0, 1u << 20}, 100);
    REQUIRE(rows.size() == 4);
    for (const auto &r : rows)
    {
        CHECK(r.ok);
        CHECK(r.blocks == 100);
        CHECK(r.mean_latency_us > 0.0);
    }
    CHECK(rows[0].payload_bytes == 0);
    CHECK(rows[0].throughput_mib_s == 0.0);
    CHECK(rows[1].dataplane == Dataplane::Shm);
    CHECK(rows[2].throughput_mib_s > 0.0);

    const auto csv = dataplane_csv(rows);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "dataplane,payload_bytes,blocks,mean_latency_us,throughput_mib_s,ok");
    int n = 0;
    while (std::getline(in, line))
        ++n;
    CHECK(n == 4);
    CHECK(shm_not_slower(rows).size() == 2);
}
