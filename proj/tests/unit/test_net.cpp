/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "doctest.h"
#include "rank_group.hpp"

#include "miniio/core/error.hpp"
#include "miniio/net/socket.hpp"

#include <atomic>
#include <chrono>

using namespace miniio;
using namespace std::chrono_literals;

TEST_CASE("endpoint parsing")
{
    const auto ep = net::Endpoint::parse("localhost:4000");
    CHECK(ep.host == "localhost");
    CHECK(ep.port == 4000);
    CHECK(ep.str() == "localhost:4000");
    CHECK_THROWS_AS(net::Endpoint::parse("nohost"), ConfigError);
    CHECK_THROWS_AS(net::Endpoint::parse("h:99999"), ConfigError);
    CHECK_THROWS_AS(net::Endpoint::parse("h:x1"), ConfigError);
}

TEST_CASE("frames round trip over a socket")
{
    auto listener = net::Listener::bind({"127.0.0.1", 0});
    std::thread client([ep = listener.endpoint()] {
        auto s = net::Socket::connect(ep);
        s.send_frame(3, std::string_view("hello"));
        const std::vector<std::byte> pre{std::byte{1}, std::byte{2}};
        const std::vector<std::byte> body(100000, std::byte{7});
        s.send_frame(5, pre, body);
        s.send_frame(7, std::span<const std::byte>{});
    });
    auto s = listener.accept();
    auto f = s.recv_frame();
    REQUIRE(f);
    CHECK(f->type == 3);
    CHECK(f->text() == "hello");
    f = s.recv_frame();
    REQUIRE(f);
    CHECK(f->type == 5);
    REQUIRE(f->payload.size() == 100002);
    CHECK(f->payload[1] == std::byte{2});
    CHECK(f->payload[100001] == std::byte{7});
    f = s.recv_frame();
    REQUIRE(f);
    CHECK(f->type == 7);
    CHECK(f->payload.empty());
    client.join();
    CHECK_FALSE(s.recv_frame().has_value());
}

TEST_CASE("frame wire layout is u32le length, u8 type, payload")
{
    auto listener = net::Listener::bind({"127.0.0.1", 0});
    std::thread client([ep = listener.endpoint()] {
        auto s = net::Socket::connect(ep);
        s.send_frame(4, std::string_view("abc"));
    });
    auto s = listener.accept();
    std::byte raw[8];
    REQUIRE(s.recv_all(raw));
    CHECK(net::get_u32le(raw) == 3);
    CHECK(raw[4] == std::byte{4});
    CHECK(raw[5] == std::byte{'a'});
    CHECK(raw[7] == std::byte{'c'});
    client.join();
}

TEST_CASE("truncated frame is a protocol error; silence is a timeout")
{
    auto listener = net::Listener::bind({"127.0.0.1", 0});
    std::atomic<bool> sent{false};
    std::thread client([ep = listener.endpoint(), &sent] {
        auto s = net::Socket::connect(ep);
        std::this_thread::sleep_for(150ms);
        std::byte partial[6] = {};
        net::put_u32le(partial, 10);
        s.send_all(partial);
        sent = true;
    });
    auto s = listener.accept();
    CHECK_THROWS_AS(s.recv_frame(50ms), TimeoutError);
    client.join();
    CHECK_THROWS_AS(s.recv_frame(), ProtocolError);
}

TEST_CASE("comm point to point, self send, barrier")
{
    testing::run_ranks(4, 2, [](net::Comm &c) {
        const int me = c.rank();
        const int next = (me + 1) % c.world_size();
        const int prev = (me + c.world_size() - 1) % c.world_size();
        c.send(next, 9, "from " + std::to_string(me));
        c.send(me, 8, "self");
        const auto f = c.expect(prev, 9);
        if (f.text() != "from " + std::to_string(prev))
            throw Error("wrong payload");
        if (c.expect(me, 8).text() != "self")
            throw Error("wrong self payload");
        for (int i = 0; i < 3; ++i)
            c.barrier();
    });
}

TEST_CASE("comm injects latency only across node boundaries")
{
    std::atomic<std::uint64_t> delayed_r0{0}, delayed_r1{0};
    const auto t0 = std::chrono::steady_clock::now();
    testing::run_ranks(
        4, 2,
        [&](net::Comm &c) {
            if (c.rank() == 0)
            {
                c.send(1, 9, "same node");
                c.send(2, 9, "other node");
                delayed_r0 = c.delayed_messages();
            }
            else if (c.rank() == 1)
            {
                c.expect(0, 9);
                delayed_r1 = c.delayed_messages();
            }
            else if (c.rank() == 2)
                c.expect(0, 9);
        },
        20000);
    const auto dt = std::chrono::steady_clock::now() - t0;
    CHECK(delayed_r0 == 1);
    CHECK(delayed_r1 == 0);
    CHECK(dt >= 20ms);
}

TEST_CASE("comm receive timeout and wrong tag")
{
    testing::run_ranks(2, 2, [](net::Comm &c) {
        if (c.rank() == 0)
        {
            bool timed_out = false;
            try
            {
                c.recv(1, 50ms);
            }
            catch (const TimeoutError &)
            {
                timed_out = true;
            }
            c.send(1, 1, "go");
            if (!timed_out)
                throw Error("expected a timeout");
            bool wrong = false;
            try
            {
                c.expect(1, 3);
            }
            catch (const ProtocolError &)
            {
                wrong = true;
            }
            if (!wrong)
                throw Error("expected a tag mismatch");
        }
        else
        {
            c.expect(0, 1);
            c.send(0, 4, "x");
        }
    });
}
