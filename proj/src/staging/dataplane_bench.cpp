/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/staging/dataplane_bench.hpp"
#include "miniio/core/error.hpp"
#include "miniio/staging/protocol.hpp"
#include "miniio/staging/shm.hpp"

#include <chrono>
#include <cstring>
#include <map>
#include <sstream>
#include <thread>

#include <unistd.h>

namespace miniio::staging
{

namespace
{

using Clock = std::chrono::steady_clock;

std::vector<std::byte> pattern(std::uint64_t n, std::uint64_t salt)
{
    std::vector<std::byte> out(n);
    std::uint64_t x = 0x9e3779b97f4a7c15ull ^ salt;
    for (auto &b : out)
    {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        b = static_cast<std::byte>(x);
    }
    return out;
}

DataplaneRow finish(Dataplane dp, std::uint64_t size, std::uint64_t blocks, double total_s,
                    bool ok)
{
    DataplaneRow row;
    row.dataplane = dp;
    row.payload_bytes = size;
    row.blocks = blocks;
    row.ok = ok;
    if (blocks > 0)
        row.mean_latency_us = total_s / static_cast<double>(blocks) * 1e6;
    if (size > 0 && total_s > 0.0)
        row.throughput_mib_s =
            static_cast<double>(size) * static_cast<double>(blocks) / total_s / (1024.0 * 1024.0);
    return row;
}

DataplaneRow bench_tcp(std::uint64_t size, std::uint64_t blocks, const std::string &host)
{
    const auto payload = pattern(size, size);
    auto listener = net::Listener::bind({host, 0});
    const auto ep = listener.endpoint();
    std::thread server([&] {
        try
        {
            auto sock = listener.accept();
            codecs::PayloadHeader h;
            h.raw_nbytes = size;
            const auto prefix = data_prefix(h);
            while (auto f = sock.recv_frame())
            {
                if (f->type != tag(MsgType::GetReq))
                    break;
                sock.send_frame(tag(MsgType::Data), prefix, payload);
            }
        }
        catch (const Error &)
        {
        }
    });

    bool ok = true;
    double total = 0.0;
    try
    {
        auto sock = net::Socket::connect(ep);
        for (std::uint64_t i = 0; i < blocks; ++i)
        {
            const auto t0 = Clock::now();
            sock.send_frame(tag(MsgType::GetReq), GetReq{i, "bench", 0}.dump());
            const auto f = sock.recv_frame();
            if (!f || f->type != tag(MsgType::Data))
            {
                ok = false;
                break;
            }
            const auto p = parse_data(*f);
            total += std::chrono::duration<double>(Clock::now() - t0).count();
            ok = ok && p.body == payload && p.header.raw_nbytes == size;
        }
        sock.close();
    }
    catch (const Error &)
    {
        ok = false;
    }
    server.join();
    return finish(Dataplane::Tcp, size, blocks, total, ok);
}

DataplaneRow bench_shm(std::uint64_t size, std::uint64_t blocks)
{
    const auto payload = pattern(size, size);
    const auto prefix = "/miniio-bench-" + std::to_string(::getpid()) + "-" + std::to_string(size);
    bool ok = true;
    double total = 0.0;
    try
    {
        std::vector<std::byte> copy(size);
        for (std::uint64_t i = 0; i < blocks; ++i)
        {
            // the writer fills the segment before announcing; only the
            // reader's map and copy sit on the fetch path
            const auto seg = ShmSegment::create(prefix + "-" + std::to_string(i), payload);
            const auto t0 = Clock::now();
            {
                const auto view = ShmSegment::open(seg.name());
                if (view.bytes().size() != size)
                    ok = false;
                else if (size > 0)
                    std::memcpy(copy.data(), view.bytes().data(), size);
            }
            total += std::chrono::duration<double>(Clock::now() - t0).count();
            ok = ok && copy == payload;
        }
    }
    catch (const Error &)
    {
        ok = false;
    }
    return finish(Dataplane::Shm, size, blocks, total, ok);
}

} // end anonymous namespace

std::vector<DataplaneRow> dataplane_bench(const std::vector<std::uint64_t> &sizes,
                                          std::uint64_t blocks, const std::string &host)
{
    std::vector<DataplaneRow> rows;
    for (const auto size : sizes)
    {
        rows.push_back(bench_tcp(size, blocks, host));
        rows.push_back(bench_shm(size, blocks));
    }
    return rows;
}

std::string dataplane_csv(const std::vector<DataplaneRow> &rows)
{
    std::ostringstream os;
    os << "dataplane,payload_bytes,blocks,mean_latency_us,throughput_mib_s,ok\n";
    for (const auto &r : rows)
        os << to_string(r.dataplane) << ',' << r.payload_bytes << ',' << r.blocks << ','
           << r.mean_latency_us << ',' << r.throughput_mib_s << ',' << (r.ok ? 1 : 0) << '\n';
    return os.str();
}

std::vector<std::pair<std::uint64_t, bool>> shm_not_slower(const std::vector<DataplaneRow> &rows)
{
    std::map<std::uint64_t, std::pair<double, double>> by_size;
    for (const auto &r : rows)
    {
        auto &slot = by_size[r.payload_bytes];
        (r.dataplane == Dataplane::Tcp ? slot.first : slot.second) =
            r.payload_bytes > 0 ? r.throughput_mib_s : -r.mean_latency_us;
    }
    std::vector<std::pair<std::uint64_t, bool>> out;
    for (const auto &[size, tp] : by_size)
        out.emplace_back(size, tp.second >= tp.first);
    return out;
}

} // end namespace miniio::staging
