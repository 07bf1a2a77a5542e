/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * rank_group.hpp : runs a function on N in-process ranks joined by Comm
 */

#ifndef MINIIO_TESTS_RANK_GROUP_HPP
#define MINIIO_TESTS_RANK_GROUP_HPP

#include "miniio/net/comm.hpp"

#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace miniio::testing
{

inline void run_ranks(int world, int ranks_per_node, const std::function<void(net::Comm &)> &fn,
                      std::uint32_t latency_us = 0)
{
    std::vector<net::Listener> listeners;
    std::vector<net::Endpoint> eps;
    for (int r = 0; r < world; ++r)
    {
        listeners.push_back(net::Listener::bind({"127.0.0.1", 0}));
        eps.push_back(listeners.back().endpoint());
    }
    std::vector<std::unique_ptr<net::Comm>> comms;
    for (int r = 0; r < world; ++r)
        comms.push_back(std::make_unique<net::Comm>(net::Topology{r, world, ranks_per_node},
                                                    std::move(listeners[r]), eps, latency_us));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(world));
    std::vector<std::thread> threads;
    for (int r = 0; r < world; ++r)
        threads.emplace_back([&, r] {
            try
            {
                fn(*comms[r]);
            }
            catch (...)
            {
                errors[r] = std::current_exception();
            }
        });
    for (auto &t : threads)
        t.join();
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
    explicit TempDir(const std::string &tag = "miniio")
    {
        std::random_device rd;
        m_Path = std::filesystem::temp_directory_path() /
                 (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(m_Path);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(m_Path, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;
    const std::filesystem::path &path() const noexcept { return m_Path; }
    std::filesystem::path operator/(const std::string &s) const { return m_Path / s; }

private:
    std::filesystem::path m_Path;
};

} // end namespace miniio::testing

#endif // MINIIO_TESTS_RANK_GROUP_HPP
