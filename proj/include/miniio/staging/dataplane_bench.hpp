/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * dataplane_bench.hpp : bulk-transfer micro benchmark of both dataplanes
 */

#ifndef MINIIO_STAGING_DATAPLANE_BENCH_HPP
#define MINIIO_STAGING_DATAPLANE_BENCH_HPP

#include "miniio/core/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace miniio::staging
{

struct DataplaneRow
{
    Dataplane dataplane = Dataplane::Tcp;
    std::uint64_t payload_bytes = 0;
    std::uint64_t blocks = 0;
    double mean_latency_us = 0.0;
    /// MiB/s; zero for zero-length payloads.
    double throughput_mib_s = 0.0;
    /// Every fetched payload matched what was served.
    bool ok = false;
};

/// For every size, moves `blocks` payloads from a serving thread to the
/// caller over each dataplane and times the reader side. Two rows per size.
std::vector<DataplaneRow> dataplane_bench(const std::vector<std::uint64_t> &sizes,
                                          std::uint64_t blocks,
                                          const std::string &host = "127.0.0.1");

std::string dataplane_csv(const std::vector<DataplaneRow> &rows);

/// Per size, whether shm throughput was at least tcp's. Reported only.
std::vector<std::pair<std::uint64_t, bool>> shm_not_slower(const std::vector<DataplaneRow> &rows);

} // end namespace miniio::staging

#endif // MINIIO_STAGING_DATAPLANE_BENCH_HPP
