/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/container/aggregator_map.hpp"
#include "miniio/core/error.hpp"

#include <algorithm>
#include <string>

namespace miniio::container
{

AggregatorMap aggregator_map(int world_size, int ranks_per_node, int aggregation_ratio)
{
    if (world_size <= 0 || ranks_per_node <= 0)
        throw ConfigError("world_size and ranks_per_node must be positive");
    if (world_size % ranks_per_node != 0)
        throw ConfigError("world_size " + std::to_string(world_size) +
                          " is not a multiple of ranks_per_node " +
                          std::to_string(ranks_per_node));
    if (aggregation_ratio < 1 || aggregation_ratio > ranks_per_node)
        throw ConfigError("aggregation_ratio " + std::to_string(aggregation_ratio) +
                          " outside [1, " + std::to_string(ranks_per_node) + "]");

    AggregatorMap m;
    m.world_size = world_size;
    m.ranks_per_node = ranks_per_node;
    m.aggregation_ratio = aggregation_ratio;
    m.assignment.resize(static_cast<std::size_t>(world_size));

    int next_subfile = 0;
    for (int node_base = 0; node_base < world_size; node_base += ranks_per_node)
    {
        for (int local = 0; local < ranks_per_node; local += aggregation_ratio)
        {
            const int agg = node_base + local;
            const int end = node_base + std::min(local + aggregation_ratio, ranks_per_node);
            for (int r = agg; r < end; ++r)
                m.assignment[static_cast<std::size_t>(r)] = {agg, next_subfile};
            ++next_subfile;
        }
    }
    return m;
}

int AggregatorMap::num_subfiles() const noexcept
{
    return assignment.empty() ? 0 : assignment.back().subfile_id + 1;
}

std::vector<int> AggregatorMap::aggregators() const
{
    std::vector<int> out;
    for (int r = 0; r < world_size; ++r)
        if (is_aggregator(r))
            out.push_back(r);
    return out;
}

std::vector<int> AggregatorMap::members(int aggregator_rank) const
{
    std::vector<int> out;
    for (int r = 0; r < world_size; ++r)
        if (assignment[static_cast<std::size_t>(r)].aggregator_rank == aggregator_rank)
            out.push_back(r);
    return out;
}

} // end namespace miniio::container
