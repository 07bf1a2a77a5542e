/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#ifndef MINIIO_CONTAINER_AGGREGATOR_MAP_HPP
#define MINIIO_CONTAINER_AGGREGATOR_MAP_HPP

#include <vector>

namespace miniio::container
{

struct AggregatorAssignment
{
    int aggregator_rank = 0;
    int subfile_id = 0;

    friend bool operator==(const AggregatorAssignment &,
                           const AggregatorAssignment &) = default;
};

/// Rank-to-aggregator grouping. Within each node, consecutive runs of
/// `aggregation_ratio` ranks share the lowest rank of the run as their
/// aggregator; the last run of a node is clamped at the node boundary.
struct AggregatorMap
{
    int world_size = 0;
    int ranks_per_node = 0;
    int aggregation_ratio = 0;
    std::vector<AggregatorAssignment> assignment;

    int num_subfiles() const noexcept;
    std::vector<int> aggregators() const;
    /// Ranks whose blocks are appended by the given aggregator, ascending.
    std::vector<int> members(int aggregator_rank) const;
    bool is_aggregator(int rank) const noexcept
    {
        return assignment[static_cast<std::size_t>(rank)].aggregator_rank == rank;
    }
};

/// Throws ConfigError unless world_size is a positive multiple of
/// ranks_per_node and 1 <= aggregation_ratio <= ranks_per_node.
AggregatorMap aggregator_map(int world_size, int ranks_per_node, int aggregation_ratio);

} // end namespace miniio::container

#endif // MINIIO_CONTAINER_AGGREGATOR_MAP_HPP
