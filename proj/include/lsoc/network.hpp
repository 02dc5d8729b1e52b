#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lsoc/errors.hpp"

namespace lsoc::network {

/// Undirected, connected communication graph over agents 0..n_agents-1.
/// Immutable after construction; safe to share across solver tasks.
class Graph {
public:
    Graph(int n_agents, std::vector<std::pair<int, int>> edges);

    int n_agents() const noexcept { return n_agents_; }
    const std::vector<std::pair<int, int>>& edges() const noexcept { return edges_; }
    /// Neighbor indices of agent i, ascending.
    const std::vector<int>& neighbors(int i) const { return adjacency_.at(i); }
    int degree(int i) const { return static_cast<int>(adjacency_.at(i).size()); }

private:
    int n_agents_ = 0;
    std::vector<std::pair<int, int>> edges_;           // normalized (lo, hi), sorted, unique
    std::vector<std::vector<int>> adjacency_;
};

/// Agent i together with its graph neighbors; members are ordered
/// (center, then neighbors ascending) so joint state/control vector
/// layouts are deterministic across modules.
struct Subsystem {
    int center = 0;
    std::vector<int> members;

    int size() const noexcept { return static_cast<int>(members.size()); }
    /// Position of agent `a` in the member ordering, -1 if absent.
    int member_index(int a) const {
        for (std::size_t k = 0; k < members.size(); ++k)
            if (members[k] == a) return static_cast<int>(k);
        return -1;
    }
};

/// Validates indices, normalizes/deduplicates edges and checks connectivity.
Graph build_graph(int n_agents, const std::vector<std::pair<int, int>>& edges);

Subsystem factorial_subsystem(const Graph& g, int agent);

enum class Topology { line, ring, binary_tree, full };

/// Named topology families used by the complexity comparison.
Graph make_topology(Topology family, int n_agents);

} // namespace lsoc::network
