#include "lsoc/network.hpp"

#include <algorithm>
#include <queue>
#include <string>

namespace lsoc::network {

Graph::Graph(int n_agents, std::vector<std::pair<int, int>> edges)
    : n_agents_(n_agents), edges_(std::move(edges)), adjacency_(static_cast<std::size_t>(n_agents)) {
    for (const auto& [a, b] : edges_) {
        adjacency_[static_cast<std::size_t>(a)].push_back(b);
        adjacency_[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
}

Graph build_graph(int n_agents, const std::vector<std::pair<int, int>>& edges) {
    if (n_agents <= 0) throw InvalidEdge("agent count must be positive");
    std::vector<std::pair<int, int>> normalized;
    normalized.reserve(edges.size());
    for (const auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n_agents || b >= n_agents)
            throw InvalidEdge("edge (" + std::to_string(a) + "," + std::to_string(b) +
                              ") out of range for " + std::to_string(n_agents) + " agents");
        if (a == b)
            throw InvalidEdge("self-loop at agent " + std::to_string(a));
        normalized.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(normalized.begin(), normalized.end());
    normalized.erase(std::unique(normalized.begin(), normalized.end()), normalized.end());

    // connectivity check up front so solvers can assume it
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_agents));
    for (const auto& [a, b] : normalized) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    std::vector<char> seen(static_cast<std::size_t>(n_agents), 0);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!frontier.empty()) {
        const int v = frontier.front();
        frontier.pop();
        for (int w : adj[static_cast<std::size_t>(v)]) {
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = 1;
                ++reached;
                frontier.push(w);
            }
        }
    }
    if (reached != n_agents)
        throw DisconnectedGraph("graph is disconnected: reached " + std::to_string(reached) +
                                " of " + std::to_string(n_agents) + " agents");
    return Graph(n_agents, std::move(normalized));
}

Subsystem factorial_subsystem(const Graph& g, int agent) {
    if (agent < 0 || agent >= g.n_agents())
        throw InvalidEdge("agent index " + std::to_string(agent) + " out of range");
    Subsystem s;
    s.center = agent;
    s.members.push_back(agent);
    const auto& nbrs = g.neighbors(agent);   // already ascending
    s.members.insert(s.members.end(), nbrs.begin(), nbrs.end());
    return s;
}

Graph make_topology(Topology family, int n_agents) {
    std::vector<std::pair<int, int>> edges;
    switch (family) {
    case Topology::line:
        for (int i = 0; i + 1 < n_agents; ++i) edges.emplace_back(i, i + 1);
        break;
    case Topology::ring:
        for (int i = 0; i + 1 < n_agents; ++i) edges.emplace_back(i, i + 1);
        if (n_agents > 2) edges.emplace_back(n_agents - 1, 0);
        break;
    case Topology::binary_tree:
        for (int i = 0; i < n_agents; ++i) {
            if (2 * i + 1 < n_agents) edges.emplace_back(i, 2 * i + 1);
            if (2 * i + 2 < n_agents) edges.emplace_back(i, 2 * i + 2);
        }
        break;
    case Topology::full:
        for (int i = 0; i < n_agents; ++i)
            for (int j = i + 1; j < n_agents; ++j) edges.emplace_back(i, j);
        break;
    }
    return build_graph(n_agents, edges);
}

} // namespace lsoc::network
