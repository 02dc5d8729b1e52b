#include <doctest.h>

#include "lsoc/network.hpp"

using namespace lsoc;
using namespace lsoc::network;

TEST_SUITE("network") {

TEST_CASE("smallest connected graph") {
    const Graph g = build_graph(2, {{0, 1}});
    CHECK(g.n_agents() == 2);
    CHECK(g.edges().size() == 1);
    CHECK(g.degree(0) == 1);
}

TEST_CASE("triangle of the three-vehicle team") {
    const Graph g = build_graph(3, {{0, 1}, {1, 2}, {0, 2}});
    CHECK(g.edges().size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(g.degree(i) == 2);
}

TEST_CASE("disconnected graph is rejected") {
    CHECK_THROWS_AS(build_graph(3, {{0, 1}}), DisconnectedGraph);
}

TEST_CASE("invalid edges are rejected") {
    CHECK_THROWS_AS(build_graph(2, {{0, 0}, {0, 1}}), InvalidEdge);
    CHECK_THROWS_AS(build_graph(2, {{0, 2}}), InvalidEdge);
    CHECK_THROWS_AS(build_graph(2, {{-1, 1}}), InvalidEdge);
}

TEST_CASE("edges normalize and deduplicate") {
    const Graph g = build_graph(3, {{1, 0}, {0, 1}, {2, 1}});
    CHECK(g.edges().size() == 2);
    CHECK(g.edges()[0] == std::pair<int, int>(0, 1));
}

TEST_CASE("factorial subsystem ordering") {
    const Graph triangle = build_graph(3, {{0, 1}, {1, 2}, {0, 2}});
    const Subsystem s0 = factorial_subsystem(triangle, 0);
    CHECK(s0.members == std::vector<int>{0, 1, 2});

    const Graph line = build_graph(3, {{0, 1}, {1, 2}});
    CHECK(factorial_subsystem(line, 0).members == std::vector<int>{0, 1});
    // center first, then neighbors ascending
    CHECK(factorial_subsystem(line, 1).members == std::vector<int>{1, 0, 2});
}

TEST_CASE("subsystem membership is symmetric and covering") {
    const Graph g = build_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}});
    std::vector<Subsystem> subs;
    for (int i = 0; i < g.n_agents(); ++i) subs.push_back(factorial_subsystem(g, i));
    std::vector<char> covered(5, 0);
    for (int i = 0; i < 5; ++i) {
        for (int j : subs[static_cast<std::size_t>(i)].members) {
            covered[static_cast<std::size_t>(j)] = 1;
            const bool reciprocal =
                i == j || subs[static_cast<std::size_t>(j)].member_index(i) >= 0;
            CHECK(reciprocal);
        }
    }
    for (char c : covered) CHECK(c == 1);
}

TEST_CASE("topology factories") {
    CHECK(make_topology(Topology::line, 4).edges().size() == 3);
    CHECK(make_topology(Topology::ring, 4).edges().size() == 4);
    CHECK(make_topology(Topology::ring, 2).edges().size() == 1);
    CHECK(make_topology(Topology::full, 4).edges().size() == 6);
    const Graph tree = make_topology(Topology::binary_tree, 7);
    CHECK(tree.edges().size() == 6);
    CHECK(tree.degree(0) == 2);
    CHECK(tree.degree(1) == 3);
    CHECK(make_topology(Topology::line, 1).n_agents() == 1);
}

} // TEST_SUITE
