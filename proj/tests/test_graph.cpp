#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "graphvae/graph.hpp"
#include "support/synthetic.hpp"

using namespace graphvae;

namespace {

bool same_graph(const DiscreteGraph& a, const DiscreteGraph& b) {
    if (a.n != b.n || a.de != b.de || a.dn != b.dn) return false;
    for (std::size_t i = 0; i < a.n; ++i) {
        if (a.node_class(i) != b.node_class(i)) return false;
        for (std::size_t j = 0; j < a.n; ++j)
            if (a.edge_class(i, j) != b.edge_class(i, j)) return false;
    }
    return true;
}

} // namespace

TEST_CASE("point estimate keeps confident nodes and argmax attributes") {
    // k=3; node 1 falls below threshold and disappears.
    ProbabilisticGraph pg;
    pg.k = 3;
    pg.de = 2;
    pg.dn = 2;
    pg.A = Tensor({3, 3}, {0.9, 0.7, 0.1,
                           0.7, 0.4, 0.2,
                           0.1, 0.2, 0.8});
    pg.E = Tensor::full({3, 3, 2}, 0.5);
    pg.E.at(0, 2, 0) = 0.2; pg.E.at(0, 2, 1) = 0.8;
    pg.E.at(2, 0, 0) = 0.2; pg.E.at(2, 0, 1) = 0.8;
    pg.F = Tensor({3, 2}, {0.6, 0.4, 0.1, 0.9, 0.3, 0.7});
    pg.validate();

    DiscreteGraph g = point_estimate(pg, /*connect=*/false);
    REQUIRE(g.n == 2); // survivors: original nodes 0 and 2
    CHECK(g.node_class(0) == 0);
    CHECK(g.node_class(1) == 1);
    CHECK(!g.has_edge(0, 1)); // A(0,2)=0.1 below threshold

    DiscreteGraph gc = point_estimate(pg, /*connect=*/true);
    REQUIRE(gc.n == 2);
    CHECK(gc.has_edge(0, 1)); // spanning tree forces the edge
    CHECK(gc.edge_class(0, 1) == 1); // argmax of Ẽ(0,2)
    CHECK(gc.connected());
}

TEST_CASE("point estimate edge threshold and tie breaking") {
    ProbabilisticGraph pg;
    pg.k = 2;
    pg.de = 3;
    pg.dn = 4;
    pg.A = Tensor({2, 2}, {1.0, 0.5, 0.5, 0.5}); // both >= 0.5 survive, edge at exactly 0.5 kept
    pg.E = Tensor::full({2, 2, 3}, 1.0 / 3.0);   // tie -> class 0
    pg.F = Tensor::full({2, 4}, 0.25);           // tie -> class 0
    pg.validate();
    DiscreteGraph g = point_estimate(pg, false);
    REQUIRE(g.n == 2);
    CHECK(g.has_edge(0, 1));
    CHECK(g.edge_class(0, 1) == 0);
    CHECK(g.node_class(0) == 0);
}

TEST_CASE("point estimate of an all-unlikely graph is empty") {
    ProbabilisticGraph pg;
    pg.k = 2;
    pg.de = 2;
    pg.dn = 2;
    pg.A = Tensor::full({2, 2}, 0.3);
    pg.E = Tensor::full({2, 2, 2}, 0.5);
    pg.F = Tensor::full({2, 2}, 0.5);
    DiscreteGraph g = point_estimate(pg, true);
    CHECK(g.n == 0);
}

TEST_CASE("label_of counts node classes: propylene oxide") {
    // C3O epoxide: C-C-C chain, C1-O-C2 ring.
    DiscreteGraph g = DiscreteGraph::from_nodes({0, 0, 0, 2}, 4, 4);
    g.add_edge(0, 1, 0);
    g.add_edge(1, 2, 0);
    g.add_edge(1, 3, 0);
    g.add_edge(2, 3, 0);
    GraphLabel l = label_of(g);
    CHECK(l.y == std::vector<int>{3, 0, 1, 0});
    CHECK(l.str() == "3-0-1-0");
}

TEST_CASE("degenerate then point-estimate is the identity on molecules", "[property]") {
    std::mt19937_64 rng(42);
    for (int t = 0; t < 200; ++t) {
        DiscreteGraph g = testsupport::random_molecule(rng, 9);
        ProbabilisticGraph pg = ProbabilisticGraph::degenerate(g, 9 + rng() % 4);
        pg.validate();
        DiscreteGraph back = point_estimate(pg, false);
        CHECK(same_graph(g, back));
    }
}

TEST_CASE("connect=true always yields a connected survivor set", "[property]") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::size_t k = 2 + rng() % 6;
        ProbabilisticGraph pg;
        pg.k = k;
        pg.de = 4;
        pg.dn = 4;
        pg.A = Tensor({k, k});
        pg.E = Tensor({k, k, 4});
        pg.F = Tensor({k, 4});
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = a; b < k; ++b) pg.A.at(a, b) = pg.A.at(b, a) = u(rng);
            for (std::size_t b = 0; b < k; ++b)
                for (std::size_t l = 0; l < 4; ++l) pg.E.at(a, b, l) = 0.25;
            for (std::size_t c = 0; c < 4; ++c) pg.F.at(a, c) = 0.25;
        }
        DiscreteGraph g = point_estimate(pg, true);
        if (g.n > 0) CHECK(g.connected());
    }
}

TEST_CASE("permute relabels nodes and preserves the label") {
    DiscreteGraph g = DiscreteGraph::from_nodes({0, 1, 2}, 4, 4);
    g.add_edge(0, 1, 1);
    g.add_edge(1, 2, 0);
    DiscreteGraph p = permute(g, {2, 0, 1});
    p.validate();
    CHECK(p.node_class(2) == 0);
    CHECK(p.node_class(0) == 1);
    CHECK(p.edge_class(2, 0) == 1);
    CHECK(p.edge_class(0, 1) == 0);
    CHECK(label_of(p) == label_of(g));
}

TEST_CASE("graph JSON round trip is exact") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        DiscreteGraph g = testsupport::random_molecule(rng, 9);
        DiscreteGraph back = graph_from_json(to_json(g));
        CHECK(same_graph(g, back));
    }
}

TEST_CASE("validate rejects malformed graphs") {
    DiscreteGraph g = DiscreteGraph::from_nodes({0, 1}, 4, 4);
    g.add_edge(0, 1, 2);
    g.validate();
    g.A.at(0, 1) = 0.0; // break symmetry
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}
