#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "graphvae/eval.hpp"
#include "graphvae/matching.hpp"
#include "support/synthetic.hpp"

using namespace graphvae;

namespace {

// Exhaustive search over all one-to-one maps input -> predicted nodes.
double brute_force_best(const AffinityTensor& aff, std::vector<std::size_t>* best_sigma = nullptr) {
    std::vector<std::size_t> perm(aff.k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = -1.0;
    do {
        std::vector<std::size_t> sigma(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(aff.n));
        double s = matching_score(aff, sigma);
        if (s > best) {
            best = s;
            if (best_sigma) *best_sigma = sigma;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace

TEST_CASE("affinity node term is the attribute dot product times node probability") {
    DiscreteGraph g = DiscreteGraph::from_nodes({1}, 4, 4);
    ProbabilisticGraph pg;
    pg.k = 1;
    pg.de = 4;
    pg.dn = 4;
    pg.A = Tensor({1, 1}, {0.5});
    pg.E = Tensor::full({1, 1, 4}, 0.25);
    pg.F = Tensor({1, 4}, {0.25, 0.5, 0.15, 0.1});
    AffinityTensor aff = build_affinity(g, pg);
    CHECK(aff.at(0, 0, 0, 0) == Catch::Approx(0.5 * 0.5)); // F dot × Ã_00
}

TEST_CASE("affinity edge term vanishes where the input has no edge") {
    DiscreteGraph g = DiscreteGraph::from_nodes({0, 0}, 4, 4); // no edges
    ProbabilisticGraph pg = ProbabilisticGraph::degenerate(g, 2);
    for (std::size_t l = 0; l < 4; ++l)
        pg.E.at(0, 1, l) = pg.E.at(1, 0, l) = 0.25;
    pg.A.at(0, 1) = pg.A.at(1, 0) = 0.9; // predicted edge, input has none
    AffinityTensor aff = build_affinity(g, pg);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b)
            if (a != b) CHECK(aff.at(0, a, 1, b) == 0.0);
}

TEST_CASE("self-affinity of a degenerate copy is maximal on the identity") {
    std::mt19937_64 rng(5);
    DiscreteGraph g = testsupport::random_molecule(rng, 4);
    ProbabilisticGraph pg = ProbabilisticGraph::degenerate(g, g.n);
    AffinityTensor aff = build_affinity(g, pg);
    std::vector<std::size_t> identity(g.n);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    double id_score = matching_score(aff, identity);
    CHECK(id_score == Catch::Approx(brute_force_best(aff)));
}

TEST_CASE("affinity is zero-padded beyond the input graph", "[property]") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 50; ++t) {
        DiscreteGraph g = testsupport::random_molecule(rng, 3);
        std::size_t k = g.n + 1 + rng() % 3;
        ProbabilisticGraph pg = ProbabilisticGraph::degenerate(g, k);
        AffinityTensor aff = build_affinity(g, pg);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t j = 0; j < k; ++j)
                    for (std::size_t b = 0; b < k; ++b) {
                        double v = aff.at(i, a, j, b);
                        CHECK(v >= 0.0);
                        if (i >= g.n || j >= g.n) CHECK(v == 0.0);
                    }
    }
}

TEST_CASE("max-pooling matching on a single node is trivial") {
    DiscreteGraph g = DiscreteGraph::from_nodes({2}, 4, 4);
    ProbabilisticGraph pg = ProbabilisticGraph::degenerate(g, 1);
    Tensor xs = max_pool_match(build_affinity(g, pg));
    CHECK(xs.rows() == 1);
    CHECK(xs.cols() == 1);
    CHECK(xs.at(0, 0) > 0.0);
    auto sigma = discretize(xs);
    CHECK(sigma == std::vector<std::size_t>{0});
}

TEST_CASE("3-node path recovers the exhaustive optimum") {
    // Path C-N-O with distinct attributes: only the identity is optimal.
    DiscreteGraph g = DiscreteGraph::from_nodes({0, 1, 2}, 4, 4);
    g.add_edge(0, 1, 0);
    g.add_edge(1, 2, 1);
    ProbabilisticGraph pg = ProbabilisticGraph::degenerate(g, 3);
    AffinityTensor aff = build_affinity(g, pg);
    std::vector<std::size_t> oracle;
    double best = brute_force_best(aff, &oracle);
    auto sigma = match_graphs(g, pg);
    CHECK(matching_score(aff, sigma) == Catch::Approx(best));
    CHECK(sigma == oracle);
}

TEST_CASE("affinity tensor is symmetric in pair exchange", "[property]") {
    std::mt19937_64 rng(29);
    for (int t = 0; t < 25; ++t) {
        DiscreteGraph g = testsupport::random_molecule(rng, 5);
        ProbabilisticGraph pg = noisy_copy(g, g.n + 1, NoiseKind::A, 0.3, rng);
        AffinityTensor aff = build_affinity(g, pg);
        std::size_t k = aff.k;
        for (std::size_t i = 0; i < g.n; ++i)
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t j = 0; j < g.n; ++j)
                    for (std::size_t b = 0; b < k; ++b)
                        CHECK(aff.at(i, a, j, b) == Catch::Approx(aff.at(j, b, i, a)));
    }
}

TEST_CASE("discretize recovers clean assignment matrices") {
    Tensor id({3, 3});
    for (std::size_t i = 0; i < 3; ++i) id.at(i, i) = 1.0;
    CHECK(discretize(id) == std::vector<std::size_t>{0, 1, 2});

    Tensor anti({3, 3});
    anti.at(2, 0) = 0.9;
    anti.at(1, 1) = 0.8;
    anti.at(0, 2) = 0.7;
    CHECK(discretize(anti) == std::vector<std::size_t>{2, 1, 0});
}

TEST_CASE("discretize is invariant to positive rescaling") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor xs({4, 3});
    for (double& v : xs.vec()) v = u(rng);
    auto base = discretize(xs);
    Tensor scaled = xs;
    for (double& v : scaled.vec()) v *= 37.5;
    CHECK(discretize(scaled) == base);
}

TEST_CASE("discretize maximizes assignment profit on rectangular inputs") {
    // 6 predicted rows, 4 input columns; compare against exhaustive search.
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 30; ++t) {
        Tensor xs({6, 4});
        for (double& v : xs.vec()) v = u(rng);
        auto sigma = discretize(xs);
        double got = 0.0;
        for (std::size_t i = 0; i < 4; ++i) got += xs.at(sigma[i], i);

        std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
        double best = 0.0;
        do {
            double s = 0.0;
            for (std::size_t i = 0; i < 4; ++i) s += xs.at(rows[i], i);
            best = std::max(best, s);
        } while (std::next_permutation(rows.begin(), rows.end()));
        CHECK(got == Catch::Approx(best));
    }
}

TEST_CASE("batched matching equals sequential matching regardless of threads") {
    std::mt19937_64 rng(57);
    std::vector<DiscreteGraph> gs;
    std::vector<ProbabilisticGraph> pgs;
    for (int t = 0; t < 12; ++t) {
        gs.push_back(testsupport::random_molecule(rng, 6));
        pgs.push_back(noisy_copy(gs.back(), 7, NoiseKind::E, 0.4, rng));
    }
    std::vector<std::pair<const DiscreteGraph*, const ProbabilisticGraph*>> pairs;
    for (std::size_t i = 0; i < gs.size(); ++i) pairs.push_back({&gs[i], &pgs[i]});
    auto seq = match_batch(pairs, 75, 1);
    auto par = match_batch(pairs, 75, 4);
    CHECK(seq == par);
    for (std::size_t i = 0; i < gs.size(); ++i)
        CHECK(seq[i] == match_graphs(gs[i], pgs[i], 75));
}

TEST_CASE("noise-free self matching reconstructs the graph", "[property]") {
    std::mt19937_64 rng(71);
    double mean = 0.0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
        DiscreteGraph g = testsupport::random_molecule(rng, 6);
        std::size_t k = g.n + rng() % 3;
        ProbabilisticGraph pg = ProbabilisticGraph::degenerate(g, k);
        auto sigma = match_graphs(g, pg);
        mean += self_match_accuracy(g, sigma, k);
    }
    CHECK(mean / trials >= 0.99);
}
