#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphvae/tensor.hpp"

namespace graphvae {

/// One-hot attributed graph (A, E, F) on n nodes. A carries node existence
/// on the diagonal (always 1 for an input graph) and edges off it; E holds
/// one-hot edge classes exactly where A has an off-diagonal 1; F holds one
/// one-hot class per node.
struct DiscreteGraph {
    std::size_t n = 0;
    std::size_t de = 0;
    std::size_t dn = 0;
    Tensor A; // n×n
    Tensor E; // n×n×de
    Tensor F; // n×dn

    static DiscreteGraph empty(std::size_t de, std::size_t dn) {
        DiscreteGraph g;
        g.de = de;
        g.dn = dn;
        g.A = Tensor({0, 0});
        g.E = Tensor({0, 0, de});
        g.F = Tensor({0, dn});
        return g;
    }

    /// Nodes only, no edges; classes[i] is node i's attribute class.
    static DiscreteGraph from_nodes(const std::vector<std::size_t>& classes,
                                    std::size_t de, std::size_t dn) {
        DiscreteGraph g;
        g.n = classes.size();
        g.de = de;
        g.dn = dn;
        g.A = Tensor({g.n, g.n});
        g.E = Tensor({g.n, g.n, de});
        g.F = Tensor({g.n, dn});
        for (std::size_t i = 0; i < g.n; ++i) {
            g.A.at(i, i) = 1.0;
            if (classes[i] >= dn) throw std::out_of_range("node class out of range");
            g.F.at(i, classes[i]) = 1.0;
        }
        return g;
    }

    void add_edge(std::size_t i, std::size_t j, std::size_t cls) {
        if (i == j || i >= n || j >= n || cls >= de)
            throw std::out_of_range("add_edge: bad edge");
        A.at(i, j) = A.at(j, i) = 1.0;
        for (std::size_t l = 0; l < de; ++l) E.at(i, j, l) = E.at(j, i, l) = 0.0;
        E.at(i, j, cls) = E.at(j, i, cls) = 1.0;
    }

    bool has_edge(std::size_t i, std::size_t j) const {
        return i != j && A.at(i, j) != 0.0;
    }

    /// Class of edge (i,j), or -1 if absent.
    int edge_class(std::size_t i, std::size_t j) const {
        if (!has_edge(i, j)) return -1;
        for (std::size_t l = 0; l < de; ++l)
            if (E.at(i, j, l) != 0.0) return static_cast<int>(l);
        return -1;
    }

    std::size_t node_class(std::size_t i) const {
        for (std::size_t c = 0; c < dn; ++c)
            if (F.at(i, c) != 0.0) return c;
        throw std::logic_error("node without one-hot class");
    }

    std::size_t edge_count() const { // undirected
        std::size_t m = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (has_edge(i, j)) ++m;
        return m;
    }

    bool connected() const {
        if (n == 0) return false;
        std::vector<char> seen(n, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        std::size_t cnt = 1;
        while (!stack.empty()) {
            std::size_t i = stack.back();
            stack.pop_back();
            for (std::size_t j = 0; j < n; ++j)
                if (has_edge(i, j) && !seen[j]) {
                    seen[j] = 1;
                    ++cnt;
                    stack.push_back(j);
                }
        }
        return cnt == n;
    }

    void validate() const {
        if (A.shape() != std::vector<std::size_t>{n, n} ||
            E.shape() != std::vector<std::size_t>{n, n, de} ||
            F.shape() != std::vector<std::size_t>{n, dn})
            throw std::invalid_argument("DiscreteGraph: tensor shape mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            if (A.at(i, i) != 1.0)
                throw std::invalid_argument("DiscreteGraph: diagonal of A must be 1");
            double rf = 0.0;
            for (std::size_t c = 0; c < dn; ++c) {
                double v = F.at(i, c);
                if (v != 0.0 && v != 1.0)
                    throw std::invalid_argument("DiscreteGraph: F not one-hot");
                rf += v;
            }
            if (rf != 1.0) throw std::invalid_argument("DiscreteGraph: F row not one-hot");
            for (std::size_t j = 0; j < n; ++j) {
                if (A.at(i, j) != A.at(j, i))
                    throw std::invalid_argument("DiscreteGraph: A not symmetric");
                double re = 0.0;
                for (std::size_t l = 0; l < de; ++l) {
                    double v = E.at(i, j, l);
                    if (v != 0.0 && v != 1.0)
                        throw std::invalid_argument("DiscreteGraph: E not one-hot");
                    if (v != E.at(j, i, l))
                        throw std::invalid_argument("DiscreteGraph: E not symmetric");
                    re += v;
                }
                double want = (i != j && A.at(i, j) == 1.0) ? 1.0 : 0.0;
                if (re != want)
                    throw std::invalid_argument("DiscreteGraph: E inconsistent with A");
            }
        }
    }
};

/// Decoder output: Bernoulli node/edge probabilities on the diagonal and
/// off-diagonal of Ã, multinomial attribute distributions in Ẽ and F̃.
struct ProbabilisticGraph {
    std::size_t k = 0;
    std::size_t de = 0;
    std::size_t dn = 0;
    Tensor A; // k×k in [0,1], symmetric
    Tensor E; // k×k×de, rows sum to 1, symmetric in first two indices
    Tensor F; // k×dn, rows sum to 1

    /// Degenerate 0/1 encoding of a discrete graph, zero-padded to k nodes.
    /// Padded attribute rows are uniform so every distribution stays valid.
    static ProbabilisticGraph degenerate(const DiscreteGraph& g, std::size_t k) {
        if (g.n > k) throw std::invalid_argument("degenerate: graph larger than k");
        ProbabilisticGraph pg;
        pg.k = k;
        pg.de = g.de;
        pg.dn = g.dn;
        pg.A = Tensor({k, k});
        pg.E = Tensor({k, k, g.de});
        pg.F = Tensor({k, g.dn});
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) {
                if (a < g.n && b < g.n) pg.A.at(a, b) = g.A.at(a, b);
                bool onehot = a < g.n && b < g.n && a != b && g.A.at(a, b) == 1.0;
                for (std::size_t l = 0; l < g.de; ++l)
                    pg.E.at(a, b, l) = onehot ? g.E.at(a, b, l)
                                              : 1.0 / static_cast<double>(g.de);
            }
            for (std::size_t c = 0; c < g.dn; ++c)
                pg.F.at(a, c) = a < g.n ? g.F.at(a, c) : 1.0 / static_cast<double>(g.dn);
        }
        return pg;
    }

    void validate(double tol = 1e-9) const {
        if (A.shape() != std::vector<std::size_t>{k, k} ||
            E.shape() != std::vector<std::size_t>{k, k, de} ||
            F.shape() != std::vector<std::size_t>{k, dn})
            throw std::invalid_argument("ProbabilisticGraph: tensor shape mismatch");
        for (std::size_t a = 0; a < k; ++a) {
            double rf = 0.0;
            for (std::size_t c = 0; c < dn; ++c) rf += F.at(a, c);
            if (std::abs(rf - 1.0) > tol)
                throw std::invalid_argument("ProbabilisticGraph: F row sum != 1");
            for (std::size_t b = 0; b < k; ++b) {
                double v = A.at(a, b);
                if (v < -tol || v > 1.0 + tol || std::abs(v - A.at(b, a)) > tol)
                    throw std::invalid_argument("ProbabilisticGraph: bad A entry");
                double re = 0.0;
                for (std::size_t l = 0; l < de; ++l) {
                    re += E.at(a, b, l);
                    if (std::abs(E.at(a, b, l) - E.at(b, a, l)) > tol)
                        throw std::invalid_argument("ProbabilisticGraph: E not symmetric");
                }
                if (std::abs(re - 1.0) > tol)
                    throw std::invalid_argument("ProbabilisticGraph: E row sum != 1");
            }
        }
    }
};

/// Histogram of node attribute classes.
struct GraphLabel {
    std::vector<int> y;

    bool operator==(const GraphLabel&) const = default;

    std::string str() const {
        std::string s;
        for (std::size_t i = 0; i < y.size(); ++i)
            s += (i ? "-" : "") + std::to_string(y[i]);
        return s;
    }
};

inline GraphLabel label_of(const DiscreteGraph& g) {
    GraphLabel l;
    l.y.assign(g.dn, 0);
    for (std::size_t i = 0; i < g.n; ++i) ++l.y[g.node_class(i)];
    return l;
}

namespace detail {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

} // namespace detail

/// Discrete point estimate of a probabilistic graph: nodes with diagonal
/// probability >= threshold survive, edges between survivors with
/// probability >= threshold are kept, attributes go by argmax (ties to the
/// lowest index). With connect=true the maximum spanning tree over the
/// survivors (Kruskal on edge probabilities, ties by lexicographic (a,b))
/// is added even where the edge probability is below threshold.
inline DiscreteGraph point_estimate(const ProbabilisticGraph& pg, bool connect,
                                    double threshold = 0.5) {
    std::vector<std::size_t> kept;
    for (std::size_t a = 0; a < pg.k; ++a)
        if (pg.A.at(a, a) >= threshold) kept.push_back(a);
    if (kept.empty()) return DiscreteGraph::empty(pg.de, pg.dn);

    std::size_t n = kept.size();
    auto argmax = [](const double* v, std::size_t len) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < len; ++i)
            if (v[i] > v[best]) best = i;
        return best;
    };

    std::vector<std::size_t> classes(n);
    for (std::size_t i = 0; i < n; ++i)
        classes[i] = argmax(pg.F.data() + kept[i] * pg.dn, pg.dn);
    DiscreteGraph g = DiscreteGraph::from_nodes(classes, pg.de, pg.dn);

    auto put_edge = [&](std::size_t i, std::size_t j) {
        std::size_t a = kept[i], b = kept[j];
        g.add_edge(i, j, argmax(pg.E.data() + (a * pg.k + b) * pg.de, pg.de));
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (pg.A.at(kept[i], kept[j]) >= threshold) put_edge(i, j);

    if (connect && n > 1) {
        struct Cand { double w; std::size_t i, j; };
        std::vector<Cand> cands;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                cands.push_back({pg.A.at(kept[i], kept[j]), i, j});
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
            if (x.w != y.w) return x.w > y.w;
            return std::tie(x.i, x.j) < std::tie(y.i, y.j);
        });
        detail::UnionFind uf(n);
        for (const Cand& c : cands)
            if (uf.unite(c.i, c.j) && !g.has_edge(c.i, c.j)) put_edge(c.i, c.j);
    }
    return g;
}

/// Relabel nodes of g by permutation perm: node i of g becomes node perm[i].
inline DiscreteGraph permute(const DiscreteGraph& g, const std::vector<std::size_t>& perm) {
    if (perm.size() != g.n) throw std::invalid_argument("permute: bad permutation");
    std::vector<std::size_t> classes(g.n);
    for (std::size_t i = 0; i < g.n; ++i) classes[perm[i]] = g.node_class(i);
    DiscreteGraph out = DiscreteGraph::from_nodes(classes, g.de, g.dn);
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = i + 1; j < g.n; ++j)
            if (g.has_edge(i, j))
                out.add_edge(perm[i], perm[j], static_cast<std::size_t>(g.edge_class(i, j)));
    return out;
}

inline nlohmann::json to_json(const DiscreteGraph& g) {
    nlohmann::json A = nlohmann::json::array();
    nlohmann::json E = nlohmann::json::array();
    nlohmann::json F = nlohmann::json::array();
    for (std::size_t i = 0; i < g.n; ++i) {
        nlohmann::json ar = nlohmann::json::array();
        nlohmann::json er = nlohmann::json::array();
        nlohmann::json fr = nlohmann::json::array();
        for (std::size_t j = 0; j < g.n; ++j) {
            ar.push_back(g.A.at(i, j));
            nlohmann::json ev = nlohmann::json::array();
            for (std::size_t l = 0; l < g.de; ++l) ev.push_back(g.E.at(i, j, l));
            er.push_back(std::move(ev));
        }
        for (std::size_t c = 0; c < g.dn; ++c) fr.push_back(g.F.at(i, c));
        A.push_back(std::move(ar));
        E.push_back(std::move(er));
        F.push_back(std::move(fr));
    }
    return {{"n", g.n}, {"de", g.de}, {"dn", g.dn},
            {"A", std::move(A)}, {"E", std::move(E)}, {"F", std::move(F)}};
}

inline DiscreteGraph graph_from_json(const nlohmann::json& j) {
    DiscreteGraph g;
    g.n = j.at("n").get<std::size_t>();
    g.de = j.at("de").get<std::size_t>();
    g.dn = j.at("dn").get<std::size_t>();
    g.A = Tensor({g.n, g.n});
    g.E = Tensor({g.n, g.n, g.de});
    g.F = Tensor({g.n, g.dn});
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j2 = 0; j2 < g.n; ++j2) {
            g.A.at(i, j2) = j.at("A")[i][j2].get<double>();
            for (std::size_t l = 0; l < g.de; ++l)
                g.E.at(i, j2, l) = j.at("E")[i][j2][l].get<double>();
        }
        for (std::size_t c = 0; c < g.dn; ++c)
            g.F.at(i, c) = j.at("F")[i][c].get<double>();
    }
    g.validate();
    return g;
}

} // namespace graphvae
