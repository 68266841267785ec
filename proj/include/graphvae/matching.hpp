#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "graphvae/graph.hpp"
#include "graphvae/tensor.hpp"
#include "graphvae/threading.hpp"

namespace graphvae {

/// Pairwise affinity between node pairs of an input graph (padded to k) and
/// a predicted graph on k nodes. Stored densely as a k²×k² matrix indexed by
/// the column-replica flattening idx(i,a) = i*k + a, i an input node and a a
/// predicted node.
struct AffinityTensor {
    std::size_t k = 0;
    std::size_t n = 0; // real input nodes; pairs with i or j >= n are zero
    Tensor S;          // k²×k²

    std::size_t idx(std::size_t i, std::size_t a) const { return i * k + a; }
    double at(std::size_t i, std::size_t a, std::size_t j, std::size_t b) const {
        return S.at(idx(i, a), idx(j, b));
    }
};

/// Edge term: (E_ij · Ẽ_ab) A_ij Ã_ab Ã_aa Ã_bb for i≠j and a≠b; node term
/// (F_i · F̃_a) Ã_aa for i=j, a=b. Everything else, including zero padding
/// for i,j beyond the input graph, is zero.
inline AffinityTensor build_affinity(const DiscreteGraph& g, const ProbabilisticGraph& pg) {
    if (g.n > pg.k) throw std::invalid_argument("build_affinity: n > k");
    if (g.de != pg.de || g.dn != pg.dn)
        throw std::invalid_argument("build_affinity: attribute dimension mismatch");
    std::size_t k = pg.k;
    AffinityTensor aff;
    aff.k = k;
    aff.n = g.n;
    aff.S = Tensor({k * k, k * k});
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t a = 0; a < k; ++a) {
            double node = 0.0;
            for (std::size_t c = 0; c < g.dn; ++c) node += g.F.at(i, c) * pg.F.at(a, c);
            aff.S.at(aff.idx(i, a), aff.idx(i, a)) = node * pg.A.at(a, a);
            for (std::size_t j = 0; j < g.n; ++j) {
                if (j == i || g.A.at(i, j) == 0.0) continue;
                for (std::size_t b = 0; b < k; ++b) {
                    if (b == a) continue;
                    double dot = 0.0;
                    for (std::size_t l = 0; l < g.de; ++l)
                        dot += g.E.at(i, j, l) * pg.E.at(a, b, l);
                    aff.S.at(aff.idx(i, a), aff.idx(j, b)) =
                        dot * pg.A.at(a, b) * pg.A.at(a, a) * pg.A.at(b, b);
                }
            }
        }
    }
    return aff;
}

/// Max-pooling matching: power-iteration-style updates where each input
/// neighbor j contributes only its best candidate b,
///   x_ia <- x_ia S(ia;ia) + sum_j max_b x_jb S(ia;jb),
/// the full iterate L2-normalized each round. Returns X* as a k×n matrix
/// (rows: predicted nodes, columns: input nodes). A vanishing iterate
/// (all-zero affinity) resets to uniform.
inline Tensor max_pool_match(const AffinityTensor& aff, int iterations = 75) {
    if (iterations < 1) throw std::invalid_argument("max_pool_match: iterations < 1");
    std::size_t k = aff.k, n = aff.n;
    std::size_t kk = k * k;
    double uniform = 1.0 / std::sqrt(static_cast<double>(kk));
    std::vector<double> x(kk, uniform), nx(kk);
    const double* S = aff.S.data();
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t a = 0; a < k; ++a) {
                std::size_t ia = i * k + a;
                const double* row = S + ia * kk;
                double v = x[ia] * row[ia];
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) continue;
                    const double* rj = row + j * k;
                    const double* xj = x.data() + j * k;
                    double best = 0.0;
                    for (std::size_t b = 0; b < k; ++b) {
                        double cand = xj[b] * rj[b];
                        if (cand > best) best = cand;
                    }
                    v += best;
                }
                nx[ia] = v;
            }
        }
        double norm = 0.0;
        for (double v : nx) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-30) {
            std::fill(nx.begin(), nx.end(), uniform);
        } else {
            for (double& v : nx) v /= norm;
        }
        x.swap(nx);
    }
    Tensor xs({k, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < k; ++a) xs.at(a, i) = x[i * k + a];
    return xs;
}

namespace detail {

/// Minimum-cost assignment on a square cost matrix (Jonker-Volgenant style
/// shortest augmenting paths, O(n³)). Returns row -> column.
inline std::vector<int> min_cost_assignment(const std::vector<double>& cost, std::size_t n) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = static_cast<int>(i);
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            std::size_t i0 = static_cast<std::size_t>(p[j0]), j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = static_cast<int>(j0);
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[static_cast<std::size_t>(p[j])] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::size_t j1 = static_cast<std::size_t>(way[j0]);
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] != 0) row_to_col[static_cast<std::size_t>(p[j]) - 1] = static_cast<int>(j) - 1;
    return row_to_col;
}

} // namespace detail

/// Hungarian discretization of a k×n continuous assignment: maximizes
/// sum_i Xstar[sigma(i)][i] over one-to-one maps. Returns sigma, the
/// predicted node assigned to each input node. Invariant to positive
/// rescaling of Xstar. Predicted nodes beyond the n columns stay unassigned
/// (the profit matrix is padded with zero columns).
inline std::vector<std::size_t> discretize(const Tensor& xstar) {
    std::size_t k = xstar.rows(), n = xstar.cols();
    if (n > k) throw std::invalid_argument("discretize: more input than predicted nodes");
    std::vector<double> cost(k * k, 0.0);
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t i = 0; i < n; ++i) cost[a * k + i] = -xstar.at(a, i);
    std::vector<int> row_to_col = detail::min_cost_assignment(cost, k);
    std::vector<std::size_t> sigma(n, 0);
    for (std::size_t a = 0; a < k; ++a) {
        int i = row_to_col[a];
        if (i >= 0 && static_cast<std::size_t>(i) < n) sigma[static_cast<std::size_t>(i)] = a;
    }
    return sigma;
}

/// Binary X (k×n) from an input-to-predicted assignment.
inline Tensor assignment_matrix(const std::vector<std::size_t>& sigma, std::size_t k) {
    Tensor x({k, sigma.size()});
    for (std::size_t i = 0; i < sigma.size(); ++i) x.at(sigma[i], i) = 1.0;
    return x;
}

/// Greedy local search on the quadratic objective x^T S x: pairwise swaps of
/// assigned slots and moves to unused slots, applied until no single move
/// improves. Fixes the cases where the continuous relaxation spreads mass
/// over an automorphism orbit and the Hungarian step picks a blend.
inline void refine_assignment(const AffinityTensor& aff, std::vector<std::size_t>& sigma) {
    std::size_t n = sigma.size(), k = aff.k;
    auto S = [&](std::size_t i, std::size_t a, std::size_t j, std::size_t b) {
        return aff.at(i, a, j, b);
    };
    std::vector<char> used(k, 0);
    for (std::size_t a : sigma) used[a] = 1;
    bool improved = true;
    while (improved) {
        improved = false;
        // Swaps.
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                std::size_t ai = sigma[i], aj = sigma[j];
                double delta = S(i, aj, i, aj) + S(j, ai, j, ai) + 2.0 * S(i, aj, j, ai) -
                               S(i, ai, i, ai) - S(j, aj, j, aj) - 2.0 * S(i, ai, j, aj);
                for (std::size_t q = 0; q < n; ++q) {
                    if (q == i || q == j) continue;
                    delta += 2.0 * (S(i, aj, q, sigma[q]) + S(j, ai, q, sigma[q]) -
                                    S(i, ai, q, sigma[q]) - S(j, aj, q, sigma[q]));
                }
                if (delta > 1e-12) {
                    std::swap(sigma[i], sigma[j]);
                    improved = true;
                }
            }
        // Moves to unused predicted slots.
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < k; ++a) {
                if (used[a]) continue;
                std::size_t ai = sigma[i];
                double delta = S(i, a, i, a) - S(i, ai, i, ai);
                for (std::size_t q = 0; q < n; ++q) {
                    if (q == i) continue;
                    delta += 2.0 * (S(i, a, q, sigma[q]) - S(i, ai, q, sigma[q]));
                }
                if (delta > 1e-12) {
                    used[ai] = 0;
                    used[a] = 1;
                    sigma[i] = a;
                    improved = true;
                }
            }
    }
}

inline std::vector<std::size_t> match_graphs(const DiscreteGraph& g,
                                             const ProbabilisticGraph& pg,
                                             int iterations = 75) {
    AffinityTensor aff = build_affinity(g, pg);
    std::vector<std::size_t> sigma = discretize(max_pool_match(aff, iterations));
    refine_assignment(aff, sigma);
    return sigma;
}

/// Batched matching over zero-padded affinities; elementwise identical to
/// per-pair execution regardless of thread count.
inline std::vector<std::vector<std::size_t>> match_batch(
    const std::vector<std::pair<const DiscreteGraph*, const ProbabilisticGraph*>>& pairs,
    int iterations = 75, unsigned threads = 1) {
    for (const auto& [g, pg] : pairs)
        if (pg->k != pairs[0].second->k || g->de != pairs[0].first->de ||
            g->dn != pairs[0].first->dn)
            throw std::invalid_argument("match_batch: heterogeneous dimensions");
    std::vector<std::vector<std::size_t>> out(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t s) {
        out[s] = match_graphs(*pairs[s].first, *pairs[s].second, iterations);
    });
    return out;
}

/// Quadratic matching objective x^T S x of a (binary or continuous)
/// assignment, x being the column replica of X.
inline double matching_score(const AffinityTensor& aff, const std::vector<std::size_t>& sigma) {
    double s = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i)
        for (std::size_t j = 0; j < sigma.size(); ++j)
            s += aff.at(i, sigma[i], j, sigma[j]);
    return s;
}

/// Self-matching accuracy of assignment sigma for graph g in a k-node
/// context: agreement fractions of the four reconstruction terms (node
/// existence, edge existence, node attributes, edge attributes), each with
/// its own normalization, averaged over the terms that apply.
inline double self_match_accuracy(const DiscreteGraph& g,
                                  const std::vector<std::size_t>& sigma, std::size_t k) {
    std::size_t n = g.n;
    // Reference graph embedded on the first n of k predicted slots.
    auto ref_diag = [&](std::size_t a) { return a < n ? 1.0 : 0.0; };
    auto ref_off = [&](std::size_t a, std::size_t b) {
        return (a < n && b < n) ? g.A.at(a, b) : 0.0;
    };
    // A' = X A X^T from the assignment.
    std::vector<std::vector<double>> aprime(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) aprime[sigma[i]][sigma[j]] = g.A.at(i, j);

    double diag_ok = 0.0;
    for (std::size_t a = 0; a < k; ++a)
        if (aprime[a][a] == ref_diag(a)) diag_ok += 1.0;
    diag_ok /= static_cast<double>(k);

    double f_ok = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (sigma[i] < n && g.node_class(sigma[i]) == g.node_class(i)) f_ok += 1.0;
    f_ok /= static_cast<double>(n);

    double acc = diag_ok + f_ok;
    double terms = 2.0;
    if (k > 1) {
        double off_ok = 0.0;
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
                if (a != b && aprime[a][b] == ref_off(a, b)) off_ok += 1.0;
        acc += off_ok / static_cast<double>(k * (k - 1));
        terms += 1.0;
    }
    std::size_t slots = 0;
    double e_ok = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (!g.has_edge(i, j)) continue;
            ++slots;
            if (sigma[i] < n && sigma[j] < n &&
                g.edge_class(sigma[i], sigma[j]) == g.edge_class(i, j))
                e_ok += 1.0;
        }
    if (slots > 0) {
        acc += e_ok / static_cast<double>(slots);
        terms += 1.0;
    }
    return acc / terms;
}

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"data", t.vec()}};
}

} // namespace graphvae
