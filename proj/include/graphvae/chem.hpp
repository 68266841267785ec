#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "graphvae/graph.hpp"

namespace graphvae {

struct AtomVocabulary {
    struct Entry {
        std::string symbol;
        int max_valence;
    };
    std::vector<Entry> atoms;

    static AtomVocabulary qm9() {
        return {{{"C", 4}, {"N", 3}, {"O", 2}, {"F", 1}}};
    }

    static AtomVocabulary zinc() {
        return {{{"C", 4}, {"N", 3}, {"O", 2}, {"F", 1}, {"P", 5},
                 {"S", 6}, {"Cl", 1}, {"Br", 1}, {"I", 1}}};
    }

    std::size_t size() const { return atoms.size(); }

    int index_of(const std::string& symbol) const {
        for (std::size_t i = 0; i < atoms.size(); ++i)
            if (atoms[i].symbol == symbol) return static_cast<int>(i);
        return -1;
    }
};

struct BondVocabulary {
    struct Entry {
        std::string name;
        double order;
    };
    std::vector<Entry> bonds;

    /// single, double, triple, aromatic (order 1.5)
    static BondVocabulary default4() {
        return {{{"single", 1.0}, {"double", 2.0}, {"triple", 3.0}, {"aromatic", 1.5}}};
    }

    std::size_t size() const { return bonds.size(); }

    int aromatic_class() const {
        for (std::size_t i = 0; i < bonds.size(); ++i)
            if (bonds[i].name == "aromatic") return static_cast<int>(i);
        return -1;
    }
};

struct ValidityResult {
    bool ok = false;
    std::string reason;

    static ValidityResult valid() { return {true, ""}; }
    static ValidityResult invalid(std::string why) { return {false, std::move(why)}; }
};

namespace detail {

/// Edges of the aromatic subgraph that are bridges (not on any cycle).
inline std::vector<std::pair<std::size_t, std::size_t>> aromatic_bridges(
    const DiscreteGraph& g, int aromatic_cls) {
    std::size_t n = g.n;
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && g.edge_class(i, j) == aromatic_cls) adj[i].push_back(j);
    std::vector<int> disc(n, -1), low(n, 0);
    std::vector<std::pair<std::size_t, std::size_t>> bridges;
    int timer = 0;
    // Tarjan bridge finding.
    std::function<void(std::size_t, std::size_t, bool)> dfs =
        [&](std::size_t u, std::size_t parent, bool has_parent) {
            disc[u] = low[u] = timer++;
            bool skipped_parent = false;
            for (std::size_t v : adj[u]) {
                if (has_parent && v == parent && !skipped_parent) {
                    skipped_parent = true;
                    continue;
                }
                if (disc[v] < 0) {
                    dfs(v, u, true);
                    low[u] = std::min(low[u], low[v]);
                    if (low[v] > disc[u]) bridges.emplace_back(u, v);
                } else {
                    low[u] = std::min(low[u], disc[v]);
                }
            }
        };
    for (std::size_t i = 0; i < n; ++i)
        if (disc[i] < 0 && !adj[i].empty()) dfs(i, 0, false);
    return bridges;
}

} // namespace detail

/// Valence-based validity check (stand-in for a full sanitizer): the graph
/// must be nonempty and connected, every atom's total incident bond order
/// (aromatic counting 1.5, the per-atom total rounded up) must fit its max
/// valence, and aromatic bonds must form cycles in which every member atom
/// has at least two incident aromatic bonds. Valence deficits are read as
/// implicit hydrogens.
inline ValidityResult check_valid(const DiscreteGraph& g, const AtomVocabulary& atoms,
                                  const BondVocabulary& bonds) {
    if (g.n == 0) return ValidityResult::invalid("empty graph");
    if (g.dn > atoms.size() || g.de > bonds.size())
        throw std::out_of_range("check_valid: attribute index beyond vocabulary");
    if (!g.connected()) return ValidityResult::invalid("disconnected");

    int aromatic_cls = bonds.aromatic_class();
    for (std::size_t i = 0; i < g.n; ++i) {
        double total = 0.0;
        std::size_t arom_deg = 0;
        for (std::size_t j = 0; j < g.n; ++j) {
            int cls = i == j ? -1 : g.edge_class(i, j);
            if (cls < 0) continue;
            total += bonds.bonds[static_cast<std::size_t>(cls)].order;
            if (cls == aromatic_cls) ++arom_deg;
        }
        if (arom_deg == 1)
            return ValidityResult::invalid("atom " + std::to_string(i) +
                                           " has a single aromatic bond");
        int max_val = atoms.atoms[g.node_class(i)].max_valence;
        if (static_cast<int>(std::ceil(total - 1e-9)) > max_val)
            return ValidityResult::invalid(
                "atom " + std::to_string(i) + " (" + atoms.atoms[g.node_class(i)].symbol +
                ") exceeds valence " + std::to_string(max_val));
    }
    if (aromatic_cls >= 0 && !detail::aromatic_bridges(g, aromatic_cls).empty())
        return ValidityResult::invalid("aromatic bond outside a cycle");
    return ValidityResult::valid();
}

namespace detail {

/// One round of neighborhood color refinement. New colors are the ranks of
/// sorted (old color, neighborhood signature) keys, so the numbering is an
/// isomorphism invariant. Returns true if the partition got finer.
inline bool refine_colors(const DiscreteGraph& g, std::vector<int>& colors) {
    std::size_t n = g.n;
    using Key = std::pair<int, std::vector<std::pair<int, int>>>;
    std::vector<Key> keys(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<int, int>> sig; // (edge class, neighbor color)
        for (std::size_t j = 0; j < n; ++j) {
            int cls = i == j ? -1 : g.edge_class(i, j);
            if (cls >= 0) sig.emplace_back(cls, colors[j]);
        }
        std::sort(sig.begin(), sig.end());
        keys[i] = {colors[i], std::move(sig)};
    }
    std::map<Key, int> table;
    for (const Key& k : keys) table.emplace(k, 0);
    int rank = 0;
    for (auto& [k, r] : table) r = rank++;
    std::size_t before = std::set<int>(colors.begin(), colors.end()).size();
    for (std::size_t i = 0; i < n; ++i) colors[i] = table[keys[i]];
    return table.size() > before;
}

inline void refine_to_fixpoint(const DiscreteGraph& g, std::vector<int>& colors) {
    // Re-index to dense colors, preserving their order (the order is part of
    // the isomorphism invariant).
    std::map<int, int> dense;
    for (int c : colors) dense.emplace(c, 0);
    int rank = 0;
    for (auto& [c, r] : dense) r = rank++;
    for (int& c : colors) c = dense[c];
    while (refine_colors(g, colors)) {
    }
}

/// Certificate of g under the ordering "node i -> position order[i]".
inline std::string certificate(const DiscreteGraph& g, const std::vector<std::size_t>& order) {
    std::size_t n = g.n;
    std::vector<std::size_t> pos_to_node(n);
    for (std::size_t i = 0; i < n; ++i) pos_to_node[order[i]] = i;
    std::string s;
    s.reserve(2 + n + n * n / 2);
    s.push_back(static_cast<char>(n));
    for (std::size_t p = 0; p < n; ++p)
        s.push_back(static_cast<char>('a' + g.node_class(pos_to_node[p])));
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) {
            int cls = g.edge_class(pos_to_node[p], pos_to_node[q]);
            s.push_back(static_cast<char>('0' + cls + 1));
        }
    return s;
}

/// Individualization-refinement search for the lexicographically smallest
/// certificate. Exhaustive over color ties, so the result is an exact
/// isomorphism invariant.
inline void canonical_search(const DiscreteGraph& g, std::vector<int> colors,
                             std::string& best, bool& have_best) {
    std::size_t n = g.n;
    refine_to_fixpoint(g, colors);
    // Find the smallest non-singleton color class.
    std::map<int, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < n; ++i) cells[colors[i]].push_back(i);
    const std::vector<std::size_t>* target = nullptr;
    for (const auto& [c, members] : cells)
        if (members.size() > 1) {
            target = &members;
            break;
        }
    if (!target) {
        // Discrete partition: order nodes by color.
        std::vector<std::size_t> order(n);
        std::vector<std::size_t> by_color(n);
        std::size_t p = 0;
        for (const auto& [c, members] : cells) by_color[p++] = members[0];
        for (std::size_t pos = 0; pos < n; ++pos) order[by_color[pos]] = pos;
        std::string cert = certificate(g, order);
        if (!have_best || cert < best) {
            best = std::move(cert);
            have_best = true;
        }
        return;
    }
    int fresh = static_cast<int>(n) + 1;
    for (std::size_t v : *target) {
        std::vector<int> branched = colors;
        branched[v] = -fresh; // strictly smaller than all existing colors
        canonical_search(g, std::move(branched), best, have_best);
    }
}

} // namespace detail

/// String invariant under attributed-graph isomorphism: equal keys iff the
/// graphs are isomorphic respecting node and edge attributes. Color
/// refinement seeded by (node class, degree) with exhaustive backtracking
/// over remaining ties.
inline std::string canonical_key(const DiscreteGraph& g) {
    if (g.n == 0) return std::string(1, '\0');
    std::vector<int> colors(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        int deg = 0;
        for (std::size_t j = 0; j < g.n; ++j)
            if (g.has_edge(i, j)) ++deg;
        colors[i] = static_cast<int>(g.node_class(i)) * static_cast<int>(g.n + 1) + deg;
    }
    std::string best;
    bool have_best = false;
    detail::canonical_search(g, std::move(colors), best, have_best);
    return best;
}

/// Chemistry-layer record: graph plus derived label and isomorphism key.
struct MoleculeRecord {
    DiscreteGraph graph;
    GraphLabel label;
    std::string key;

    static MoleculeRecord from_graph(DiscreteGraph g) {
        MoleculeRecord r;
        r.label = label_of(g);
        r.key = canonical_key(g);
        r.graph = std::move(g);
        return r;
    }
};

} // namespace graphvae
