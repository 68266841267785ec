#pragma once

// Deterministic generator of valence-respecting connected molecular graphs
// over the QM9 vocabulary (C, N, O, F). Every graph it produces passes
// check_valid by construction, so tests can use it as a stand-in dataset.

#include <fstream>
#include <random>
#include <utility>
#include <vector>

#include <json.hpp>

#include "graphvae/chem.hpp"
#include "graphvae/graph.hpp"

namespace testsupport {

inline std::size_t pick_atom_class(std::mt19937_64& rng) {
    // C-heavy mix, roughly QM9-like: C 60%, N 15%, O 15%, F 10%.
    std::size_t r = rng() % 20;
    if (r < 12) return 0;
    if (r < 15) return 1;
    if (r < 18) return 2;
    return 3;
}

/// Connected molecule with 1..max_n heavy atoms. Grows atom by atom from a
/// seed (sometimes an aromatic 6-ring), never exceeding valence caps, and
/// occasionally closes a single-bond ring.
inline graphvae::DiscreteGraph random_molecule(std::mt19937_64& rng, std::size_t max_n) {
    static const int cap[4] = {4, 3, 2, 1};
    const std::size_t de = 4, dn = 4;
    std::size_t target = 1 + rng() % max_n;

    std::vector<std::size_t> cls;
    std::vector<int> free_v;
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::size_t>> edges;
    auto add_atom = [&](std::size_t c) {
        cls.push_back(c);
        free_v.push_back(cap[c]);
    };

    if (target >= 6 && rng() % 4 == 0) {
        // Benzene-like core: aromatic 6-ring of C with the odd N. Each member
        // carries two aromatic bonds (order 1.5 each, 3.0 total).
        for (int i = 0; i < 6; ++i) add_atom(rng() % 5 == 0 ? 1 : 0);
        for (std::size_t i = 0; i < 6; ++i) {
            edges.push_back({{i, (i + 1) % 6}, 3});
            free_v[i] -= 3;
        }
    } else {
        add_atom(pick_atom_class(rng));
    }

    while (cls.size() < target) {
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < cls.size(); ++i)
            if (free_v[i] > 0) open.push_back(i);
        if (open.empty()) break; // saturated (e.g. a lone F)
        std::size_t host = open[rng() % open.size()];
        std::size_t c = pick_atom_class(rng);
        int max_order = std::min({free_v[host], cap[c], 3});
        int order = 1;
        if (max_order >= 2 && rng() % 4 == 0) order = 2;
        if (max_order >= 3 && order == 2 && rng() % 3 == 0) order = 3;
        add_atom(c);
        edges.push_back({{host, cls.size() - 1}, static_cast<std::size_t>(order - 1)});
        free_v[host] -= order;
        free_v.back() -= order;
    }

    if (cls.size() >= 4 && rng() % 3 == 0) {
        // Try one single-bond ring closure between open, non-adjacent atoms.
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < cls.size(); ++i)
            if (free_v[i] > 0) open.push_back(i);
        if (open.size() >= 2) {
            std::size_t i = open[rng() % open.size()];
            std::size_t j = open[rng() % open.size()];
            if (i != j) {
                bool adjacent = false;
                for (const auto& e : edges)
                    if ((e.first.first == i && e.first.second == j) ||
                        (e.first.first == j && e.first.second == i))
                        adjacent = true;
                if (!adjacent) {
                    edges.push_back({{i, j}, 0});
                    --free_v[i];
                    --free_v[j];
                }
            }
        }
    }

    graphvae::DiscreteGraph g = graphvae::DiscreteGraph::from_nodes(cls, de, dn);
    for (const auto& e : edges) g.add_edge(e.first.first, e.first.second, e.second);
    return g;
}

inline std::vector<graphvae::DiscreteGraph> random_molecules(std::mt19937_64& rng,
                                                             std::size_t count,
                                                             std::size_t max_n) {
    std::vector<graphvae::DiscreteGraph> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_molecule(rng, max_n));
    return out;
}

inline void write_json_dataset(const std::string& path,
                               const std::vector<graphvae::DiscreteGraph>& graphs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& g : graphs) arr.push_back(graphvae::to_json(g));
    std::ofstream out(path, std::ios::trunc);
    out << arr.dump() << "\n";
}

} // namespace testsupport
