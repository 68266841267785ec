#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "graphvae/chem.hpp"
#include "graphvae/data.hpp"
#include "graphvae/matching.hpp"
#include "graphvae/model.hpp"

namespace graphvae {

// ---------------------------------------------------------------- quality

struct QualityRow {
    std::string label;     // histogram string, or "*" for unconditional
    double freq = 1.0;
    double valid = 0.0;
    double accurate = 0.0;
    double unique = 0.0;
    double novel = 0.0;
    std::size_t n_s = 0;
};

struct QualityReport {
    std::vector<QualityRow> rows;
    QualityRow aggregate; // frequency-weighted
    std::size_t novelty_index_size = 0;
};

/// Valid/Accurate/Unique/Novel over an explicit sample list. Accurate
/// requires validity plus (when a target label is given) a matching atom
/// histogram; Unique and Novel are computed over the accurate list's
/// canonical keys and default to 0 when it is empty.
inline QualityRow quality_from_samples(const std::vector<DiscreteGraph>& samples,
                                       const GraphLabel* target,
                                       const std::unordered_set<std::string>& dataset_keys,
                                       const AtomVocabulary& atoms,
                                       const BondVocabulary& bonds) {
    QualityRow row;
    row.n_s = samples.size();
    row.label = target ? target->str() : "*";
    if (samples.empty()) return row;
    std::size_t n_valid = 0, n_accurate = 0;
    std::vector<std::string> correct_keys;
    for (const DiscreteGraph& g : samples) {
        if (!check_valid(g, atoms, bonds).ok) continue;
        ++n_valid;
        if (target && !(label_of(g) == *target)) continue;
        ++n_accurate;
        correct_keys.push_back(canonical_key(g));
    }
    double ns = static_cast<double>(samples.size());
    row.valid = static_cast<double>(n_valid) / ns;
    row.accurate = static_cast<double>(n_accurate) / ns;
    if (!correct_keys.empty()) {
        std::set<std::string> uniq(correct_keys.begin(), correct_keys.end());
        row.unique = static_cast<double>(uniq.size()) / static_cast<double>(correct_keys.size());
        std::size_t known = 0;
        for (const std::string& k : uniq)
            if (dataset_keys.count(k)) ++known;
        row.novel = 1.0 - static_cast<double>(known) / static_cast<double>(uniq.size());
    }
    return row;
}

struct LabelFrequency {
    GraphLabel label;
    double freq;
};

/// Draw n_s prior samples per label, decode point estimates (spanning-tree
/// connected), and score them. Unconditional models pass an empty label
/// list and get a single "*" row.
inline QualityReport quality_metrics(GraphVae& model,
                                     const std::vector<LabelFrequency>& labels,
                                     std::size_t n_s,
                                     const std::unordered_set<std::string>& dataset_keys,
                                     const AtomVocabulary& atoms,
                                     const BondVocabulary& bonds,
                                     std::mt19937_64& rng) {
    QualityReport report;
    report.novelty_index_size = dataset_keys.size();
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t c = static_cast<std::size_t>(model.config().latent);
    auto sample_for = [&](const GraphLabel* y) {
        std::vector<DiscreteGraph> samples;
        samples.reserve(n_s);
        for (std::size_t s = 0; s < n_s; ++s) {
            Tensor z({1, c});
            for (double& v : z.vec()) v = normal(rng);
            samples.push_back(point_estimate(model.decode(z, y), /*connect=*/true));
        }
        return samples;
    };
    if (labels.empty()) {
        report.rows.push_back(quality_from_samples(sample_for(nullptr), nullptr,
                                                   dataset_keys, atoms, bonds));
        report.aggregate = report.rows[0];
        return report;
    }
    report.aggregate.label = "aggregate";
    report.aggregate.n_s = n_s * labels.size();
    for (const LabelFrequency& lf : labels) {
        QualityRow row = quality_from_samples(sample_for(&lf.label), &lf.label,
                                              dataset_keys, atoms, bonds);
        row.freq = lf.freq;
        report.aggregate.valid += row.valid * lf.freq;
        report.aggregate.accurate += row.accurate * lf.freq;
        report.aggregate.unique += row.unique * lf.freq;
        report.aggregate.novel += row.novel * lf.freq;
        report.rows.push_back(std::move(row));
    }
    return report;
}

// ------------------------------------------------------------- robustness

enum class NoiseKind { A, E, F };

inline char noise_kind_name(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::A: return 'A';
        case NoiseKind::E: return 'E';
        default: return 'F';
    }
}

/// Degenerate probabilistic copy of g padded to k nodes with Gaussian noise
/// on one tensor, truncated and renormalized so the probabilistic reading
/// survives: Ã clamps to [0,1], attribute rows clamp to [0,∞) and
/// renormalize (collapsed rows reset to uniform). Symmetry is preserved by
/// perturbing the triangular part only.
inline ProbabilisticGraph noisy_copy(const DiscreteGraph& g, std::size_t k, NoiseKind kind,
                                     double eps, std::mt19937_64& rng) {
    ProbabilisticGraph pg = ProbabilisticGraph::degenerate(g, k);
    if (eps <= 0.0) return pg;
    std::normal_distribution<double> noise(0.0, eps);
    auto renorm = [](double* row, std::size_t len) {
        double sum = 0.0;
        for (std::size_t l = 0; l < len; ++l) {
            row[l] = std::max(row[l], 0.0);
            sum += row[l];
        }
        if (sum <= 0.0) {
            for (std::size_t l = 0; l < len; ++l) row[l] = 1.0 / static_cast<double>(len);
        } else {
            for (std::size_t l = 0; l < len; ++l) row[l] /= sum;
        }
    };
    switch (kind) {
        case NoiseKind::A:
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = a; b < k; ++b) {
                    double v = std::clamp(pg.A.at(a, b) + noise(rng), 0.0, 1.0);
                    pg.A.at(a, b) = pg.A.at(b, a) = v;
                }
            break;
        case NoiseKind::E:
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = a; b < k; ++b) {
                    for (std::size_t l = 0; l < pg.de; ++l) pg.E.at(a, b, l) += noise(rng);
                    renorm(&pg.E.at(a, b, 0), pg.de);
                    for (std::size_t l = 0; l < pg.de; ++l) pg.E.at(b, a, l) = pg.E.at(a, b, l);
                }
            break;
        case NoiseKind::F:
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t c = 0; c < pg.dn; ++c) pg.F.at(a, c) += noise(rng);
                renorm(&pg.F.at(a, 0), pg.dn);
            }
            break;
    }
    return pg;
}

struct RobustnessCell {
    NoiseKind kind;
    double eps;
    std::size_t k;
    double accuracy; // NaN when the size bucket was empty
    std::size_t trials;
};

struct RobustnessReport {
    std::vector<RobustnessCell> cells;

    double accuracy_at(NoiseKind kind, double eps, std::size_t k) const {
        for (const auto& c : cells)
            if (c.kind == kind && c.eps == eps && c.k == k) return c.accuracy;
        throw std::out_of_range("no such robustness cell");
    }
};

/// Self-matching under noise: sample graphs of size up to k, match each
/// against its noisy probabilistic copy, and score how well the assignment
/// reconstructs the graph from itself.
inline RobustnessReport matching_robustness(const std::vector<MoleculeRecord>& records,
                                            const std::vector<std::size_t>& k_grid,
                                            const std::vector<double>& eps_grid,
                                            std::size_t trials, int mpm_iterations,
                                            std::mt19937_64& rng, unsigned threads = 1) {
    RobustnessReport report;
    std::vector<NoiseKind> kinds{NoiseKind::A, NoiseKind::E, NoiseKind::F};
    for (std::size_t k : k_grid) {
        std::vector<const DiscreteGraph*> bucket;
        for (const auto& r : records)
            if (r.graph.n <= k && r.graph.n > 0) bucket.push_back(&r.graph);
        for (std::size_t kidx = 0; kidx < kinds.size(); ++kidx) {
            NoiseKind kind = kinds[kidx];
            for (double eps : eps_grid) {
                if (eps == 0.0 && kidx > 0) continue; // zero row is kind-independent
                RobustnessCell cell{kind, eps, k, std::nan(""), 0};
                if (!bucket.empty()) {
                    // Pre-draw per-trial inputs so the result is independent
                    // of the parallel schedule.
                    std::vector<const DiscreteGraph*> gs(trials);
                    std::vector<ProbabilisticGraph> noisy(trials);
                    for (std::size_t t = 0; t < trials; ++t) {
                        gs[t] = bucket[rng() % bucket.size()];
                        noisy[t] = noisy_copy(*gs[t], k, kind, eps, rng);
                    }
                    std::vector<double> acc(trials);
                    parallel_for(trials, threads, [&](std::size_t t) {
                        auto sigma = match_graphs(*gs[t], noisy[t], mpm_iterations);
                        acc[t] = self_match_accuracy(*gs[t], sigma, k);
                    });
                    double mean = 0.0;
                    for (double a : acc) mean += a;
                    cell.accuracy = mean / static_cast<double>(trials);
                    cell.trials = trials;
                }
                report.cells.push_back(cell);
            }
        }
    }
    return report;
}

// -------------------------------------------------------------- traversal

enum class CellClass { invalid, valid_wrong_label, valid_correct };

inline const char* cell_class_name(CellClass c) {
    switch (c) {
        case CellClass::invalid: return "invalid";
        case CellClass::valid_wrong_label: return "valid-wrong-label";
        default: return "valid-correct";
    }
}

struct TraversalCell {
    std::size_t gi = 0, gj = 0; // grid coordinates (gj unused on a line)
    double u = 0.0, v = 0.0;    // plane coordinates
    DiscreteGraph graph;
    std::string key;
    CellClass cls = CellClass::invalid;
};

inline CellClass classify_cell(const DiscreteGraph& g, const GraphLabel* target,
                               const AtomVocabulary& atoms, const BondVocabulary& bonds) {
    if (!check_valid(g, atoms, bonds).ok) return CellClass::invalid;
    if (target && !(label_of(g) == *target)) return CellClass::valid_wrong_label;
    return CellClass::valid_correct;
}

/// Two random orthonormal directions spanning a plane through center;
/// regular grid within ±extent along both, decoded to point estimates.
inline std::vector<TraversalCell> traverse_plane(GraphVae& model, const Tensor& center,
                                                 double extent, std::size_t grid_size,
                                                 const GraphLabel* y,
                                                 const AtomVocabulary& atoms,
                                                 const BondVocabulary& bonds,
                                                 std::mt19937_64& rng,
                                                 Tensor* dir1_out = nullptr,
                                                 Tensor* dir2_out = nullptr) {
    if (grid_size < 1) throw std::invalid_argument("traverse_plane: empty grid");
    std::size_t c = static_cast<std::size_t>(model.config().latent);
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor d1({1, c}), d2({1, c});
    // Gram-Schmidt on two Gaussian draws.
    double n1 = 0.0;
    for (double& v : d1.vec()) {
        v = normal(rng);
        n1 += v * v;
    }
    n1 = std::sqrt(n1);
    for (double& v : d1.vec()) v /= n1;
    double dot = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        d2[i] = normal(rng);
        dot += d2[i] * d1[i];
    }
    double n2 = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        d2[i] -= dot * d1[i];
        n2 += d2[i] * d2[i];
    }
    n2 = std::sqrt(n2);
    for (double& v : d2.vec()) v /= n2;
    if (dir1_out) *dir1_out = d1;
    if (dir2_out) *dir2_out = d2;

    std::vector<TraversalCell> cells;
    for (std::size_t gi = 0; gi < grid_size; ++gi) {
        for (std::size_t gj = 0; gj < grid_size; ++gj) {
            double u = grid_size == 1 ? 0.0
                                      : -extent + 2.0 * extent * static_cast<double>(gi) /
                                                      static_cast<double>(grid_size - 1);
            double v = grid_size == 1 ? 0.0
                                      : -extent + 2.0 * extent * static_cast<double>(gj) /
                                                      static_cast<double>(grid_size - 1);
            Tensor z({1, c});
            for (std::size_t i = 0; i < c; ++i) z[i] = center[i] + u * d1[i] + v * d2[i];
            TraversalCell cell;
            cell.gi = gi;
            cell.gj = gj;
            cell.u = u;
            cell.v = v;
            cell.graph = point_estimate(model.decode(z, y), /*connect=*/true);
            cell.key = canonical_key(cell.graph);
            cell.cls = classify_cell(cell.graph, y, atoms, bonds);
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

/// Linear interpolation between the posterior means of two graphs.
inline std::vector<TraversalCell> interpolate_line(GraphVae& model, const DiscreteGraph& g1,
                                                   const DiscreteGraph& g2, std::size_t steps,
                                                   const AtomVocabulary& atoms,
                                                   const BondVocabulary& bonds) {
    if (steps < 2) throw std::invalid_argument("interpolate_line: steps must be >= 2");
    const GraphLabel* y = nullptr;
    GraphLabel l1 = label_of(g1), l2 = label_of(g2);
    if (model.config().conditional) {
        if (!(l1 == l2))
            throw std::invalid_argument("interpolate_line: labels differ in conditional mode");
        y = &l1;
    }
    Tensor mu1 = model.encode(g1, y).mu;
    Tensor mu2 = model.encode(g2, y).mu;
    std::vector<TraversalCell> cells;
    for (std::size_t s = 0; s < steps; ++s) {
        double t = static_cast<double>(s) / static_cast<double>(steps - 1);
        Tensor z({1, mu1.size()});
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = (1.0 - t) * mu1[i] + t * mu2[i];
        TraversalCell cell;
        cell.gi = s;
        cell.u = t;
        cell.graph = point_estimate(model.decode(z, y), /*connect=*/true);
        cell.key = canonical_key(cell.graph);
        cell.cls = classify_cell(cell.graph, y, atoms, bonds);
        cells.push_back(std::move(cell));
    }
    return cells;
}

// ------------------------------------------------------------------- CSV

inline std::string quality_csv(const QualityReport& report) {
    std::ostringstream os;
    os << "label,freq,valid,accurate,unique,novel,n_s\n";
    auto row = [&](const QualityRow& r) {
        os << r.label << ',' << r.freq << ',' << r.valid << ',' << r.accurate << ','
           << r.unique << ',' << r.novel << ',' << r.n_s << '\n';
    };
    for (const auto& r : report.rows) row(r);
    if (report.rows.size() > 1) row(report.aggregate);
    return os.str();
}

inline std::string robustness_csv(const RobustnessReport& report) {
    std::ostringstream os;
    os << "kind,eps,k,accuracy,trials\n";
    for (const auto& c : report.cells) {
        os << noise_kind_name(c.kind) << ',' << c.eps << ',' << c.k << ',';
        if (std::isnan(c.accuracy))
            os << "absent";
        else
            os << c.accuracy;
        os << ',' << c.trials << '\n';
    }
    return os.str();
}

inline std::string traversal_csv(const std::vector<TraversalCell>& cells) {
    std::ostringstream os;
    os << "i,j,u,v,classification,nodes,key_hex\n";
    for (const auto& c : cells) {
        os << c.gi << ',' << c.gj << ',' << c.u << ',' << c.v << ','
           << cell_class_name(c.cls) << ',' << c.graph.n << ',';
        static const char* hex = "0123456789abcdef";
        for (unsigned char ch : c.key) {
            os << hex[ch >> 4] << hex[ch & 0xf];
        }
        os << '\n';
    }
    return os.str();
}

} // namespace graphvae
