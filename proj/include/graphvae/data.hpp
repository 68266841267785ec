#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphvae/chem.hpp"
#include "graphvae/graph.hpp"

namespace graphvae {

struct ParseReport {
    std::size_t total = 0;
    std::size_t parsed = 0;
    std::size_t skipped = 0;
    std::map<std::string, std::size_t> skip_reasons;

    void skip(const std::string& reason) {
        ++skipped;
        ++skip_reasons[reason];
    }
};

namespace detail {

struct RawRecord {
    std::vector<std::string> lines;
};

inline bool read_sdf_record(std::istream& in, RawRecord& rec) {
    rec.lines.clear();
    std::string line;
    bool any = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("$$$$", 0) == 0) return true;
        rec.lines.push_back(line);
        any = true;
    }
    return any; // last record may lack the terminator
}

inline std::vector<std::string> tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string t;
    while (iss >> t) out.push_back(t);
    return out;
}

} // namespace detail

/// Parse MDL molfile V2000 records separated by "$$$$". Hydrogens and their
/// bonds are dropped; malformed or out-of-vocabulary records are skipped and
/// counted, never fatal.
inline std::vector<MoleculeRecord> parse_sdf(std::istream& in, const AtomVocabulary& atoms,
                                             const BondVocabulary& bonds,
                                             ParseReport& report) {
    std::vector<MoleculeRecord> out;
    detail::RawRecord rec;
    while (detail::read_sdf_record(in, rec)) {
        if (rec.lines.size() < 4) {
            if (!rec.lines.empty()) {
                ++report.total;
                report.skip("truncated record");
            }
            continue;
        }
        ++report.total;
        const std::string& counts = rec.lines[3];
        if (counts.find("V3000") != std::string::npos) {
            report.skip("V3000 not supported");
            continue;
        }
        auto ct = detail::tokens(counts);
        if (ct.size() < 2) {
            report.skip("malformed counts line");
            continue;
        }
        std::size_t n_atoms = 0, n_bonds = 0;
        try {
            // Fixed 3-column fields; fall back to tokens for short lines.
            if (counts.size() >= 6) {
                n_atoms = static_cast<std::size_t>(std::stoul(counts.substr(0, 3)));
                n_bonds = static_cast<std::size_t>(std::stoul(counts.substr(3, 3)));
            } else {
                n_atoms = static_cast<std::size_t>(std::stoul(ct[0]));
                n_bonds = static_cast<std::size_t>(std::stoul(ct[1]));
            }
        } catch (const std::exception&) {
            report.skip("malformed counts line");
            continue;
        }
        if (rec.lines.size() < 4 + n_atoms + n_bonds) {
            report.skip("truncated record");
            continue;
        }
        std::vector<int> atom_class(n_atoms, -1); // -1 = hydrogen (dropped)
        bool bad = false;
        std::string bad_reason;
        for (std::size_t i = 0; i < n_atoms && !bad; ++i) {
            auto at = detail::tokens(rec.lines[4 + i]);
            if (at.size() < 4) {
                bad = true;
                bad_reason = "malformed atom line";
                break;
            }
            const std::string& sym = at[3];
            if (sym == "H") continue;
            int cls = atoms.index_of(sym);
            if (cls < 0) {
                bad = true;
                bad_reason = "atom '" + sym + "' not in vocabulary";
                break;
            }
            atom_class[i] = cls;
        }
        if (bad) {
            report.skip(bad_reason);
            continue;
        }
        // Re-index heavy atoms.
        std::vector<int> heavy_index(n_atoms, -1);
        std::vector<std::size_t> classes;
        for (std::size_t i = 0; i < n_atoms; ++i)
            if (atom_class[i] >= 0) {
                heavy_index[i] = static_cast<int>(classes.size());
                classes.push_back(static_cast<std::size_t>(atom_class[i]));
            }
        if (classes.empty()) {
            report.skip("no heavy atoms");
            continue;
        }
        DiscreteGraph g = DiscreteGraph::from_nodes(classes, bonds.size(), atoms.size());
        for (std::size_t b = 0; b < n_bonds && !bad; ++b) {
            const std::string& line = rec.lines[4 + n_atoms + b];
            std::size_t a1 = 0, a2 = 0;
            int type = 0;
            try {
                if (line.size() >= 9) {
                    a1 = static_cast<std::size_t>(std::stoul(line.substr(0, 3)));
                    a2 = static_cast<std::size_t>(std::stoul(line.substr(3, 3)));
                    type = std::stoi(line.substr(6, 3));
                } else {
                    auto bt = detail::tokens(line);
                    if (bt.size() < 3) throw std::invalid_argument("short");
                    a1 = static_cast<std::size_t>(std::stoul(bt[0]));
                    a2 = static_cast<std::size_t>(std::stoul(bt[1]));
                    type = std::stoi(bt[2]);
                }
            } catch (const std::exception&) {
                bad = true;
                bad_reason = "malformed bond line";
                break;
            }
            if (a1 < 1 || a2 < 1 || a1 > n_atoms || a2 > n_atoms || a1 == a2) {
                bad = true;
                bad_reason = "bond atom index out of range";
                break;
            }
            if (type < 1 || type > 4) {
                bad = true;
                bad_reason = "unsupported bond type " + std::to_string(type);
                break;
            }
            int h1 = heavy_index[a1 - 1], h2 = heavy_index[a2 - 1];
            if (h1 < 0 || h2 < 0) continue; // bond to hydrogen
            g.add_edge(static_cast<std::size_t>(h1), static_cast<std::size_t>(h2),
                       static_cast<std::size_t>(type - 1));
        }
        if (bad) {
            report.skip(bad_reason);
            continue;
        }
        ++report.parsed;
        out.push_back(MoleculeRecord::from_graph(std::move(g)));
    }
    return out;
}

inline std::vector<MoleculeRecord> parse_sdf_file(const std::string& path,
                                                  const AtomVocabulary& atoms,
                                                  const BondVocabulary& bonds,
                                                  ParseReport& report) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_sdf(in, atoms, bonds, report);
}

/// JSON dataset: an array of canonical DiscreteGraph objects.
inline std::vector<MoleculeRecord> parse_json_graphs(std::istream& in, ParseReport& report) {
    nlohmann::json j;
    in >> j;
    std::vector<MoleculeRecord> out;
    for (const auto& item : j) {
        ++report.total;
        try {
            out.push_back(MoleculeRecord::from_graph(graph_from_json(item)));
            ++report.parsed;
        } catch (const std::exception& e) {
            report.skip(e.what());
        }
    }
    return out;
}

struct DatasetSplit {
    std::vector<std::size_t> train, validation, test;
    std::uint64_t seed = 0;
};

/// Deterministic shuffle-based split: the same seed always yields the same
/// index sets. Test indices are drawn first, then validation, rest is train.
inline DatasetSplit split(std::size_t count, std::uint64_t seed, std::size_t n_test,
                          std::size_t n_val) {
    if (n_test + n_val > count)
        throw std::invalid_argument("split: requested sizes exceed record count");
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = count; i > 1; --i) {
        std::size_t j = rng() % i; // deterministic Fisher-Yates
        std::swap(idx[i - 1], idx[j]);
    }
    DatasetSplit s;
    s.seed = seed;
    s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                        idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
    return s;
}

/// Flat key=value experiment configuration. Defaults reproduce the QM9 run
/// shape, so a bare config is a complete experiment description.
struct ExperimentConfig {
    std::string dataset;
    std::string vocabulary = "qm9"; // qm9 | zinc
    std::size_t k = 9;
    std::vector<int> encoder_channels{32, 64};
    int pool_hidden = 128;
    int latent = 40;
    std::vector<int> decoder_channels{128, 256, 512};
    double lambda_a = 1.0, lambda_e = 1.0, lambda_f = 1.0;
    double kl_weight = 1.0;
    double lr = 1e-3, beta1 = 0.5, beta2 = 0.999, adam_eps = 1e-8;
    int epochs = 25;
    int batch_size = 32;
    int mpm_iterations = 75;
    std::uint64_t seed = 1;
    std::size_t test_size = 10000;
    std::size_t val_size = 10000;
    bool conditional = false;
    bool implicit_node_prob = false;
    bool unregularized = false;
    unsigned threads = 1;
    std::size_t n_samples = 1000;

    AtomVocabulary atom_vocab() const {
        if (vocabulary == "qm9") return AtomVocabulary::qm9();
        if (vocabulary == "zinc") return AtomVocabulary::zinc();
        throw std::invalid_argument("unknown vocabulary '" + vocabulary + "'");
    }

    std::size_t dn() const { return atom_vocab().size(); }
    std::size_t de() const { return BondVocabulary::default4().size(); }

    static std::vector<int> parse_int_list(const std::string& s) {
        std::vector<int> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(std::stoi(item));
        return out;
    }

    static bool parse_bool(const std::string& s) {
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw std::invalid_argument("bad boolean value '" + s + "'");
    }

    void set(const std::string& key, const std::string& value) {
        if (key == "dataset") dataset = value;
        else if (key == "vocabulary") vocabulary = value;
        else if (key == "k") k = std::stoul(value);
        else if (key == "encoder_channels") encoder_channels = parse_int_list(value);
        else if (key == "pool_hidden") pool_hidden = std::stoi(value);
        else if (key == "latent") latent = std::stoi(value);
        else if (key == "decoder_channels") decoder_channels = parse_int_list(value);
        else if (key == "lambda_a") lambda_a = std::stod(value);
        else if (key == "lambda_e") lambda_e = std::stod(value);
        else if (key == "lambda_f") lambda_f = std::stod(value);
        else if (key == "kl_weight") kl_weight = std::stod(value);
        else if (key == "lr") lr = std::stod(value);
        else if (key == "beta1") beta1 = std::stod(value);
        else if (key == "beta2") beta2 = std::stod(value);
        else if (key == "adam_eps") adam_eps = std::stod(value);
        else if (key == "epochs") epochs = std::stoi(value);
        else if (key == "batch_size") batch_size = std::stoi(value);
        else if (key == "mpm_iterations") mpm_iterations = std::stoi(value);
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "test_size") test_size = std::stoul(value);
        else if (key == "val_size") val_size = std::stoul(value);
        else if (key == "conditional") conditional = parse_bool(value);
        else if (key == "implicit_node_prob") implicit_node_prob = parse_bool(value);
        else if (key == "unregularized") unregularized = parse_bool(value);
        else if (key == "threads") threads = static_cast<unsigned>(std::stoul(value));
        else if (key == "n_samples") n_samples = std::stoul(value);
        else throw std::invalid_argument("unknown config key '" + key + "'");
    }

    static ExperimentConfig parse(std::istream& in) {
        ExperimentConfig cfg;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto eq = line.find('=');
            if (eq == std::string::npos) {
                bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
                if (!blank)
                    throw std::invalid_argument("config line " + std::to_string(lineno) +
                                                ": expected key = value");
                continue;
            }
            auto trim = [](std::string s) {
                auto b = s.find_first_not_of(" \t\r");
                auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    static ExperimentConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config " + path);
        return parse(in);
    }

    std::string str() const {
        std::ostringstream os;
        auto list = [](const std::vector<int>& v) {
            std::string s;
            for (std::size_t i = 0; i < v.size(); ++i)
                s += (i ? "," : "") + std::to_string(v[i]);
            return s;
        };
        os << "dataset = " << dataset << "\n"
           << "vocabulary = " << vocabulary << "\n"
           << "k = " << k << "\n"
           << "encoder_channels = " << list(encoder_channels) << "\n"
           << "pool_hidden = " << pool_hidden << "\n"
           << "latent = " << latent << "\n"
           << "decoder_channels = " << list(decoder_channels) << "\n"
           << "lambda_a = " << lambda_a << "\n"
           << "lambda_e = " << lambda_e << "\n"
           << "lambda_f = " << lambda_f << "\n"
           << "kl_weight = " << kl_weight << "\n"
           << "lr = " << lr << "\n"
           << "beta1 = " << beta1 << "\n"
           << "beta2 = " << beta2 << "\n"
           << "adam_eps = " << adam_eps << "\n"
           << "epochs = " << epochs << "\n"
           << "batch_size = " << batch_size << "\n"
           << "mpm_iterations = " << mpm_iterations << "\n"
           << "seed = " << seed << "\n"
           << "test_size = " << test_size << "\n"
           << "val_size = " << val_size << "\n"
           << "conditional = " << (conditional ? "true" : "false") << "\n"
           << "implicit_node_prob = " << (implicit_node_prob ? "true" : "false") << "\n"
           << "unregularized = " << (unregularized ? "true" : "false") << "\n"
           << "threads = " << threads << "\n"
           << "n_samples = " << n_samples << "\n";
        return os.str();
    }
};

struct LoadReport {
    ParseReport parse;
    std::size_t oversized = 0; // graphs larger than k
    std::size_t invalid = 0;   // records failing the validity check
};

/// Load and filter a dataset for an experiment: parse (SDF or JSON by
/// extension), drop graphs larger than k and records failing check_valid,
/// counting both.
inline std::vector<MoleculeRecord> load_dataset(const std::string& path,
                                                const ExperimentConfig& cfg,
                                                LoadReport& report) {
    AtomVocabulary atoms = cfg.atom_vocab();
    BondVocabulary bonds = BondVocabulary::default4();
    std::vector<MoleculeRecord> raw;
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open " + path);
        raw = parse_json_graphs(in, report.parse);
    } else {
        raw = parse_sdf_file(path, atoms, bonds, report.parse);
    }
    std::vector<MoleculeRecord> out;
    for (auto& r : raw) {
        if (r.graph.n > cfg.k) {
            ++report.oversized;
            continue;
        }
        if (!check_valid(r.graph, atoms, bonds).ok) {
            ++report.invalid;
            continue;
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace graphvae
