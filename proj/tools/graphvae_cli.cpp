// Command-line front end: train, sample, interpolate, plane, bench-matching,
// eval-elbo. Machine-readable outputs go to files under --out-dir; progress
// goes to stderr. Every command is deterministic given (config, seed, data).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphvae/data.hpp"
#include "graphvae/eval.hpp"
#include "graphvae/model.hpp"
#include "graphvae/train.hpp"

namespace gv = graphvae;
namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return 0;
    std::uint64_t h = 1469598103934665603ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!in) break;
    }
    return h;
}

void write_atomic(const std::string& path, const std::string& contents) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << contents;
    }
    fs::rename(tmp, path);
}

struct CommonFlags {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool conditional = false;
    bool implicit_node_prob = false;
    bool unregularized = false;
};

gv::ExperimentConfig resolve_config(const CommonFlags& flags) {
    gv::ExperimentConfig cfg;
    if (!flags.config_path.empty()) cfg = gv::ExperimentConfig::load(flags.config_path);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.threads) cfg.threads = *flags.threads;
    if (flags.conditional) cfg.conditional = true;
    if (flags.implicit_node_prob) cfg.implicit_node_prob = true;
    if (flags.unregularized) cfg.unregularized = true;
    return cfg;
}

gv::ModelConfig model_config(const gv::ExperimentConfig& cfg) {
    gv::ModelConfig mc;
    mc.k = cfg.k;
    mc.de = cfg.de();
    mc.dn = cfg.dn();
    mc.latent = cfg.latent;
    mc.encoder_channels = cfg.encoder_channels;
    mc.pool_hidden = cfg.pool_hidden;
    mc.decoder_channels = cfg.decoder_channels;
    mc.conditional = cfg.conditional;
    mc.label_dim = cfg.conditional ? static_cast<int>(cfg.dn()) : 0;
    mc.implicit_node_prob = cfg.implicit_node_prob;
    return mc;
}

gv::TrainOptions train_options(const gv::ExperimentConfig& cfg) {
    gv::TrainOptions opts;
    opts.weights = {cfg.lambda_a, cfg.lambda_e, cfg.lambda_f,
                    cfg.unregularized ? 0.0 : cfg.kl_weight};
    opts.adam = {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
    opts.mpm_iterations = cfg.mpm_iterations;
    opts.batch_size = cfg.batch_size;
    opts.threads = cfg.threads;
    opts.unregularized = cfg.unregularized;
    return opts;
}

std::vector<gv::MoleculeRecord> load_records(const std::string& path,
                                             const gv::ExperimentConfig& cfg,
                                             gv::LoadReport& report) {
    auto records = gv::load_dataset(path, cfg, report);
    std::cerr << "loaded " << records.size() << " records from " << path << " (parsed "
              << report.parse.parsed << ", skipped " << report.parse.skipped
              << ", oversized " << report.oversized << ", invalid " << report.invalid
              << ")\n";
    for (const auto& [reason, count] : report.parse.skip_reasons)
        std::cerr << "  skip: " << reason << " x" << count << "\n";
    return records;
}

gv::GraphLabel parse_label(const std::string& s) {
    gv::GraphLabel l;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) l.y.push_back(std::stoi(item));
    return l;
}

int cmd_train(const CommonFlags& flags) {
    auto wall_start = std::chrono::steady_clock::now();
    gv::ExperimentConfig cfg = resolve_config(flags);
    if (cfg.dataset.empty()) {
        std::cerr << "error: config is missing 'dataset'\n";
        return 2;
    }
    gv::LoadReport report;
    auto records = load_records(cfg.dataset, cfg, report);
    gv::DatasetSplit split = gv::split(records.size(), cfg.seed, cfg.test_size, cfg.val_size);
    if (split.train.empty()) {
        std::cerr << "error: empty training split\n";
        return 2;
    }

    gv::GraphVae model(model_config(cfg), cfg.seed);
    gv::Trainer trainer(model, train_options(cfg), cfg.seed + 1);

    nlohmann::json curve = nlohmann::json::array();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        gv::StepLosses train_loss = trainer.train_epoch(records, split.train);
        double val_elbo = 0.0;
        if (!split.validation.empty()) {
            gv::StepLosses val = trainer.evaluate_all(records, split.validation);
            val_elbo = -(val.reconstruction +
                         (cfg.unregularized ? 0.0 : cfg.kl_weight * val.kl));
        }
        std::cerr << "epoch " << (epoch + 1) << "/" << cfg.epochs << " train_loss "
                  << train_loss.total << " recon " << train_loss.reconstruction << " kl "
                  << train_loss.kl << " val_elbo " << val_elbo << "\n";
        curve.push_back({{"epoch", epoch + 1},
                         {"train_loss", train_loss.total},
                         {"train_recon", train_loss.reconstruction},
                         {"train_kl", train_loss.kl},
                         {"val_elbo", val_elbo}});
    }

    fs::create_directories(flags.out_dir);
    std::string ckpt_path = (fs::path(flags.out_dir) / "checkpoint.bin").string();
    gv::save_checkpoint(model, ckpt_path);

    auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start);
    nlohmann::json manifest = {
        {"command", "train"},
        {"config", cfg.str()},
        {"seed", cfg.seed},
        {"dataset", cfg.dataset},
        {"dataset_fnv1a", fnv1a_file(cfg.dataset)},
        {"records", records.size()},
        {"skipped", report.parse.skipped},
        {"oversized", report.oversized},
        {"invalid", report.invalid},
        {"loss_curve", std::move(curve)},
        {"wall_seconds", wall.count()},
        {"artifacts", {{"checkpoint", ckpt_path}}}};
    write_atomic((fs::path(flags.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
    std::cerr << "checkpoint written to " << ckpt_path << "\n";
    return 0;
}

int cmd_sample(const CommonFlags& flags, const std::string& ckpt, std::size_t n_s,
               const std::string& label_str, const std::string& dataset) {
    gv::ExperimentConfig cfg = resolve_config(flags);
    gv::GraphVae model = gv::load_checkpoint(ckpt);
    if (!label_str.empty() && !model.config().conditional) {
        std::cerr << "error: --label given but the checkpoint is unconditional\n";
        return 2;
    }
    if (label_str.empty() && model.config().conditional) {
        std::cerr << "error: conditional checkpoint requires --label\n";
        return 2;
    }
    gv::AtomVocabulary atoms =
        model.config().dn == 9 ? gv::AtomVocabulary::zinc() : gv::AtomVocabulary::qm9();
    gv::BondVocabulary bonds = gv::BondVocabulary::default4();

    std::unordered_set<std::string> keys;
    if (!dataset.empty()) {
        gv::ExperimentConfig dcfg = cfg;
        dcfg.k = model.config().k;
        dcfg.vocabulary = model.config().dn == 9 ? "zinc" : "qm9";
        gv::LoadReport report;
        for (const auto& r : load_records(dataset, dcfg, report)) keys.insert(r.key);
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<gv::LabelFrequency> labels;
    if (!label_str.empty()) labels.push_back({parse_label(label_str), 1.0});
    gv::QualityReport report =
        gv::quality_metrics(model, labels, n_s, keys, atoms, bonds, rng);

    // Re-draw the same samples for the JSON dump (same rng stream layout).
    std::mt19937_64 rng2(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const gv::GraphLabel* y = labels.empty() ? nullptr : &labels[0].label;
    nlohmann::json graphs = nlohmann::json::array();
    std::size_t c = static_cast<std::size_t>(model.config().latent);
    for (std::size_t s = 0; s < n_s; ++s) {
        gv::Tensor z({1, c});
        for (double& v : z.vec()) v = normal(rng2);
        graphs.push_back(gv::to_json(gv::point_estimate(model.decode(z, y), true)));
    }

    fs::create_directories(flags.out_dir);
    write_atomic((fs::path(flags.out_dir) / "samples.json").string(), graphs.dump() + "\n");
    write_atomic((fs::path(flags.out_dir) / "quality.csv").string(), gv::quality_csv(report));
    std::cerr << "valid " << report.aggregate.valid << " accurate " << report.aggregate.accurate
              << " unique " << report.aggregate.unique << " novel " << report.aggregate.novel
              << " (novelty index size " << report.novelty_index_size << ")\n";
    return 0;
}

int cmd_interpolate(const CommonFlags& flags, const std::string& ckpt,
                    const std::string& dataset, std::size_t i1, std::size_t i2,
                    std::size_t steps) {
    gv::ExperimentConfig cfg = resolve_config(flags);
    gv::GraphVae model = gv::load_checkpoint(ckpt);
    cfg.k = model.config().k;
    cfg.vocabulary = model.config().dn == 9 ? "zinc" : "qm9";
    gv::LoadReport report;
    auto records = load_records(dataset, cfg, report);
    if (i1 >= records.size() || i2 >= records.size()) {
        std::cerr << "error: record index out of range (have " << records.size() << ")\n";
        return 2;
    }
    auto cells = gv::interpolate_line(model, records[i1].graph, records[i2].graph, steps,
                                      cfg.atom_vocab(), gv::BondVocabulary::default4());
    fs::create_directories(flags.out_dir);
    write_atomic((fs::path(flags.out_dir) / "interpolation.csv").string(),
                 gv::traversal_csv(cells));
    return 0;
}

int cmd_plane(const CommonFlags& flags, const std::string& ckpt, double extent,
              std::size_t grid, const std::string& label_str) {
    gv::ExperimentConfig cfg = resolve_config(flags);
    gv::GraphVae model = gv::load_checkpoint(ckpt);
    if (!label_str.empty() && !model.config().conditional) {
        std::cerr << "error: --label given but the checkpoint is unconditional\n";
        return 2;
    }
    gv::AtomVocabulary atoms =
        model.config().dn == 9 ? gv::AtomVocabulary::zinc() : gv::AtomVocabulary::qm9();
    std::mt19937_64 rng(cfg.seed);
    gv::GraphLabel label;
    const gv::GraphLabel* y = nullptr;
    if (!label_str.empty()) {
        label = parse_label(label_str);
        y = &label;
    }
    gv::Tensor center({1, static_cast<std::size_t>(model.config().latent)});
    auto cells = gv::traverse_plane(model, center, extent, grid, y, atoms,
                                    gv::BondVocabulary::default4(), rng);
    fs::create_directories(flags.out_dir);
    write_atomic((fs::path(flags.out_dir) / "plane.csv").string(), gv::traversal_csv(cells));
    return 0;
}

int cmd_bench_matching(const CommonFlags& flags, const std::string& dataset,
                       const std::string& k_grid_str, const std::string& eps_grid_str,
                       std::size_t trials) {
    gv::ExperimentConfig cfg = resolve_config(flags);
    std::vector<std::size_t> k_grid;
    for (int v : gv::ExperimentConfig::parse_int_list(k_grid_str))
        k_grid.push_back(static_cast<std::size_t>(v));
    std::vector<double> eps_grid;
    {
        std::stringstream ss(eps_grid_str);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) eps_grid.push_back(std::stod(item));
    }
    gv::ExperimentConfig dcfg = cfg;
    dcfg.k = *std::max_element(k_grid.begin(), k_grid.end());
    gv::LoadReport report;
    auto records = load_records(dataset, dcfg, report);
    std::mt19937_64 rng(cfg.seed);
    gv::RobustnessReport rep = gv::matching_robustness(
        records, k_grid, eps_grid, trials, cfg.mpm_iterations, rng, cfg.threads);
    for (const auto& cell : rep.cells)
        if (cell.trials == 0)
            std::cerr << "warning: empty size bucket for k=" << cell.k << "\n";
    fs::create_directories(flags.out_dir);
    write_atomic((fs::path(flags.out_dir) / "robustness.csv").string(),
                 gv::robustness_csv(rep));
    return 0;
}

int cmd_eval_elbo(const CommonFlags& flags, const std::string& ckpt,
                  const std::string& dataset) {
    gv::ExperimentConfig cfg = resolve_config(flags);
    gv::GraphVae model = gv::load_checkpoint(ckpt);
    cfg.k = model.config().k;
    cfg.vocabulary = model.config().dn == 9 ? "zinc" : "qm9";
    gv::LoadReport report;
    auto records = load_records(dataset, cfg, report);
    gv::TrainOptions opts = train_options(cfg);
    gv::Trainer trainer(model, opts, cfg.seed);
    double total = 0.0;
    for (const auto& rec : records) total += trainer.elbo(rec);
    double mean = records.empty() ? 0.0 : total / static_cast<double>(records.size());
    nlohmann::json out = {{"records", records.size()}, {"mean_elbo", mean}};
    fs::create_directories(flags.out_dir);
    write_atomic((fs::path(flags.out_dir) / "elbo.json").string(), out.dump(2) + "\n");
    std::cout << out.dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GraphVAE: variational autoencoding of small attributed graphs"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::uint64_t seed_arg = 0;
    unsigned threads_arg = 0;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", flags.config_path, "experiment config file");
        cmd->add_option("--out-dir", flags.out_dir, "output directory");
        cmd->add_option("--seed", seed_arg, "rng seed override")
            ->each([&](const std::string&) { flags.seed = seed_arg; });
        cmd->add_option("--threads", threads_arg, "worker thread cap")
            ->each([&](const std::string&) { flags.threads = threads_arg; });
        cmd->add_flag("--conditional", flags.conditional, "conditional model variant");
        cmd->add_flag("--implicit-node-prob", flags.implicit_node_prob,
                      "node probability = strongest incident edge");
        cmd->add_flag("--unregularized", flags.unregularized,
                      "deterministic encoder, no KL term");
    };

    auto* train = app.add_subcommand("train", "train a model from a config");
    add_common(train);

    std::string ckpt, label_str, dataset;
    std::size_t n_s = 1000;
    auto* sample = app.add_subcommand("sample", "sample from the prior and score quality");
    add_common(sample);
    sample->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    sample->add_option("--n", n_s, "number of samples");
    sample->add_option("--label", label_str, "label histogram, e.g. 3,0,1,0");
    sample->add_option("--dataset", dataset, "dataset for the novelty index");

    std::size_t idx1 = 0, idx2 = 1, steps = 8;
    auto* interp = app.add_subcommand("interpolate", "decode along a latent line");
    add_common(interp);
    interp->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    interp->add_option("--dataset", dataset, "dataset with endpoint graphs")->required();
    interp->add_option("--i", idx1, "first record index");
    interp->add_option("--j", idx2, "second record index");
    interp->add_option("--steps", steps, "points on the line");

    double extent = 5.0;
    std::size_t grid = 13;
    auto* plane = app.add_subcommand("plane", "decode a random latent 2D plane");
    add_common(plane);
    plane->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    plane->add_option("--extent", extent, "half-width of the grid");
    plane->add_option("--grid", grid, "grid points per side");
    plane->add_option("--label", label_str, "label histogram for conditional models");

    std::string k_grid_str = "15,20", eps_grid_str = "0,0.4,0.8";
    std::size_t trials = 100;
    auto* bench = app.add_subcommand("bench-matching", "noisy self-matching benchmark");
    add_common(bench);
    bench->add_option("--dataset", dataset, "graph dataset")->required();
    bench->add_option("--k-grid", k_grid_str, "comma-separated k values");
    bench->add_option("--eps-grid", eps_grid_str, "comma-separated noise levels");
    bench->add_option("--trials", trials, "trials per cell");

    auto* elbo = app.add_subcommand("eval-elbo", "mean ELBO over a dataset");
    add_common(elbo);
    elbo->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    elbo->add_option("--dataset", dataset, "dataset to evaluate")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(flags);
        if (sample->parsed()) return cmd_sample(flags, ckpt, n_s, label_str, dataset);
        if (interp->parsed()) return cmd_interpolate(flags, ckpt, dataset, idx1, idx2, steps);
        if (plane->parsed()) return cmd_plane(flags, ckpt, extent, grid, label_str);
        if (bench->parsed())
            return cmd_bench_matching(flags, dataset, k_grid_str, eps_grid_str, trials);
        if (elbo->parsed()) return cmd_eval_elbo(flags, ckpt, dataset);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
