#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphvae/graph.hpp"
#include "graphvae/nn.hpp"

namespace graphvae {

struct ModelConfig {
    std::size_t k = 9;
    std::size_t de = 4;
    std::size_t dn = 4;
    int latent = 40;
    std::vector<int> encoder_channels{32, 64};
    int pool_hidden = 128;
    std::vector<int> decoder_channels{128, 256, 512};
    bool conditional = false;
    int label_dim = 0; // = dn when conditional
    bool implicit_node_prob = false;

    nlohmann::json to_json() const {
        return {{"k", k}, {"de", de}, {"dn", dn}, {"latent", latent},
                {"encoder_channels", encoder_channels}, {"pool_hidden", pool_hidden},
                {"decoder_channels", decoder_channels}, {"conditional", conditional},
                {"label_dim", label_dim}, {"implicit_node_prob", implicit_node_prob}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.k = j.at("k").get<std::size_t>();
        c.de = j.at("de").get<std::size_t>();
        c.dn = j.at("dn").get<std::size_t>();
        c.latent = j.at("latent").get<int>();
        c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
        c.pool_hidden = j.at("pool_hidden").get<int>();
        c.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
        c.conditional = j.at("conditional").get<bool>();
        c.label_dim = j.at("label_dim").get<int>();
        c.implicit_node_prob = j.at("implicit_node_prob").get<bool>();
        return c;
    }
};

struct LatentPosterior {
    Tensor mu;    // 1×c
    Tensor sigma; // 1×c, positive
};

struct LossWeights {
    double lambda_a = 1.0;
    double lambda_e = 1.0;
    double lambda_f = 1.0;
    double kl_weight = 1.0;
};

/// Closed-form KL of N(mu, diag(sigma²)) against N(0, I).
inline double kl_divergence(const LatentPosterior& post) {
    double kl = 0.0;
    for (std::size_t l = 0; l < post.mu.size(); ++l) {
        double m = post.mu[l], s = post.sigma[l];
        kl += 0.5 * (m * m + s * s - 1.0 - 2.0 * std::log(s));
    }
    return kl;
}

/// ECC stack + gated pooling + linear head producing 2c features read as
/// mean and half-log-variance.
struct Encoder {
    ModelConfig cfg;
    std::vector<EccLayer> layers;
    GatedPool pool;
    Linear head;

    Encoder() = default;

    Encoder(const ModelConfig& cfg_, std::mt19937_64& rng) : cfg(cfg_) {
        std::size_t in = cfg.dn;
        for (int ch : cfg.encoder_channels) {
            layers.emplace_back(rng, in, static_cast<std::size_t>(ch), cfg.de);
            in = static_cast<std::size_t>(ch);
        }
        std::size_t pool_in = in + (cfg.conditional ? static_cast<std::size_t>(cfg.label_dim) : 0);
        pool = GatedPool(rng, pool_in, static_cast<std::size_t>(cfg.pool_hidden));
        head = Linear(rng, static_cast<std::size_t>(cfg.pool_hidden),
                      2 * static_cast<std::size_t>(cfg.latent));
    }

    struct Out {
        Var mu;      // 1×c
        Var halflog; // 1×c, sigma = exp(halflog)
    };

    Out forward(const DiscreteGraph& g, const GraphLabel* y, BnMode mode) {
        if ((y != nullptr) != cfg.conditional)
            throw std::invalid_argument("encoder: label presence must match conditional mode");
        if (g.n == 0) throw std::invalid_argument("encoder: empty graph");
        Var h = constant(g.F.reshaped({g.n, g.dn}));
        for (auto& layer : layers) h = layer(h, g, mode);
        if (cfg.conditional) {
            if (y->y.size() != static_cast<std::size_t>(cfg.label_dim))
                throw std::invalid_argument("encoder: label dimension mismatch");
            Tensor lab({g.n, static_cast<std::size_t>(cfg.label_dim)});
            for (std::size_t i = 0; i < g.n; ++i)
                for (std::size_t c = 0; c < lab.cols(); ++c)
                    lab.at(i, c) = static_cast<double>(y->y[c]);
            h = concat({h, constant(std::move(lab))}, 1);
        }
        Var feats = head(pool(h)); // 1×2c
        std::size_t c = static_cast<std::size_t>(cfg.latent);
        std::vector<std::size_t> lo(c), hi(c);
        for (std::size_t i = 0; i < c; ++i) {
            lo[i] = i;
            hi[i] = c + i;
        }
        return {gather(feats, lo, {1, c}), gather(feats, hi, {1, c})};
    }
};

/// MLP decoder emitting the upper-triangular parts of Ã and Ẽ plus F̃; the
/// symmetric full tensors are assembled by index mapping so symmetry holds
/// by construction. In implicit mode the diagonal of Ã is replaced by each
/// row's strongest off-diagonal entry.
struct Decoder {
    ModelConfig cfg;
    std::vector<Linear> fcs;
    std::vector<BatchNorm> bns;
    Linear a_head, e_head, f_head;

    Decoder() = default;

    Decoder(const ModelConfig& cfg_, std::mt19937_64& rng) : cfg(cfg_) {
        std::size_t in = static_cast<std::size_t>(cfg.latent) +
                         (cfg.conditional ? static_cast<std::size_t>(cfg.label_dim) : 0);
        for (int ch : cfg.decoder_channels) {
            fcs.emplace_back(rng, in, static_cast<std::size_t>(ch));
            bns.emplace_back(static_cast<std::size_t>(ch));
            in = static_cast<std::size_t>(ch);
        }
        std::size_t t = tri_count();
        a_head = Linear(rng, in, t);
        e_head = Linear(rng, in, t * cfg.de);
        f_head = Linear(rng, in, cfg.k * cfg.dn);
    }

    std::size_t tri_count() const { return cfg.k * (cfg.k + 1) / 2; }

    /// Triangle index of unordered pair (a,b), a <= b.
    std::size_t tri(std::size_t a, std::size_t b) const {
        if (a > b) std::swap(a, b);
        return a * cfg.k - a * (a - 1) / 2 + (b - a);
    }

    struct Out {
        Var A; // k×k in [0,1], symmetric
        Var E; // k²×de, rows sum to 1
        Var F; // k×dn, rows sum to 1
    };

    /// z_batch: B×(c [+ label_dim]); returns one probabilistic graph per row.
    std::vector<Out> forward(const Var& z_batch, BnMode mode) {
        Var h = z_batch;
        for (std::size_t l = 0; l < fcs.size(); ++l) h = relu(bns[l](fcs[l](h), mode));
        Var a_logits = a_head(h), e_logits = e_head(h), f_logits = f_head(h);
        std::size_t batch = z_batch->value.rows();
        std::size_t k = cfg.k, t = tri_count();
        std::vector<Out> outs;
        outs.reserve(batch);
        for (std::size_t s = 0; s < batch; ++s) {
            Var a_sig = sigmoid(slice_rows(a_logits, s, s + 1)); // 1×T
            Var a_src = a_sig;
            bool implicit = cfg.implicit_node_prob && k > 1;
            if (implicit) {
                // k×(k-1) off-diagonal entries, row max -> node probabilities.
                std::vector<std::size_t> off;
                off.reserve(k * (k - 1));
                for (std::size_t a = 0; a < k; ++a)
                    for (std::size_t b = 0; b < k; ++b)
                        if (a != b) off.push_back(tri(a, b));
                Var diag = max_axis1(gather(a_sig, std::move(off), {k, k - 1}));
                a_src = concat({a_sig, reshape(diag, {1, k})}, 1); // 1×(T+k)
            }
            std::vector<std::size_t> amap(k * k);
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < k; ++b)
                    amap[a * k + b] = (a == b && implicit) ? t + a : tri(a, b);
            Var A = gather(a_src, std::move(amap), {k, k});

            Var e_tri = softmax(reshape(slice_rows(e_logits, s, s + 1),
                                        {t, cfg.de}), 1);
            std::vector<std::size_t> emap(k * k * cfg.de);
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < k; ++b)
                    for (std::size_t l = 0; l < cfg.de; ++l)
                        emap[(a * k + b) * cfg.de + l] = tri(a, b) * cfg.de + l;
            Var E = gather(e_tri, std::move(emap), {k * k, cfg.de});

            Var F = softmax(reshape(slice_rows(f_logits, s, s + 1), {k, cfg.dn}), 1);
            outs.push_back({A, E, F});
        }
        return outs;
    }

    static ProbabilisticGraph values(const Out& out, const ModelConfig& cfg) {
        ProbabilisticGraph pg;
        pg.k = cfg.k;
        pg.de = cfg.de;
        pg.dn = cfg.dn;
        pg.A = out.A->value;
        pg.E = out.E->value.reshaped({cfg.k, cfg.k, cfg.de});
        pg.F = out.F->value;
        return pg;
    }
};

/// Matched cross-entropy reconstruction loss (negative log-likelihood). The
/// assignment sigma (input node -> predicted node) is a constant of the
/// graph; gradients flow to the decoder outputs only.
inline Var reconstruction_loss(const DiscreteGraph& g, const Decoder::Out& pg,
                               const std::vector<std::size_t>& sigma, std::size_t k,
                               const LossWeights& w) {
    if (sigma.size() != g.n)
        throw std::invalid_argument("reconstruction_loss: assignment size mismatch");
    {
        std::vector<char> used(k, 0);
        for (std::size_t a : sigma) {
            if (a >= k || used[a])
                throw std::invalid_argument("reconstruction_loss: assignment not one-to-one");
            used[a] = 1;
        }
    }
    double kd = static_cast<double>(k);

    // A' = X A X^T and the per-entry averaging weights.
    Tensor aprime({k, k}), weight({k, k});
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j)
            aprime.at(sigma[i], sigma[j]) = g.A.at(i, j);
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
            weight.at(a, b) = a == b ? 1.0 / kd : 1.0 / (kd * (kd - 1.0));
    Tensor comp = aprime; // 1 - A'
    for (double& v : comp.vec()) v = 1.0 - v;

    Var ce = add(mul(constant(std::move(aprime)), log_op(pg.A)),
                 mul(constant(std::move(comp)), log_op(affine(pg.A, -1.0, 1.0))));
    Var log_pa = sum(mul(constant(std::move(weight)), ce));
    Var loss = affine(log_pa, -w.lambda_a, 0.0);

    // Node attributes: log F̃'[i, class(i)] with F̃' = X^T F̃.
    std::vector<std::size_t> fidx(g.n);
    for (std::size_t i = 0; i < g.n; ++i)
        fidx[i] = sigma[i] * g.dn + g.node_class(i);
    Var log_pf = affine(sum(log_op(gather(pg.F, std::move(fidx), {1, g.n}))),
                        1.0 / static_cast<double>(g.n), 0.0);
    loss = add(loss, affine(log_pf, -w.lambda_f, 0.0));

    // Edge attributes over existing directed edges; ||A||1 - n slots.
    std::vector<std::size_t> eidx;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            int cls = g.edge_class(i, j);
            if (cls >= 0)
                eidx.push_back((sigma[i] * k + sigma[j]) * g.de +
                               static_cast<std::size_t>(cls));
        }
    if (!eidx.empty()) {
        double slots = static_cast<double>(eidx.size());
        Var log_pe = affine(sum(log_op(gather(pg.E, std::move(eidx), {1, eidx.size()}))),
                            1.0 / slots, 0.0);
        loss = add(loss, affine(log_pe, -w.lambda_e, 0.0));
    }
    return loss;
}

/// KL term as a graph op from the encoder heads (h = log sigma).
inline Var kl_divergence_var(const Var& mu, const Var& halflog) {
    std::size_t c = mu->value.size();
    Var t1 = sum(add(mul(mu, mu), exp_op(affine(halflog, 2.0, 0.0))));
    Var kl = affine(t1, 0.5, -0.5 * static_cast<double>(c));
    return sub(kl, sum(halflog));
}

/// Full GraphVAE model: encoder + decoder plus inference-time conveniences.
class GraphVae {
public:
    GraphVae() = default;

    GraphVae(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        if (cfg_.conditional && cfg_.label_dim == 0)
            cfg_.label_dim = static_cast<int>(cfg_.dn);
        std::mt19937_64 rng(seed);
        encoder = Encoder(cfg_, rng);
        decoder = Decoder(cfg_, rng);
    }

    const ModelConfig& config() const { return cfg_; }

    NamedTensors named_tensors() {
        NamedTensors nt;
        for (std::size_t i = 0; i < encoder.layers.size(); ++i)
            encoder.layers[i].collect("encoder.conv" + std::to_string(i), nt);
        encoder.pool.collect("encoder.pool", nt);
        encoder.head.collect("encoder.head", nt);
        for (std::size_t i = 0; i < decoder.fcs.size(); ++i) {
            decoder.fcs[i].collect("decoder.fc" + std::to_string(i), nt);
            decoder.bns[i].collect("decoder.bn" + std::to_string(i), nt);
        }
        decoder.a_head.collect("decoder.a_head", nt);
        decoder.e_head.collect("decoder.e_head", nt);
        decoder.f_head.collect("decoder.f_head", nt);
        return nt;
    }

    std::vector<Var> parameters() {
        std::vector<Var> ps;
        for (auto& [name, p] : named_tensors().params) ps.push_back(p);
        return ps;
    }

    /// Deterministic posterior of a graph (inference-mode batchnorm).
    LatentPosterior encode(const DiscreteGraph& g, const GraphLabel* y = nullptr) {
        Encoder::Out out = encoder.forward(g, y, BnMode::eval);
        LatentPosterior post;
        post.mu = out.mu->value;
        post.sigma = out.halflog->value;
        for (double& v : post.sigma.vec()) v = std::exp(v);
        return post;
    }

    /// Decode one latent point (inference-mode batchnorm).
    ProbabilisticGraph decode(const Tensor& z, const GraphLabel* y = nullptr) {
        if ((y != nullptr) != cfg_.conditional)
            throw std::invalid_argument("decode: label presence must match conditional mode");
        std::size_t c = static_cast<std::size_t>(cfg_.latent);
        if (z.size() != c) throw std::invalid_argument("decode: z dimension mismatch");
        Tensor in({1, c + (cfg_.conditional ? static_cast<std::size_t>(cfg_.label_dim) : 0)});
        for (std::size_t i = 0; i < c; ++i) in[i] = z[i];
        if (cfg_.conditional) {
            if (y->y.size() != static_cast<std::size_t>(cfg_.label_dim))
                throw std::invalid_argument("decode: label dimension mismatch");
            for (std::size_t i = 0; i < y->y.size(); ++i)
                in[c + i] = static_cast<double>(y->y[i]);
        }
        auto outs = decoder.forward(constant(std::move(in)), BnMode::eval);
        return Decoder::values(outs[0], cfg_);
    }

    Encoder encoder;
    Decoder decoder;

private:
    ModelConfig cfg_;
};

inline Tensor reparameterize(const LatentPosterior& post, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor z = post.mu;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += post.sigma[i] * normal(rng);
    return z;
}

// ---- Checkpoint container: u64 LE header length, JSON header, raw LE f64 ----

inline void save_checkpoint(GraphVae& model, const std::string& path) {
    NamedTensors nt = model.named_tensors();
    nlohmann::json manifest = nlohmann::json::array();
    std::uint64_t offset = 0;
    auto describe = [&](const std::string& name, const Tensor& t) {
        manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size() * sizeof(double);
    };
    for (auto& [name, p] : nt.params) describe(name, p->value);
    for (auto& [name, t] : nt.buffers) describe(name, *t);
    nlohmann::json header = {{"format", "graphvae-checkpoint"},
                             {"version", 1},
                             {"config", model.config().to_json()},
                             {"tensors", std::move(manifest)}};
    std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    std::uint64_t hlen = hs.size();
    char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
    out.write(lenbuf, 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    auto dump = [&](const Tensor& t) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    };
    for (auto& [name, p] : nt.params) dump(p->value);
    for (auto& [name, t] : nt.buffers) dump(*t);
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline GraphVae load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char lenbuf[8];
    in.read(lenbuf, 8);
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i)
        hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);
    if (header.at("format") != "graphvae-checkpoint")
        throw std::runtime_error("not a graphvae checkpoint: " + path);
    GraphVae model(ModelConfig::from_json(header.at("config")), /*seed=*/0);
    NamedTensors nt = model.named_tensors();
    std::map<std::string, Tensor*> slots;
    for (auto& [name, p] : nt.params) slots[name] = &p->value;
    for (auto& [name, t] : nt.buffers) slots[name] = t;
    std::streampos data_start = in.tellg();
    for (const auto& entry : header.at("tensors")) {
        std::string name = entry.at("name").get<std::string>();
        auto it = slots.find(name);
        if (it == slots.end())
            throw std::runtime_error("checkpoint tensor '" + name + "' has no slot");
        std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape != it->second->shape())
            throw std::runtime_error("checkpoint tensor '" + name + "' shape mismatch");
        in.seekg(data_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
        in.read(reinterpret_cast<char*>(it->second->data()),
                static_cast<std::streamsize>(it->second->size() * sizeof(double)));
        slots.erase(it);
    }
    if (!slots.empty())
        throw std::runtime_error("checkpoint missing tensor '" + slots.begin()->first + "'");
    if (!in) throw std::runtime_error("checkpoint read failed: " + path);
    return model;
}

} // namespace graphvae
