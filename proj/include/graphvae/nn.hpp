#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "graphvae/autodiff.hpp"
#include "graphvae/graph.hpp"

namespace graphvae {

inline Tensor glorot_uniform(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out,
                             std::vector<std::size_t> shape) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t(std::move(shape));
    for (double& v : t.vec()) v = dist(rng);
    return t;
}

/// Collected named tensors of a model, for checkpoints.
struct NamedTensors {
    std::vector<std::pair<std::string, Var>> params;
    std::vector<std::pair<std::string, Tensor*>> buffers;

    void add(const std::string& name, const Var& p) { params.emplace_back(name, p); }
    void add(const std::string& name, Tensor* t) { buffers.emplace_back(name, t); }
};

struct Linear {
    Var W; // in×out
    Var b; // 1×out, absent if bias-free

    Linear() = default;

    Linear(std::mt19937_64& rng, std::size_t in, std::size_t out, bool bias = true) {
        W = parameter(glorot_uniform(rng, in, out, {in, out}));
        if (bias) b = parameter(Tensor({1, out}));
    }

    Var operator()(const Var& x) const {
        Var y = matmul(x, W);
        return b ? add_rowwise(y, b) : y;
    }

    void collect(const std::string& prefix, NamedTensors& nt) const {
        nt.add(prefix + ".W", W);
        if (b) nt.add(prefix + ".b", b);
    }
};

struct BatchNorm {
    Var gamma, beta;
    BatchNormStats stats;

    BatchNorm() = default;

    explicit BatchNorm(std::size_t channels) {
        gamma = parameter(Tensor::full({1, channels}, 1.0));
        beta = parameter(Tensor({1, channels}));
        stats.running_mean = Tensor({1, channels});
        stats.running_var = Tensor::full({1, channels}, 1.0);
        stats.initialized = true;
    }

    Var operator()(const Var& x, BnMode mode) {
        return batchnorm(x, gamma, beta, stats, mode);
    }

    void collect(const std::string& prefix, NamedTensors& nt) {
        nt.add(prefix + ".gamma", gamma);
        nt.add(prefix + ".beta", beta);
        nt.add(prefix + ".running_mean", &stats.running_mean);
        nt.add(prefix + ".running_var", &stats.running_var);
    }
};

/// Edge-conditioned graph convolution: the weight matrix applied to each
/// neighbor is a linear function of the one-hot edge attribute (one learned
/// matrix per edge class plus a shared bias matrix). Neighbor messages are
/// averaged, a separate self-transform is added, and a skip connection
/// (identity when shapes match, learned projection otherwise) feeds the
/// batchnorm + ReLU output.
struct EccLayer {
    std::size_t in = 0, out = 0, de = 0;
    Var filter_w; // de × (in*out)
    Var filter_b; // 1 × (in*out)
    Linear self;
    Linear proj; // skip projection, used only when in != out
    BatchNorm bn;

    EccLayer() = default;

    EccLayer(std::mt19937_64& rng, std::size_t in_, std::size_t out_, std::size_t de_)
        : in(in_), out(out_), de(de_),
          filter_w(parameter(glorot_uniform(rng, in_, out_, {de_, in_ * out_}))),
          filter_b(parameter(Tensor({1, in_ * out_}))),
          self(rng, in_, out_),
          bn(out_) {
        if (in != out) proj = Linear(rng, in, out, /*bias=*/false);
    }

    Var operator()(const Var& feats, const DiscreteGraph& g, BnMode mode) {
        std::size_t n = g.n;
        // Per-class neighbor masks and inverse-degree scaling are constants.
        Var agg;
        for (std::size_t t = 0; t < de; ++t) {
            Tensor mt({n, n});
            bool any = false;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (i != j && g.edge_class(i, j) == static_cast<int>(t)) {
                        mt.at(i, j) = 1.0;
                        any = true;
                    }
            if (!any) continue;
            std::vector<std::size_t> row_idx(in * out);
            for (std::size_t i = 0; i < in * out; ++i) row_idx[i] = t * in * out + i;
            Var wt = reshape(add(gather(filter_w, row_idx, {1, in * out}), filter_b),
                             {in, out});
            Var msg = matmul(constant(std::move(mt)), matmul(feats, wt));
            agg = agg ? add(agg, msg) : msg;
        }
        Var pre = self(feats);
        if (agg) {
            Tensor dinv({n, n});
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t deg = 0;
                for (std::size_t j = 0; j < n; ++j)
                    if (g.has_edge(i, j)) ++deg;
                if (deg > 0) dinv.at(i, i) = 1.0 / static_cast<double>(deg);
            }
            pre = add(pre, matmul(constant(std::move(dinv)), agg));
        }
        pre = in == out ? add(pre, feats) : add(pre, proj(feats));
        return relu(bn(pre, mode));
    }

    void collect(const std::string& prefix, NamedTensors& nt) {
        nt.add(prefix + ".filter_w", filter_w);
        nt.add(prefix + ".filter_b", filter_b);
        self.collect(prefix + ".self", nt);
        if (in != out) proj.collect(prefix + ".proj", nt);
        bn.collect(prefix + ".bn", nt);
    }
};

/// Gated graph-level pooling: sum over nodes of sigmoid(gate(h)) ⊙
/// tanh(value(h)); permutation invariant by construction.
struct GatedPool {
    Linear gate, value;

    GatedPool() = default;

    GatedPool(std::mt19937_64& rng, std::size_t in, std::size_t hidden)
        : gate(rng, in, hidden), value(rng, in, hidden) {}

    Var operator()(const Var& feats) const {
        std::size_t n = feats->value.rows();
        if (n == 0) throw std::invalid_argument("gated pooling on empty graph");
        Var prod = mul(sigmoid(gate(feats)), tanh_op(value(feats)));
        return matmul(constant(Tensor::full({1, n}, 1.0)), prod); // 1×hidden
    }

    void collect(const std::string& prefix, NamedTensors& nt) const {
        gate.collect(prefix + ".gate", nt);
        value.collect(prefix + ".value", nt);
    }
};

} // namespace graphvae
