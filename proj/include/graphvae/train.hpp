#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "graphvae/adam.hpp"
#include "graphvae/chem.hpp"
#include "graphvae/data.hpp"
#include "graphvae/matching.hpp"
#include "graphvae/model.hpp"
#include "graphvae/threading.hpp"

namespace graphvae {

struct TrainOptions {
    LossWeights weights;
    AdamConfig adam;
    int mpm_iterations = 75;
    int batch_size = 32;
    unsigned threads = 1;
    bool unregularized = false; // deterministic encoder, no KL term
};

struct StepLosses {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
};

/// One training step / loss evaluation engine. Matching is recomputed fresh
/// from the current decoder output for every sample of every step.
class Trainer {
public:
    Trainer(GraphVae& model, TrainOptions opts, std::uint64_t seed)
        : model_(model), opts_(std::move(opts)),
          optimizer_(model.parameters(), opts_.adam), rng_(seed) {}

    std::mt19937_64& rng() { return rng_; }
    Adam& optimizer() { return optimizer_; }

    StepLosses train_step(const std::vector<const MoleculeRecord*>& batch) {
        StepLosses losses = batch_loss(batch, BnMode::train);
        optimizer_.zero_grad();
        backward(last_total_);
        optimizer_.step();
        last_total_.reset();
        return losses;
    }

    /// Loss of a batch without updating parameters or running statistics;
    /// batch statistics are used so values match the training regime.
    StepLosses evaluate(const std::vector<const MoleculeRecord*>& batch) {
        StepLosses losses = batch_loss(batch, BnMode::train_frozen);
        last_total_.reset();
        return losses;
    }

    /// Mean losses over a record list, evaluated in training-size batches.
    StepLosses evaluate_all(const std::vector<MoleculeRecord>& records,
                            const std::vector<std::size_t>& indices) {
        StepLosses acc;
        std::size_t done = 0;
        for (std::size_t at = 0; at < indices.size(); at += static_cast<std::size_t>(opts_.batch_size)) {
            std::vector<const MoleculeRecord*> batch;
            for (std::size_t i = at; i < indices.size() &&
                                     i < at + static_cast<std::size_t>(opts_.batch_size); ++i)
                batch.push_back(&records[indices[i]]);
            StepLosses l = evaluate(batch);
            double w = static_cast<double>(batch.size());
            acc.total += l.total * w;
            acc.reconstruction += l.reconstruction * w;
            acc.kl += l.kl * w;
            done += batch.size();
        }
        if (done > 0) {
            acc.total /= static_cast<double>(done);
            acc.reconstruction /= static_cast<double>(done);
            acc.kl /= static_cast<double>(done);
        }
        return acc;
    }

    /// One epoch over shuffled train indices; returns the mean step loss.
    StepLosses train_epoch(const std::vector<MoleculeRecord>& records,
                           std::vector<std::size_t> indices) {
        for (std::size_t i = indices.size(); i > 1; --i)
            std::swap(indices[i - 1], indices[rng_() % i]);
        StepLosses acc;
        std::size_t steps = 0;
        for (std::size_t at = 0; at < indices.size(); at += static_cast<std::size_t>(opts_.batch_size)) {
            std::vector<const MoleculeRecord*> batch;
            for (std::size_t i = at; i < indices.size() &&
                                     i < at + static_cast<std::size_t>(opts_.batch_size); ++i)
                batch.push_back(&records[indices[i]]);
            StepLosses l = train_step(batch);
            acc.total += l.total;
            acc.reconstruction += l.reconstruction;
            acc.kl += l.kl;
            ++steps;
        }
        if (steps > 0) {
            acc.total /= static_cast<double>(steps);
            acc.reconstruction /= static_cast<double>(steps);
            acc.kl /= static_cast<double>(steps);
        }
        return acc;
    }

    /// Single-sample ELBO estimate -(recon + KL) with one z draw.
    double elbo(const MoleculeRecord& rec) {
        const GraphLabel* y = model_.config().conditional ? &rec.label : nullptr;
        Encoder::Out enc = model_.encoder.forward(rec.graph, y, BnMode::eval);
        Var z;
        double kl = 0.0;
        if (opts_.unregularized) {
            z = enc.mu;
        } else {
            std::normal_distribution<double> normal(0.0, 1.0);
            Tensor eps({1, enc.mu->value.size()});
            for (double& v : eps.vec()) v = normal(rng_);
            z = add(enc.mu, mul(exp_op(enc.halflog), constant(std::move(eps))));
            kl = kl_divergence_var(enc.mu, enc.halflog)->value[0];
        }
        Var zin = decoder_input(z, y);
        auto outs = model_.decoder.forward(zin, BnMode::eval);
        ProbabilisticGraph pg = Decoder::values(outs[0], model_.config());
        auto sigma = match_graphs(rec.graph, pg, opts_.mpm_iterations);
        double recon = reconstruction_loss(rec.graph, outs[0], sigma,
                                           model_.config().k, opts_.weights)->value[0];
        return -(recon + opts_.weights.kl_weight * kl);
    }

private:
    Var decoder_input(const Var& z, const GraphLabel* y) {
        if (!model_.config().conditional) return z;
        Tensor lab({1, static_cast<std::size_t>(model_.config().label_dim)});
        for (std::size_t i = 0; i < lab.size(); ++i)
            lab[i] = static_cast<double>(y->y[i]);
        return concat({z, constant(std::move(lab))}, 1);
    }

    StepLosses batch_loss(const std::vector<const MoleculeRecord*>& batch, BnMode mode) {
        if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
        bool conditional = model_.config().conditional;
        std::vector<Encoder::Out> encs;
        std::vector<Var> zrows;
        std::vector<Var> kls;
        std::normal_distribution<double> normal(0.0, 1.0);
        for (const MoleculeRecord* rec : batch) {
            const GraphLabel* y = conditional ? &rec->label : nullptr;
            Encoder::Out enc = model_.encoder.forward(rec->graph, y, mode);
            Var z;
            if (opts_.unregularized) {
                z = enc.mu;
            } else {
                Tensor eps({1, enc.mu->value.size()});
                for (double& v : eps.vec()) v = normal(rng_);
                z = add(enc.mu, mul(exp_op(enc.halflog), constant(std::move(eps))));
                kls.push_back(kl_divergence_var(enc.mu, enc.halflog));
            }
            zrows.push_back(decoder_input(z, y));
            encs.push_back(std::move(enc));
        }
        Var zbatch = concat(zrows, 0);
        std::vector<Decoder::Out> outs = model_.decoder.forward(zbatch, mode);

        // Matching runs on plain tensors and may go parallel; results land
        // in fixed slots so the step stays deterministic.
        std::vector<std::vector<std::size_t>> assignments(batch.size());
        parallel_for(batch.size(), opts_.threads, [&](std::size_t s) {
            ProbabilisticGraph pg = Decoder::values(outs[s], model_.config());
            assignments[s] = match_graphs(batch[s]->graph, pg, opts_.mpm_iterations);
        });

        Var total;
        StepLosses losses;
        for (std::size_t s = 0; s < batch.size(); ++s) {
            Var recon = reconstruction_loss(batch[s]->graph, outs[s], assignments[s],
                                            model_.config().k, opts_.weights);
            losses.reconstruction += recon->value[0];
            Var term = recon;
            if (!opts_.unregularized && opts_.weights.kl_weight != 0.0) {
                losses.kl += kls[s]->value[0];
                term = add(term, affine(kls[s], opts_.weights.kl_weight, 0.0));
            }
            total = total ? add(total, term) : term;
        }
        total = affine(total, 1.0 / static_cast<double>(batch.size()), 0.0);
        losses.reconstruction /= static_cast<double>(batch.size());
        losses.kl /= static_cast<double>(batch.size());
        losses.total = total->value[0];
        last_total_ = total;
        return losses;
    }

    GraphVae& model_;
    TrainOptions opts_;
    Adam optimizer_;
    std::mt19937_64 rng_;
    Var last_total_;
};

} // namespace graphvae
