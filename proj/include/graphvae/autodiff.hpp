#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "graphvae/tensor.hpp"

namespace graphvae {

/// One node of a reverse-mode computation graph. Nodes are created through
/// the free functions below and held by shared_ptr handles (Var). The graph
/// is built per evaluation and discarded afterwards; parameters are the only
/// long-lived nodes.
struct Node {
    Tensor value;
    Tensor grad; // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop; // scatters this->grad into parents

    void accumulate(const Tensor& g) {
        if (grad.size() == 0) grad = Tensor(value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }

    void ensure_grad() {
        if (grad.size() == 0) grad = Tensor(value.shape());
    }
};

using Var = std::shared_ptr<Node>;

inline Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return n;
}

inline Var parameter(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = true;
    return n;
}

namespace detail {

inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(Node&)> backprop) {
    if (!value.all_finite())
        throw std::runtime_error("autodiff: non-finite value in forward pass");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const Var& p : n->parents)
        n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a->value.shape()) + " vs " +
                                    Tensor::shape_str(b->value.shape()));
}

} // namespace detail

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return detail::make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad);
    });
}

/// x: r×c, bias: 1×c, added to every row.
inline Var add_rowwise(const Var& x, const Var& bias) {
    std::size_t r = x->value.rows(), c = x->value.cols();
    if (bias->value.size() != c)
        throw std::invalid_argument("add_rowwise: bias length mismatch");
    Tensor out = x->value;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) += bias->value[j];
    return detail::make_op(std::move(out), {x, bias}, [r, c](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) {
            Node& b = *n.parents[1];
            b.ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) b.grad[j] += n.grad.at(i, j);
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return detail::make_op(std::move(out), {a, b}, [](Node& n) {
        Node& a = *n.parents[0];
        Node& b = *n.parents[1];
        if (a.requires_grad) {
            a.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                a.grad[i] += n.grad[i] * b.value[i];
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                b.grad[i] += n.grad[i] * a.value[i];
        }
    });
}

/// Elementwise s*x + t.
inline Var affine(const Var& x, double s, double t) {
    Tensor out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * out[i] + t;
    return detail::make_op(std::move(out), {x}, [s](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += s * n.grad[i];
    });
}

inline Var sub(const Var& a, const Var& b) { return add(a, affine(b, -1.0, 0.0)); }

inline Var matmul(const Var& a, const Var& b) {
    if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.cols() != b->value.rows())
        throw std::invalid_argument("matmul: incompatible shapes " +
                                    Tensor::shape_str(a->value.shape()) + " x " +
                                    Tensor::shape_str(b->value.shape()));
    std::size_t m = a->value.rows(), kk = a->value.cols(), p = b->value.cols();
    Tensor out({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < kk; ++l) {
            double av = a->value.at(i, l);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j)
                out.at(i, j) += av * b->value.at(l, j);
        }
    return detail::make_op(std::move(out), {a, b}, [m, kk, p](Node& n) {
        Node& a = *n.parents[0];
        Node& b = *n.parents[1];
        if (a.requires_grad) {
            a.ensure_grad(); // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < p; ++j) {
                    double g = n.grad.at(i, j);
                    if (g == 0.0) continue;
                    for (std::size_t l = 0; l < kk; ++l)
                        a.grad.at(i, l) += g * b.value.at(l, j);
                }
        }
        if (b.requires_grad) {
            b.ensure_grad(); // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t l = 0; l < kk; ++l) {
                    double av = a.value.at(i, l);
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < p; ++j)
                        b.grad.at(l, j) += av * n.grad.at(i, j);
                }
        }
    });
}

/// Concatenate 2D tensors along axis 0 (stack rows) or axis 1 (widen rows).
inline Var concat(const std::vector<Var>& xs, std::size_t axis) {
    if (xs.empty()) throw std::invalid_argument("concat: empty input");
    if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
    std::size_t rows = xs[0]->value.rows(), cols = xs[0]->value.cols();
    std::size_t total = 0;
    for (const Var& x : xs) {
        if (axis == 0 && x->value.cols() != cols)
            throw std::invalid_argument("concat: column mismatch");
        if (axis == 1 && x->value.rows() != rows)
            throw std::invalid_argument("concat: row mismatch");
        total += axis == 0 ? x->value.rows() : x->value.cols();
    }
    Tensor out(axis == 0 ? std::vector<std::size_t>{total, cols}
                         : std::vector<std::size_t>{rows, total});
    std::size_t off = 0;
    for (const Var& x : xs) {
        if (axis == 0) {
            std::copy(x->value.data(), x->value.data() + x->value.size(),
                      out.data() + off * cols);
            off += x->value.rows();
        } else {
            std::size_t w = x->value.cols();
            for (std::size_t i = 0; i < rows; ++i)
                std::copy(x->value.data() + i * w, x->value.data() + (i + 1) * w,
                          out.data() + i * total + off);
            off += w;
        }
    }
    return detail::make_op(std::move(out), xs, [axis, rows, cols, total](Node& n) {
        std::size_t off = 0;
        for (Var& pv : n.parents) {
            Node& p = *pv;
            if (axis == 0) {
                std::size_t pr = p.value.rows();
                if (p.requires_grad) {
                    p.ensure_grad();
                    for (std::size_t i = 0; i < pr * cols; ++i)
                        p.grad[i] += n.grad[off * cols + i];
                }
                off += pr;
            } else {
                std::size_t w = p.value.cols();
                if (p.requires_grad) {
                    p.ensure_grad();
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                            p.grad[i * w + j] += n.grad[i * total + off + j];
                }
                off += w;
            }
        }
    });
}

/// Gather flat elements of x into a new tensor of the given shape. Repeated
/// indices are allowed; backward scatter-adds.
inline Var gather(const Var& x, std::vector<std::size_t> indices,
                  std::vector<std::size_t> shape) {
    if (Tensor::count(shape) != indices.size())
        throw std::invalid_argument("gather: shape does not match index count");
    Tensor out(std::move(shape));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= x->value.size())
            throw std::out_of_range("gather: index out of range");
        out[i] = x->value[indices[i]];
    }
    return detail::make_op(std::move(out), {x},
                           [idx = std::move(indices)](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) x.grad[idx[i]] += n.grad[i];
    });
}

/// Rows [begin, end) of a 2D tensor.
inline Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
    std::size_t c = x->value.cols();
    if (end > x->value.rows() || begin > end)
        throw std::out_of_range("slice_rows: bad range");
    std::vector<std::size_t> idx((end - begin) * c);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin * c + i;
    return gather(x, std::move(idx), {end - begin, c});
}

inline Var reshape(const Var& x, std::vector<std::size_t> shape) {
    Tensor out = x->value.reshaped(shape);
    return detail::make_op(std::move(out), {x}, [](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i];
    });
}

inline Var relu(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.vec()) v = v > 0.0 ? v : 0.0;
    return detail::make_op(std::move(out), {x}, [](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (x.value[i] > 0.0) x.grad[i] += n.grad[i];
    });
}

inline Var sigmoid(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.vec()) v = 1.0 / (1.0 + std::exp(-v));
    return detail::make_op(std::move(out), {x}, [](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double s = n.value[i];
            x.grad[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

inline Var tanh_op(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.vec()) v = std::tanh(v);
    return detail::make_op(std::move(out), {x}, [](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            x.grad[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
    });
}

inline Var exp_op(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.vec()) v = std::exp(v);
    return detail::make_op(std::move(out), {x}, [](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            x.grad[i] += n.grad[i] * n.value[i];
    });
}

/// log(max(x, floor)). The floor keeps saturated cross-entropies finite;
/// inputs at or above the floor get the exact 1/x derivative, clamped
/// inputs get zero.
inline Var log_op(const Var& x, double floor = 1e-12) {
    Tensor out = x->value;
    for (double& v : out.vec()) v = std::log(std::max(v, floor));
    return detail::make_op(std::move(out), {x}, [floor](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (x.value[i] >= floor) x.grad[i] += n.grad[i] / x.value[i];
    });
}

/// Softmax of a 2D tensor along the given axis, with max-subtraction.
inline Var softmax(const Var& x, std::size_t axis) {
    if (x->value.ndim() != 2 || axis > 1)
        throw std::invalid_argument("softmax: expects a 2D tensor, axis 0 or 1");
    std::size_t r = x->value.rows(), c = x->value.cols();
    std::size_t lanes = axis == 1 ? r : c;     // independent distributions
    std::size_t len = axis == 1 ? c : r;       // entries per distribution
    auto at = [&](const Tensor& t, std::size_t lane, std::size_t i) -> double {
        return axis == 1 ? t.at(lane, i) : t.at(i, lane);
    };
    Tensor out({r, c});
    for (std::size_t lane = 0; lane < lanes; ++lane) {
        double mx = at(x->value, lane, 0);
        for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, at(x->value, lane, i));
        double sum = 0.0;
        for (std::size_t i = 0; i < len; ++i)
            sum += std::exp(at(x->value, lane, i) - mx);
        for (std::size_t i = 0; i < len; ++i) {
            double v = std::exp(at(x->value, lane, i) - mx) / sum;
            (axis == 1 ? out.at(lane, i) : out.at(i, lane)) = v;
        }
    }
    return detail::make_op(std::move(out), {x}, [axis, lanes, len](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        auto at = [&](const Tensor& t, std::size_t lane, std::size_t i) -> double {
            return axis == 1 ? t.at(lane, i) : t.at(i, lane);
        };
        for (std::size_t lane = 0; lane < lanes; ++lane) {
            double dot = 0.0;
            for (std::size_t i = 0; i < len; ++i)
                dot += at(n.grad, lane, i) * at(n.value, lane, i);
            for (std::size_t i = 0; i < len; ++i) {
                double g = at(n.value, lane, i) * (at(n.grad, lane, i) - dot);
                std::size_t r2 = axis == 1 ? lane : i;
                std::size_t c2 = axis == 1 ? i : lane;
                x.grad.at(r2, c2) += g;
            }
        }
    });
}

inline Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x->value.vec()) s += v;
    return detail::make_op(Tensor({1, 1}, {s}), {x}, [](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (double& g : x.grad.vec()) g += n.grad[0];
    });
}

inline Var mean(const Var& x) {
    return affine(sum(x), 1.0 / static_cast<double>(x->value.size()), 0.0);
}

/// Row-wise max of a 2D tensor -> r×1. Subgradient routes to the argmax;
/// ties break to the lowest index.
inline Var max_axis1(const Var& x) {
    std::size_t r = x->value.rows(), c = x->value.cols();
    if (c == 0) throw std::invalid_argument("max_axis1: empty rows");
    Tensor out({r, 1});
    std::vector<std::size_t> arg(r, 0);
    for (std::size_t i = 0; i < r; ++i) {
        double best = x->value.at(i, 0);
        for (std::size_t j = 1; j < c; ++j)
            if (x->value.at(i, j) > best) { best = x->value.at(i, j); arg[i] = j; }
        out.at(i, 0) = best;
    }
    return detail::make_op(std::move(out), {x}, [arg = std::move(arg)](Node& n) {
        Node& x = *n.parents[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < arg.size(); ++i)
            x.grad.at(i, arg[i]) += n.grad.at(i, 0);
    });
}

/// Batch normalization over axis 0 of a 2D tensor. Running statistics live
/// outside the graph and are updated (momentum 0.9 by default) only in
/// train mode.
struct BatchNormStats {
    Tensor running_mean; // 1×c
    Tensor running_var;  // 1×c
    double momentum = 0.9;
    bool initialized = false;
};

enum class BnMode {
    train,        // batch statistics, running stats updated
    train_frozen, // batch statistics, running stats untouched
    eval          // running statistics
};

inline Var batchnorm(const Var& x, const Var& gamma, const Var& beta,
                     BatchNormStats& stats, BnMode mode, double eps = 1e-5) {
    std::size_t r = x->value.rows(), c = x->value.cols();
    if (gamma->value.size() != c || beta->value.size() != c)
        throw std::invalid_argument("batchnorm: parameter size mismatch");
    if (!stats.initialized) {
        stats.running_mean = Tensor({1, c});
        stats.running_var = Tensor::full({1, c}, 1.0);
        stats.initialized = true;
    }
    Tensor mu({1, c}), var({1, c});
    bool batch_stats = mode != BnMode::eval;
    if (batch_stats) {
        for (std::size_t j = 0; j < c; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < r; ++i) m += x->value.at(i, j);
            m /= static_cast<double>(r);
            double v = 0.0;
            for (std::size_t i = 0; i < r; ++i) {
                double d = x->value.at(i, j) - m;
                v += d * d;
            }
            v /= static_cast<double>(r);
            mu[j] = m;
            var[j] = v;
            if (mode == BnMode::train) {
                stats.running_mean[j] = stats.momentum * stats.running_mean[j] + (1.0 - stats.momentum) * m;
                stats.running_var[j] = stats.momentum * stats.running_var[j] + (1.0 - stats.momentum) * v;
            }
        }
    } else {
        mu = stats.running_mean;
        var = stats.running_var;
    }
    Tensor xhat({r, c}), out({r, c});
    for (std::size_t j = 0; j < c; ++j) {
        double inv = 1.0 / std::sqrt(var[j] + eps);
        for (std::size_t i = 0; i < r; ++i) {
            double h = (x->value.at(i, j) - mu[j]) * inv;
            xhat.at(i, j) = h;
            out.at(i, j) = gamma->value[j] * h + beta->value[j];
        }
    }
    return detail::make_op(
        std::move(out), {x, gamma, beta},
        [r, c, batch_stats, eps, mu = std::move(mu), var = std::move(var),
         xhat = std::move(xhat)](Node& n) {
            Node& x = *n.parents[0];
            Node& gamma = *n.parents[1];
            Node& beta = *n.parents[2];
            if (gamma.requires_grad) {
                gamma.ensure_grad();
                for (std::size_t j = 0; j < c; ++j)
                    for (std::size_t i = 0; i < r; ++i)
                        gamma.grad[j] += n.grad.at(i, j) * xhat.at(i, j);
            }
            if (beta.requires_grad) {
                beta.ensure_grad();
                for (std::size_t j = 0; j < c; ++j)
                    for (std::size_t i = 0; i < r; ++i)
                        beta.grad[j] += n.grad.at(i, j);
            }
            if (!x.requires_grad) return;
            x.ensure_grad();
            double rn = static_cast<double>(r);
            for (std::size_t j = 0; j < c; ++j) {
                double inv = 1.0 / std::sqrt(var[j] + eps);
                if (!batch_stats) {
                    for (std::size_t i = 0; i < r; ++i)
                        x.grad.at(i, j) += n.grad.at(i, j) * gamma.value[j] * inv;
                    continue;
                }
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t i = 0; i < r; ++i) {
                    double dy = n.grad.at(i, j) * gamma.value[j];
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat.at(i, j);
                }
                for (std::size_t i = 0; i < r; ++i) {
                    double dy = n.grad.at(i, j) * gamma.value[j];
                    x.grad.at(i, j) +=
                        inv * (dy - sum_dy / rn - xhat.at(i, j) * sum_dy_xhat / rn);
                }
            }
        });
}

/// Reverse pass from a scalar root. Every reachable node is visited exactly
/// once in reverse topological order.
inline void backward(const Var& root) {
    if (root->value.size() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->grad = Tensor::full(root->value.shape(), 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad.size() != 0) n->backprop(*n);
    }
}

inline void zero_grad(const std::vector<Var>& params) {
    for (const Var& p : params) p->grad = Tensor();
}

} // namespace graphvae
