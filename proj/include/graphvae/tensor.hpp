#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphvae {

/// Dense row-major array of doubles with a dynamic shape.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({1, n}, std::move(v));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return dim(1); }

    std::size_t dim(std::size_t i) const {
        return i < shape_.size() ? shape_[i] : 1;
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2D access
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    // 3D access
    double& at(std::size_t i, std::size_t j, std::size_t l) {
        return data_[(i * shape_[1] + j) * shape_[2] + l];
    }
    double at(std::size_t i, std::size_t j, std::size_t l) const {
        return data_[(i * shape_[1] + j) * shape_[2] + l];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (count(shape) != data_.size())
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        return Tensor(std::move(shape), data_);
    }

    void fill(double v) {
        for (double& x : data_) x = v;
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               [](std::size_t a, std::size_t b) { return a * b; });
    }

    static std::string shape_str(const std::vector<std::size_t>& shape) {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + ")";
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

} // namespace graphvae
