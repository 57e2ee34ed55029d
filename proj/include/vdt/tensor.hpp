#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "vdt/error.hpp"

namespace vdt {

/// Dense row-major n-dimensional array of doubles. Value semantics; all
/// shapes are explicit and checked. This is the storage type shared by the
/// kernels, the autograd tape and the on-disk array format.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}
    Tensor(std::vector<int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != checked_numel(shape_))
            throw DimError("Tensor: data size does not match shape");
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t ndim() const { return shape_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    template <class... Ix>
    double& at(Ix... ix) {
        return data_[offset({static_cast<int64_t>(ix)...})];
    }
    template <class... Ix>
    double at(Ix... ix) const {
        return data_[offset({static_cast<int64_t>(ix)...})];
    }

    /// Same data, new shape (numel must match).
    Tensor reshaped(std::vector<int64_t> shape) const& {
        Tensor t = *this;
        t.set_shape(std::move(shape));
        return t;
    }
    Tensor reshaped(std::vector<int64_t> shape) && {
        set_shape(std::move(shape));
        return std::move(*this);
    }
    void set_shape(std::vector<int64_t> shape) {
        if (checked_numel(shape) != numel())
            throw DimError("Tensor::reshape: numel mismatch");
        shape_ = std::move(shape);
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static int64_t checked_numel(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t s : shape) {
            if (s < 0) throw DimError("Tensor: negative dimension");
            n *= s;
        }
        return n;
    }

private:
    size_t offset(std::initializer_list<int64_t> ix) const {
        if (ix.size() != shape_.size()) throw DimError("Tensor::at: rank mismatch");
        int64_t off = 0;
        size_t k = 0;
        for (int64_t i : ix) {
            off = off * shape_[k] + i;
            ++k;
        }
        return static_cast<size_t>(off);
    }

    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

/// Max |a-b| over all elements; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);
/// Max |a| over all elements.
double max_abs(const Tensor& a);

}  // namespace vdt
