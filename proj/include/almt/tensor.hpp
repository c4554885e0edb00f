#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "almt/errors.hpp"
#include "almt/rng.hpp"

namespace almt {

// Shape of a dense row-major tensor, rank 1 to 3.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<int> dims) {
        if (dims.size() < 1 || dims.size() > 3)
            throw DimensionError("tensor rank must be 1..3, got " + std::to_string(dims.size()));
        rank_ = static_cast<int>(dims.size());
        int i = 0;
        for (int d : dims) {
            if (d <= 0) throw DimensionError("tensor extents must be positive");
            d_[static_cast<std::size_t>(i++)] = d;
        }
    }

    int rank() const { return rank_; }
    int operator[](int i) const { return d_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int i = 0; i < rank_; ++i) n *= d_[static_cast<std::size_t>(i)];
        return n;
    }
    bool operator==(const Shape& o) const {
        if (rank_ != o.rank_) return false;
        for (int i = 0; i < rank_; ++i)
            if (d_[static_cast<std::size_t>(i)] != o.d_[static_cast<std::size_t>(i)]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < rank_; ++i) {
            if (i) s += "x";
            s += std::to_string(d_[static_cast<std::size_t>(i)]);
        }
        return s + "]";
    }

private:
    int rank_ = 0;
    std::array<int, 3> d_{1, 1, 1};
};

// Dense tensor with an optional gradient buffer. Value copies share storage,
// so a parameter held by a model and captured by tape closures is one
// object; clone() makes an independent deep copy.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(Shape shape) {
        TensorT t;
        t.s_ = std::make_shared<Storage>();
        t.s_->shape = shape;
        t.s_->data.assign(static_cast<std::size_t>(shape.numel()), T{0});
        return t;
    }

    static TensorT full(Shape shape, T value) {
        TensorT t = zeros(shape);
        for (auto& v : t.s_->data) v = value;
        return t;
    }

    static TensorT from(Shape shape, std::vector<T> values) {
        if (static_cast<std::int64_t>(values.size()) != shape.numel())
            throw DimensionError("tensor data length " + std::to_string(values.size()) +
                                 " does not match shape " + shape.str());
        TensorT t;
        t.s_ = std::make_shared<Storage>();
        t.s_->shape = shape;
        t.s_->data = std::move(values);
        return t;
    }

    static TensorT scalar(T value) { return from({1, 1}, {value}); }

    static TensorT randn(Shape shape, Rng& rng, T stddev = T{1}, T mean = T{0}) {
        TensorT t = zeros(shape);
        for (auto& v : t.s_->data)
            v = static_cast<T>(rng.normal(static_cast<double>(mean), static_cast<double>(stddev)));
        return t;
    }

    static TensorT identity(int n) {
        TensorT t = zeros({n, n});
        for (int i = 0; i < n; ++i) t.s_->data[static_cast<std::size_t>(i) * n + i] = T{1};
        return t;
    }

    bool defined() const { return s_ != nullptr; }
    const Shape& shape() const { return s_->shape; }
    int rank() const { return s_->shape.rank(); }
    std::int64_t numel() const { return s_->shape.numel(); }

    // Row/column extents of a rank-1/2 tensor (rank 1 is treated as one row).
    int rows() const { return s_->shape.rank() == 1 ? 1 : s_->shape[0]; }
    int cols() const { return s_->shape.rank() == 1 ? s_->shape[0] : s_->shape[1]; }

    T* data() { return s_->data.data(); }
    const T* data() const { return s_->data.data(); }
    const std::vector<T>& values() const { return s_->data; }

    T& at(int i, int j) { return s_->data[static_cast<std::size_t>(i) * cols() + j]; }
    T at(int i, int j) const { return s_->data[static_cast<std::size_t>(i) * cols() + j]; }

    T item() const {
        if (numel() != 1) throw ValidationError("item() requires a single-element tensor, shape is " + shape().str());
        return s_->data[0];
    }

    // Gradient participation. Leaf parameters opt in via set_requires_grad;
    // ops mark their outputs as tracked intermediates, whose gradients are
    // reset at the start of every backward pass (leaf gradients accumulate
    // until explicitly zeroed).
    bool requires_grad() const { return s_ && s_->requires_grad; }
    bool is_leaf() const { return s_ && s_->leaf; }
    void set_requires_grad(bool b) {
        s_->requires_grad = b;
        s_->leaf = b;
        if (b) ensure_grad();
    }
    void mark_tracked() {
        s_->requires_grad = true;
        s_->leaf = false;
        ensure_grad();
    }

    void ensure_grad() {
        if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T{0});
    }
    bool has_grad() const { return s_ && !s_->grad.empty(); }
    T* grad() {
        ensure_grad();
        return s_->grad.data();
    }
    const std::vector<T>& grad_values() const { return s_->grad; }
    void zero_grad() {
        for (auto& v : s_->grad) v = T{0};
    }

    const std::string& name() const { return s_->name; }
    void set_name(std::string n) { s_->name = std::move(n); }

    // Storage identity, for registry double-registration checks.
    const void* id() const { return s_.get(); }

    TensorT clone() const {
        TensorT t;
        t.s_ = std::make_shared<Storage>(*s_);
        return t;
    }

    bool all_finite() const {
        for (const T& v : s_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    struct Storage {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;
        bool requires_grad = false;
        bool leaf = false;
        std::string name;
    };
    std::shared_ptr<Storage> s_;
};

using Tensor = TensorT<float>;

template <typename T>
void check_finite(const TensorT<T>& t, const char* op) {
    const T* p = t.data();
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(p[i])))
            throw NumericError(std::string(op) + " produced a non-finite value at flat index " +
                               std::to_string(i));
    }
}

} // namespace almt
