#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fenet/errors.hpp"

namespace fenet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) {
        strides[i - 1] = strides[i] * shape[i];
    }
    return strides;
}

template <typename T>
struct TensorData {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    bool tracked = false;
};

// Dense row-major tensor with shared storage. Copying a Tensor aliases the
// underlying buffer; clone() makes a deep copy.
template <typename T>
class Tensor {
public:
    using scalar_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape)
        : d_(std::make_shared<TensorData<T>>()) {
        d_->shape = std::move(shape);
        d_->value.assign(shape_numel(d_->shape), T(0));
    }

    Tensor(Shape shape, std::vector<T> values)
        : d_(std::make_shared<TensorData<T>>()) {
        d_->shape = std::move(shape);
        if (values.size() != shape_numel(d_->shape)) {
            throw UsageError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(d_->shape));
        }
        d_->value = std::move(values);
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        for (auto& x : t.d_->value) x = v;
        return t;
    }

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t size(std::size_t axis) const { return d_->shape[axis]; }
    std::size_t numel() const { return d_->value.size(); }

    std::vector<T>& value() { return d_->value; }
    const std::vector<T>& value() const { return d_->value; }
    T* data() { return d_->value.data(); }
    const T* data() const { return d_->value.data(); }

    T item() const {
        if (numel() != 1) {
            throw UsageError("item() requires a single-element tensor, got shape " +
                             shape_str(d_->shape));
        }
        return d_->value[0];
    }

    Tensor& set_requires_grad(bool on = true) {
        d_->requires_grad = on;
        return *this;
    }
    bool requires_grad() const { return d_->requires_grad; }

    void mark_tracked() { d_->tracked = true; }
    bool tracked() const { return d_->tracked; }
    // True when backward must deposit a gradient here.
    bool needs_grad() const { return d_->requires_grad || d_->tracked; }

    std::vector<T>& grad() {
        ensure_grad();
        return d_->grad;
    }
    const std::vector<T>& grad_or_empty() const { return d_->grad; }
    bool has_grad() const { return !d_->grad.empty(); }
    void ensure_grad() {
        if (d_->grad.empty()) d_->grad.assign(d_->value.size(), T(0));
    }
    void zero_grad() { d_->grad.clear(); }

    Tensor clone() const {
        Tensor t;
        t.d_ = std::make_shared<TensorData<T>>(*d_);
        return t;
    }

    std::shared_ptr<TensorData<T>> node() const { return d_; }

    bool same_storage(const Tensor& other) const { return d_ == other.d_; }

private:
    std::shared_ptr<TensorData<T>> d_;
};

// Define-by-run gradient tape. Forward ops append one backward step each;
// backward() replays the steps in reverse, which visits consumers before
// producers and accumulates into every tracked input exactly once per use.
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // RAII activation; ops record into the innermost active tape.
    class Scope {
    public:
        explicit Scope(Tape& tape) : prev_(active_ptr()) { active_ptr() = &tape; }
        ~Scope() { active_ptr() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* prev_;
    };

    static Tape* active() { return active_ptr(); }

    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

    std::size_t size() const { return steps_.size(); }
    void clear() { steps_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays. Repeated calls accumulate.
    void backward(Tensor<T> loss) {
        if (loss.numel() != 1) {
            throw UsageError("backward root must be scalar, got shape " +
                             shape_str(loss.shape()));
        }
        loss.grad()[0] += T(1);
        for (std::size_t i = steps_.size(); i-- > 0;) steps_[i]();
    }

private:
    static Tape*& active_ptr() {
        thread_local Tape* active = nullptr;
        return active;
    }

    std::vector<std::function<void()>> steps_;
};

}  // namespace fenet
