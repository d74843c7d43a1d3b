#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace esrf {

/// Dense row-major matrix. Vectors are 1 x n or n x 1; scalars 1 x 1.
template <typename T>
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

    static Tensor scalar(T v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    std::size_t size() const { return data.size(); }

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    T* row_ptr(std::size_t r) { return data.data() + r * cols; }
    const T* row_ptr(std::size_t r) const { return data.data() + r * cols; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(rows, cols);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace esrf
