#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmu/error.hpp"

namespace dmu {

template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major dense storage with an explicit shape. Vectors have rank 1,
/// matrices rank 2; scalars are stored as shape {1}.
template <typename T>
class DenseArray {
public:
    using value_type = T;

    DenseArray() = default;

    explicit DenseArray(std::vector<std::size_t> shape, T fill = T(0))
        : shape_(std::move(shape)) {
        if (shape_.empty()) {
            throw DimensionError("DenseArray: shape must have at least one dimension");
        }
        for (auto d : shape_) {
            if (d == 0) {
                throw DimensionError("DenseArray: dimensions must be positive");
            }
        }
        data_.assign(count(shape_), fill);
    }

    DenseArray(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_.empty() || count(shape_) != data_.size()) {
            throw DimensionError("DenseArray: data length does not match shape");
        }
    }

    static DenseArray vector(std::initializer_list<T> values) {
        return DenseArray({values.size()}, std::vector<T>(values));
    }

    static DenseArray from(const Vector<T>& v) {
        return DenseArray({static_cast<std::size_t>(v.size())},
                          std::vector<T>(v.data(), v.data() + v.size()));
    }

    static DenseArray from(const Matrix<T>& m) {
        return DenseArray({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                          std::vector<T>(m.data(), m.data() + m.size()));
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    Eigen::Map<Matrix<T>> matrix() {
        return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
    }
    Eigen::Map<const Matrix<T>> matrix() const {
        return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
    }
    Eigen::Map<Vector<T>> vec() { return {data_.data(), static_cast<Eigen::Index>(size())}; }
    Eigen::Map<const Vector<T>> vec() const {
        return {data_.data(), static_cast<Eigen::Index>(size())};
    }

    bool all_finite() const noexcept {
        for (T x : data_) {
            if (!std::isfinite(x)) {
                return false;
            }
        }
        return true;
    }

    /// Throws ContractError naming `what` if any entry is NaN or infinite.
    void require_finite(const std::string& what) const {
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i])) {
                throw ContractError(what + ": non-finite entry at index " + std::to_string(i));
            }
        }
    }

    template <typename U>
    DenseArray<U> cast() const {
        return DenseArray<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const DenseArray& a, const DenseArray& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

}  // namespace dmu
