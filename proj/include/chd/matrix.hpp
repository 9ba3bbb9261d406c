#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace chd {

/// Dense row-major matrix of doubles. Rows are samples (or output units for
/// weight matrices); each row is contiguous so it can be handed out as a span.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Copies the listed rows of `src` into a new matrix, in the given order.
inline Matrix gather_rows(const Matrix& src, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), src.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto from = src.row(indices[i]);
        std::copy(from.begin(), from.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace chd
