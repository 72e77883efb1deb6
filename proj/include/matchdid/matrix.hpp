#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace matchdid {

// Dense row-major matrix of doubles. Sized construction requires at least
// one row and one column; a default-constructed matrix is an empty
// placeholder (0 x 0) and must not be used in arithmetic.
class Matrix {
  public:
    Matrix() = default;

    Matrix(int rows, int cols, double fill = 0.0) : rows_(rows), cols_(cols) {
        if (rows < 1 || cols < 1)
            throw std::domain_error("Matrix: dimensions must be at least 1 x 1");
        data_.assign(static_cast<std::size_t>(rows) * cols, fill);
    }

    static Matrix identity(int n) {
        Matrix m(n, n, 0.0);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        if (rows.size() == 0 || rows.begin()->size() == 0)
            throw std::domain_error("Matrix: dimensions must be at least 1 x 1");
        Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
        int i = 0;
        for (const auto &row : rows) {
            if (row.size() != static_cast<std::size_t>(m.cols_))
                throw std::domain_error("Matrix: ragged row lengths");
            int j = 0;
            for (double v : row) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double &operator()(int i, int j) { return data_[idx(i, j)]; }
    double operator()(int i, int j) const { return data_[idx(i, j)]; }

    std::vector<double> column(int j) const {
        std::vector<double> out(rows_);
        for (int i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
        return out;
    }

    std::vector<double> row(int i) const {
        std::vector<double> out(cols_);
        for (int j = 0; j < cols_; ++j) out[j] = (*this)(i, j);
        return out;
    }

    void set_column(int j, const std::vector<double> &values) {
        if (static_cast<int>(values.size()) != rows_)
            throw std::domain_error("Matrix::set_column: length mismatch");
        for (int i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    const std::vector<double> &data() const { return data_; }

  private:
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * cols_ + j; }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline Matrix operator*(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.rows()) throw std::domain_error("Matrix multiply: shape mismatch");
    Matrix c(a.rows(), b.cols(), 0.0);
    for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline std::vector<double> operator*(const Matrix &a, const std::vector<double> &v) {
    if (a.cols() != static_cast<int>(v.size()))
        throw std::domain_error("Matrix-vector multiply: shape mismatch");
    std::vector<double> out(a.rows(), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < a.cols(); ++j) s += a(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

}  // namespace matchdid
