#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ksx {

// Dense row-major matrix of doubles. Deliberately small: the classifier
// only needs row access, axpy-style products and element-wise maps.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

namespace detail {

template <std::size_t Block>
inline std::size_t row_times_blocks(std::span<const double> x, const double* w, std::span<double> o,
                                    std::size_t k) {
  const std::size_t in = x.size(), out = o.size();
  for (; k + Block <= out; k += Block) {
    double acc[Block];
    for (std::size_t j = 0; j < Block; ++j) acc[j] = o[k + j];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = x[i];
      const double* wr = w + i * out + k;
      for (std::size_t j = 0; j < Block; ++j) acc[j] += xi * wr[j];
    }
    for (std::size_t j = 0; j < Block; ++j) o[k + j] = acc[j];
  }
  return k;
}

}  // namespace detail

// o += x * w for one row, with w stored in-major (x.size() x o.size()).
// Every output element sums its terms in input order, whatever the blocking.
inline void row_times(std::span<const double> x, const double* w, std::span<double> o) {
  std::size_t k = detail::row_times_blocks<32>(x, w, o, 0);
  k = detail::row_times_blocks<8>(x, w, o, k);
  detail::row_times_blocks<1>(x, w, o, k);
}

// out = in * w, where w is stored in-major (in x out). Rows are independent,
// so the result for a row never depends on which other rows are present.
inline Matrix matmul(const Matrix& in, const Matrix& w) {
  Matrix out(in.rows(), w.cols());
  for (std::size_t r = 0; r < in.rows(); ++r) row_times(in.row(r), w.data().data(), out.row(r));
  return out;
}

}  // namespace ksx
