#pragma once

// Dense data-parallel kernels shared by the reward model, the hull solver and
// the explainer. Each kernel exists twice: a serial reference under
// `kernels::serial` and an OpenMP version under `kernels::omp`. Both use the
// same fixed block decomposition for reductions, so their results are
// bitwise identical for any thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "xrlhf/types.hpp"

namespace xrlhf {

/// Row-major dense matrix; rows are feature vectors.
struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  RowMatrix() = default;
  RowMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  void append_row(std::span<const double> v);
};

RowMatrix to_matrix(std::span<const FeatureVector> rows, std::size_t cols);
/// Stacks the Δφ of every example, one row per example, in id order.
RowMatrix comparison_matrix(const PreferenceDataset& data);

namespace kernels {

/// Rows per block in blocked reductions.
inline constexpr std::size_t kBlock = 64;
/// Row count below which the OpenMP kernels stay on one thread.
inline constexpr std::size_t kParallelThreshold = 512;

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
/// Recursive pairwise summation in a fixed order.
double pairwise_sum(std::span<const double> v);

namespace serial {
/// out[i] = <row_i, v>
void row_dots(const RowMatrix& m, std::span<const double> v, std::span<double> out);
/// out = sum_i w[i] * row_i, blocked reduction.
void weighted_row_sum(const RowMatrix& m, std::span<const double> w, std::span<double> out);
/// out[i] = ||row_i - p||^2
void squared_distances(const RowMatrix& m, std::span<const double> p, std::span<double> out);
/// Full Gram matrix Q_ij = <row_i, row_j>, row-major n x n.
void gram(const RowMatrix& m, std::span<double> out);
/// out[i] = sum_j |<row_i, row_j>|, without storing the Gram matrix.
void gram_abs_row_sums(const RowMatrix& m, std::span<double> out);
}  // namespace serial

namespace omp {
void row_dots(const RowMatrix& m, std::span<const double> v, std::span<double> out);
void weighted_row_sum(const RowMatrix& m, std::span<const double> w, std::span<double> out);
void squared_distances(const RowMatrix& m, std::span<const double> p, std::span<double> out);
void gram(const RowMatrix& m, std::span<double> out);
void gram_abs_row_sums(const RowMatrix& m, std::span<double> out);
}  // namespace omp

// The library calls these; they route to the OpenMP kernels.
using omp::gram;
using omp::gram_abs_row_sums;
using omp::row_dots;
using omp::squared_distances;
using omp::weighted_row_sum;

}  // namespace kernels
}  // namespace xrlhf
