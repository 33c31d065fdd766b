#include "xrlhf/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include <omp.h>

#include "xrlhf/errors.hpp"

namespace xrlhf {

void RowMatrix::append_row(std::span<const double> v) {
  if (rows == 0 && cols == 0) cols = v.size();
  if (v.size() != cols) throw DimensionError("append_row: dimension mismatch");
  data.insert(data.end(), v.begin(), v.end());
  ++rows;
}

RowMatrix to_matrix(std::span<const FeatureVector> rows, std::size_t cols) {
  RowMatrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw DimensionError("to_matrix: dimension mismatch");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

RowMatrix comparison_matrix(const PreferenceDataset& data) {
  RowMatrix m(data.size(), data.dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ex = data.examples[i];
    auto r = m.row(i);
    for (std::size_t j = 0; j < data.dim; ++j) r[j] = ex.phi_w[j] - ex.phi_l[j];
  }
  return m;
}

namespace kernels {

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

namespace {

std::size_t num_blocks(std::size_t n) { return (n + kBlock - 1) / kBlock; }

void accumulate_block(const RowMatrix& m, std::span<const double> w, std::size_t b,
                      std::span<double> partial) {
  std::fill(partial.begin(), partial.end(), 0.0);
  const std::size_t end = std::min(m.rows, (b + 1) * kBlock);
  for (std::size_t i = b * kBlock; i < end; ++i) {
    const double wi = w[i];
    if (wi == 0.0) continue;
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) partial[j] += wi * r[j];
  }
}

// Pairwise combination of block partials, coordinate by coordinate.
void combine_blocks(const std::vector<double>& partials, std::size_t blocks, std::size_t cols,
                    std::span<double> out) {
  std::vector<double> column(blocks);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t b = 0; b < blocks; ++b) column[b] = partials[b * cols + j];
    out[j] = pairwise_sum(column);
  }
}

double squared_distance(std::span<const double> r, std::span<const double> p) {
  double s = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    const double t = r[j] - p[j];
    s += t * t;
  }
  return s;
}

double abs_dot_row_sum(const RowMatrix& m, std::size_t i) {
  double s = 0.0;
  const auto r = m.row(i);
  for (std::size_t j = 0; j < m.rows; ++j) s += std::abs(dot(r, m.row(j)));
  return s;
}

}  // namespace

namespace serial {

void row_dots(const RowMatrix& m, std::span<const double> v, std::span<double> out) {
  for (std::size_t i = 0; i < m.rows; ++i) out[i] = dot(m.row(i), v);
}

void weighted_row_sum(const RowMatrix& m, std::span<const double> w, std::span<double> out) {
  const std::size_t blocks = num_blocks(m.rows);
  if (blocks == 0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  std::vector<double> partials(blocks * m.cols);
  for (std::size_t b = 0; b < blocks; ++b)
    accumulate_block(m, w, b, std::span<double>(partials.data() + b * m.cols, m.cols));
  combine_blocks(partials, blocks, m.cols, out);
}

void squared_distances(const RowMatrix& m, std::span<const double> p, std::span<double> out) {
  for (std::size_t i = 0; i < m.rows; ++i) out[i] = squared_distance(m.row(i), p);
}

void gram(const RowMatrix& m, std::span<double> out) {
  const std::size_t n = m.rows;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double q = dot(m.row(i), m.row(j));
      out[i * n + j] = q;
      out[j * n + i] = q;
    }
}

void gram_abs_row_sums(const RowMatrix& m, std::span<double> out) {
  for (std::size_t i = 0; i < m.rows; ++i) out[i] = abs_dot_row_sum(m, i);
}

}  // namespace serial

namespace omp {

void row_dots(const RowMatrix& m, std::span<const double> v, std::span<double> out) {
  const auto n = static_cast<long long>(m.rows);
#pragma omp parallel for schedule(static) if (m.rows >= kParallelThreshold)
  for (long long i = 0; i < n; ++i) out[i] = dot(m.row(i), v);
}

void weighted_row_sum(const RowMatrix& m, std::span<const double> w, std::span<double> out) {
  const std::size_t blocks = num_blocks(m.rows);
  if (blocks == 0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  std::vector<double> partials(blocks * m.cols);
  const auto nb = static_cast<long long>(blocks);
#pragma omp parallel for schedule(static) if (m.rows >= kParallelThreshold)
  for (long long b = 0; b < nb; ++b)
    accumulate_block(m, w, b, std::span<double>(partials.data() + b * m.cols, m.cols));
  combine_blocks(partials, blocks, m.cols, out);
}

void squared_distances(const RowMatrix& m, std::span<const double> p, std::span<double> out) {
  const auto n = static_cast<long long>(m.rows);
#pragma omp parallel for schedule(static) if (m.rows >= kParallelThreshold)
  for (long long i = 0; i < n; ++i) out[i] = squared_distance(m.row(i), p);
}

void gram(const RowMatrix& m, std::span<double> out) {
  const auto n = static_cast<long long>(m.rows);
  const std::size_t un = m.rows;
#pragma omp parallel for schedule(dynamic, 16) if (m.rows >= 64)
  for (long long i = 0; i < n; ++i)
    for (std::size_t j = i; j < un; ++j) {
      const double q = dot(m.row(i), m.row(j));
      out[i * un + j] = q;
      out[j * un + i] = q;
    }
}

void gram_abs_row_sums(const RowMatrix& m, std::span<double> out) {
  const auto n = static_cast<long long>(m.rows);
#pragma omp parallel for schedule(static) if (m.rows >= 64)
  for (long long i = 0; i < n; ++i) out[i] = abs_dot_row_sum(m, i);
}

}  // namespace omp
}  // namespace kernels
}  // namespace xrlhf
