// Serial reference kernels against their OpenMP versions on one random matrix.
// Usage: xrlhf_bench_kernels [rows] [cols] [repetitions]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include <omp.h>

#include "xrlhf/kernels.hpp"

using namespace xrlhf;

namespace {

double median_ms(const std::function<void()>& f, int reps) {
  std::vector<double> t;
  for (int r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-20s %12.3f %12.3f %8.2fx  %s\n", name, serial, parallel, serial / parallel,
              same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t rows = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 20000;
  const std::size_t cols = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 8;
  const int reps = argc > 3 ? std::atoi(argv[3]) : 5;
  const std::size_t gram_rows = std::min<std::size_t>(rows, 2000);

  std::mt19937_64 gen(42);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.data.resize(rows * cols);
  for (double& x : m.data) x = normal(gen);
  std::vector<double> v(cols), w(rows);
  for (double& x : v) x = normal(gen);
  for (double& x : w) x = std::abs(normal(gen));

  RowMatrix g = m;
  g.rows = gram_rows;
  g.data.resize(gram_rows * cols);

  std::printf("rows %zu, cols %zu, gram rows %zu, threads %d, median of %d\n", rows, cols, gram_rows,
              omp_get_max_threads(), reps);
  std::printf("%-20s %12s %12s %9s\n", "kernel", "serial_ms", "omp_ms", "speedup");

  std::vector<double> a(rows), b(rows);
  double s = median_ms([&] { kernels::serial::row_dots(m, v, a); }, reps);
  double p = median_ms([&] { kernels::omp::row_dots(m, v, b); }, reps);
  report("row_dots", s, p, a == b);

  std::vector<double> sa(cols), sb(cols);
  s = median_ms([&] { kernels::serial::weighted_row_sum(m, w, sa); }, reps);
  p = median_ms([&] { kernels::omp::weighted_row_sum(m, w, sb); }, reps);
  report("weighted_row_sum", s, p, sa == sb);

  s = median_ms([&] { kernels::serial::squared_distances(m, v, a); }, reps);
  p = median_ms([&] { kernels::omp::squared_distances(m, v, b); }, reps);
  report("squared_distances", s, p, a == b);

  std::vector<double> ga(gram_rows * gram_rows), gb(gram_rows * gram_rows);
  s = median_ms([&] { kernels::serial::gram(g, ga); }, reps);
  p = median_ms([&] { kernels::omp::gram(g, gb); }, reps);
  report("gram", s, p, ga == gb);

  std::vector<double> ra(gram_rows), rb(gram_rows);
  s = median_ms([&] { kernels::serial::gram_abs_row_sums(g, ra); }, reps);
  p = median_ms([&] { kernels::omp::gram_abs_row_sums(g, rb); }, reps);
  report("gram_abs_row_sums", s, p, ra == rb);
  return 0;
}
