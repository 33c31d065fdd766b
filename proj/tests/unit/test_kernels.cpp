#include <doctest.h>

#include <cstring>
#include <random>

#include "xrlhf/kernels.hpp"

using namespace xrlhf;

namespace {

RowMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (double& x : m.data) x = normal(gen);
  return m;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = unit(gen);
  return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("pairwise_sum matches a plain sum on exact inputs") {
  std::vector<double> v(1000, 0.25);
  CHECK(kernels::pairwise_sum(v) == 250.0);
  CHECK(kernels::pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("dot and squared_norm") {
  std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  CHECK(kernels::dot(a, b) == doctest::Approx(12.0));
  CHECK(kernels::squared_norm(a) == doctest::Approx(14.0));
}

TEST_CASE("small kernels give hand-computed values") {
  RowMatrix m(2, 2);
  m(0, 0) = 1; m(0, 1) = 0;
  m(1, 0) = 0; m(1, 1) = 2;
  std::vector<double> v{3, 4}, out(2), sum(2), gram(4), rows(2);
  kernels::serial::row_dots(m, v, out);
  CHECK(out == std::vector<double>{3, 8});
  kernels::serial::weighted_row_sum(m, std::vector<double>{0.5, 0.5}, sum);
  CHECK(sum == std::vector<double>{0.5, 1.0});
  kernels::serial::squared_distances(m, v, out);
  CHECK(out == std::vector<double>{20, 13});
  kernels::serial::gram(m, gram);
  CHECK(gram == std::vector<double>{1, 0, 0, 4});
  kernels::serial::gram_abs_row_sums(m, rows);
  CHECK(rows == std::vector<double>{1, 4});
}

TEST_CASE("serial and OpenMP kernels agree bitwise") {
  for (std::size_t rows : {7u, 513u, 5000u}) {
    CAPTURE(rows);
    const auto m = random_matrix(rows, 8, rows);
    const auto v = random_vector(8, 1);
    const auto w = random_vector(rows, 2);
    std::vector<double> a(rows), b(rows);

    kernels::serial::row_dots(m, v, a);
    kernels::omp::row_dots(m, v, b);
    CHECK(same_bits(a, b));

    std::vector<double> s(8), t(8);
    kernels::serial::weighted_row_sum(m, w, s);
    kernels::omp::weighted_row_sum(m, w, t);
    CHECK(same_bits(s, t));

    kernels::serial::squared_distances(m, v, a);
    kernels::omp::squared_distances(m, v, b);
    CHECK(same_bits(a, b));

    kernels::serial::gram_abs_row_sums(m, a);
    kernels::omp::gram_abs_row_sums(m, b);
    CHECK(same_bits(a, b));

    if (rows <= 600) {
      std::vector<double> g(rows * rows), h(rows * rows);
      kernels::serial::gram(m, g);
      kernels::omp::gram(m, h);
      CHECK(same_bits(g, h));
    }
  }
}

TEST_CASE("comparison_matrix stacks delta phi in id order") {
  PreferenceDataset d;
  d.dim = 2;
  d.examples.push_back({0, {3, 0}, {1, 1}});
  d.examples.push_back({1, {1, 2}, {1, 2}});
  const auto m = comparison_matrix(d);
  CHECK(m.rows == 2);
  CHECK(m(0, 0) == 2);
  CHECK(m(0, 1) == -1);
  CHECK(m(1, 0) == 0);
  CHECK(m(1, 1) == 0);
}
