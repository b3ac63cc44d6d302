#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cdg/decomp.hpp"
#include "cdg/errors.hpp"

using namespace cdg;

namespace {

Matrix random_corr(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> n01;
  Matrix a(n, n + 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n + 2; ++j) a(i, j) = n01(rng);
  return cov_to_corr(a * a.transpose());
}

Matrix r2() {
  Matrix r(2, 2);
  r << 1, 0.5, 0.5, 1;
  return r;
}

constexpr std::array<DecompKind, 5> kAll{DecompKind::Sqrt, DecompKind::Sqrt2, DecompKind::Cholesky,
                                         DecompKind::Eigen, DecompKind::Eigen2};

}  // namespace

TEST_CASE("hand values") {
  Matrix s = decompose({DecompKind::Sqrt}, r2());
  CHECK(s(0, 0) == doctest::Approx((std::sqrt(1.5) + std::sqrt(0.5)) / 2));
  CHECK(s(0, 1) == doctest::Approx((std::sqrt(1.5) - std::sqrt(0.5)) / 2));
  CHECK(s(0, 0) == doctest::Approx(0.96593).epsilon(1e-5));
  CHECK(s(1, 0) == doctest::Approx(0.25882).epsilon(1e-4));

  Matrix c = decompose({DecompKind::Cholesky}, r2());
  CHECK(c(0, 0) == 1.0);
  CHECK(c(0, 1) == 0.0);
  CHECK(c(1, 0) == doctest::Approx(0.5));
  CHECK(c(1, 1) == doctest::Approx(std::sqrt(0.75)));

  EigenSortState st;
  Matrix e = decompose({DecompKind::Eigen}, r2(), {}, &st);
  CHECK(e(0, 0) == doctest::Approx(0.866025).epsilon(1e-6));
  CHECK(e(1, 0) == doctest::Approx(0.866025).epsilon(1e-6));
  CHECK(e(0, 1) == doctest::Approx(0.5));
  CHECK(e(1, 1) == doctest::Approx(-0.5));

  for (auto k : kAll) {
    EigenSortState s2;
    std::array<double, 3> sig{1.0, 1.0, 1.0};
    Matrix x = decompose({k}, Matrix::Identity(3, 3), sig, &s2);
    CHECK((x - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);
  }
  Matrix bad = r2();
  bad(0, 1) = bad(1, 0) = 1.5;
  CHECK_THROWS_AS(decompose({DecompKind::Cholesky}, bad), MatrixError);
  CHECK_THROWS_AS(decompose({DecompKind::Sqrt}, bad), MatrixError);
  CHECK_THROWS_AS(decompose({DecompKind::Sqrt2}, r2()), ParamError);
  CHECK(parse_decomp_kind("eigen2") == DecompKind::Eigen2);
  CHECK_THROWS_AS(parse_decomp_kind("ldl"), ConfigError);
}

TEST_CASE("angles") {
  Vector a(2), b(2), c(2);
  a << 1, 0;
  b << 0, 1;
  c << 1, 1;
  CHECK(angle(a, b) == doctest::Approx(std::numbers::pi / 2));
  CHECK(angle(c, c) == doctest::Approx(0.0));
  CHECK(angle(a, c) == doctest::Approx(0.785398).epsilon(1e-6));
  CHECK_THROWS_AS(angle(a, Vector::Zero(2)), DomainError);
}

TEST_CASE("factorization identities on random matrices") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> vol(0.002, 0.02);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + trial % 5;
    Matrix r = random_corr(rng, n);
    std::vector<double> sig(static_cast<std::size_t>(n));
    for (auto& s : sig) s = vol(rng);
    for (auto k : kAll) {
      EigenSortState st;
      Matrix x = decompose({k}, r, sig, &st);
      CHECK((x * x.transpose() - r).cwiseAbs().maxCoeff() < 1e-12);
      if (k == DecompKind::Sqrt) CHECK((x - x.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
    Vector s = Eigen::Map<Vector>(sig.data(), n);
    Matrix h = s.asDiagonal() * r * s.asDiagonal();
    Matrix lh = decompose({DecompKind::Cholesky}, h);
    Matrix lr = decompose({DecompKind::Cholesky}, r);
    CHECK((lr - s.cwiseInverse().asDiagonal() * lh).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("eigen sort sign rules") {
  EigenSortState st;
  Matrix v1(2, 2);
  v1 << 1, -1, 1, 1;
  v1 /= std::sqrt(2.0);
  Vector d(2);
  d << 1.5, 0.5;
  auto first = eigen_sort_step(v1, d, st, 50);
  CHECK(first.vectors(0, 0) > 0);
  Matrix flipped = -v1;
  auto second = eigen_sort_step(flipped, d, st, 50);
  CHECK((second.vectors - first.vectors).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(angle(second.vectors.col(0), first.vectors.col(0)) == doctest::Approx(0.0));
  CHECK(st.history.size() == 2);

  // Window length is bounded by tau.
  for (int i = 0; i < 10; ++i) eigen_sort_step(v1, d, st, 4);
  CHECK(st.history.size() == 4);

  // Ascending solver output is reordered.
  EigenSortState st2;
  Vector asc(2);
  asc << 0.5, 1.5;
  Matrix swapped(2, 2);
  swapped.col(0) = v1.col(1);
  swapped.col(1) = v1.col(0);
  auto s2 = eigen_sort_step(swapped, asc, st2, 50);
  CHECK(s2.values[0] == 1.5);
}

TEST_CASE("eigen sort follows a rotating frame and ignores solver signs") {
  std::mt19937_64 rng(13);
  std::bernoulli_distribution coin(0.5);
  for (auto k : {DecompKind::Eigen, DecompKind::Eigen2}) {
    Decomposer clean({k, 50}), noisy({k, 50});
    for (int t = 0; t < 300; ++t) {
      double th = 0.02 * t;
      Matrix rot(3, 3);
      rot << std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0, 0, 0, 1;
      Vector dv(3);
      dv << 1.8, 0.9, 0.3;
      Matrix r = cov_to_corr(rot * dv.asDiagonal() * rot.transpose());
      std::array<double, 3> sig{0.01, 0.005, 0.02};
      Matrix x = clean.next(r, sig);
      Matrix y = noisy.next(r, sig);
      CHECK((x - y).cwiseAbs().maxCoeff() == 0.0);
    }
    // Sign-flipped raw solver output through eigen_sort_step directly.
    EigenSortState a, b;
    for (int t = 0; t < 200; ++t) {
      Matrix r = random_corr(rng, 4);
      Eigen::SelfAdjointEigenSolver<Matrix> es(r);
      Matrix v = es.eigenvectors(), w = v;
      for (int j = 0; j < 4; ++j)
        if (coin(rng)) w.col(j) *= -1.0;
      auto p = eigen_sort_step(v, es.eigenvalues(), a, 50);
      auto q = eigen_sort_step(w, es.eigenvalues(), b, 50);
      CHECK((p.vectors - q.vectors).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("constant correlation gives a constant factor") {
  std::mt19937_64 rng(19);
  Matrix r = random_corr(rng, 4);
  Decomposer dec({DecompKind::Eigen, 50});
  Matrix first = dec.next(r);
  for (int t = 0; t < 100; ++t) CHECK((dec.next(r) - first).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exact angle tie keeps the canonical sign") {
  // Past vector orthogonal to both candidates: the summed angles are equal.
  EigenSortState st;
  Matrix past(2, 2);
  past << 1, 0, 0, 1;
  st.history.push_back(past);
  Matrix v(2, 2);
  v << 0, 1, -1, 0;
  Vector d(2);
  d << 2.0, 1.0;
  auto a = eigen_sort_step(v, d, st, 50);
  st.history.pop_back();
  auto b = eigen_sort_step(Matrix(-v), d, st, 50);
  CHECK(a.vectors == b.vectors);
  CHECK(a.vectors(1, 0) == 1.0);
}
