#include <doctest.h>

#include "oracles/oracles.hpp"

TEST_CASE("jacobi oracle on hand-computed spectra") {
  oracle::MatrixXd a(2, 2);
  a << 3, 0, 4, 5;
  const auto sv = oracle::singular_values(a);
  CHECK(sv[0] == doctest::Approx(std::sqrt(45.0)).epsilon(1e-14));
  CHECK(sv[1] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));

  oracle::MatrixXd diag = oracle::MatrixXd::Zero(3, 4);
  diag(0, 0) = -2;
  diag(1, 1) = 7;
  diag(2, 2) = 0.5;
  const auto sd = oracle::singular_values(diag);
  REQUIRE(sd.size() == 3);
  CHECK(sd[0] == 7);
  CHECK(sd[1] == 2);
  CHECK(sd[2] == 0.5);
}

TEST_CASE("jacobi oracle rank of outer products") {
  std::mt19937_64 rng(3);
  const auto u = oracle::gaussian(6, 1, rng);
  const auto v = oracle::gaussian(1, 5, rng);
  const auto w = oracle::gaussian(6, 1, rng);
  const auto z = oracle::gaussian(1, 5, rng);
  CHECK(oracle::rank(u * v) == 1);
  CHECK(oracle::rank(u * v + w * z) == 2);
  CHECK(oracle::rank(oracle::MatrixXd::Zero(3, 3)) == 0);
}

TEST_CASE("impulse response oracle on a one-state recurrence") {
  esswb::LinearRecurrence rec;
  rec.seq_len = 2;
  rec.channel_block = 1;
  rec.state_dims = {0, 1};
  rec.A = {oracle::MatrixXd(1, 0), oracle::MatrixXd(0, 1)};
  rec.B = {oracle::MatrixXd::Ones(1, 1), oracle::MatrixXd(0, 1)};
  rec.C = {oracle::MatrixXd(1, 0), oracle::MatrixXd::Ones(1, 1)};
  rec.D = {oracle::MatrixXd::Zero(1, 1), oracle::MatrixXd::Zero(1, 1)};
  oracle::MatrixXd expected(2, 2);
  expected << 0, 0, 1, 0;
  CHECK(oracle::impulse_response(rec) == expected);
}
