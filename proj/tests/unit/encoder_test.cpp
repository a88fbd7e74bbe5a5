#include "dali/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <doctest.h>

#include "dali/autodiff.hpp"
#include "dali/errors.hpp"
#include "dali/matrix.hpp"
#include "dali/rng.hpp"

namespace {

dali::Matrix random_matrix(std::size_t n, std::size_t m, dali::Rng& rng) {
  dali::Matrix out(n, m);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  return out;
}

dali::EncoderParams random_encoder(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                                   dali::Rng& rng) {
  dali::EncoderParams p;
  p.w1 = random_matrix(hidden, d_in, rng);
  p.b1 = random_matrix(1, hidden, rng);
  p.w2 = random_matrix(d_out, hidden, rng);
  p.b2 = random_matrix(1, d_out, rng);
  return p;
}

dali::Matrix eye(std::size_t d) {
  dali::Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) m(i, i) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("zero weights reduce the encoder to its output bias") {
  dali::EncoderParams p;
  p.w1 = dali::Matrix(4, 3);
  p.b1 = dali::Matrix(1, 4);
  p.w2 = dali::Matrix(2, 4);
  p.b2 = dali::Matrix::from_rows({{0.25, -1.5}});
  dali::Rng rng(5);
  auto out = dali::encode(p, random_matrix(6, 3, rng));
  REQUIRE(out.rows() == 6);
  REQUIRE(out.cols() == 2);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(out(i, 0) == 0.25);
    CHECK(out(i, 1) == -1.5);
  }
}

TEST_CASE("identity weights with zero bias pass positive inputs through") {
  const std::size_t d = 3;
  dali::EncoderParams p;
  p.w1 = eye(d);
  p.b1 = dali::Matrix(1, d);
  p.w2 = eye(d);
  p.b2 = dali::Matrix(1, d);
  auto in = dali::Matrix::from_rows({{1.0, 2.0, 0.5}, {-1.0, 3.0, -0.25}});
  auto out = dali::encode(p, in);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 2.0);
  CHECK(out(0, 2) == 0.5);
  CHECK(out(1, 0) == 0.0);  // negative inputs clipped by the hidden relu
  CHECK(out(1, 1) == 3.0);
  CHECK(out(1, 2) == 0.0);
}

TEST_CASE("encode matches a direct loop evaluation") {
  dali::Rng rng(17);
  auto p = random_encoder(5, 7, 4, rng);
  auto in = random_matrix(6, 5, rng);
  auto out = dali::encode(p, in);
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<double> hidden(7);
    for (std::size_t h = 0; h < 7; ++h) {
      double acc = p.b1(0, h);
      for (std::size_t j = 0; j < 5; ++j) acc += in(i, j) * p.w1(h, j);
      hidden[h] = std::max(acc, 0.0);
    }
    for (std::size_t o = 0; o < 4; ++o) {
      double acc = p.b2(0, o);
      for (std::size_t h = 0; h < 7; ++h) acc += hidden[h] * p.w2(o, h);
      CHECK(out(i, o) == doctest::Approx(acc).epsilon(1e-14));
    }
  }
}

TEST_CASE("graph evaluation agrees with the plain forward pass") {
  dali::Rng rng(23);
  auto p = random_encoder(4, 6, 3, rng);
  auto in = random_matrix(5, 4, rng);
  auto plain = dali::encode(p, in);
  auto nodes = dali::make_encoder_nodes(p);
  auto out = dali::encode_node(nodes, dali::constant(in));
  REQUIRE(out->value.rows() == 5);
  for (std::size_t i = 0; i < plain.size(); ++i) {
    CHECK(out->value.data()[i] == plain.data()[i]);
  }
  auto back = dali::read_encoder_nodes(nodes);
  for (std::size_t i = 0; i < p.w1.size(); ++i) CHECK(back.w1.data()[i] == p.w1.data()[i]);
}

TEST_CASE("gradients through the encoder check against finite differences") {
  dali::Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_encoder(3, 5, 2, rng);
    auto in = random_matrix(4, 3, rng);
    // Differentiate a sum-of-squares readout with respect to each parameter
    // slot in turn, holding the others fixed.
    for (int slot = 0; slot < 4; ++slot) {
      auto f = [&](const dali::NodePtr& x) {
        dali::EncoderNodes nodes{dali::constant(p.w1), dali::constant(p.b1),
                                 dali::constant(p.w2), dali::constant(p.b2)};
        (slot == 0 ? nodes.w1 : slot == 1 ? nodes.b1 : slot == 2 ? nodes.w2 : nodes.b2) = x;
        auto out = dali::encode_node(nodes, dali::constant(in));
        return dali::reduce_sum(dali::hadamard(out, out));
      };
      const dali::Matrix& point = slot == 0 ? p.w1 : slot == 1 ? p.b1 : slot == 2 ? p.w2 : p.b2;
      CHECK(dali::grad_check(f, point) < 1e-5);
    }
  }
}

TEST_CASE("encoder shape mismatches are rejected") {
  dali::Rng rng(37);
  auto p = random_encoder(5, 7, 4, rng);
  CHECK_THROWS_AS(dali::encode(p, random_matrix(3, 6, rng)), dali::DimensionError);

  auto bad = p;
  bad.b1 = dali::Matrix(1, 6);
  CHECK_THROWS_AS(dali::validate_encoder(bad), dali::DimensionError);
  bad = p;
  bad.w2 = dali::Matrix(4, 8);
  CHECK_THROWS_AS(dali::validate_encoder(bad), dali::DimensionError);
  bad = p;
  bad.b2 = dali::Matrix(2, 4);
  CHECK_THROWS_AS(dali::validate_encoder(bad), dali::DimensionError);
}

TEST_CASE("encoder initialization is deterministic with bounded weights") {
  dali::Rng a(71), b(71), c(72);
  auto pa = dali::init_encoder(6, 9, 4, a, 0.5, 0.25);
  auto pb = dali::init_encoder(6, 9, 4, b, 0.5, 0.25);
  auto pc = dali::init_encoder(6, 9, 4, c, 0.5, 0.25);
  for (std::size_t i = 0; i < pa.w1.size(); ++i) {
    CHECK(pa.w1.data()[i] == pb.w1.data()[i]);
    CHECK(std::abs(pa.w1.data()[i]) <= 0.5);
  }
  for (std::size_t i = 0; i < pa.w2.size(); ++i) CHECK(std::abs(pa.w2.data()[i]) <= 0.25);
  for (std::size_t i = 0; i < pa.b1.size(); ++i) CHECK(pa.b1.data()[i] == 0.0);
  for (std::size_t i = 0; i < pa.b2.size(); ++i) CHECK(pa.b2.data()[i] == 0.0);
  bool differs = false;
  for (std::size_t i = 0; i < pa.w1.size() && !differs; ++i) {
    differs = pa.w1.data()[i] != pc.w1.data()[i];
  }
  CHECK(differs);
}
