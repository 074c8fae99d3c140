// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gdistill/diffcore.hpp"
#include "gdistill/error.hpp"

using namespace gdistill;
using namespace gdistill::ad;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(r, c);
  for (double& v : t.data()) v = n(rng);
  return t;
}

double scalar_output(const Graph& g, const Feed& feed, const ParamStore& params) {
  return forward(g, feed, params).outputs.at("loss").data()[0];
}

/// Max over parameters of the mixed error: absolute below 1e-8, relative otherwise.
double gradient_error(const Graph& g, const Feed& feed, ParamStore& params) {
  params.zero_grad();
  auto fwd = forward(g, feed, params);
  backward(fwd.tape, "loss", params);
  double worst = 0.0;
  const double h = 1e-5;
  for (const auto& name : params.names()) {
    const Tensor analytic = params.grad(name);
    const std::size_t n = params.value(name).size();
    for (std::size_t i = 0; i < n; ++i) {
      const double orig = params.value(name).data()[i];
      params.mutable_value(name).data()[i] = orig + h;
      const double up = scalar_output(g, feed, params);
      params.mutable_value(name).data()[i] = orig - h;
      const double down = scalar_output(g, feed, params);
      params.mutable_value(name).data()[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic.data()[i];
      const double abs_err = std::abs(a - fd);
      if (abs_err < 1e-8) continue;
      worst = std::max(worst, abs_err / std::max(std::abs(a), std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("tensor shapes and matrix views") {
  Tensor t(2, 3, 1.5);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  t.matrix()(1, 2) = 4.0;
  CHECK(t.data()[5] == 4.0);
  const std::vector<double> v{1.0, 2.0, 3.0};
  const Tensor r = Tensor::vector(v);
  CHECK(r.rows() == 1);
  CHECK(r.cols() == 3);
  CHECK(shape_string(r.shape()) == "[3]");
  CHECK(t.all_finite());
  t.data()[0] = NAN;
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("forward pass of a tiny affine graph") {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId w = g.param("w");
  const NodeId b = g.param("b");
  g.set_output("y", g.add_bias(g.matmul(x, w), b));
  ParamStore p;
  Tensor wv(2, 1);
  wv.data()[0] = 2.0;
  wv.data()[1] = -1.0;
  p.add("w", wv);
  p.add("b", Tensor(1, 1, 0.5));
  Feed feed;
  Tensor xv(1, 2);
  xv.data()[0] = 3.0;
  xv.data()[1] = 4.0;
  feed.emplace("x", xv);
  const auto out = forward(g, feed, p);
  CHECK(out.outputs.at("y").data()[0] == doctest::Approx(2.5));
}

TEST_CASE("every op passes a finite-difference gradient check") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g;
    const NodeId x = g.param("x");
    const NodeId w1 = g.param("w1");
    const NodeId b1 = g.param("b1");
    const NodeId w2 = g.param("w2");
    const NodeId s = g.param("s");
    const NodeId tgt = g.param("target");
    const NodeId wt = g.param("weight");
    const NodeId h1 = g.silu(g.add_bias(g.matmul(x, w1), b1));
    const NodeId h2 = g.tanh(g.matmul(x, w2));
    const NodeId joined = g.concat({h1, g.sub(h2, g.scale(h2, 0.3))});
    const NodeId scaled = g.row_scale(joined, s);
    const NodeId pred = g.add(scaled, g.scale(joined, -0.7));
    g.set_output("loss", g.weighted_sse(pred, tgt, wt));

    ParamStore p;
    p.add("x", random_tensor(5, 3, rng));
    p.add("w1", random_tensor(3, 4, rng));
    p.add("b1", random_tensor(1, 4, rng));
    p.add("w2", random_tensor(3, 2, rng));
    p.add("s", random_tensor(5, 1, rng));
    p.add("target", random_tensor(5, 6, rng));
    p.add("weight", random_tensor(5, 1, rng));
    CHECK(gradient_error(g, {}, p) < 1e-6);
  }
}

TEST_CASE("shape mismatches are rejected") {
  Graph g;
  g.set_output("y", g.matmul(g.input("a"), g.input("b")));
  Feed feed;
  feed.emplace("a", Tensor(2, 3));
  feed.emplace("b", Tensor(2, 3));
  CHECK_THROWS_AS(forward(g, feed, ParamStore{}), Error);
}

TEST_CASE("non-finite intermediates are rejected") {
  Graph g;
  g.set_output("y", g.scale(g.input("a"), 2.0));
  Feed feed;
  Tensor a(1, 1, INFINITY);
  feed.emplace("a", a);
  CHECK_THROWS_AS(forward(g, feed, ParamStore{}), Error);
}

TEST_CASE("a stale tape cannot be back-propagated") {
  Graph g;
  g.set_output("loss", g.weighted_sse(g.param("p"), g.input("t"), g.input("w")));
  ParamStore params;
  params.add("p", Tensor(2, 1, 1.0));
  Feed feed;
  feed.emplace("t", Tensor(2, 1, 0.0));
  feed.emplace("w", Tensor(2, 1, 1.0));
  auto fwd = forward(g, feed, params);
  params.mutable_value("p").data()[0] = 3.0;
  CHECK_THROWS_AS(backward(fwd.tape, "loss", params), Error);
}

TEST_CASE("adam takes a bias-corrected first step of size lr") {
  ParamStore params;
  params.add("p", Tensor(1, 2, 0.0));
  params.grad("p").data()[0] = 3.0;
  params.grad("p").data()[1] = -0.01;
  Adam adam;
  REQUIRE(adam.step(params, 0.1));
  CHECK(params.value("p").data()[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(params.value("p").data()[1] == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(adam.steps() == 1);
}

TEST_CASE("adam refuses non-finite gradients") {
  ParamStore params;
  params.add("p", Tensor(1, 1, 2.0));
  params.grad("p").data()[0] = NAN;
  Adam adam;
  CHECK_FALSE(adam.step(params, 0.1));
  CHECK(params.value("p").data()[0] == 2.0);
  CHECK(adam.steps() == 0);
}
