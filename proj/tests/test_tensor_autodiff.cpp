// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <quadmath.h>

#include <cmath>

#include "lmpc/adam.hpp"
#include "lmpc/autodiff.hpp"
#include "lmpc/error.hpp"
#include "support.hpp"

namespace lmpc {
namespace {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using test::random_tensor;
using test::rel_err;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_EQ(Tensor(Shape{2, 3}).size(), 6u);
  EXPECT_EQ(Tensor::scalar(3.0).item(), 3.0);
  EXPECT_THROW(Tensor(Shape{2}).item(), ShapeError);
}

TEST(Tensor, MatmulShapes) {
  Tape tape;
  Var a = tape.constant(Tensor(Shape{2, 3}, 1.0));
  Var b = tape.constant(Tensor(Shape{3, 1}, 2.0));
  Var c = ad::matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.value()[0], 6.0);
  EXPECT_EQ(c.value()[1], 6.0);
}

TEST(Tensor, ShapeErrorNamesOpAndShapes) {
  Tape tape;
  Var a = tape.constant(Tensor(Shape{2, 3}));
  Var b = tape.constant(Tensor(Shape{2, 4}));
  try {
    ad::add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2, 4]"), std::string::npos) << msg;
  }
  EXPECT_THROW(ad::matmul(a, b), ShapeError);
}

TEST(Tensor, AnalyticValuesAtZero) {
  Tape tape;
  Var z = tape.constant(Tensor::scalar(0.0));
  EXPECT_EQ(ad::tanh(z).value().item(), 0.0);
  EXPECT_EQ(ad::sigmoid(z).value().item(), 0.5);
  EXPECT_EQ(ad::softplus(z).value().item(), std::log(2.0));
}

TEST(Tensor, SoftplusMatchesQuadPrecision) {
  for (double x : {-100.0, -30.0, -1.0, 0.0, 1.0, 30.0, 100.0, 700.0}) {
    const __float128 q = x;
    const double want = static_cast<double>(log1pq(expq(q)));
    EXPECT_LE(rel_err(ad::softplus(x), want, 1e-300), 1e-15) << "x=" << x;
  }
  EXPECT_TRUE(std::isfinite(ad::softplus(1000.0)));
}

TEST(Tensor, NonFiniteForwardValueThrows) {
  Tape tape;
  Var z = tape.constant(Tensor::scalar(0.0));
  EXPECT_THROW(ad::log(z), NumericError);
}

TEST(Gradient, SumOfSquares) {
  Tape tape;
  Var w = tape.variable(Tensor::vector({1.0, 2.0}));
  Var loss = ad::sum(w * w);
  const auto g = tape.gradient(loss, std::vector<Var>{w});
  EXPECT_EQ(g[0][0], 2.0);
  EXPECT_EQ(g[0][1], 4.0);
}

TEST(Gradient, UnusedParameterGetsZero) {
  Tape tape;
  Var w = tape.variable(Tensor::vector({1.0, 2.0}));
  Var unused = tape.variable(Tensor(Shape{3, 2}, 5.0));
  Var loss = ad::sum(ad::exp(w));
  const auto g = tape.gradient(loss, std::vector<Var>{w, unused});
  EXPECT_EQ(g[1], Tensor(Shape{3, 2}));
}

TEST(Gradient, ConstantGetsZero) {
  Tape tape;
  Var c = tape.constant(Tensor::vector({1.0, 2.0}));
  Var w = tape.variable(Tensor::vector({3.0, 4.0}));
  Var loss = ad::sum(c * w);
  const auto g = tape.gradient(loss, std::vector<Var>{c, w});
  EXPECT_EQ(g[0], Tensor(Shape{2}));
  EXPECT_EQ(g[1], Tensor::vector({1.0, 2.0}));
}

TEST(Gradient, NonScalarLossThrows) {
  Tape tape;
  Var w = tape.variable(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(tape.gradient(w * w, std::vector<Var>{w}), ShapeError);
}

TEST(Gradient, EachNodeVisitedOnce) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({0.5, -1.0}));
  Var c = tape.constant(Tensor::vector({2.0, 3.0}));
  Var cc = c * c;  // constant branch, never visited
  Var loss = ad::sum(x * x + x * x + cc);
  tape.gradient(loss, std::vector<Var>{x});
  // two products, two adds, one sum
  EXPECT_EQ(tape.last_backward_visits(), 5u);
  const auto g1 = tape.gradient(loss, std::vector<Var>{x});
  const auto g2 = tape.gradient(loss, std::vector<Var>{x});
  EXPECT_EQ(g1, g2);
  EXPECT_EQ(g1[0], Tensor::vector({2.0, -4.0}));
}

// Property: analytic gradient of every primitive agrees with central
// differences on random inputs in [-2, 2].
struct Primitive {
  const char* name;
  bool binary;
  Shape b_shape;  // shape of the second operand
  std::function<Var(Var, Var)> op;
  // maps a raw uniform draw to a valid input
  std::function<double(double)> fix_a = [](double x) { return x; };
  std::function<double(double)> fix_b = [](double x) { return x; };
};

std::vector<Primitive> primitives() {
  auto away = [](double x) { return x >= 0 ? x + 0.5 : x - 0.5; };
  auto positive = [](double x) { return std::abs(x) + 0.2; };
  auto same = [](double x) { return x; };
  auto off_kink = [](double x) { return std::abs(x - 0.3) < 1e-3 ? x + 0.01 : x; };
  return {
      {"add", true, {3, 4}, [](Var a, Var b) { return a + b; }},
      {"add_row_broadcast", true, {4}, [](Var a, Var b) { return a + b; }},
      {"add_scalar_broadcast", true, {}, [](Var a, Var b) { return a + b; }},
      {"sub", true, {4}, [](Var a, Var b) { return a - b; }},
      {"mul", true, {3, 4}, [](Var a, Var b) { return a * b; }},
      {"mul_row_broadcast", true, {4}, [](Var a, Var b) { return a * b; }},
      {"div", true, {3, 4}, [](Var a, Var b) { return a / b; }, same, away},
      {"matmul", true, {4, 2}, [](Var a, Var b) { return ad::matmul(a, b); }},
      {"neg", false, {}, [](Var a, Var) { return -a; }},
      {"scale", false, {}, [](Var a, Var) { return ad::scale(a, -1.7); }},
      {"add_scalar", false, {}, [](Var a, Var) { return ad::add_scalar(a, 0.3); }},
      {"square", false, {}, [](Var a, Var) { return ad::square(a); }},
      {"tanh", false, {}, [](Var a, Var) { return ad::tanh(a); }},
      {"sigmoid", false, {}, [](Var a, Var) { return ad::sigmoid(a); }},
      {"softplus", false, {}, [](Var a, Var) { return ad::softplus(a); }},
      {"exp", false, {}, [](Var a, Var) { return ad::exp(a); }},
      {"log", false, {}, [](Var a, Var) { return ad::log(a); }, positive},
      {"maximum", false, {}, [](Var a, Var) { return ad::maximum(a, 0.3); }, off_kink},
      {"sum", false, {}, [](Var a, Var) { return ad::sum(a); }},
      {"mean", false, {}, [](Var a, Var) { return ad::mean(a); }},
      {"sum_last", false, {}, [](Var a, Var) { return ad::sum_last(a); }},
      {"concat", true, {3, 2}, [](Var a, Var b) { return ad::concat(a, b); }},
      {"slice_last", false, {}, [](Var a, Var) { return ad::slice_last(a, 1, 3); }},
  };
}

TEST(Gradient, PrimitivesMatchFiniteDifferences) {
  Rng rng(11);
  for (const auto& p : primitives()) {
    for (int trial = 0; trial < 10; ++trial) {
      Tensor a = random_tensor({3, 4}, rng);
      for (auto& v : a.data()) v = p.fix_a(v);
      Tensor b = random_tensor(p.b_shape, rng);
      for (auto& v : b.data()) v = p.fix_b(v);

      // Contract the output with fixed random coefficients to get a scalar.
      Tensor coeff;
      auto loss_of = [&](const Tensor& av, const Tensor& bv, Tape& tape, Var* va, Var* vb) {
        *va = tape.variable(av);
        *vb = tape.variable(bv);
        Var out = p.op(*va, *vb);
        if (coeff.size() != out.value().size()) {
          coeff = random_tensor(out.shape(), rng, 0.5, 1.5);
        }
        return ad::sum(out * tape.constant(coeff));
      };
      Tape tape;
      Var va, vb;
      Var loss = loss_of(a, b, tape, &va, &vb);
      const auto g = tape.gradient(loss, std::vector<Var>{va, vb});

      auto f_a = [&](const Tensor& x) {
        Tape t;
        Var x1, x2;
        return loss_of(x, b, t, &x1, &x2).value().item();
      };
      auto f_b = [&](const Tensor& x) {
        Tape t;
        Var x1, x2;
        return loss_of(a, x, t, &x1, &x2).value().item();
      };
      const auto na = test::numeric_gradient(f_a, a);
      for (std::size_t i = 0; i < na.size(); ++i) {
        ASSERT_LT(rel_err(g[0][i], na[i]), 1e-4) << p.name << " d/da[" << i << "]";
      }
      if (p.binary) {
        const auto nb = test::numeric_gradient(f_b, b);
        for (std::size_t i = 0; i < nb.size(); ++i) {
          ASSERT_LT(rel_err(g[1][i], nb[i]), 1e-4) << p.name << " d/db[" << i << "]";
        }
      }
    }
  }
}

// A 3-layer tanh network with a squared-error loss.
Var three_layer_loss(Tape& tape, const ad::ParameterSet& params, const Tensor& x,
                     const Tensor& y, std::vector<Var>* vars) {
  *vars = tape.watch(params);
  const auto& v = *vars;
  Var h = ad::tanh(ad::matmul(tape.constant(x), v[0]) + v[1]);
  h = ad::sigmoid(ad::matmul(h, v[2]) + v[3]);
  Var out = ad::matmul(h, v[4]) + v[5];
  return ad::mean(ad::square(out - tape.constant(y)));
}

ad::ParameterSet three_layer_params(Rng& rng) {
  ad::ParameterSet p;
  p.add("w1", random_tensor({3, 5}, rng));
  p.add("b1", random_tensor({5}, rng));
  p.add("w2", random_tensor({5, 4}, rng));
  p.add("b2", random_tensor({4}, rng));
  p.add("w3", random_tensor({4, 2}, rng));
  p.add("b3", random_tensor({2}, rng));
  return p;
}

TEST(Gradient, ThreeLayerNetworkMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    ad::ParameterSet params = three_layer_params(rng);
    const Tensor x = random_tensor({6, 3}, rng);
    const Tensor y = random_tensor({6, 2}, rng);
    Tape tape;
    std::vector<Var> vars;
    Var loss = three_layer_loss(tape, params, x, y, &vars);
    const auto g = tape.gradient(loss, vars);
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto f = [&](const Tensor& w) {
        ad::ParameterSet q = params;
        q[p] = w;
        Tape t;
        std::vector<Var> vs;
        return three_layer_loss(t, q, x, y, &vs).value().item();
      };
      const auto n = test::numeric_gradient(f, params[p]);
      for (std::size_t i = 0; i < n.size(); ++i) {
        ASSERT_LT(rel_err(g[p][i], n[i]), 1e-4) << params.name(p) << "[" << i << "]";
      }
    }
  }
}

TEST(Gradient, LinearityOverSummedLosses) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x0 = random_tensor({2, 3}, rng);
    Tape tape;
    Var x = tape.variable(x0);
    Var l1 = ad::sum(ad::tanh(x) * x);
    Var l2 = ad::mean(ad::exp(ad::scale(x, 0.5)));
    const auto g1 = tape.gradient(l1, std::vector<Var>{x});
    const auto g2 = tape.gradient(l2, std::vector<Var>{x});
    const auto g12 = tape.gradient(l1 + l2, std::vector<Var>{x});
    for (std::size_t i = 0; i < x0.size(); ++i) {
      EXPECT_NEAR(g12[0][i], g1[0][i] + g2[0][i], 1e-14);
    }
  }
}

TEST(Gradient, ReplayIsBitIdentical) {
  auto run = [] {
    Rng rng(1234);
    ad::ParameterSet params = three_layer_params(rng);
    const Tensor x = random_tensor({6, 3}, rng);
    const Tensor y = random_tensor({6, 2}, rng);
    Tape tape;
    std::vector<Var> vars;
    Var loss = three_layer_loss(tape, params, x, y, &vars);
    auto g = tape.gradient(loss, vars);
    g.push_back(loss.value());
    return g;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ad::ParameterSet p;
  p.add("w", Tensor::vector({1.0, -2.0}));
  const ad::ParameterSet before = p;
  auto state = ad::AdamState::for_params(p);
  for (int i = 0; i < 5; ++i) ad::adam_step(p, p.zeros_like(), state, 0.1);
  EXPECT_EQ(p, before);
}

TEST(Adam, ConstantGradientMovesAgainstSign) {
  ad::ParameterSet p;
  p.add("w", Tensor::vector({0.0, 0.0}));
  ad::ParameterSet g;
  g.add("w", Tensor::vector({2.0, -0.5}));
  auto state = ad::AdamState::for_params(p);
  for (int i = 0; i < 50; ++i) ad::adam_step(p, g, state, 0.01);
  EXPECT_LT(p[0][0], 0.0);
  EXPECT_GT(p[0][1], 0.0);
}

TEST(Adam, ConvergesOnScalarQuadratic) {
  // f(w) = (w - 3)^2, 200 steps at lr 1e-2 from w = 2.5.
  ad::ParameterSet p;
  p.add("w", Tensor::scalar(2.5));
  auto state = ad::AdamState::for_params(p);
  for (int i = 0; i < 200; ++i) {
    ad::ParameterSet g;
    g.add("w", Tensor::scalar(2 * (p[0].item() - 3.0)));
    ad::adam_step(p, g, state, 1e-2);
  }
  EXPECT_LT(std::abs(p[0].item() - 3.0), 1e-3);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ad::ParameterSet p;
  p.add("alpha", Tensor::vector({1.0}));
  p.add("beta", Tensor::vector({1.0}));
  const ad::ParameterSet before = p;
  ad::ParameterSet g = p.zeros_like();
  g[1][0] = std::nan("");
  auto state = ad::AdamState::for_params(p);
  try {
    ad::adam_step(p, g, state, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
  EXPECT_EQ(p, before);
}

TEST(Adam, ClipByGlobalNorm) {
  ad::ParameterSet g;
  g.add("a", Tensor::vector({3.0}));
  g.add("b", Tensor::vector({4.0}));
  EXPECT_EQ(ad::global_norm(g), 5.0);
  EXPECT_EQ(ad::clip_by_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(ad::global_norm(g), 1.0, 1e-15);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  ad::ParameterSet small = g;
  ad::clip_by_global_norm(small, 10.0);
  EXPECT_EQ(small, g);
}

}  // namespace
}  // namespace lmpc
