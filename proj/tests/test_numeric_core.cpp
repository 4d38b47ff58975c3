#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "survseq/gradcheck.hpp"
#include "survseq/ops.hpp"
#include "survseq/optimizer.hpp"

using namespace survseq;

namespace {

Tensor<double> random_tensor(Index rows, Index cols, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

// Reduces any output to a scalar with fixed random weights so every output
// entry carries a distinct gradient.
Var<double> weighted_sum(const Var<double>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(cwise_product(v, v.tape().constant(random_tensor(v.rows(), v.cols(), rng))));
}

void expect_gradients_match(const GraphFn<double>& graph, const ParameterSet<double>& params) {
  const auto report = grad_check(graph, params, 1e-4);
  for (const auto& p : report.parameters) {
    EXPECT_TRUE(p.passed) << p.name << " rel " << p.max_rel_error << " analytic " << p.analytic << " numeric "
                          << p.numeric;
  }
}

}  // namespace

TEST(ForwardBackward, SumGivesOnes) {
  ParameterSet<double> params;
  std::mt19937_64 rng(1);
  params.add("p", random_tensor(3, 4, rng));
  const auto r = forward_backward<double>([](Tape<double>&, const Bindings<double>& b) { return sum(b["p"]); }, params);
  EXPECT_TRUE(r.grads["p"].isApprox(Tensor<double>::Ones(3, 4)));
}

TEST(ForwardBackward, HalfSquaredNormGivesParameter) {
  ParameterSet<double> params;
  std::mt19937_64 rng(2);
  params.add("p", random_tensor(2, 5, rng));
  const auto r = forward_backward<double>(
      [](Tape<double>&, const Bindings<double>& b) { return scale(sum(cwise_product(b["p"], b["p"])), 0.5); }, params);
  EXPECT_TRUE(r.grads["p"].isApprox(params["p"]));
  EXPECT_NEAR(r.loss, 0.5 * params["p"].squaredNorm(), 1e-12);
}

TEST(ForwardBackward, RandomThreeLayerComposition) {
  std::mt19937_64 rng(3);
  ParameterSet<double> params;
  params.add("x", random_tensor(4, 3, rng));
  params.add("W1", random_tensor(3, 5, rng));
  params.add("b1", random_tensor(1, 5, rng));
  params.add("W2", random_tensor(5, 4, rng));
  params.add("b2", random_tensor(1, 4, rng));
  params.add("W3", random_tensor(4, 6, rng));
  params.add("b3", random_tensor(1, 6, rng));
  params.add("gate", random_tensor(1, 4, rng));
  params.add("rows", random_tensor(4, 1, rng));
  params.add("mix", random_tensor(4, 6, rng));
  ASSERT_EQ(params.size(), 10u);
  GraphFn<double> graph = [](Tape<double>&, const Bindings<double>& b) {
    Var<double> h1 = tanh(add_bias(b["x"] * b["W1"], b["b1"]));
    Var<double> h2 = scale_columns(sigmoid(add_bias(h1 * b["W2"], b["b2"])), b["gate"]);
    Var<double> h3 = softmax_rows(add_bias(scale_rows(h2, b["rows"]) * b["W3"], b["b3"]));
    return sum(cwise_product(h3, exp(b["mix"])));
  };
  expect_gradients_match(graph, params);
}

TEST(ForwardBackward, ShapeMismatchNamesOperationAndDimensions) {
  Tape<double> tape;
  auto a = tape.variable(Tensor<double>::Zero(2, 3));
  auto b = tape.variable(Tensor<double>::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("2x3"), std::string::npos);
  }
  EXPECT_THROW(a + tape.variable(Tensor<double>::Zero(3, 2)), ShapeError);
  EXPECT_THROW(add_bias(a, tape.variable(Tensor<double>::Zero(1, 2))), ShapeError);
}

TEST(ForwardBackward, SumOfGraphsIsSumOfGradients) {
  std::mt19937_64 rng(4);
  ParameterSet<double> params;
  params.add("a", random_tensor(3, 3, rng));
  params.add("b", random_tensor(3, 2, rng));
  GraphFn<double> f = [](Tape<double>&, const Bindings<double>& p) { return weighted_sum(tanh(p["a"] * p["b"]), 1); };
  GraphFn<double> g = [](Tape<double>&, const Bindings<double>& p) { return weighted_sum(exp(p["b"]), 2); };
  GraphFn<double> fg = [&](Tape<double>& t, const Bindings<double>& p) { return f(t, p) + g(t, p); };
  const auto rf = forward_backward(f, params), rg = forward_backward(g, params), rfg = forward_backward(fg, params);
  for (const char* name : {"a", "b"}) {
    EXPECT_TRUE(rfg.grads[name].isApprox(rf.grads[name] + rg.grads[name], 1e-12)) << name;
  }
}

TEST(Tape, BackwardVisitsEachRecordedOperationOnceInReverse) {
  Tape<double> tape;
  std::vector<int> visits;
  auto x = tape.variable(Tensor<double>::Ones(1, 1));
  Var<double> y = x;
  for (int op = 0; op < 5; ++op) {
    y = tape.record(y.value(), {y}, [y, op, &visits](Tape<double>& t, const Tensor<double>&, const Tensor<double>& g) {
      visits.push_back(op);
      t.accumulate(y, g);
    });
  }
  EXPECT_EQ(tape.backward(y), 5u);
  EXPECT_EQ(visits, (std::vector<int>{4, 3, 2, 1, 0}));
  EXPECT_DOUBLE_EQ(tape.gradient(x)(0, 0), 1.0);
}

TEST(Tape, GradientShapesMatchParameters) {
  std::mt19937_64 rng(5);
  ParameterSet<double> params;
  params.add("W", random_tensor(4, 2, rng));
  params.add("v", random_tensor(1, 2, rng));
  const auto r = forward_backward<double>(
      [](Tape<double>& t, const Bindings<double>& b) {
        return weighted_sum(add_bias(t.constant(Tensor<double>::Ones(3, 4)) * b["W"], b["v"]), 9);
      },
      params);
  EXPECT_TRUE(params.same_layout(r.grads));
}

TEST(Tape, NonScalarBackwardIsRejected) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::Ones(2, 2));
  EXPECT_THROW(tape.backward(tanh(x)), ShapeError);
}

// Each primitive on random small shapes against central differences.
class PrimitiveGradients : public ::testing::Test {
 protected:
  std::mt19937_64 rng{11};
  ParameterSet<double> params;
  void add(const std::string& name, Index r, Index c, double lo = -1, double hi = 1) {
    params.add(name, random_tensor(r, c, rng, lo, hi));
  }
};

TEST_F(PrimitiveGradients, ArithmeticAndAffine) {
  add("a", 3, 4);
  add("b", 3, 4);
  add("m", 4, 2);
  add("bias", 1, 4);
  add("row", 1, 4);
  add("col", 3, 1);
  expect_gradients_match(
      [](Tape<double>&, const Bindings<double>& p) {
        Var<double> v = (p["a"] + p["b"]) - cwise_product(p["a"], p["b"]);
        v = add_bias(-v, p["bias"]);
        v = scale_rows(scale_columns(v, p["row"]), p["col"]);
        v = one_minus(scale(v, 0.7));
        return weighted_sum(v * p["m"], 3);
      },
      params);
}

TEST_F(PrimitiveGradients, Nonlinearities) {
  add("a", 2, 5);
  add("shifted", 2, 5, 0.1, 1.0);  // keeps relu away from its kink
  expect_gradients_match(
      [](Tape<double>&, const Bindings<double>& p) {
        return weighted_sum(sigmoid(p["a"]), 4) + weighted_sum(tanh(p["a"]), 5) + weighted_sum(exp(p["a"]), 6) +
               weighted_sum(relu(p["shifted"]), 7) + weighted_sum(relu(-p["shifted"]), 8);
      },
      params);
}

TEST_F(PrimitiveGradients, ConcatSliceAndSoftmax) {
  add("a", 3, 2);
  add("b", 3, 4);
  expect_gradients_match(
      [](Tape<double>&, const Bindings<double>& p) {
        Var<double> c = concat_cols(std::vector<Var<double>>{p["a"], p["b"], p["a"]});
        return weighted_sum(softmax_rows(slice_cols(c, 1, 6)), 9) + weighted_sum(slice_cols(c, 6, 2), 10);
      },
      params);
}

TEST_F(PrimitiveGradients, MaskedSoftmaxAndSequenceOps) {
  add("memory", 2, 3 * 4);
  add("query", 2, 4);
  Tensor<double> mask(2, 3);
  mask << 1, 1, 1, 1, 1, 0;
  expect_gradients_match(
      [mask](Tape<double>&, const Bindings<double>& p) {
        Var<double> w = masked_softmax_rows(sequence_dot(p["memory"], p["query"]), mask);
        return weighted_sum(sequence_weighted_sum(p["memory"], w), 12);
      },
      params);
}

TEST_F(PrimitiveGradients, SelectRows) {
  add("a", 3, 2);
  add("b", 3, 2);
  Tensor<double> keep(3, 1);
  keep << 1, 0, 1;
  expect_gradients_match(
      [keep](Tape<double>&, const Bindings<double>& p) { return weighted_sum(select_rows(keep, tanh(p["a"]), p["b"]), 13); },
      params);
}

TEST(Softmax, StableForLargeInputs) {
  Tape<double> tape;
  Tensor<double> big(1, 3);
  big << 1000, 1001, 1002;
  const auto s = softmax_rows(tape.constant(big)).value();
  EXPECT_TRUE(s.allFinite());
  EXPECT_NEAR(s.sum(), 1.0, 1e-15);
  EXPECT_NEAR(s(0, 2) / s(0, 1), std::exp(1.0), 1e-12);
}

TEST(GradCheck, LinearLayerPasses) {
  std::mt19937_64 rng(6);
  ParameterSet<double> params;
  params.add("W", random_tensor(3, 2, rng));
  params.add("b", random_tensor(1, 2, rng));
  const Tensor<double> x = random_tensor(4, 3, rng);
  const auto report = grad_check(
      [x](Tape<double>& t, const Bindings<double>& p) { return weighted_sum(add_bias(t.constant(x) * p["W"], p["b"]), 1); },
      params, 1e-4);
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.parameters.size(), 2u);
  EXPECT_LT(report.max_rel_error(), 1e-6);
}

TEST(GradCheck, CorruptedBackwardRuleIsFlaggedByName) {
  std::mt19937_64 rng(7);
  ParameterSet<double> params;
  params.add("good", random_tensor(2, 2, rng));
  params.add("bad", random_tensor(2, 2, rng));
  // cube with a backward rule missing its factor 3
  auto broken_cube = [](const Var<double>& a) {
    Tensor<double> y = a.value().array().cube();
    return a.tape().record(std::move(y), {a}, [a](Tape<double>& t, const Tensor<double>&, const Tensor<double>& g) {
      t.accumulate(a, g.cwiseProduct(t.value(a).cwiseAbs2()));
    });
  };
  const auto report = grad_check(
      [&](Tape<double>&, const Bindings<double>& p) { return weighted_sum(p["good"], 1) + weighted_sum(broken_cube(p["bad"]), 2); },
      params, 1e-4);
  EXPECT_FALSE(report.passed());
  EXPECT_EQ(report.failures(), std::vector<std::string>{"bad"});
}

TEST(GradCheck, ZeroParameterGraphGivesEmptyReport) {
  const auto report = grad_check(
      [](Tape<double>& t, const Bindings<double>&) { return sum(t.constant(Tensor<double>::Ones(2, 2))); },
      ParameterSet<double>{}, 1e-4);
  EXPECT_TRUE(report.parameters.empty());
  EXPECT_TRUE(report.passed());
}

TEST(GradCheck, NonScalarLossIsAnError) {
  ParameterSet<double> params;
  params.add("p", Tensor<double>::Ones(2, 2));
  EXPECT_THROW(grad_check([](Tape<double>&, const Bindings<double>& b) { return tanh(b["p"]); }, params, 1e-4),
               ShapeError);
}

TEST(GradCheck, RejectsNonPositiveTolerance) {
  EXPECT_THROW(grad_check([](Tape<double>& t, const Bindings<double>&) { return sum(t.constant(Tensor<double>::Ones(1, 1))); },
                          ParameterSet<double>{}, 0.0),
               std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  ParameterSet<double> params, grads;
  params.add("w", Tensor<double>::Constant(2, 2, 0.5));
  grads.add("w", Tensor<double>::Ones(2, 2));
  AdamState<double> state(params, {});
  adam_step(state, params, grads);
  const Tensor<double> m1 = state.first_moment["w"];
  const Tensor<double> v1 = state.second_moment["w"];
  const Tensor<double> after_first = params["w"];

  grads["w"].setZero();
  adam_step(state, params, grads);
  EXPECT_TRUE(state.first_moment["w"].isApprox(0.9 * m1));
  EXPECT_TRUE(state.second_moment["w"].isApprox(0.999 * v1));
  // Bias-corrected momentum still moves the parameter; with zero history the
  // update is exactly zero.
  ParameterSet<double> fresh;
  fresh.add("w", Tensor<double>::Constant(2, 2, 0.5));
  AdamState<double> fresh_state(fresh, {});
  adam_step(fresh_state, fresh, grads);
  EXPECT_EQ(fresh["w"], Tensor<double>::Constant(2, 2, 0.5));
  EXPECT_NE(params["w"], after_first);
}

TEST(Adam, ConstantGradientDescends) {
  ParameterSet<double> params, grads;
  params.add("w", Tensor<double>::Zero(1, 3));
  grads.add("w", (Tensor<double>(1, 3) << 2.0, -0.5, 1e-3).finished());
  AdamState<double> state(params, {});
  for (int i = 0; i < 50; ++i) adam_step(state, params, grads);
  EXPECT_LT(params["w"](0, 0), 0);
  EXPECT_GT(params["w"](0, 1), 0);
  EXPECT_LT(params["w"](0, 2), 0);
  EXPECT_EQ(state.step, 50);
}

TEST(Adam, SingleStepMatchesHandEvaluatedUpdate) {
  ParameterSet<double> params, grads;
  params.add("theta", Tensor<double>::Zero(1, 1));
  grads.add("theta", Tensor<double>::Ones(1, 1));
  AdamOptions opts;
  opts.learning_rate = 0.1;
  AdamState<double> state(params, opts);
  adam_step(state, params, grads);
  // m = 0.1 g, v = 0.001 g^2; bias corrections restore m_hat = 1, v_hat = 1.
  const double m_hat = (0.1 * 1.0) / (1 - 0.9);
  const double v_hat = (0.001 * 1.0) / (1 - 0.999);
  EXPECT_NEAR(params["theta"](0, 0), -0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-15);
  EXPECT_NEAR(params["theta"](0, 0), -0.1, 1e-8);
}

TEST(Adam, NonFiniteGradientAbortsBeforeUpdating) {
  ParameterSet<double> params, grads;
  params.add("a", Tensor<double>::Ones(1, 2));
  params.add("b", Tensor<double>::Ones(1, 2));
  grads.add("a", Tensor<double>::Ones(1, 2));
  grads.add("b", (Tensor<double>(1, 2) << 1.0, std::nan("")).finished());
  AdamState<double> state(params, {});
  try {
    adam_step(state, params, grads);
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.parameter(), "b");
  }
  EXPECT_EQ(params["a"], Tensor<double>::Ones(1, 2));
  EXPECT_EQ(state.step, 0);
}

TEST(Adam, LayoutMismatchIsShapeError) {
  ParameterSet<double> params, grads;
  params.add("a", Tensor<double>::Ones(2, 2));
  grads.add("a", Tensor<double>::Ones(2, 3));
  AdamState<double> state(params, {});
  EXPECT_THROW(adam_step(state, params, grads), ShapeError);
}

TEST(ClipGlobalNorm, RescalesToLimit) {
  ParameterSet<double> grads;
  grads.add("a", (Tensor<double>(1, 2) << 3.0, 0.0).finished());
  grads.add("b", (Tensor<double>(1, 1) << 4.0).finished());
  EXPECT_DOUBLE_EQ(clip_global_norm(grads, 1.0), 5.0);
  EXPECT_NEAR(grads["a"](0, 0), 0.6, 1e-15);
  EXPECT_NEAR(grads["b"](0, 0), 0.8, 1e-15);
}

TEST(Precision, FloatTapeTracksDoubleTape) {
  std::mt19937_64 rng(8);
  ParameterSet<double> params;
  params.add("W", random_tensor(4, 4, rng));
  auto graph = [](auto& tape, const auto& b) { return sum(tanh(b["W"] * b["W"])); };
  Tape<double> td;
  Bindings<double> bd(td, params);
  const double ld = graph(td, bd).value()(0, 0);
  const auto pf = params.cast<float>();
  Tape<float> tf;
  Bindings<float> bf(tf, pf);
  const float lf = graph(tf, bf).value()(0, 0);
  EXPECT_NEAR(static_cast<double>(lf), ld, 1e-5);
}
