#include <cmath>
#include <vector>

#include "doctest.h"
#include "ous/gradcheck.hpp"
#include "ous/rng.hpp"
#include "ous/tape.hpp"

using namespace ous;

namespace {

ParamPtr uniform_param(const std::string& name, std::vector<size_t> shape, uint64_t seed,
                       double lo = -1.0, double hi = 1.0) {
  SplitMix64 rng(seed);
  Tensor v = Tensor::zeros(shape, Dtype::f64);
  for (size_t i = 0; i < v.size(); ++i) v.mutable_data()[i] = rng.uniform(lo, hi);
  return std::make_shared<Parameter>(name, std::move(v));
}

// Values kept away from zero so kinked ops (relu) see no crossing under
// finite-difference perturbation.
ParamPtr offzero_param(const std::string& name, std::vector<size_t> shape, uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor v = Tensor::zeros(shape, Dtype::f64);
  for (size_t i = 0; i < v.size(); ++i) {
    double u = rng.uniform(-0.9, 0.9);
    v.mutable_data()[i] = u + (u >= 0.0 ? 0.1 : -0.1);
  }
  return std::make_shared<Parameter>(name, std::move(v));
}

// Reduces any tensor to a scalar with fixed random weights, so gradients stay
// informative even for outputs with constant sums (softmax rows).
Var weighted_mean(Tape& t, Var v, uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor w = Tensor::zeros(v.val().shape(), Dtype::f64);
  for (size_t i = 0; i < w.size(); ++i) w.mutable_data()[i] = rng.uniform(-1.0, 1.0);
  return mean_all(mul(v, t.constant(std::move(w))));
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  REQUIRE_MESSAGE(false, "expected an ous::Error");
  return ErrorKind::Contract;
}

}  // namespace

TEST_CASE("layer_norm maps a constant vector to the bias") {
  Tape t(Dtype::f64);
  Var x = t.constant(Tensor::from({4}, {5, 5, 5, 5}, Dtype::f64));
  Var g = t.constant(Tensor::full({4}, 1.0, Dtype::f64));
  Var b = t.constant(Tensor::zeros({4}, Dtype::f64));
  Var y = layer_norm(x, g, b);
  for (size_t i = 0; i < 4; ++i) CHECK(y.val()[i] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("layer_norm of [1,-1] matches hand computation") {
  Tape t(Dtype::f64);
  Var x = t.constant(Tensor::from({2}, {1, -1}, Dtype::f64));
  Var g = t.constant(Tensor::full({2}, 1.0, Dtype::f64));
  Var b = t.constant(Tensor::zeros({2}, Dtype::f64));
  Var y = layer_norm(x, g, b, 1e-5);
  // mean 0, population variance 1 → 1/sqrt(1 + 1e-5)
  const double expect = 0.99999500003749975;
  CHECK(y.val()[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(y.val()[1] == doctest::Approx(-expect).epsilon(1e-12));
}

TEST_CASE("layer_norm slices have bias mean and unit variance for unit gain") {
  Tape t(Dtype::f64);
  SplitMix64 rng(11);
  Tensor x = Tensor::zeros({6, 16}, Dtype::f64);
  for (size_t i = 0; i < x.size(); ++i) x.mutable_data()[i] = rng.uniform(-3.0, 3.0);
  Tensor b = Tensor::zeros({16}, Dtype::f64);
  for (size_t i = 0; i < b.size(); ++i) b.mutable_data()[i] = rng.uniform(-1.0, 1.0);
  double bias_mean = 0.0;
  for (size_t i = 0; i < b.size(); ++i) bias_mean += b[i];
  bias_mean /= 16.0;

  Var y = layer_norm(t.constant(x), t.constant(Tensor::full({16}, 1.0, Dtype::f64)),
                     t.constant(b));
  for (size_t r = 0; r < 6; ++r) {
    double m = 0.0, v = 0.0;
    for (size_t c = 0; c < 16; ++c) m += y.val()[r * 16 + c];
    m /= 16.0;
    CHECK(m == doctest::Approx(bias_mean).epsilon(1e-6));
    for (size_t c = 0; c < 16; ++c) {
      double d = (y.val()[r * 16 + c] - bias_mean) - (m - bias_mean);
      (void)d;
    }
    // variance of the normalized slice (bias removed)
    for (size_t c = 0; c < 16; ++c) {
      double centered = y.val()[r * 16 + c] - b[c];
      v += centered * centered;
    }
    v /= 16.0;
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("tensors reject zero-length extents and mismatched norms") {
  CHECK(kind_of([] { Tensor::zeros({2, 0}, Dtype::f64); }) == ErrorKind::Shape);
  Tape t(Dtype::f64);
  Var x = t.constant(Tensor::zeros({2, 4}, Dtype::f64));
  Var g3 = t.constant(Tensor::full({3}, 1.0, Dtype::f64));
  Var b3 = t.constant(Tensor::zeros({3}, Dtype::f64));
  CHECK(kind_of([&] { layer_norm(x, g3, b3); }) == ErrorKind::Shape);
}

TEST_CASE("attention with a single key returns the value row for every query") {
  Tape t(Dtype::f64);
  Var q = t.constant(Tensor::from({3, 2}, {0.3, -1.0, 2.0, 0.5, -0.7, 0.1}, Dtype::f64));
  Var k = t.constant(Tensor::from({1, 2}, {0.4, 0.9}, Dtype::f64));
  Var v = t.constant(Tensor::from({1, 3}, {7.0, -2.0, 0.25}, Dtype::f64));
  Var o = scaled_dot_attention(q, k, v);
  for (size_t r = 0; r < 3; ++r) {
    CHECK(o.val()[r * 3 + 0] == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(o.val()[r * 3 + 1] == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(o.val()[r * 3 + 2] == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("attention over two identical keys averages their values") {
  Tape t(Dtype::f64);
  Var q = t.constant(Tensor::from({1, 2}, {1.5, -0.2}, Dtype::f64));
  Var k = t.constant(Tensor::from({2, 2}, {0.6, 0.1, 0.6, 0.1}, Dtype::f64));
  Var v = t.constant(Tensor::from({2, 2}, {2.0, 4.0, 6.0, -1.0}, Dtype::f64));
  Var o = scaled_dot_attention(q, k, v);
  CHECK(o.val()[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(o.val()[1] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("attention weights stay normalized when queries are rescaled") {
  // With identity values the output rows are the attention weights themselves.
  Tape t(Dtype::f64);
  Tensor qv = Tensor::from({2, 3}, {0.3, -0.5, 0.8, 1.2, 0.9, -0.4}, Dtype::f64);
  Tensor kv = Tensor::from({3, 3}, {1.0, 0.2, -0.3, -0.6, 0.5, 0.9, 0.1, -0.8, 0.4}, Dtype::f64);
  Tensor eye = Tensor::zeros({3, 3}, Dtype::f64);
  for (size_t i = 0; i < 3; ++i) eye.mutable_data()[i * 3 + i] = 1.0;

  Var w1 = scaled_dot_attention(t.constant(qv), t.constant(kv), t.constant(eye));
  Tensor q5 = qv.clone();
  for (size_t i = 0; i < q5.size(); ++i) q5.mutable_data()[i] *= 5.0;
  Var w2 = scaled_dot_attention(t.constant(q5), t.constant(kv), t.constant(eye));

  double max_diff = 0.0;
  for (size_t r = 0; r < 2; ++r) {
    double s1 = 0.0, s2 = 0.0;
    for (size_t c = 0; c < 3; ++c) {
      s1 += w1.val()[r * 3 + c];
      s2 += w2.val()[r * 3 + c];
      max_diff = std::max(max_diff, std::abs(w1.val()[r * 3 + c] - w2.val()[r * 3 + c]));
    }
    CHECK(s1 == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(s2 == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(max_diff > 1e-3);  // the weights themselves did change
}

TEST_CASE("multi-head attention with one head matches plain attention") {
  SplitMix64 rng(42);
  Tensor q = Tensor::zeros({1, 3, 4}, Dtype::f64);
  Tensor k = Tensor::zeros({1, 5, 4}, Dtype::f64);
  Tensor v = Tensor::zeros({1, 5, 4}, Dtype::f64);
  for (auto* tn : {&q, &k, &v})
    for (size_t i = 0; i < tn->size(); ++i) tn->mutable_data()[i] = rng.uniform(-1.0, 1.0);

  Tape t(Dtype::f64);
  Var batched = multi_head_attention(t.constant(q), t.constant(k), t.constant(v), 1);
  Var flat = scaled_dot_attention(t.constant(q.reshaped({3, 4})), t.constant(k.reshaped({5, 4})),
                                  t.constant(v.reshaped({5, 4})));
  for (size_t i = 0; i < 12; ++i)
    CHECK(batched.val()[i] == doctest::Approx(flat.val()[i]).epsilon(1e-12));
}

TEST_CASE("core ops match hand-computed values") {
  Tape t(Dtype::f64);

  Var r = relu(t.constant(Tensor::from({2}, {-1, 2}, Dtype::f64)));
  CHECK(r.val()[0] == 0.0);
  CHECK(r.val()[1] == 2.0);

  Var m = mean_axis(t.constant(Tensor::from({2, 2}, {1, 3, 5, 7}, Dtype::f64)), 0);
  CHECK(m.val()[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(m.val()[1] == doctest::Approx(5.0).epsilon(1e-12));

  Var c = cosine(t.constant(Tensor::from({3}, {0.2, -0.7, 1.1}, Dtype::f64)),
                 t.constant(Tensor::from({3}, {0.2, -0.7, 1.1}, Dtype::f64)));
  CHECK(c.val().item() == doctest::Approx(1.0).epsilon(1e-6));

  Var mm = matmul(t.constant(Tensor::from({2, 2}, {1, 2, 3, 4}, Dtype::f64)),
                  t.constant(Tensor::from({2, 2}, {5, 6, 7, 8}, Dtype::f64)));
  CHECK(mm.val()[0] == 19.0);
  CHECK(mm.val()[1] == 22.0);
  CHECK(mm.val()[2] == 43.0);
  CHECK(mm.val()[3] == 50.0);

  Var lg = log_op(exp_op(t.constant(Tensor::from({2}, {0.3, -1.2}, Dtype::f64))));
  CHECK(lg.val()[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(lg.val()[1] == doctest::Approx(-1.2).epsilon(1e-12));

  Var cat = concat({t.constant(Tensor::from({1, 2}, {1, 2}, Dtype::f64)),
                    t.constant(Tensor::from({2, 2}, {3, 4, 5, 6}, Dtype::f64))},
                   0);
  CHECK(cat.val().shape() == std::vector<size_t>{3, 2});
  CHECK(cat.val()[4] == 5.0);
  Var sl = slice(cat, 0, 1, 2);
  CHECK(sl.val()[0] == 3.0);
  CHECK(sl.val()[3] == 6.0);

  // suffix broadcast: [2,3] + [3]
  Var ba = add(t.constant(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, Dtype::f64)),
               t.constant(Tensor::from({3}, {10, 20, 30}, Dtype::f64)));
  CHECK(ba.val()[0] == 11.0);
  CHECK(ba.val()[5] == 36.0);
}

TEST_CASE("softmax rows sum to one") {
  Tape t(Dtype::f64);
  SplitMix64 rng(7);
  Tensor x = Tensor::zeros({5, 9}, Dtype::f64);
  for (size_t i = 0; i < x.size(); ++i) x.mutable_data()[i] = rng.uniform(-8.0, 8.0);
  Var p = softmax_last(t.constant(x));
  for (size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (size_t c = 0; c < 9; ++c) s += p.val()[r * 9 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("squaring backward yields twice the input") {
  auto x = std::make_shared<Parameter>("x", Tensor::scalar(3.0, Dtype::f64));
  Tape t(Dtype::f64);
  Var xv = t.param(x);
  Var loss = mul(xv, xv);
  t.backward(loss);
  CHECK(x->gradient[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("relu backward is zero left of the origin") {
  auto x = std::make_shared<Parameter>("x", Tensor::scalar(-2.0, Dtype::f64));
  Tape t(Dtype::f64);
  Var loss = mean_all(relu(t.param(x)));
  t.backward(loss);
  CHECK(x->gradient[0] == 0.0);
}

TEST_CASE("normalize-project-softmax-log composite matches finite differences") {
  auto x = uniform_param("x", {3, 4}, 101);
  auto w = uniform_param("w", {4, 5}, 102);
  auto g = uniform_param("g", {4}, 103, 0.5, 1.5);
  auto b = uniform_param("b", {4}, 104, -0.5, 0.5);
  auto build = [&](Tape& t) {
    Var h = layer_norm(t.param(x), t.param(g), t.param(b));
    Var z = matmul(h, t.param(w));
    Var p = log_op(softmax_last(z));
    return weighted_mean(t, p, 999);
  };
  GradReport rep = grad_check_auto(build, {x, w, g, b}, 1e-4);
  CHECK(rep.coords == 3 * 4 + 4 * 5 + 4 + 4);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("quadratic objective gradient check is exact to 1e-9") {
  auto theta = uniform_param("theta", {8}, 55, -2.0, 2.0);
  auto build = [&](Tape& t) {
    Var v = t.param(theta);
    return affine(mean_all(mul(v, v)), 8.0, 0.0);  // sum of squares
  };
  GradReport rep = grad_check_auto(build, {theta}, 1e-5);
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("frozen parameters receive no gradient") {
  auto w = std::make_shared<Parameter>("w", Tensor::from({2}, {1.0, 2.0}, Dtype::f64), false);
  auto a = std::make_shared<Parameter>("a", Tensor::from({2}, {0.5, -0.5}, Dtype::f64), true);
  Tape t(Dtype::f64);
  Var loss = mean_all(mul(t.param(w), t.param(a)));
  t.backward(loss);
  CHECK(w->gradient[0] == 0.0);
  CHECK(w->gradient[1] == 0.0);
  CHECK(a->gradient[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("a graph of only frozen parameters backpropagates nothing") {
  auto w = std::make_shared<Parameter>("w", Tensor::from({2}, {1.0, 2.0}, Dtype::f64), false);
  Tape t(Dtype::f64);
  Var loss = mean_all(mul(t.param(w), t.param(w)));
  t.backward(loss);
  CHECK(w->grad_abs_sum() == 0.0);
}

TEST_CASE("gradient routing filter restricts which parameters accumulate") {
  auto a = std::make_shared<Parameter>("a", Tensor::scalar(2.0, Dtype::f64));
  auto b = std::make_shared<Parameter>("b", Tensor::scalar(5.0, Dtype::f64));
  Tape t(Dtype::f64);
  Var loss = mul(t.param(a), t.param(b));  // d/da = 5, d/db = 2
  t.backward(loss, [](const Parameter& p) { return p.name == "a"; });
  CHECK(a->gradient[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(b->gradient[0] == 0.0);
  // Accumulation is explicit: a second unfiltered sweep adds on top.
  t.backward(loss);
  CHECK(a->gradient[0] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(b->gradient[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("shared parameters accumulate gradient once per use") {
  auto w = uniform_param("w", {3}, 77);
  Tape t(Dtype::f64);
  Var v1 = t.param(w);
  Var v2 = t.param(w);
  CHECK(v1.id == v2.id);  // same node: shared weights share their gradient slot
  Var loss = mean_all(mul(v1, v2));
  t.backward(loss);
  for (size_t i = 0; i < 3; ++i)
    CHECK(w->gradient[i] == doctest::Approx(2.0 * w->value[i] / 3.0).epsilon(1e-12));
}

TEST_CASE("every differentiable op passes a float64 gradient check") {
  struct Unit {
    const char* name;
    std::vector<ParamPtr> params;
    std::function<Var(Tape&)> build;
  };
  std::vector<Unit> units;

  {
    auto a = uniform_param("a", {3, 4}, 1);
    auto b = uniform_param("b", {4, 2}, 2);
    units.push_back({"matmul 2d", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, matmul(t.param(a), t.param(b)), 10);
                     }});
  }
  {
    auto a = uniform_param("a", {2, 3, 4}, 3);
    auto b = uniform_param("b", {4, 2}, 4);
    units.push_back({"matmul batched-by-shared", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, matmul(t.param(a), t.param(b)), 11);
                     }});
  }
  {
    auto a = uniform_param("a", {2, 3, 4}, 5);
    auto b = uniform_param("b", {2, 4, 2}, 6);
    units.push_back({"matmul batched-by-batched", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, matmul(t.param(a), t.param(b)), 12);
                     }});
  }
  {
    auto a = uniform_param("a", {3, 4}, 7);
    auto b = uniform_param("b", {5, 4}, 8);
    units.push_back({"matmul transposed-rhs", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, matmul_transb(t.param(a), t.param(b)), 13);
                     }});
  }
  {
    auto a = uniform_param("a", {3, 4}, 9);
    auto b = uniform_param("b", {3, 4}, 10);
    units.push_back({"add", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, add(t.param(a), t.param(b)), 14);
                     }});
    units.push_back({"sub", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, sub(t.param(a), t.param(b)), 15);
                     }});
    units.push_back({"mul", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, mul(t.param(a), t.param(b)), 16);
                     }});
  }
  {
    auto a = uniform_param("a", {2, 3, 4}, 11);
    auto b = uniform_param("b", {4}, 12);
    units.push_back({"add row-broadcast", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, add(t.param(a), t.param(b)), 17);
                     }});
  }
  {
    auto a = uniform_param("a", {3, 4}, 13);
    units.push_back({"affine", {a}, [=](Tape& t) {
                       return weighted_mean(t, affine(t.param(a), 1.7, -0.3), 18);
                     }});
    units.push_back({"neg", {a}, [=](Tape& t) { return weighted_mean(t, neg(t.param(a)), 19); }});
    units.push_back(
        {"tanh", {a}, [=](Tape& t) { return weighted_mean(t, tanh_op(t.param(a)), 20); }});
    units.push_back(
        {"sigmoid", {a}, [=](Tape& t) { return weighted_mean(t, sigmoid(t.param(a)), 21); }});
    units.push_back(
        {"exp", {a}, [=](Tape& t) { return weighted_mean(t, exp_op(t.param(a)), 22); }});
    units.push_back({"mean_all", {a}, [=](Tape& t) { return mean_all(t.param(a)); }});
    units.push_back({"reshape", {a}, [=](Tape& t) {
                       return weighted_mean(t, reshape(t.param(a), {2, 6}), 23);
                     }});
    units.push_back({"broadcast0", {a}, [=](Tape& t) {
                       return weighted_mean(t, broadcast0(t.param(a), 3), 24);
                     }});
  }
  {
    auto a = offzero_param("a", {3, 4}, 14);
    units.push_back(
        {"relu", {a}, [=](Tape& t) { return weighted_mean(t, relu(t.param(a)), 25); }});
  }
  {
    auto a = uniform_param("a", {3, 4}, 15, 0.5, 2.0);
    units.push_back(
        {"log", {a}, [=](Tape& t) { return weighted_mean(t, log_op(t.param(a)), 26); }});
  }
  {
    auto a = uniform_param("a", {2, 3}, 16);
    auto b = uniform_param("b", {1, 3}, 17);
    units.push_back({"concat axis0", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, concat({t.param(a), t.param(b)}, 0), 27);
                     }});
  }
  {
    auto a = uniform_param("a", {2, 3}, 18);
    auto b = uniform_param("b", {2, 2}, 19);
    units.push_back({"concat axis1", {a, b}, [=](Tape& t) {
                       return weighted_mean(t, concat({t.param(a), t.param(b)}, 1), 28);
                     }});
  }
  {
    auto a = uniform_param("a", {3, 5}, 20);
    units.push_back({"slice", {a}, [=](Tape& t) {
                       return weighted_mean(t, slice(t.param(a), 1, 1, 3), 29);
                     }});
    units.push_back({"softmax", {a}, [=](Tape& t) {
                       return weighted_mean(t, softmax_last(t.param(a)), 30);
                     }});
    units.push_back({"log_softmax", {a}, [=](Tape& t) {
                       return weighted_mean(t, log_softmax_last(t.param(a)), 31);
                     }});
    units.push_back({"l2_normalize", {a}, [=](Tape& t) {
                       return weighted_mean(t, l2_normalize_rows(t.param(a)), 32);
                     }});
    units.push_back({"pick", {a}, [=](Tape& t) {
                       return weighted_mean(t, pick(t.param(a), {0, 4, 2}), 33);
                     }});
  }
  {
    auto a = uniform_param("a", {2, 3, 4}, 21);
    units.push_back({"mean_axis", {a}, [=](Tape& t) {
                       return weighted_mean(t, mean_axis(t.param(a), 1), 34);
                     }});
    units.push_back({"sum_axis", {a}, [=](Tape& t) {
                       return weighted_mean(t, sum_axis(t.param(a), 2), 35);
                     }});
  }
  {
    auto g = uniform_param("g", {6}, 22, 0.5, 1.5);
    auto b = uniform_param("b", {6}, 23, -0.5, 0.5);
    auto x = uniform_param("x", {4, 6}, 24);
    units.push_back({"layer_norm", {x, g, b}, [=](Tape& t) {
                       return weighted_mean(t, layer_norm(t.param(x), t.param(g), t.param(b)), 36);
                     }});
  }
  {
    auto q = uniform_param("q", {3, 4}, 25);
    auto k = uniform_param("k", {5, 4}, 26);
    auto v = uniform_param("v", {5, 2}, 27);
    units.push_back({"attention", {q, k, v}, [=](Tape& t) {
                       return weighted_mean(
                           t, scaled_dot_attention(t.param(q), t.param(k), t.param(v)), 37);
                     }});
  }
  {
    auto q = uniform_param("q", {2, 3, 8}, 28);
    auto k = uniform_param("k", {2, 4, 8}, 29);
    auto v = uniform_param("v", {2, 4, 8}, 30);
    units.push_back({"multi_head_attention", {q, k, v}, [=](Tape& t) {
                       return weighted_mean(
                           t, multi_head_attention(t.param(q), t.param(k), t.param(v), 2), 38);
                     }});
  }
  {
    auto a = uniform_param("a", {7}, 31);
    auto b = uniform_param("b", {7}, 32);
    units.push_back(
        {"cosine", {a, b}, [=](Tape& t) { return cosine(t.param(a), t.param(b)); }});
  }
  {
    auto a = uniform_param("a", {1, 2, 4, 4}, 33);
    units.push_back({"patch_flatten", {a}, [=](Tape& t) {
                       return weighted_mean(t, patch_flatten(t.param(a), 2), 39);
                     }});
  }
  {
    auto x = uniform_param("x", {2, 6}, 34);
    auto k = uniform_param("k", {3}, 35);
    auto b = uniform_param("b", {1}, 36);
    units.push_back({"conv1d_same", {x, k, b}, [=](Tape& t) {
                       return weighted_mean(t, conv1d_same(t.param(x), t.param(k), t.param(b)),
                                            40);
                     }});
  }

  for (const Unit& u : units) {
    CAPTURE(u.name);
    GradReport rep = grad_check_auto(u.build, u.params, 1e-4);
    INFO(u.name << ": worst " << rep.worst << " analytic " << rep.analytic << " numeric "
                << rep.numeric);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("forward replay reproduces identical bits") {
  for (Dtype dt : {Dtype::f32, Dtype::f64}) {
    auto w = uniform_param("w", {4, 4}, 88);
    if (dt == Dtype::f32) {
      w->value = w->value.astype(Dtype::f32);
    }
    Tape t(dt);
    Var x = t.constant(Tensor::from({2, 4}, {0.5, -1, 2, 0.25, 1, 1, -3, 0.125}, dt));
    Var y = softmax_last(matmul(relu(x), t.param(w)));
    Var z = mean_all(y);
    (void)z;
    CHECK(t.replay_forward_identical());
  }
}

TEST_CASE("float32 op outputs are exactly float-representable") {
  SplitMix64 rng(5);
  Tensor a = Tensor::zeros({4, 4}, Dtype::f32);
  Tensor b = Tensor::zeros({4, 4}, Dtype::f32);
  for (auto* tn : {&a, &b})
    for (size_t i = 0; i < tn->size(); ++i) tn->mutable_data()[i] = rng.uniform(-1.0, 1.0);
  a.finalize("init");
  b.finalize("init");
  Tape t(Dtype::f32);
  Var y = softmax_last(matmul(t.constant(a), t.constant(b)));
  for (size_t i = 0; i < y.val().size(); ++i) {
    double v = y.val()[i];
    CHECK(v == static_cast<double>(static_cast<float>(v)));
  }
}

TEST_CASE("non-finite results raise numeric errors") {
  Tape t(Dtype::f64);
  CHECK(kind_of([&] { log_op(t.constant(Tensor::from({1}, {-1.0}, Dtype::f64))); }) ==
        ErrorKind::Numeric);
  CHECK(kind_of([&] { exp_op(t.constant(Tensor::from({1}, {1000.0}, Dtype::f64))); }) ==
        ErrorKind::Numeric);
}

TEST_CASE("shape mismatches raise shape errors") {
  Tape t(Dtype::f64);
  Var a = t.constant(Tensor::zeros({2, 3}, Dtype::f64));
  Var b = t.constant(Tensor::zeros({2, 3}, Dtype::f64));
  CHECK(kind_of([&] { matmul(a, b); }) == ErrorKind::Shape);
  Var c = t.constant(Tensor::zeros({4}, Dtype::f64));
  CHECK(kind_of([&] { add(a, c); }) == ErrorKind::Shape);
  CHECK(kind_of([&] { concat({a, c}, 0); }) == ErrorKind::Shape);
  CHECK(kind_of([&] { slice(a, 1, 2, 2); }) == ErrorKind::Shape);
}

TEST_CASE("backward requires a scalar loss") {
  Tape t(Dtype::f64);
  Var a = t.constant(Tensor::zeros({2, 3}, Dtype::f64));
  CHECK(kind_of([&] { t.backward(a); }) == ErrorKind::Contract);
}

TEST_CASE("gradients flow through picked entries only") {
  auto x = uniform_param("x", {2, 3}, 60);
  Tape t(Dtype::f64);
  Var y = pick(t.param(x), {2, 0});
  t.backward(mean_all(y));
  CHECK(x->gradient[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(x->gradient[3] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(x->gradient[0] == 0.0);
  CHECK(x->gradient[1] == 0.0);
  CHECK(x->gradient[4] == 0.0);
  CHECK(x->gradient[5] == 0.0);
}
