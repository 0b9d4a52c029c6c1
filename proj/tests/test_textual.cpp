#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "ous/gradcheck.hpp"
#include "ous/rng.hpp"
#include "ous/textual.hpp"

using namespace ous;

namespace {

Tensor random_tensor(std::vector<size_t> shape, uint64_t seed, Dtype dt, double stddev = 1.0) {
  SplitMix64 rng(seed);
  return Tensor::randn(std::move(shape), rng, 0.0, stddev, dt);
}

bool same_bytes(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Var weighted_mean(Var x, uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor w = Tensor::randn(x.val().shape(), rng, 0.0, 1.0, x.val().dtype());
  return mean_all(mul(x, x.tape->constant(std::move(w))));
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Contract;
}

TextualConfig micro_cfg(size_t M = 3) {
  TextualConfig cfg;
  cfg.M = M;
  cfg.D_t = 4;
  cfg.text_blocks = 2;
  cfg.text_heads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("prompt assembly prepends the shared context to one class token") {
  SUBCASE("default context length yields 65 rows") {
    TextualConfig cfg;  // M = 64
    auto head = PromptHead::make("txt", cfg, 8, 201, Dtype::f32);
    Tape t;
    CHECK(head.build_prompt(t, 0).val().shape() == std::vector<size_t>{65, 32});
  }
  SUBCASE("length-16 configuration yields 17 rows") {
    TextualConfig cfg;
    cfg.M = 16;
    auto head = PromptHead::make("txt", cfg, 8, 202, Dtype::f32);
    Tape t;
    CHECK(head.build_prompt(t, 6).val().shape() == std::vector<size_t>{17, 32});
  }
  SUBCASE("different classes share every context row") {
    auto head = PromptHead::make("txt", micro_cfg(), 8, 203, Dtype::f32);
    Tape t;
    Var a = head.build_prompt(t, 1);
    Var b = head.build_prompt(t, 5);
    const size_t M = 3, D = 4;
    CHECK(std::memcmp(a.val().data(), b.val().data(), M * D * sizeof(double)) == 0);
    // ...and differ in the class row.
    CHECK(std::memcmp(a.val().data() + M * D, b.val().data() + M * D, D * sizeof(double)) != 0);
  }
  SUBCASE("out-of-range class id is a domain error") {
    auto head = PromptHead::make("txt", micro_cfg(), 8, 204, Dtype::f32);
    Tape t;
    CHECK(kind_of([&] { head.build_prompt(t, 7); }) == ErrorKind::Domain);
  }
}

TEST_CASE("class tokens are deterministic unit rows in label order") {
  auto a = PromptHead::make("txt", micro_cfg(), 8, 205, Dtype::f64);
  auto b = PromptHead::make("txt", micro_cfg(), 8, 205, Dtype::f64);
  CHECK(same_bytes(a.class_tokens->value, b.class_tokens->value));
  CHECK_FALSE(a.class_tokens->trainable);
  for (size_t e = 0; e < 7; ++e) {
    double norm_sq = 0.0;
    for (size_t d = 0; d < 4; ++d) {
      double v = a.class_tokens->value.data()[e * 4 + d];
      norm_sq += v * v;
    }
    CHECK(std::sqrt(norm_sq) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("encoded class embeddings are unit length") {
  auto head = PromptHead::make("txt", micro_cfg(), 6, 206, Dtype::f32);
  Tape t;
  Var emb = head.class_embeddings(t);
  CHECK(emb.val().shape() == std::vector<size_t>{7, 6});
  for (size_t k = 0; k < 7; ++k) {
    double norm_sq = 0.0;
    for (size_t d = 0; d < 6; ++d) {
      double v = emb.val().data()[k * 6 + d];
      norm_sq += v * v;
    }
    CHECK(std::sqrt(norm_sq) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("only the context bank and temperature are trainable") {
  auto head = PromptHead::make("txt", micro_cfg(), 6, 207, Dtype::f64);
  ParamList params;
  head.collect(params);
  for (const auto& p : params) {
    bool expect = (p.get() == head.context.get() || p.get() == head.log_tau.get());
    CHECK(p->trainable == expect);
  }

  // After a backward pass through the whole head, frozen parameters hold no
  // gradient while the context does.
  for (const auto& p : params) p->zero_grad();
  Tape t;
  Var fused = t.constant(random_tensor({2, 6}, 208, Dtype::f64));
  Var logits = class_logits(t, fused, head.class_embeddings(t), t.param(head.log_tau));
  t.backward(weighted_mean(logits, 209));
  for (const auto& p : params) {
    if (p.get() == head.context.get() || p.get() == head.log_tau.get()) continue;
    CHECK(p->grad_abs_sum() == 0.0);
  }
  CHECK(head.context->grad_abs_sum() > 0.0);
  CHECK(head.log_tau->grad_abs_sum() > 0.0);
}

TEST_CASE("context and temperature gradients match finite differences") {
  auto head = PromptHead::make("txt", micro_cfg(), 5, 210, Dtype::f64);
  ParamPtr fused = make_const("fused", random_tensor({2, 5}, 211, Dtype::f64, 0.8), true);
  ParamList params = {head.context, head.log_tau, fused};
  auto build = [&](Tape& t) {
    Var logits = class_logits(t, t.param(fused), head.class_embeddings(t), t.param(head.log_tau));
    return weighted_mean(logits, 212);
  };
  // 1e-5 step: the shared context feeds every prompt, so a coarser step
  // pushes some downstream rectifier across its kink and corrupts the
  // central difference there.
  GradReport r = grad_check_auto(build, params, 1e-5);
  INFO("worst ", r.worst, " analytic ", r.analytic, " numeric ", r.numeric);
  CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("cosine scoring ranks the matching embedding first") {
  Tape t;
  // Orthonormal embeddings: one-hot rows. The fused vector equals class 3.
  Tensor eye = Tensor::zeros({7, 7}, Dtype::f64);
  for (size_t k = 0; k < 7; ++k) eye.mutable_data()[k * 7 + k] = 1.0;
  Tensor fused = Tensor::zeros({1, 7}, Dtype::f64);
  fused.mutable_data()[3] = 2.5;  // scale must not matter
  Var log_tau = t.constant(Tensor::full({1}, std::log(0.07), Dtype::f64));
  Var logits = class_logits(t, t.constant(fused), t.constant(eye), log_tau);

  const double* row = logits.val().data();
  size_t argmax = 0;
  for (size_t k = 1; k < 7; ++k)
    if (row[k] > row[argmax]) argmax = k;
  CHECK(argmax == 3);
  CHECK(row[3] == doctest::Approx(1.0 / 0.07).epsilon(1e-6));
  for (size_t k = 0; k < 7; ++k)
    if (k != 3) CHECK(std::abs(row[k]) < 1e-9);
}

TEST_CASE("temperature rescaling never changes the per-row ranking") {
  Tape t;
  Tensor emb = random_tensor({7, 6}, 213, Dtype::f64);
  Tensor fused = random_tensor({4, 6}, 214, Dtype::f64);
  Var emb_n = l2_normalize_rows(t.constant(emb));
  Var cold = class_logits(t, t.constant(fused.clone()), emb_n,
                          t.constant(Tensor::full({1}, std::log(0.07), Dtype::f64)));
  Var hot = class_logits(t, t.constant(fused.clone()), emb_n,
                         t.constant(Tensor::full({1}, std::log(0.7), Dtype::f64)));
  for (size_t b = 0; b < 4; ++b) {
    size_t ac = 0, ah = 0;
    for (size_t k = 1; k < 7; ++k) {
      if (cold.val().data()[b * 7 + k] > cold.val().data()[b * 7 + ac]) ac = k;
      if (hot.val().data()[b * 7 + k] > hot.val().data()[b * 7 + ah]) ah = k;
    }
    CHECK(ac == ah);
  }
}

TEST_CASE("equal cosines spread the softmax uniformly") {
  Tape t;
  Tensor eye = Tensor::zeros({7, 7}, Dtype::f64);
  for (size_t k = 0; k < 7; ++k) eye.mutable_data()[k * 7 + k] = 1.0;
  Var fused = t.constant(Tensor::full({1, 7}, 1.0, Dtype::f64));
  Var log_tau = t.constant(Tensor::full({1}, std::log(0.07), Dtype::f64));
  Var probs = softmax_last(class_logits(t, fused, t.constant(eye), log_tau));
  for (size_t k = 0; k < 7; ++k)
    CHECK(probs.val().data()[k] == doctest::Approx(1.0 / 7.0).epsilon(1e-6));
}

TEST_CASE("logit magnitudes are bounded by the inverse temperature") {
  Tape t;
  Var emb = l2_normalize_rows(t.constant(random_tensor({7, 9}, 215, Dtype::f64)));
  Var fused = t.constant(random_tensor({5, 9}, 216, Dtype::f64, 3.0));
  const double tau = 0.07;
  Var logits = class_logits(t, fused, emb, t.constant(Tensor::full({1}, std::log(tau), Dtype::f64)));
  for (size_t i = 0; i < logits.val().size(); ++i)
    CHECK(std::abs(logits.val().data()[i]) <= 1.0 / tau + 1e-9);
}

TEST_CASE("a zero-norm fused row cannot be scored") {
  Tape t;
  Var emb = l2_normalize_rows(t.constant(random_tensor({7, 4}, 217, Dtype::f64)));
  Tensor fused = random_tensor({3, 4}, 218, Dtype::f64);
  for (size_t d = 0; d < 4; ++d) fused.mutable_data()[1 * 4 + d] = 0.0;
  Var log_tau = t.constant(Tensor::full({1}, std::log(0.07), Dtype::f64));
  CHECK(kind_of([&] { class_logits(t, t.constant(fused), emb, log_tau); }) ==
        ErrorKind::Numeric);
}

TEST_CASE("the exponential parameterization keeps the temperature positive") {
  auto head = PromptHead::make("txt", micro_cfg(), 5, 219, Dtype::f64);
  head.log_tau->value = Tensor::full({1}, -50.0, Dtype::f64);
  Tape t;
  CHECK(head.tau(t).val().data()[0] > 0.0);
  head.log_tau->value = Tensor::full({1}, 3.0, Dtype::f64);
  Tape t2;
  CHECK(head.tau(t2).val().data()[0] == doctest::Approx(std::exp(3.0)));
}

TEST_CASE("textual configuration invariants are enforced") {
  TextualConfig cfg = micro_cfg();
  cfg.tau_init = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = micro_cfg();
  cfg.D_t = 5;  // not divisible by two heads
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = micro_cfg();
  cfg.M = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
