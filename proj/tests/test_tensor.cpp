#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "adattn/tensor.h"
#include "doctest.h"
#include "testutil.h"

using namespace adattn;
using testutil::random_tensor;
using testutil::random_weights;
using testutil::weighted_scalar;

TEST_CASE("matmul basics") {
  Tape t;
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {1, 1});
  Tensor c = t.matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.at(0) == 3);
  CHECK(c.at(1) == 7);

  // A · I == A
  Rng rng(1);
  Tensor m = random_tensor({4, 4}, rng, -2, 2, false);
  Tensor eye = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) eye.ref(i * 4 + i) = 1.0;
  Tensor mi = t.matmul(m, eye);
  for (std::size_t i = 0; i < 16; ++i) CHECK(mi.at(i) == m.at(i));

  CHECK_THROWS_WITH_AS(t.matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 2})),
                       doctest::Contains("[2x3]"), DimError);
}

TEST_CASE("matmul gradient matches finite differences (derived oracle)") {
  Rng rng(7);
  Tensor b = random_tensor({4, 2}, rng, -1, 1, false);
  Tensor a0 = random_tensor({3, 4}, rng, -1, 1, false);
  auto f = [&](Tape& t, const Tensor& x) { return t.sum(t.matmul(x, b)); };
  CHECK(finite_diff_check(f, a0, 1e-5) < 1e-5);

  Tensor a1 = random_tensor({3, 4}, rng, -1, 1, false);
  auto g = [&](Tape& t, const Tensor& x) { return t.sum(t.matmul(a1, x)); };
  CHECK(finite_diff_check(g, random_tensor({4, 2}, rng, -1, 1, false), 1e-5) < 1e-5);
}

TEST_CASE("masked softmax examples") {
  Tape t;
  Tensor p1 = t.masked_softmax(Tensor::from({2}, {0, 0}), Tensor::from({2}, {1, 1}));
  CHECK(p1.at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p1.at(1) == doctest::Approx(0.5).epsilon(1e-12));

  Tensor p2 = t.masked_softmax(Tensor::from({2}, {5, -100}), Tensor::from({2}, {1, 0}));
  CHECK(p2.at(0) == 1.0);
  CHECK(p2.at(1) == 0.0);

  // direct high-precision evaluation of exp/sum
  long double e1 = expl(1.0L), e2 = expl(2.0L), e3 = expl(3.0L);
  long double z = e1 + e2 + e3;
  Tensor p3 = t.masked_softmax(Tensor::from({3}, {1, 2, 3}), Tensor::from({3}, {1, 1, 1}));
  CHECK(p3.at(0) == doctest::Approx(static_cast<double>(e1 / z)).epsilon(1e-12));
  CHECK(p3.at(1) == doctest::Approx(static_cast<double>(e2 / z)).epsilon(1e-12));
  CHECK(p3.at(2) == doctest::Approx(static_cast<double>(e3 / z)).epsilon(1e-12));
  CHECK(p3.at(0) == doctest::Approx(0.0900).epsilon(1e-3));
  CHECK(p3.at(1) == doctest::Approx(0.2447).epsilon(1e-3));
  CHECK(p3.at(2) == doctest::Approx(0.6652).epsilon(1e-3));

  CHECK_THROWS_AS(t.masked_softmax(Tensor::from({2}, {1, 2}), Tensor::from({2}, {0, 0})),
                  InputError);
}

TEST_CASE("masked softmax is a probability vector on the mask support") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng.below(9);
    Tensor logits = random_tensor({n}, rng, -30, 30, false);
    Tensor mask = Tensor::zeros({n});
    std::size_t live = 1 + rng.below(n);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    for (std::size_t i = 0; i < live; ++i) mask.ref(idx[i]) = 1.0;

    Tape t;
    Tensor p = t.masked_softmax(logits, mask);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask.at(i) == 0.0) {
        CHECK(p.at(i) == 0.0);
      } else {
        CHECK(p.at(i) >= 0.0);
        sum += p.at(i);
      }
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("masked softmax survives extreme logits") {
  Tape t;
  Tensor p = t.masked_softmax(Tensor::from({3}, {1000.0, -1000.0, 999.0}),
                              Tensor::from({3}, {1, 1, 1}));
  CHECK(p.all_finite());
  CHECK(p.at(0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(p.at(1) == 0.0);  // exp(-2000) underflows cleanly
  CHECK(p.at(0) + p.at(1) + p.at(2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("elementwise basics") {
  Tape t;
  CHECK(t.sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(t.relu(Tensor::scalar(-3.0)).item() == 0.0);
  CHECK(t.relu(Tensor::scalar(3.0)).item() == 3.0);
  Tensor c = t.concat({Tensor::from({2}, {1, 2}), Tensor::from({1}, {3})});
  CHECK(c.shape() == Shape{3});
  CHECK(c.at(0) == 1);
  CHECK(c.at(2) == 3);
  CHECK_THROWS_AS(t.add(Tensor::zeros({2}), Tensor::zeros({3})), DimError);
}

TEST_CASE("backward basics") {
  // f(x) = x², via two uses of x (gradient accumulates across uses)
  {
    Tape t;
    Tensor x = Tensor::scalar(3.0, true);
    Tensor y = t.mul(x, x);
    t.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
  }
  // f(x) = Σ sigmoid(x) against central differences
  {
    Rng rng(3);
    auto f = [](Tape& t, const Tensor& x) { return t.sum(t.sigmoid(x)); };
    CHECK(finite_diff_check(f, random_tensor({6}, rng, -2, 2, false), 1e-5) < 1e-5);
  }
  // unused parameter keeps a zero gradient
  {
    Tape t;
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    Tensor unused = Tensor::from({2}, {5, 5}, true);
    t.backward(t.sum(x));
    CHECK(unused.grad()[0] == 0.0);
    CHECK(unused.grad()[1] == 0.0);
    CHECK(x.grad()[0] == 1.0);
  }
  // non-scalar loss is a contract violation
  {
    Tape t;
    Tensor x = Tensor::from({2}, {1, 2}, true);
    CHECK_THROWS_AS(t.backward(t.scale(x, 2.0)), DimError);
  }
}

TEST_CASE("finite_diff_check closed forms") {
  Rng rng(11);
  Tensor a = random_tensor({5, 5}, rng, -1, 1, false);
  auto quad = [&](Tape& t, const Tensor& x) { return t.dot(x, t.matmul(a, x)); };
  CHECK(finite_diff_check(quad, random_tensor({5}, rng, -1, 1, false), 1e-5) < 1e-6);

  auto constant = [](Tape&, const Tensor&) { return Tensor::scalar(4.2); };
  CHECK(finite_diff_check(constant, random_tensor({4}, rng, -1, 1, false)) == 0.0);

  CHECK_THROWS_AS(finite_diff_check(constant, Tensor::zeros({2}), 0.0), InputError);
}

// ---------------------------------------------------------------------------
// per-op gradient property suite: autodiff vs central differences on
// randomized inputs, >= 100 trials per op.

namespace {

double fd(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x) {
  return finite_diff_check(f, x, 1e-6);
}

constexpr int kTrials = 100;
constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("gradient property: matmul family") {
  Rng rng(21);
  for (int i = 0; i < kTrials; ++i) {
    std::size_t m = 1 + rng.below(4), k = 1 + rng.below(4), n = 1 + rng.below(4);
    Tensor a = random_tensor({m, k}, rng, -1, 1, false);
    Tensor b = random_tensor({k, n}, rng, -1, 1, false);
    auto w = random_weights(m * n, rng);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.matmul(x, b), w); },
             a) < kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.matmul(a, x), w); },
             b) < kTol);

    Tensor v = random_tensor({k}, rng, -1, 1, false);
    auto wv = random_weights(m, rng);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.matmul(x, v), wv); },
             a) < kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.matmul(a, x), wv); },
             v) < kTol);

    Tensor bt = random_tensor({n, k}, rng, -1, 1, false);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.matmul_nt(x, bt), w); },
             a) < kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.matmul_nt(a, x), w); },
             bt) < kTol);

    auto wt = random_weights(m * k, rng);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.transpose(x), wt); },
             a) < kTol);
  }
}

TEST_CASE("gradient property: elementwise and broadcast") {
  Rng rng(22);
  for (int i = 0; i < kTrials; ++i) {
    std::size_t n = 1 + rng.below(7);
    Tensor a = random_tensor({n}, rng, -2, 2, false);
    Tensor b = random_tensor({n}, rng, -2, 2, false);
    Tensor s = random_tensor({1}, rng, -2, 2, false);
    auto w = random_weights(n, rng);

    auto both = [&](auto opbuild) {
      CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, opbuild(t, x, b), w); },
               a) < kTol);
      CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, opbuild(t, a, x), w); },
               b) < kTol);
    };
    both([](Tape& t, const Tensor& x, const Tensor& y) { return t.add(x, y); });
    both([](Tape& t, const Tensor& x, const Tensor& y) { return t.sub(x, y); });
    both([](Tape& t, const Tensor& x, const Tensor& y) { return t.mul(x, y); });

    // scalar broadcast on either side
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.mul(x, s), w); }, a) <
          kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.mul(a, x), w); }, s) <
          kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.add(x, s), w); }, a) <
          kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.sub(s, x), w); }, a) <
          kTol);

    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.scale(x, -1.3), w); },
             a) < kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.add_const(x, 2.5), w); },
             a) < kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.sigmoid(x), w); }, a) <
          kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.tanh(x), w); }, a) <
          kTol);

    // keep relu inputs clear of the kink
    Tensor ar = Tensor::zeros({n});
    for (std::size_t j = 0; j < n; ++j) {
      double v = rng.uniform(0.05, 2.0);
      ar.ref(j) = rng.uniform() < 0.5 ? v : -v;
    }
    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.relu(x), w); }, ar) <
          kTol);
  }
}

TEST_CASE("gradient property: reductions, concat, softmax, loss") {
  Rng rng(23);
  for (int i = 0; i < kTrials; ++i) {
    std::size_t n = 2 + rng.below(6);
    Tensor a = random_tensor({n}, rng, -2, 2, false);
    Tensor b = random_tensor({n}, rng, -2, 2, false);
    auto w = random_weights(n, rng);

    CHECK(fd([&](Tape& t, const Tensor& x) { return t.sum(x); }, a) < kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return t.dot(x, b); }, a) < kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return t.dot(b, x); }, a) < kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return t.sum_squares(x); }, a) < kTol);
    CHECK(fd([&](Tape& t, const Tensor& x) { return t.select_output(x, 0); }, a) < kTol);

    auto wc = random_weights(2 * n, rng);
    CHECK(fd(
              [&](Tape& t, const Tensor& x) {
                return weighted_scalar(t, t.concat({x, b}), wc);
              },
              a) < kTol);

    // softmax with a random non-empty mask (grad flows only into logits)
    Tensor mask = Tensor::zeros({n});
    for (std::size_t j = 0; j < n; ++j) mask.ref(j) = rng.uniform() < 0.6 ? 1.0 : 0.0;
    mask.ref(rng.below(n)) = 1.0;
    CHECK(fd(
              [&](Tape& t, const Tensor& x) {
                return weighted_scalar(t, t.masked_softmax(x, mask), w);
              },
              a) < kTol);

    int gold = static_cast<int>(rng.below(n));
    CHECK(fd([&](Tape& t, const Tensor& x) { return t.cross_entropy(x, gold); }, a) < kTol);
  }
}

TEST_CASE("gradient property: row-structured ops") {
  Rng rng(24);
  for (int i = 0; i < kTrials; ++i) {
    std::size_t m = 1 + rng.below(4), d = 1 + rng.below(5);
    Tensor mat = random_tensor({m, d}, rng, -1, 1, false);
    Tensor v = random_tensor({d}, rng, -1, 1, false);
    Tensor wvec = random_tensor({m}, rng, -1, 1, false);
    auto wmd = random_weights(m * d, rng);
    auto wd = random_weights(d, rng);

    CHECK(fd([&](Tape& t, const Tensor& x) { return weighted_scalar(t, t.add_rowvec(x, v), wmd); },
             mat) < kTol);
    CHECK(fd(
              [&](Tape& t, const Tensor& x) {
                return weighted_scalar(t, t.add_rowvec(mat, x), wmd);
              },
              v) < kTol);

    Tensor scales = random_tensor({m}, rng, -1, 1, false);
    scales.set_requires_grad(false);
    CHECK(fd(
              [&](Tape& t, const Tensor& x) {
                return weighted_scalar(t, t.scale_rows(x, scales), wmd);
              },
              mat) < kTol);

    CHECK(fd(
              [&](Tape& t, const Tensor& x) {
                return weighted_scalar(t, t.rows_weighted_sum(x, wvec), wd);
              },
              mat) < kTol);
    CHECK(fd(
              [&](Tape& t, const Tensor& x) {
                return weighted_scalar(t, t.rows_weighted_sum(mat, x), wd);
              },
              wvec) < kTol);

    Tensor mat2 = random_tensor({m, d}, rng, -1, 1, false);
    auto w2 = random_weights(m * 2 * d, rng);
    CHECK(fd(
              [&](Tape& t, const Tensor& x) {
                return weighted_scalar(t, t.concat_cols(x, mat2), w2);
              },
              mat) < kTol);
    CHECK(fd(
              [&](Tape& t, const Tensor& x) {
                return weighted_scalar(t, t.concat_cols(mat, x), w2);
              },
              mat2) < kTol);

    Tensor logits = random_tensor({m, d}, rng, -3, 3, false);
    Tensor cmask = Tensor::zeros({d});
    for (std::size_t j = 0; j < d; ++j) cmask.ref(j) = rng.uniform() < 0.6 ? 1.0 : 0.0;
    cmask.ref(rng.below(d)) = 1.0;
    CHECK(fd(
              [&](Tape& t, const Tensor& x) {
                return weighted_scalar(t, t.masked_softmax_rows(x, cmask), wmd);
              },
              logits) < kTol);
  }
}

TEST_CASE("gradient property: dropout with a replayed mask") {
  Rng rng(25);
  for (int i = 0; i < kTrials; ++i) {
    std::size_t n = 2 + rng.below(6);
    Tensor a = random_tensor({n}, rng, -2, 2, false);
    auto w = random_weights(n, rng);
    uint64_t mask_seed = rng.next_u64();
    auto f = [&](Tape& t, const Tensor& x) {
      Rng local(mask_seed);  // every evaluation sees the same mask
      return weighted_scalar(t, t.dropout(x, 0.4, local), w);
    };
    CHECK(fd(f, a) < kTol);
  }
}

TEST_CASE("replaying the same computation is bit-identical") {
  Rng rng(31);
  Tensor x = random_tensor({4, 3}, rng, -1, 1, true);
  Tensor y = random_tensor({3, 5}, rng, -1, 1, true);
  auto run = [&]() {
    Tape t;
    Tensor out = t.sigmoid(t.matmul(x, y));
    return std::vector<double>(out.data(), out.data() + out.size());
  };
  CHECK(run() == run());
}

TEST_CASE("tape finite checking names the op") {
  Tape t;
  t.set_check_finite(true);
  Tensor big = Tensor::from({2}, {1e308, 1e308});
  CHECK_THROWS_WITH_AS(t.add(big, big), doctest::Contains("add"), NumericError);
}
