#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "audcast/codec.hpp"
#include "audcast/rng.hpp"
#include "audcast/tensor.hpp"

using namespace audcast;

namespace {

// naive triple-loop reference product in long double
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (int p = 0; p < k; ++p)
        acc += static_cast<long double>(a[i * k + p]) * static_cast<long double>(b[p * n + j]);
      out[static_cast<std::size_t>(i) * n + j] = static_cast<double>(acc);
    }
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("matmul basics and oracle") {
  SECTION("identity times identity") {
    Tensor i3 = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor r = matmul(i3, i3);
    CHECK(max_abs_diff(r.data(), i3.data()) == 0.0);
  }
  SECTION("permutation matrix") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor p = Tensor::from_data({2, 2}, {0, 1, 1, 0});
    Tensor r = matmul(a, p);
    CHECK(r.data() == std::vector<double>{2, 1, 4, 3});
  }
  SECTION("random 4x5 . 5x3 matches triple-loop oracle") {
    Rng rng(11);
    Tensor a = Tensor::randn({4, 5}, rng);
    Tensor b = Tensor::randn({5, 3}, rng);
    Tensor r = matmul(a, b);
    auto ref = matmul_oracle(a.data(), b.data(), 4, 5, 3);
    CHECK(max_abs_diff(r.data(), ref) < 1e-12);
  }
  SECTION("shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH(matmul(a, b), Catch::Matchers::ContainsSubstring("[2,3]") &&
                                        Catch::Matchers::ContainsSubstring("[4,2]"));
  }
  SECTION("associativity on random inputs") {
    Rng rng(12);
    Tensor a = Tensor::randn({3, 4}, rng);
    Tensor b = Tensor::randn({4, 5}, rng);
    Tensor c = Tensor::randn({5, 2}, rng);
    Tensor left = matmul(matmul(a, b), c);
    Tensor right = matmul(a, matmul(b, c));
    CHECK(max_abs_diff(left.data(), right.data()) < 1e-10);
  }
}

TEST_CASE("softmax_rows") {
  SECTION("uniform logits") {
    Tensor x = Tensor::zeros({3});
    Tensor y = softmax_rows(x);
    for (int i = 0; i < 3; ++i) CHECK(y.at(i) == Catch::Approx(1.0 / 3.0).margin(1e-15));
  }
  SECTION("large logits do not overflow") {
    Tensor x = Tensor::from_data({2}, {1000.0, 0.0});
    Tensor y = softmax_rows(x);
    CHECK(std::isfinite(y.at(0)));
    CHECK(y.at(0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(y.at(1) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("random rows match extended-precision exp/sum oracle") {
    Rng rng(21);
    Tensor x = Tensor::randn({3, 4}, rng, 2.0);
    Tensor y = softmax_rows(x);
    for (int r = 0; r < 3; ++r) {
      long double sum = 0.0L;
      for (int j = 0; j < 4; ++j) sum += std::exp(static_cast<long double>(x.at(r, j)));
      for (int j = 0; j < 4; ++j) {
        const long double ref = std::exp(static_cast<long double>(x.at(r, j))) / sum;
        CHECK(y.at(r, j) == Catch::Approx(static_cast<double>(ref)).margin(1e-13));
      }
    }
  }
  SECTION("rows sum to one and shifting a row is a no-op") {
    Rng rng(22);
    Tensor x = Tensor::randn({5, 7}, rng, 3.0);
    Tensor y = softmax_rows(x);
    for (int r = 0; r < 5; ++r) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) s += y.at(r, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    std::vector<double> shifted = x.data();
    for (int j = 0; j < 7; ++j) shifted[2 * 7 + j] += 123.5;
    Tensor y2 = softmax_rows(Tensor::from_data({5, 7}, shifted));
    CHECK(max_abs_diff(y.data(), y2.data()) < 1e-12);
  }
  SECTION("empty last axis rejected") {
    CHECK_THROWS(softmax_rows(Tensor::zeros({3, 0})));
  }
}

TEST_CASE("layernorm") {
  Tensor gain = Tensor::full({4}, 1.0);
  Tensor bias = Tensor::zeros({4});
  SECTION("constant vector maps to zero pre-affine") {
    Tensor x = Tensor::full({4}, 3.25);
    Tensor y = layernorm(x, gain, bias);
    for (int i = 0; i < 4; ++i) CHECK(y.at(i) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("already normalized input is preserved") {
    Tensor g2 = Tensor::full({2}, 1.0), b2 = Tensor::zeros({2});
    Tensor x = Tensor::from_data({2}, {1.0, -1.0});
    Tensor y = layernorm(x, g2, b2);
    CHECK(y.at(0) == Catch::Approx(1.0).margin(2e-5));
    CHECK(y.at(1) == Catch::Approx(-1.0).margin(2e-5));
  }
  SECTION("random vector matches two-pass mean/var oracle") {
    Rng rng(31);
    Tensor g8 = Tensor::full({8}, 1.0), b8 = Tensor::zeros({8});
    Tensor x = Tensor::randn({8}, rng, 2.0);
    Tensor y = layernorm(x, g8, b8);
    long double mean = 0.0L;
    for (int i = 0; i < 8; ++i) mean += x.at(i);
    mean /= 8.0L;
    long double var = 0.0L;
    for (int i = 0; i < 8; ++i) var += (x.at(i) - mean) * (x.at(i) - mean);
    var /= 8.0L;
    for (int i = 0; i < 8; ++i) {
      const double ref = static_cast<double>((x.at(i) - mean) / std::sqrt(var + 1e-5L));
      CHECK(y.at(i) == Catch::Approx(ref).margin(1e-12));
    }
  }
  SECTION("zero-length axis rejected") {
    CHECK_THROWS(layernorm(Tensor::zeros({2, 0}), Tensor::zeros({0}), Tensor::zeros({0})));
  }
}

TEST_CASE("conv3d_down") {
  SECTION("all-ones kernel with matching stride sums the input") {
    Rng rng(41);
    Tensor x = Tensor::randn({1, 2, 2, 2}, rng);
    Tensor w = Tensor::full({1, 1, 2, 2, 2}, 1.0);
    Tensor b = Tensor::zeros({1});
    Tensor y = conv3d_down(x, w, b, 2, 2, 2);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    double sum = 0.0;
    for (double v : x.data()) sum += v;
    CHECK(y.at(0) == Catch::Approx(sum).margin(1e-12));
  }
  SECTION("impulse response copies the kernel value") {
    Tensor x = Tensor::zeros({1, 3, 3, 3});
    x.data()[0] = 1.0;  // delta at the origin
    Rng rng(42);
    Tensor w = Tensor::randn({1, 1, 2, 2, 2}, rng);
    Tensor b = Tensor::zeros({1});
    Tensor y = conv3d_down(x, w, b, 1, 1, 1);
    REQUIRE(y.shape() == Shape{1, 2, 2, 2});
    CHECK(y.at(0) == Catch::Approx(w.at(0)).margin(1e-15));
    for (int i = 1; i < 8; ++i) CHECK(y.at(i) == 0.0);
  }
  SECTION("random case matches nested-loop oracle") {
    Rng rng(43);
    Tensor x = Tensor::randn({2, 5, 6, 7}, rng);
    Tensor w = Tensor::randn({3, 2, 2, 3, 3}, rng);
    Tensor b = Tensor::randn({3}, rng);
    const int sd = 1, sh = 2, sw = 2;
    Tensor y = conv3d_down(x, w, b, sd, sh, sw);
    const int Do = (5 - 2) / sd + 1, Ho = (6 - 3) / sh + 1, Wo = (7 - 3) / sw + 1;
    REQUIRE(y.shape() == Shape{3, Do, Ho, Wo});
    for (int co = 0; co < 3; ++co)
      for (int d = 0; d < Do; ++d)
        for (int h = 0; h < Ho; ++h)
          for (int ww = 0; ww < Wo; ++ww) {
            long double acc = b.at(co);
            for (int ci = 0; ci < 2; ++ci)
              for (int a = 0; a < 2; ++a)
                for (int bb = 0; bb < 3; ++bb)
                  for (int cc = 0; cc < 3; ++cc)
                    acc += static_cast<long double>(
                               x.data()[((ci * 5 + (d * sd + a)) * 6 + (h * sh + bb)) * 7 +
                                        (ww * sw + cc)]) *
                           w.data()[(((co * 2 + ci) * 2 + a) * 3 + bb) * 3 + cc];
            const double got = y.data()[((co * Do + d) * Ho + h) * Wo + ww];
            CHECK(got == Catch::Approx(static_cast<double>(acc)).margin(1e-11));
          }
  }
  SECTION("kernel larger than input rejected") {
    Tensor x = Tensor::zeros({1, 2, 2, 2});
    Tensor w = Tensor::zeros({1, 1, 3, 2, 2});
    Tensor b = Tensor::zeros({1});
    CHECK_THROWS_WITH(conv3d_down(x, w, b, 1, 1, 1),
                      Catch::Matchers::ContainsSubstring("larger than input"));
  }
}

TEST_CASE("gradient checks against central differences") {
  SECTION("quadratic: f(x) = sum(x^2)") {
    Rng rng(51);
    ParamStore store;
    Tensor x = store.add_randn("x", {6}, rng, 2.0);
    auto f = [&]() { return sum_all(mul(x, x)); };
    std::vector<Parameter> params = store.all();
    const double err = grad_check(f, params);
    CHECK(err < 1e-7);
    // analytic gradient is 2x
    store.zero_grad();
    Tensor loss = f();
    backward(loss);
    for (int i = 0; i < 6; ++i)
      CHECK(x.grad()[i] == Catch::Approx(2.0 * x.at(i)).margin(1e-12));
  }

  SECTION("adapter attention block composed of registered ops") {
    // the three-term attention of the model, built from primitives over
    // random 2x4 inputs, checked against finite differences
    Rng rng(52);
    ParamStore store;
    const int s = 2, c = 4, sr = 3, sf = 2;
    Tensor x = store.add_randn("x", {s, c}, rng, 0.7);
    Tensor wq = store.add_randn("wq", {c, c}, rng, 0.5);
    Tensor wk = store.add_randn("wk", {c, c}, rng, 0.5);
    Tensor wv = store.add_randn("wv", {c, c}, rng, 0.5);
    Tensor r = store.add_randn("r", {sr, c}, rng, 0.7);
    Tensor wrk = store.add_randn("wrk", {c, c}, rng, 0.5);
    Tensor wrv = store.add_randn("wrv", {c, c}, rng, 0.5);
    Tensor ff = store.add_randn("f", {sf, c}, rng, 0.7);
    Tensor wfk = store.add_randn("wfk", {c, c}, rng, 0.5);
    Tensor wfv = store.add_randn("wfv", {c, c}, rng, 0.5);
    const std::vector<double> gate = {1.0, 0.0};
    auto f = [&]() {
      Tensor q = matmul(x, wq);
      const double inv = 1.0 / std::sqrt(static_cast<double>(c));
      Tensor t1 = matmul(softmax_rows(scale(matmul(q, transpose(matmul(x, wk))), inv)),
                         matmul(x, wv));
      Tensor t2 = matmul(softmax_rows(scale(matmul(q, transpose(matmul(r, wrk))), inv)),
                         matmul(r, wrv));
      Tensor t3 = row_scale(
          matmul(softmax_rows(scale(matmul(q, transpose(matmul(ff, wfk))), inv)),
                 matmul(ff, wfv)),
          gate);
      Tensor out = add(add(t1, t2), t3);
      return sum_all(mul(out, out));
    };
    std::vector<Parameter> params = store.all();
    CHECK(grad_check(f, params) < 1e-5);
  }

  SECTION("composite graph exercising every registered op") {
    Rng rng(53);
    ParamStore store;
    Tensor a = store.add_randn("a", {3, 4}, rng, 0.8);
    Tensor b = store.add_randn("b", {4, 4}, rng, 0.8);
    Tensor g = store.add_randn("g", {4}, rng, 0.3);
    Tensor bias = store.add_randn("bias", {4}, rng, 0.3);
    Tensor vol = store.add_randn("vol", {1, 2, 4, 4}, rng, 0.8);
    Tensor ker = store.add_randn("ker", {2, 1, 2, 2, 2}, rng, 0.5);
    Tensor kb = store.add_randn("kb", {2}, rng, 0.3);
    Tensor wsum = store.add_randn("wsum", {2}, rng, 0.5);
    auto f = [&]() {
      Tensor gplus = add_scalar(g, 1.0);
      Tensor h = layernorm(matmul(a, b), gplus, bias);
      h = gelu(h);
      h = add_rowvec(h, bias);
      h = mul_rowvec(h, gplus);
      Tensor conv = conv3d_down(vol, ker, kb, 2, 2, 2);
      Tensor tok = patchify_volume(conv, 1, 2, 1);
      Tensor joined = concat_rows({h, tok});
      Tensor sliced = slice_rows(joined, 1, 4);
      Tensor cols = concat_cols(sliced, sliced);
      Tensor soft = softmax_rows(scale(cols, 0.5));
      Tensor ws = weighted_sum({sliced, gelu(sliced)}, softmax_rows(wsum));
      Tensor sil = silu(ws);
      return add(mean_all(mul(soft, soft)), mse(sil, transpose(transpose(sub(sliced, ws)))));
    };
    std::vector<Parameter> params = store.all();
    CHECK(grad_check(f, params) < 1e-5);
  }
}
