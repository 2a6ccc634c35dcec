// Copyright 2026 The stylemix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch.hpp>

#include "stylemix/nn.hpp"
#include "test_util.hpp"

using namespace stylemix;

namespace {

// Shared finite-difference driver: loss = sum(weights . f(inputs)).
void check_grads(Tensor4& input, const std::function<Var(const Var&)>& op, Rng& rng,
                 double rel_tol = 1e-4) {
    Var x = make_var(input);
    const Var out = op(x);
    const Tensor4 weights = testutil::random_tensor(out->value.shape(), rng);
    const GradientMap grads = backward(sum_all(mul(out, constant(weights))));
    auto loss_value = [&] {
        return sum_all(mul(op(make_var(input)), constant(weights)))->value[0];
    };
    for (std::int64_t i = 0; i < input.size(); ++i) {
        const double numeric = testutil::numeric_grad(input, i, loss_value);
        INFO("entry " << i);
        CHECK(testutil::grad_close(grads.at(x)[i], numeric, rel_tol));
    }
}

} // namespace

TEST_CASE("conv2d with a 1x1 identity kernel reproduces the input") {
    Rng rng(10);
    const Tensor4 x = testutil::random_tensor({2, 3, 4, 4}, rng);
    Tensor4 k(3, 3, 1, 1, 0.0);
    for (int c = 0; c < 3; ++c) k.at(c, c, 0, 0) = 1.0;
    const Var out = conv2d(make_var(x), make_var(k), 1, 0);
    CHECK(out->value == x);
}

TEST_CASE("conv2d output shape follows stride and padding") {
    const Var out = conv2d(make_var(Tensor4(2, 3, 8, 8)), make_var(Tensor4(5, 3, 3, 3)), 2, 1);
    CHECK(out->value.shape() == Shape4{2, 5, 4, 4});
    CHECK_THROWS_AS(conv2d(make_var(Tensor4(1, 2, 4, 4)), make_var(Tensor4(1, 3, 3, 3)), 1, 1),
                    ShapeError);
    CHECK_THROWS_AS(conv2d(make_var(Tensor4(1, 2, 4, 4)), make_var(Tensor4(1, 2, 3, 3)), 0, 1),
                    ValueError);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(11);
    Tensor4 x = testutil::random_tensor({2, 2, 4, 4}, rng);
    Tensor4 k = testutil::random_tensor({3, 2, 3, 3}, rng);

    // input gradient
    check_grads(x, [&](const Var& v) { return conv2d(v, constant(k), 2, 1); }, rng);
    // kernel gradient
    check_grads(k, [&](const Var& v) { return conv2d(constant(x), v, 1, 1); }, rng);
}

TEST_CASE("bias_add offsets each channel and backpropagates plane sums") {
    Rng rng(12);
    Tensor4 x = testutil::random_tensor({2, 3, 3, 3}, rng);
    Tensor4 b = testutil::random_tensor({1, 3, 1, 1}, rng);
    const Var out = bias_add(make_var(x), make_var(b));
    for (int bi = 0; bi < 2; ++bi)
        for (int c = 0; c < 3; ++c)
            CHECK(out->value.at(bi, c, 1, 1) == Approx(x.at(bi, c, 1, 1) + b[c]));
    check_grads(b, [&](const Var& v) { return bias_add(constant(x), v); }, rng);
    CHECK_THROWS_AS(bias_add(make_var(x), make_var(Tensor4(1, 2, 1, 1))), ShapeError);
}

TEST_CASE("relu definition and gradient away from the kink") {
    const Tensor4 x = Tensor4::from_values({1, 1, 1, 2}, {-2.0, 3.0});
    const Var out = relu(make_var(x));
    CHECK(out->value[0] == 0.0);
    CHECK(out->value[1] == 3.0);

    Rng rng(13);
    Tensor4 r = testutil::random_tensor({1, 2, 3, 3}, rng);
    for (std::int64_t i = 0; i < r.size(); ++i)
        if (std::abs(r[i]) < 0.05) r[i] = 0.1; // keep clear of the kink for FD
    check_grads(r, [](const Var& v) { return relu(v); }, rng);
}

TEST_CASE("global average pooling averages each plane") {
    Rng rng(14);
    Tensor4 x = testutil::random_tensor({2, 3, 4, 4}, rng);
    const Var out = global_avg_pool(make_var(x));
    CHECK(out->value.shape() == Shape4{2, 3, 1, 1});
    const auto [mean, var] = reduce_spatial_moments(x);
    for (std::int64_t i = 0; i < mean.size(); ++i)
        CHECK(out->value[i] == Approx(mean[i]).margin(1e-13));
    check_grads(x, [](const Var& v) { return global_avg_pool(v); }, rng);
}

TEST_CASE("linear layer computes the affine map and its gradients") {
    Rng rng(15);
    Tensor4 f = testutil::random_tensor({3, 4, 1, 1}, rng);
    Tensor4 w = testutil::random_tensor({2, 4, 1, 1}, rng);
    Tensor4 b = testutil::random_tensor({1, 2, 1, 1}, rng);
    const Var out = linear(make_var(f), make_var(w), make_var(b));
    CHECK(out->value.shape() == Shape4{3, 2, 1, 1});
    double expect = b[1];
    for (int c = 0; c < 4; ++c) expect += f.at(2, c, 0, 0) * w.at(1, c, 0, 0);
    CHECK(out->value.at(2, 1, 0, 0) == Approx(expect).margin(1e-12));

    check_grads(f, [&](const Var& v) { return linear(v, constant(w), constant(b)); }, rng);
    check_grads(w, [&](const Var& v) { return linear(constant(f), v, constant(b)); }, rng);
    check_grads(b, [&](const Var& v) { return linear(constant(f), constant(w), v); }, rng);
    CHECK_THROWS_AS(linear(make_var(f), make_var(Tensor4(2, 5, 1, 1)), make_var(b)), ShapeError);
}

TEST_CASE("cross entropy of uniform logits is ln K") {
    const int K = 7;
    const Tensor4 logits(3, K, 1, 1, 0.42);
    const std::vector<int> labels{0, 3, 6};
    const Var loss = softmax_cross_entropy(make_var(logits), labels);
    CHECK(loss->value[0] == Approx(std::log(static_cast<double>(K))).epsilon(1e-12));
}

TEST_CASE("cross entropy is stable for large logits and checks labels") {
    Tensor4 logits(1, 3, 1, 1);
    logits[0] = 1e4;
    logits[1] = -1e4;
    logits[2] = 0.0;
    const std::vector<int> labels{0};
    const Var loss = softmax_cross_entropy(make_var(logits), labels);
    CHECK(std::isfinite(loss->value[0]));
    CHECK(loss->value[0] == Approx(0.0).margin(1e-9));

    const std::vector<int> bad{3};
    CHECK_THROWS_AS(softmax_cross_entropy(make_var(logits), bad), ValueError);
    const std::vector<int> negative{-1};
    CHECK_THROWS_AS(softmax_cross_entropy(make_var(logits), negative), ValueError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(16);
    Tensor4 logits = testutil::random_tensor({3, 4, 1, 1}, rng);
    const std::vector<int> labels{1, 0, 3};
    Var lg = make_var(logits);
    const GradientMap grads = backward(softmax_cross_entropy(lg, labels));
    auto loss_value = [&] {
        return softmax_cross_entropy(make_var(logits), labels)->value[0];
    };
    for (std::int64_t i = 0; i < logits.size(); ++i) {
        const double numeric = testutil::numeric_grad(logits, i, loss_value);
        CHECK(testutil::grad_close(grads.at(lg)[i], numeric, 1e-4));
    }
}
