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

#include "stylemix/mixstyle.hpp"
#include "test_util.hpp"

using namespace stylemix;

namespace {

MixWeights constant_lambda(int batch, double v) {
    MixWeights w;
    w.lambda.assign(static_cast<std::size_t>(batch), v);
    return w;
}

ReferencePermutation rotate_perm(int batch) {
    ReferencePermutation p;
    for (int i = 0; i < batch; ++i) p.perm.push_back((i + 1) % batch);
    return p;
}

Tensor4 gather_instances(const Tensor4& x, const std::vector<int>& perm) {
    Tensor4 out(x.shape());
    const std::int64_t plane = static_cast<std::int64_t>(x.c()) * x.h() * x.w();
    for (int b = 0; b < x.b(); ++b)
        for (std::int64_t i = 0; i < plane; ++i)
            out[b * plane + i] = x[static_cast<std::int64_t>(perm[static_cast<std::size_t>(b)]) * plane + i];
    return out;
}

} // namespace

TEST_CASE("lambda samples live in the unit interval") {
    Rng rng(31);
    const MixWeights w = sample_lambda(0.1, 64, rng);
    REQUIRE(w.lambda.size() == 64);
    for (double v : w.lambda) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(sample_lambda(0.0, 4, rng), ValueError);
    CHECK_THROWS_AS(sample_lambda(0.1, 0, rng), ValueError);
}

TEST_CASE("domain-label construction with identity half-shuffles is the inverse index") {
    const std::vector<int> identity{0, 1};
    const ReferencePermutation p = domain_label_permutation(4, identity, identity);
    CHECK(p.perm == std::vector<int>{3, 2, 1, 0});
}

TEST_CASE("domain-label mode always pairs across halves") {
    for (int batch : {4, 8, 32}) {
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            Rng rng(seed);
            const ReferencePermutation p =
                reference_permutation(batch, PermMode::domain_label, rng);
            for (int i = 0; i < batch; ++i) {
                const bool first_half = i < batch / 2;
                const bool partner_first = p.perm[static_cast<std::size_t>(i)] < batch / 2;
                CHECK(first_half != partner_first);
            }
        }
    }
}

TEST_CASE("odd batches are rejected in domain-label mode") {
    Rng rng(32);
    CHECK_THROWS_AS(reference_permutation(5, PermMode::domain_label, rng), ValueError);
    CHECK_THROWS_AS(reference_permutation(1, PermMode::random_shuffle, rng), ValueError);
}

TEST_CASE("random mode returns a valid permutation") {
    Rng rng(33);
    const ReferencePermutation p = reference_permutation(16, PermMode::random_shuffle, rng);
    std::vector<bool> seen(16, false);
    for (int v : p.perm) {
        REQUIRE(v >= 0);
        REQUIRE(v < 16);
        REQUIRE_FALSE(seen[static_cast<std::size_t>(v)]);
        seen[static_cast<std::size_t>(v)] = true;
    }
}

TEST_CASE("mixed statistics hit the convex endpoints") {
    Rng rng(34);
    const Tensor4 x = testutil::random_tensor({4, 3, 4, 4}, rng);
    const InstanceStats st = compute_stats(x);
    const ReferencePermutation perm = rotate_perm(4);

    const auto [g1, b1] = mix_statistics(st, perm, constant_lambda(4, 1.0), MixMode::convex);
    CHECK(g1 == st.sigma);
    CHECK(b1 == st.mu);

    const auto [g0, b0] = mix_statistics(st, perm, constant_lambda(4, 0.0), MixMode::convex);
    const auto [gr, br] = mix_statistics(st, perm, constant_lambda(4, 0.37), MixMode::replace);
    CHECK(g0 == gr);
    CHECK(b0 == br);
    for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 3; ++c)
            CHECK(g0.at(b, c, 0, 0) == st.sigma.at((b + 1) % 4, c, 0, 0));
}

TEST_CASE("mixed mean at lambda one half is the midpoint") {
    Tensor4 x(2, 1, 2, 2);
    for (int i = 0; i < 4; ++i) x[i] = 2.0;     // instance 0: mean 2
    for (int i = 4; i < 8; ++i) x[i] = 4.0;     // instance 1: mean 4
    const InstanceStats st = compute_stats(x);
    const auto [gmix, bmix] =
        mix_statistics(st, rotate_perm(2), constant_lambda(2, 0.5), MixMode::convex);
    CHECK(bmix.at(0, 0, 0, 0) == Approx(3.0).margin(1e-12));
    CHECK(bmix.at(1, 0, 0, 0) == Approx(3.0).margin(1e-12));
}

TEST_CASE("lambda one makes the transform a bitwise identity") {
    Rng rng(35);
    const Tensor4 xv = testutil::random_tensor({3, 2, 4, 4}, rng);
    Var x = make_var(xv);
    const Var out =
        apply_mixstyle(x, constant_lambda(3, 1.0), rotate_perm(3), MixMode::convex, 1e-6);
    CHECK(out->value == xv);
}

TEST_CASE("lambda zero reproduces adain against the permuted batch") {
    Rng rng(36);
    const Tensor4 xv = testutil::random_tensor({4, 3, 5, 5}, rng);
    const ReferencePermutation perm = rotate_perm(4);
    const Var out =
        apply_mixstyle(make_var(xv), constant_lambda(4, 0.0), perm, MixMode::convex, 1e-6);
    const Tensor4 reference = adain(xv, gather_instances(xv, perm.perm), 1e-6);
    for (std::int64_t i = 0; i < xv.size(); ++i)
        CHECK(out->value[i] == Approx(reference[i]).margin(1e-12));
}

TEST_CASE("output statistics equal the mixed statistics") {
    Rng rng(37);
    // variance >= 1e-2 per channel so the sigma-recovery tolerance applies
    const Tensor4 xv = testutil::random_tensor({4, 2, 6, 6}, rng, -1.0, 1.0);
    Rng lam_rng(38);
    const MixWeights w = sample_lambda(0.1, 4, lam_rng);
    const ReferencePermutation perm = rotate_perm(4);
    const InstanceStats st = compute_stats(xv, 1e-6);
    const auto [gmix, bmix] = mix_statistics(st, perm, w, MixMode::convex);

    const Var out = apply_mixstyle(make_var(xv), w, perm, MixMode::convex, 1e-6);
    const auto [mean, var] = reduce_spatial_moments(out->value);
    const InstanceStats sout = compute_stats(out->value, 1e-6);
    for (std::int64_t i = 0; i < mean.size(); ++i) {
        CHECK(mean[i] == Approx(bmix[i]).margin(1e-12));
        CHECK(sout.sigma[i] == Approx(gmix[i]).epsilon(1e-3));
    }
}

TEST_CASE("jacobian is diagonal with entries gamma_mix over sigma") {
    Rng rng(39);
    Tensor4 xv = testutil::random_tensor({3, 2, 3, 3}, rng);
    Rng lam_rng(40);
    const MixWeights w = sample_lambda(0.1, 3, lam_rng);
    const ReferencePermutation perm = rotate_perm(3);

    const InstanceStats st = compute_stats(xv, 1e-6);
    const auto [gmix, bmix] = mix_statistics(st, perm, w, MixMode::convex);

    Var x = make_var(xv);
    const Var out = apply_mixstyle(x, w, perm, MixMode::convex, 1e-6);

    // check d out_k / d x_k = gamma_mix/sigma per plane by comparing against
    // the diagonal analytic form and a finite-difference oracle. The oracle
    // freezes the (grad-blocked) statistics at their unperturbed values and
    // reimplements the frozen transform with plain loops.
    const Tensor4 weights = testutil::random_tensor(xv.shape(), rng);
    const GradientMap grads = backward(sum_all(mul(out, constant(weights))));
    const std::int64_t spatial = 9;
    const Tensor4 frozen_gmix = gmix, frozen_bmix = bmix;
    const Tensor4 frozen_mu = st.mu, frozen_sigma = st.sigma;
    for (std::int64_t i = 0; i < xv.size(); ++i) {
        const std::int64_t plane = i / spatial;
        const double analytic = weights[i] * gmix[plane] / st.sigma[plane];
        CHECK(grads.at(x)[i] == Approx(analytic).margin(1e-12));
        const double numeric = testutil::numeric_grad(xv, i, [&] {
            double s = 0.0;
            for (std::int64_t q = 0; q < xv.size(); ++q) {
                const std::int64_t p = q / spatial;
                const double normed = (xv[q] - frozen_mu[p]) / frozen_sigma[p];
                s += weights[q] * (normed * frozen_gmix[p] + frozen_bmix[p]);
            }
            return s;
        });
        CHECK(testutil::grad_close(grads.at(x)[i], numeric, 1e-4));
    }
}

TEST_CASE("gradients do not flow through the statistics") {
    // A loss that depends on x only through mu/sigma computed inside
    // apply_mixstyle must produce exactly zero gradients: with lambda = 0 the
    // output is pure reference statistics wherever the content term vanishes.
    Rng rng(41);
    Tensor4 xv = testutil::random_tensor({2, 1, 3, 3}, rng);
    Var x = make_var(xv);
    const Var out = apply_mixstyle(x, constant_lambda(2, 0.0), rotate_perm(2),
                                   MixMode::replace, 1e-6);
    // out = x*s + t with s,t constants: d(sum out)/dx = s exactly; the
    // statistic paths contribute nothing
    const GradientMap grads = backward(sum_all(out));
    const InstanceStats st = compute_stats(xv, 1e-6);
    for (std::int64_t i = 0; i < xv.size(); ++i) {
        const std::int64_t plane = i / 9;
        const std::int64_t ref = (plane + 1) % 2;
        CHECK(grads.at(x)[i] == st.sigma[ref] / st.sigma[plane]);
    }
}

TEST_CASE("eval mode and the p gate return the input node unchanged") {
    Rng rng(42);
    const Tensor4 xv = testutil::random_tensor({4, 2, 3, 3}, rng);
    Var x = make_var(xv);
    MixStyleConfig cfg;

    Rng r1(1);
    CHECK(mixstyle_forward(x, cfg, r1, false).get() == x.get());

    cfg.p = 0.0;
    Rng r2(2);
    CHECK(mixstyle_forward(x, cfg, r2, true).get() == x.get());

    cfg.p = 1.0;
    Rng r3(3);
    MixStyleTrace trace;
    const Var out = mixstyle_forward(x, cfg, r3, true, nullptr, &trace);
    CHECK(trace.activated);
    CHECK(out.get() != x.get());
}

TEST_CASE("gating frequency matches p over many calls") {
    Rng rng(43);
    const Tensor4 xv(4, 1, 2, 2, 1.0);
    Var x = make_var(xv);
    MixStyleConfig cfg; // p = 0.5
    int active = 0;
    const int calls = 10000;
    for (int i = 0; i < calls; ++i) {
        MixStyleTrace trace;
        (void)mixstyle_forward(x, cfg, rng, true, nullptr, &trace);
        if (trace.activated) ++active;
    }
    const double fraction = static_cast<double>(active) / calls;
    CHECK(fraction >= 0.48);
    CHECK(fraction <= 0.52);
}

TEST_CASE("small batches are rejected when the transform fires") {
    const Tensor4 xv(1, 1, 2, 2, 1.0);
    Var x = make_var(xv);
    MixStyleConfig cfg;
    cfg.p = 1.0;
    Rng rng(44);
    CHECK_THROWS_AS(mixstyle_forward(x, cfg, rng, true), ValueError);
}

TEST_CASE("shared cache reuses one permutation across calls") {
    Rng rng(45);
    const Tensor4 xv = testutil::random_tensor({8, 2, 3, 3}, rng);
    Var x = make_var(xv);
    MixStyleConfig cfg;
    cfg.p = 1.0;
    cfg.shuffle_scope = ShuffleScope::shared;
    SharedPermCache cache;
    MixStyleTrace t1, t2;
    (void)mixstyle_forward(x, cfg, rng, true, &cache, &t1);
    (void)mixstyle_forward(x, cfg, rng, true, &cache, &t2);
    CHECK(t1.perm.perm == t2.perm.perm);
    CHECK(t1.lambda.lambda != t2.lambda.lambda); // lambda resampled per layer
}

TEST_CASE("argmax within each channel survives the transform") {
    Rng rng(46);
    const Tensor4 xv = testutil::random_tensor({4, 3, 4, 4}, rng);
    Rng lam_rng(47);
    const MixWeights w = sample_lambda(0.1, 4, lam_rng);
    const Var out = apply_mixstyle(make_var(xv), w, rotate_perm(4), MixMode::convex, 1e-6);
    for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 3; ++c) {
            int arg_in = 0, arg_out = 0;
            for (int i = 1; i < 16; ++i) {
                if (xv.at(b, c, i / 4, i % 4) > xv.at(b, c, arg_in / 4, arg_in % 4)) arg_in = i;
                if (out->value.at(b, c, i / 4, i % 4) >
                    out->value.at(b, c, arg_out / 4, arg_out % 4))
                    arg_out = i;
            }
            CHECK(arg_in == arg_out);
        }
}

TEST_CASE("config validation rejects out-of-range fields") {
    MixStyleConfig cfg;
    cfg.p = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg.p = 0.5;
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg.alpha = 0.1;
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
}
