#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "corrseg/gradcheck.hpp"
#include "corrseg/losses.hpp"
#include "corrseg/ops.hpp"
#include "corrseg/tape.hpp"
#include "test_util.hpp"

using namespace corrseg;
using testutil::random_tensor;

namespace {

Tensor ones(std::vector<int> shape) { return Tensor::full(std::move(shape), 1.0f); }

// Binary labels for loss tests.
Tensor random_labels(std::vector<int> shape, uint64_t seed, double p = 0.3) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform() < p ? 1.0f : 0.0f;
    return t;
}

}  // namespace

TEST_CASE("conv3d: zero kernel maps anything to zero") {
    Tensor in = ones({1, 4, 4, 4});
    Tensor w = Tensor::zeros({1, 1, 3, 3, 3});
    Tensor b = Tensor::zeros({1});
    Tensor out = conv3d(in, w, b);
    REQUIRE(out.shape() == std::vector<int>{1, 4, 4, 4});
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0f);
}

TEST_CASE("conv3d: averaging kernel on ones gives exactly 1 inside, 8/27 at corners") {
    Tensor in = ones({1, 4, 4, 4});
    const float kv = static_cast<float>(1.0 / 27.0);
    Tensor w = Tensor::full({1, 1, 3, 3, 3}, kv);
    Tensor b = Tensor::zeros({1});
    Tensor out = conv3d(in, w, b);
    auto at = [&](int z, int y, int x) { return out.data()[(z * 4 + y) * 4 + x]; };
    for (int z = 1; z <= 2; ++z)
        for (int y = 1; y <= 2; ++y)
            for (int x = 1; x <= 2; ++x) CHECK(at(z, y, x) == 1.0f);
    CHECK(at(0, 0, 0) == 8.0f * kv);
    CHECK(at(3, 3, 3) == 8.0f * kv);
}

TEST_CASE("conv3d matches the direct-sum oracle for every dilation and stride") {
    for (uint64_t seed : {11u, 12u, 13u}) {
        for (int dilation : {1, 2, 4}) {
            for (int stride : {1, 2}) {
                Tensor in = random_tensor({3, 7, 6, 5}, seed);
                Tensor w = random_tensor({2, 3, 3, 3, 3}, seed + 100);
                Tensor b = random_tensor({2}, seed + 200);
                Tensor out = conv3d(in, w, b, dilation, stride);
                auto ref = testutil::conv3d_reference(in, w, b, dilation, stride);
                REQUIRE(out.numel() == static_cast<int64_t>(ref.size()));
                for (int64_t i = 0; i < out.numel(); ++i) {
                    CHECK(out.data()[i] == doctest::Approx(ref[static_cast<size_t>(i)]).epsilon(1e-5));
                }
            }
        }
    }
}

TEST_CASE("conv3d preserves spatial shape for same padding, k=3, any dilation") {
    for (int dilation : {1, 2, 4}) {
        Tensor in = random_tensor({2, 9, 8, 10}, 5);
        Tensor out = conv3d(in, random_tensor({4, 2, 3, 3, 3}, 6), random_tensor({4}, 7), dilation);
        CHECK(out.shape() == std::vector<int>{4, 9, 8, 10});
    }
}

TEST_CASE("conv3d rejects invalid configurations with informative messages") {
    Tensor in = ones({2, 4, 4, 4});
    Tensor b1 = Tensor::zeros({1});
    CHECK_THROWS_WITH_AS(conv3d(in, ones({1, 3, 3, 3, 3}), b1), doctest::Contains("does not match input channels"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(conv3d(in, ones({1, 2, 2, 2, 2}), b1), doctest::Contains("odd"), std::invalid_argument);
    CHECK_THROWS(conv3d(in, ones({1, 2, 3, 3, 3}), b1, 3));
    CHECK_THROWS(conv3d(in, ones({1, 2, 3, 3, 3}), Tensor::zeros({2})));
}

TEST_CASE("conv3d gradient matches finite differences (weights, input, bias)") {
    // Positive data keeps the summed gradients away from cancellation, so
    // the h=1e-3 step resolves them cleanly; signed data is covered by the
    // analytic-oracle case below.
    for (uint64_t seed : {21u, 22u, 23u}) {
        Tensor in = random_tensor({2, 4, 4, 4}, seed, 0.1, 1.1);
        Tensor w = random_tensor({2, 2, 3, 3, 3}, seed + 50, 0.05, 0.55);
        Tensor b = random_tensor({2}, seed + 80);
        auto wrt_weight = [&](const Tensor& wt) { return reduce_sum(conv3d(in, wt, b, 2)); };
        CHECK(gradcheck(wrt_weight, w, 1e-3) <= 1e-3);
        auto wrt_input = [&](const Tensor& x) { return reduce_sum(conv3d(x, w, b, 1)); };
        CHECK(gradcheck(wrt_input, in, 1e-3) <= 1e-3);
        auto wrt_bias = [&](const Tensor& bb) { return reduce_sum(conv3d(in, w, bb, 1, 2)); };
        CHECK(gradcheck(wrt_bias, b, 1e-3) <= 1e-3);
    }
}

TEST_CASE("conv3d backward matches an independent analytic oracle on signed data") {
    // For loss = sum(r * conv(in, w)), grad_w[oc,ic,tap] = sum_v r[oc,v] *
    // in[ic, v+off] and grad_in[ic,u] = sum_{oc,tap} w * r[oc, u-off], both
    // computable in double with no finite-difference noise.
    for (int stride : {1, 2}) {
        for (int dilation : {1, 2}) {
            Tensor in = random_tensor({2, 5, 4, 5}, 300 + static_cast<uint64_t>(stride));
            Tensor w = random_tensor({3, 2, 3, 3, 3}, 310 + static_cast<uint64_t>(dilation), -0.5, 0.5);
            Tensor b = random_tensor({3}, 320);
            Tensor r = random_tensor({3, (5 - 1) / stride + 1, (4 - 1) / stride + 1, (5 - 1) / stride + 1}, 330);

            in.set_requires_grad(true);
            w.set_requires_grad(true);
            TapeScope scope;
            Tensor loss = reduce_sum(mul(conv3d(in, w, b, dilation, stride), r));
            scope.backward(loss);

            const auto& is = in.shape();
            const int ci = is[0], D = is[1], H = is[2], W = is[3];
            const int co = 3, k = 3, rr = 1;
            const int Do = r.shape()[1], Ho = r.shape()[2], Wo = r.shape()[3];
            for (int oc = 0; oc < co; ++oc)
                for (int ic = 0; ic < ci; ++ic)
                    for (int kz = 0; kz < k; ++kz)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                double gw = 0.0;
                                for (int zo = 0; zo < Do; ++zo)
                                    for (int yo = 0; yo < Ho; ++yo)
                                        for (int xo = 0; xo < Wo; ++xo) {
                                            const int z = stride * zo + dilation * (kz - rr);
                                            const int y = stride * yo + dilation * (ky - rr);
                                            const int x = stride * xo + dilation * (kx - rr);
                                            if (z < 0 || z >= D || y < 0 || y >= H || x < 0 || x >= W) continue;
                                            gw += static_cast<double>(
                                                      r.data()[((static_cast<int64_t>(oc) * Do + zo) * Ho + yo) * Wo + xo]) *
                                                  in.data()[((static_cast<int64_t>(ic) * D + z) * H + y) * W + x];
                                        }
                                const float a =
                                    w.grad()[(((static_cast<int64_t>(oc) * ci + ic) * k + kz) * k + ky) * k + kx];
                                CHECK(a == doctest::Approx(gw).epsilon(2e-5));
                            }
            for (int ic = 0; ic < ci; ++ic)
                for (int z = 0; z < D; ++z)
                    for (int y = 0; y < H; ++y)
                        for (int x = 0; x < W; ++x) {
                            double gi = 0.0;
                            for (int oc = 0; oc < co; ++oc)
                                for (int kz = 0; kz < k; ++kz)
                                    for (int ky = 0; ky < k; ++ky)
                                        for (int kx = 0; kx < k; ++kx) {
                                            const int zn = z - dilation * (kz - rr);
                                            const int yn = y - dilation * (ky - rr);
                                            const int xn = x - dilation * (kx - rr);
                                            if (zn % stride || yn % stride || xn % stride) continue;
                                            const int zo = zn / stride, yo = yn / stride, xo = xn / stride;
                                            if (zo < 0 || zo >= Do || yo < 0 || yo >= Ho || xo < 0 || xo >= Wo) continue;
                                            gi += static_cast<double>(
                                                      w.data()[(((static_cast<int64_t>(oc) * ci + ic) * k + kz) * k + ky) * k + kx]) *
                                                  r.data()[((static_cast<int64_t>(oc) * Do + zo) * Ho + yo) * Wo + xo];
                                        }
                            const float a = in.grad()[((static_cast<int64_t>(ic) * D + z) * H + y) * W + x];
                            CHECK(a == doctest::Approx(gi).epsilon(2e-5).scale(1.0));
                        }
        }
    }
}

TEST_CASE("conv3d strided gradient matches finite differences") {
    for (uint64_t seed : {31u, 32u, 33u}) {
        Tensor in = random_tensor({2, 5, 4, 5}, seed, 0.1, 1.1);
        Tensor w = random_tensor({3, 2, 3, 3, 3}, seed + 5, 0.05, 0.55);
        Tensor b = random_tensor({3}, seed + 9);
        auto f = [&](const Tensor& x) { return reduce_sum(conv3d(x, w, b, 1, 2)); };
        CHECK(gradcheck(f, in, 1e-3) <= 1e-3);
    }
}

TEST_CASE("upsample3d: single voxel replication, shape contract, block-sum backward") {
    Tensor in({1, 1, 1, 1}, {5.0f});
    Tensor out = upsample3d(in, 2);
    REQUIRE(out.shape() == std::vector<int>{1, 2, 2, 2});
    for (int i = 0; i < 8; ++i) CHECK(out.data()[i] == 5.0f);

    CHECK(upsample3d(random_tensor({3, 4, 4, 4}, 1), 2).shape() == std::vector<int>{3, 8, 8, 8});

    Tensor x = random_tensor({2, 2, 2, 2}, 3);
    x.set_requires_grad(true);
    TapeScope scope;
    Tensor loss = reduce_sum(upsample3d(x, 2));
    scope.backward(loss);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 8.0f);
}

TEST_CASE("upsample3d gradcheck") {
    for (uint64_t seed : {41u, 42u, 43u}) {
        Tensor x = random_tensor({2, 3, 2, 3}, seed);
        auto f = [](const Tensor& t) { return reduce_sum(sigmoid(upsample3d(t, 2))); };
        CHECK(gradcheck(f, x, 1e-2) <= 1e-3);
    }
}

TEST_CASE("dense: identity, hand result, gradcheck") {
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor x({3}, {4.0f, -1.0f, 2.5f});
    Tensor out = dense(x, eye, Tensor::zeros({3}));
    for (int i = 0; i < 3; ++i) CHECK(out.data()[i] == x.data()[i]);

    Tensor w({2, 2}, {1, 2, 3, 4});
    Tensor in({2}, {1, 1});
    Tensor b({2}, {0, 1});
    Tensor y = dense(in, w, b);
    CHECK(y.data()[0] == 3.0f);
    CHECK(y.data()[1] == 8.0f);

    CHECK_THROWS_AS(dense(Tensor({3}), Tensor({2, 2}), Tensor({2})), std::invalid_argument);

    for (uint64_t seed : {51u, 52u, 54u}) {
        Tensor xin = random_tensor({4}, seed);
        Tensor ww = random_tensor({3, 4}, seed + 1);
        Tensor bb = random_tensor({3}, seed + 2);
        auto fw = [&](const Tensor& t) { return reduce_sum(sigmoid(dense(xin, t, bb))); };
        CHECK(gradcheck(fw, ww, 1e-2) <= 1e-3);
        auto fx = [&](const Tensor& t) { return reduce_sum(sigmoid(dense(t, ww, bb))); };
        CHECK(gradcheck(fx, xin, 1e-2) <= 1e-3);
    }
}

TEST_CASE("activation values") {
    Tensor x({3}, {-2.0f, 0.0f, 3.0f});
    Tensor r = relu(x);
    CHECK(r.data()[0] == 0.0f);
    CHECK(r.data()[1] == 0.0f);
    CHECK(r.data()[2] == 3.0f);

    CHECK(leaky_relu(Tensor::scalar(-1.0f), 0.01f).item() == doctest::Approx(-0.01).epsilon(1e-7));
    CHECK(sigmoid(Tensor::scalar(0.0f)).item() == 0.5f);
    CHECK_THROWS(leaky_relu(x, 1.5f));
}

TEST_CASE("activation gradchecks away from the kink") {
    for (uint64_t seed : {61u, 62u, 63u}) {
        Tensor x = random_tensor({40}, seed, 0.1, 1.2);
        for (int64_t i = 0; i < x.numel(); i += 2) x.data()[i] = -x.data()[i];  // both branches, away from 0
        auto fr = [](const Tensor& t) { return reduce_sum(relu(t)); };
        CHECK(gradcheck(fr, x, 1e-4) <= 1e-3);
        auto fl = [](const Tensor& t) { return reduce_sum(leaky_relu(t, 0.1f)); };
        CHECK(gradcheck(fl, x, 1e-4) <= 1e-3);
        auto fs = [](const Tensor& t) { return reduce_sum(sigmoid(t)); };
        CHECK(gradcheck(fs, x, 1e-3) <= 1e-3);
    }
}

TEST_CASE("elementwise: identities and hand broadcast") {
    Tensor x = random_tensor({2, 2, 2, 2}, 70);
    Tensor z = Tensor::zeros({2, 2, 2, 2});
    Tensor m = mul(x, z);
    Tensor a = add(x, z);
    for (int64_t i = 0; i < x.numel(); ++i) {
        CHECK(m.data()[i] == 0.0f);
        CHECK(a.data()[i] == x.data()[i]);
    }

    Tensor map({2, 1, 1, 1}, {5.0f, 7.0f});
    Tensor vec({2}, {2.0f, 3.0f});
    Tensor prod = mul(map, vec);
    CHECK(prod.data()[0] == 10.0f);
    CHECK(prod.data()[1] == 21.0f);

    CHECK_THROWS_WITH_AS(add(Tensor({2, 2, 2, 2}), Tensor({3})), doctest::Contains("not broadcastable"),
                         std::invalid_argument);
}

TEST_CASE("elementwise gradchecks over all broadcast flavors") {
    for (uint64_t seed : {71u, 72u, 73u}) {
        Tensor a = random_tensor({3, 2, 2, 2}, seed);
        Tensor same = random_tensor({3, 2, 2, 2}, seed + 1);
        Tensor chan = random_tensor({3}, seed + 2);
        Tensor voxel = random_tensor({1, 2, 2, 2}, seed + 3);
        for (auto kind : {Elementwise::Add, Elementwise::Mul}) {
            auto fa = [&](const Tensor& t) { return reduce_sum(sigmoid(elementwise(t, same, kind))); };
            CHECK(gradcheck(fa, a, 1e-2) <= 1e-3);
            auto fb = [&](const Tensor& t) { return reduce_sum(sigmoid(elementwise(a, t, kind))); };
            CHECK(gradcheck(fb, same, 1e-2) <= 1e-3);
            auto fc = [&](const Tensor& t) { return reduce_sum(sigmoid(elementwise(a, t, kind))); };
            CHECK(gradcheck(fc, chan, 1e-2) <= 1e-3);
            auto fv = [&](const Tensor& t) { return reduce_sum(sigmoid(elementwise(a, t, kind))); };
            CHECK(gradcheck(fv, voxel, 1e-2) <= 1e-3);
        }
    }
}

TEST_CASE("concat_channels: order, shapes, gradcheck, spatial mismatch error") {
    Tensor a = random_tensor({1, 2, 2, 2}, 80);
    Tensor b = random_tensor({1, 2, 2, 2}, 81);
    Tensor cat = concat_channels({a, b});
    REQUIRE(cat.shape() == std::vector<int>{2, 2, 2, 2});
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(cat.data()[i] == a.data()[i]);

    std::vector<Tensor> four;
    for (int i = 0; i < 4; ++i) four.push_back(random_tensor({8, 2, 2, 2}, 90 + static_cast<uint64_t>(i)));
    CHECK(concat_channels(four).shape()[0] == 32);

    CHECK_THROWS_WITH_AS(concat_channels({a, Tensor({1, 3, 2, 2})}), doctest::Contains("spatial dims differ"),
                         std::invalid_argument);

    for (uint64_t seed : {91u, 92u, 93u}) {
        Tensor x = random_tensor({2, 2, 2, 2}, seed);
        Tensor other = random_tensor({1, 2, 2, 2}, seed + 7);
        auto f = [&](const Tensor& t) { return reduce_sum(sigmoid(concat_channels({t, other}))); };
        CHECK(gradcheck(f, x, 1e-2) <= 1e-3);
    }
}

TEST_CASE("global_avg_pool: constants, arithmetic mean, backward") {
    Tensor c = Tensor::full({3, 2, 2, 2}, 3.0f);
    Tensor pooled = global_avg_pool(c);
    REQUIRE(pooled.shape() == std::vector<int>{3});
    for (int i = 0; i < 3; ++i) CHECK(pooled.data()[i] == 3.0f);

    Tensor seq({1, 2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(global_avg_pool(seq).data()[0] == 3.5f);

    Tensor x = random_tensor({2, 2, 2, 2}, 100);
    x.set_requires_grad(true);
    TapeScope scope;
    scope.backward(reduce_sum(global_avg_pool(x)));
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("instance_norm: constants, two-voxel case, stats, gradcheck") {
    Tensor c = Tensor::full({2, 2, 2, 2}, 4.0f);
    Tensor out = instance_norm(c);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == doctest::Approx(0.0).epsilon(1e-4));

    Tensor two({1, 1, 1, 2}, {1.0f, 3.0f});
    Tensor norm2 = instance_norm(two, 1e-8f);
    CHECK(norm2.data()[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(norm2.data()[1] == doctest::Approx(1.0).epsilon(1e-5));

    Tensor x = random_tensor({3, 3, 3, 3}, 110);
    Tensor y = instance_norm(x);
    const int64_t sp = 27;
    for (int ch = 0; ch < 3; ++ch) {
        double mean = 0.0;
        for (int64_t i = 0; i < sp; ++i) mean += y.data()[ch * sp + i];
        CHECK(std::abs(mean / sp) < 1e-5);
    }

    for (uint64_t seed : {111u, 113u, 117u}) {
        Tensor xr = random_tensor({2, 2, 2, 3}, seed);
        auto f = [](const Tensor& t) { return reduce_sum(sigmoid(instance_norm(t))); };
        CHECK(gradcheck(f, xr, 1e-2) <= 1e-3);
    }
}

TEST_CASE("channel_mean and channel_max reductions with gradients") {
    Tensor x({2, 1, 1, 2}, {1.0f, 5.0f, 3.0f, 2.0f});
    Tensor cm = channel_mean(x);
    REQUIRE(cm.shape() == std::vector<int>{1, 1, 1, 2});
    CHECK(cm.data()[0] == 2.0f);
    CHECK(cm.data()[1] == 3.5f);
    Tensor cx = channel_max(x);
    CHECK(cx.data()[0] == 3.0f);
    CHECK(cx.data()[1] == 5.0f);

    for (uint64_t seed : {122u, 123u, 124u}) {
        Tensor xr = random_tensor({3, 2, 2, 2}, seed);
        auto fm = [](const Tensor& t) { return reduce_sum(sigmoid(channel_mean(t))); };
        CHECK(gradcheck(fm, xr, 1e-2) <= 1e-3);
        // Per-voxel channel values spaced >= 0.1 apart so no max tie flips
        // within the finite-difference step.
        Tensor spaced({3, 2, 2, 2});
        Rng rng(seed * 7 + 1);
        for (int64_t v = 0; v < 8; ++v) {
            int order[3] = {0, 1, 2};
            std::swap(order[0], order[rng.next_below(3)]);
            std::swap(order[1], order[1 + rng.next_below(2)]);
            for (int c = 0; c < 3; ++c) {
                spaced.data()[order[c] * 8 + v] = static_cast<float>(0.2 * c + rng.uniform(-0.04, 0.04));
            }
        }
        auto fx = [](const Tensor& t) { return reduce_sum(sigmoid(channel_max(t))); };
        CHECK(gradcheck(fx, spaced, 1e-3) <= 1e-3);
    }
}

TEST_CASE("slice_vec bounds and backward scatter") {
    Tensor x({4}, {1, 2, 3, 4});
    Tensor s = slice_vec(x, 1, 2);
    CHECK(s.data()[0] == 2.0f);
    CHECK(s.data()[1] == 3.0f);
    CHECK_THROWS(slice_vec(x, 3, 2));

    Tensor xr = random_tensor({6}, 130);
    xr.set_requires_grad(true);
    TapeScope scope;
    scope.backward(reduce_sum(slice_vec(xr, 2, 3)));
    const float expect[6] = {0, 0, 1, 1, 1, 0};
    for (int i = 0; i < 6; ++i) CHECK(xr.grad()[i] == expect[i]);
}

TEST_CASE("backward: linear case, product rule, fan-out sum, accumulation contract") {
    // loss = sum(2*x) -> grad all 2
    Tensor x = random_tensor({5}, 140);
    x.set_requires_grad(true);
    {
        TapeScope scope;
        Tensor loss = reduce_sum(scale(x, 2.0));
        scope.backward(loss);
    }
    for (int i = 0; i < 5; ++i) CHECK(x.grad()[i] == 2.0f);

    // loss = sum(x*x) at [1,2] -> [2,4]
    Tensor x2({2}, {1.0f, 2.0f});
    x2.set_requires_grad(true);
    {
        TapeScope scope;
        scope.backward(reduce_sum(mul(x2, x2)));
    }
    CHECK(x2.grad()[0] == 2.0f);
    CHECK(x2.grad()[1] == 4.0f);

    // y = x + x feeds the same tensor into both slots -> grad 2
    Tensor x3({3}, {0.5f, -1.0f, 2.0f});
    x3.set_requires_grad(true);
    {
        TapeScope scope;
        scope.backward(reduce_sum(add(x3, x3)));
    }
    for (int i = 0; i < 3; ++i) CHECK(x3.grad()[i] == 2.0f);

    // two backward calls without zeroing accumulate
    Tensor x4({2}, {1.0f, 1.0f});
    x4.set_requires_grad(true);
    {
        TapeScope scope;
        Tensor loss = reduce_sum(scale(x4, 2.0));
        scope.backward(loss);
        scope.backward(loss);
    }
    CHECK(x4.grad()[0] == 4.0f);

    // non-scalar loss rejected
    Tensor x5 = random_tensor({2}, 150);
    x5.set_requires_grad(true);
    TapeScope scope;
    Tensor y5 = scale(x5, 1.0);
    CHECK_THROWS(scope.backward(y5));
}

TEST_CASE("forward ops are bitwise deterministic across repeated calls") {
    Tensor in = random_tensor({3, 6, 6, 6}, 160);
    Tensor w = random_tensor({4, 3, 3, 3, 3}, 161);
    Tensor b = random_tensor({4}, 162);
    Tensor o1 = conv3d(in, w, b, 2);
    Tensor o2 = conv3d(in, w, b, 2);
    for (int64_t i = 0; i < o1.numel(); ++i) CHECK(o1.data()[i] == o2.data()[i]);
    Tensor n1 = instance_norm(in);
    Tensor n2 = instance_norm(in);
    for (int64_t i = 0; i < n1.numel(); ++i) CHECK(n1.data()[i] == n2.data()[i]);
}

TEST_CASE("gradcheck harness behaves as specified") {
    Tensor x = random_tensor({8}, 170);
    auto fsum = [](const Tensor& t) { return reduce_sum(t); };
    CHECK(gradcheck(fsum, x, 1e-3) <= 1e-6);

    auto fsig = [](const Tensor& t) { return reduce_sum(sigmoid(t)); };
    CHECK(gradcheck(fsig, x, 1e-3) <= 1e-3);
}

TEST_CASE("soft dice loss: perfect, total miss, hand-counted case, gradcheck") {
    Tensor labels = random_labels({3, 2, 2, 2}, 180);
    Tensor perfect = labels.clone();
    CHECK(soft_dice_loss(perfect, labels).item() == doctest::Approx(0.0).epsilon(1e-4));

    Tensor inverted(labels.shape());
    for (int64_t i = 0; i < labels.numel(); ++i) inverted.data()[i] = 1.0f - labels.data()[i];
    CHECK(soft_dice_loss(inverted, labels).item() == doctest::Approx(1.0).epsilon(1e-4));

    // p = [1,1,0,...], y = [1,0,0,...] per region: loss = 1 - (2+eps)/(3+eps) ~ 1/3
    Tensor p = Tensor::zeros({3, 2, 2, 2});
    Tensor y = Tensor::zeros({3, 2, 2, 2});
    for (int r = 0; r < 3; ++r) {
        p.data()[r * 8 + 0] = 1.0f;
        p.data()[r * 8 + 1] = 1.0f;
        y.data()[r * 8 + 0] = 1.0f;
    }
    CHECK(soft_dice_loss(p, y).item() == doctest::Approx(1.0 / 3.0).epsilon(1e-4));

    CHECK_THROWS_WITH_AS(soft_dice_loss(p, Tensor({3, 2, 2, 1})), doctest::Contains("shape mismatch"),
                         std::invalid_argument);

    for (uint64_t seed : {181u, 182u, 183u}) {
        Tensor logits = random_tensor({3, 2, 2, 2}, seed);
        Tensor lab = random_labels({3, 2, 2, 2}, seed + 5);
        auto f = [&](const Tensor& t) { return soft_dice_loss(sigmoid(t), lab); };
        CHECK(gradcheck(f, logits, 1e-2) <= 1e-3);
    }
}

TEST_CASE("correlation L1: zero at equality, constant offset, quarter case, gradcheck") {
    std::vector<Tensor> f, F;
    for (int i = 0; i < 4; ++i) {
        f.push_back(random_tensor({2, 2, 2, 2}, 190 + static_cast<uint64_t>(i)));
        F.push_back(f.back().clone());
    }
    CHECK(correlation_l1_loss(F, f).item() == 0.0f);

    std::vector<Tensor> Fp;
    for (int i = 0; i < 4; ++i) {
        Tensor t = f[static_cast<size_t>(i)].clone();
        for (int64_t j = 0; j < t.numel(); ++j) t.data()[j] += 1.0f;
        Fp.push_back(t);
    }
    CHECK(correlation_l1_loss(Fp, f).item() == doctest::Approx(1.0).epsilon(1e-6));

    // modality 0 differs by 2 on half of its elements -> (1 + 0 + 0 + 0)/4
    std::vector<Tensor> Fh;
    for (int i = 0; i < 4; ++i) Fh.push_back(f[static_cast<size_t>(i)].clone());
    for (int64_t j = 0; j < Fh[0].numel() / 2; ++j) Fh[0].data()[j] += 2.0f;
    CHECK(correlation_l1_loss(Fh, f).item() == doctest::Approx(0.25).epsilon(1e-6));

    for (uint64_t seed : {191u, 192u, 193u}) {
        Tensor a = random_tensor({2, 2, 2, 2}, seed);
        Tensor b = random_tensor({2, 2, 2, 2}, seed + 100);  // far from |a-b|=0 kinks w.h.p.
        auto f1 = [&](const Tensor& t) { return l1_mean(t, b); };
        CHECK(gradcheck(f1, a, 1e-4) <= 1e-3);
        auto f2 = [&](const Tensor& t) { return l1_mean(a, t); };
        CHECK(gradcheck(f2, b, 1e-4) <= 1e-3);
    }
}
