#include <gtest/gtest.h>

#include "antnet/gradcheck.hpp"

using namespace antnet;

TEST(FiniteDiff, SumHasUnitGradient) {
    Rng rng(1);
    Tensor4<double> x = random_tensor<double>(rng, 1, 2, 3, 3);
    ScalarFn<double> f = [](const Tensor4<double>& t) {
        double s = 0;
        for (const double v : t.data) s += v;
        return s;
    };
    Tensor4<double> g = finite_diff(f, x, 1e-5);
    for (const double v : g.data) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FiniteDiff, HalfSquaredNorm) {
    Tensor4<double> x(1, 1, 1, 1);
    x.data = {3.0};
    ScalarFn<double> f = [](const Tensor4<double>& t) {
        double s = 0;
        for (const double v : t.data) s += 0.5 * v * v;
        return s;
    };
    EXPECT_NEAR(finite_diff(f, x, 1e-5).data[0], 3.0, 1e-6);
}

TEST(FiniteDiff, MatchesAnalyticSiluDerivative) {
    Tensor4<double> x(1, 1, 1, 1);
    x.data = {1.0};
    ScalarFn<double> f = [](const Tensor4<double>& t) {
        double s = 0;
        for (const double v : t.data) s += silu_scalar(v);
        return s;
    };
    EXPECT_NEAR(finite_diff(f, x, 1e-6).data[0], silu_grad_scalar(1.0), 1e-9);
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
    Tensor4<double> x(1, 1, 1, 1);
    ScalarFn<double> f = [](const Tensor4<double>&) { return 0.0; };
    EXPECT_THROW(finite_diff(f, x, 0.0), DomainError);
}

TEST(Backward, LinearWeightGradClosedForm) {
    // upstream all-ones: dW == x^T * 1
    Mat<double> x(3, 2);
    x.data = {1, 2, 3, 4, 5, 6};
    Mat<double> w(2, 4);
    Mat<double> up(3, 4);
    for (auto& v : up.data) v = 1.0;
    LinearGrads<double> g = linear_backward(x, w, up, false);
    for (i64 r = 0; r < 2; ++r)
        for (i64 c = 0; c < 4; ++c) {
            double expect = 0;
            for (i64 i = 0; i < 3; ++i) expect += x.at(i, r);
            EXPECT_DOUBLE_EQ(g.dweight.at(r, c), expect);
        }
}

TEST(Backward, AddPassesUpstreamThrough) {
    Rng rng(2);
    Tensor4<double> up = random_tensor<double>(rng, 1, 2, 3, 3);
    // both input grads equal the upstream: nothing to compute, asserted by contract
    Tensor4<double> dx = up;
    Tensor4<double> dy = up;
    EXPECT_EQ(dx.data, up.data);
    EXPECT_EQ(dy.data, up.data);
}

TEST(Backward, ConvWeightGradAgainstFiniteDifferences) {
    Rng rng(3);
    Tensor4<double> x = random_tensor<double>(rng, 1, 1, 2, 2);
    Tensor4<double> w = random_tensor<double>(rng, 2, 1, 3, 3);
    const ConvSpec spec{3, 1, 2, 1, 1, 1, false};
    Tensor4<double> up = random_tensor<double>(rng, 1, 2, 2, 2);
    ConvGrads<double> g = conv2d_backward(x, w, spec, up);

    auto scalar = [&]() {
        Tensor4<double> y = conv2d(x, w, nullptr, spec);
        double s = 0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * up.data[i];
        return s;
    };
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        const double numeric = finite_diff_at<double>(scalar, &w.data[i], 1e-6);
        EXPECT_LE(rel_err(g.dweight.data[i], numeric), 1e-6);
    }
}

TEST(Backward, ConvInputGradIsTransposedConvBitwise) {
    Rng rng(4);
    const ConvSpec spec{3, 3, 5, 2, 1, 1, false};
    Tensor4<double> x = random_tensor<double>(rng, 1, 3, 6, 6);
    Tensor4<double> w = random_tensor<double>(rng, 5, 3, 3, 3);
    Tensor4<double> y = conv2d(x, w, nullptr, spec);
    Tensor4<double> up = random_tensor<double>(rng, 1, y.c, y.h, y.w);
    ConvGrads<double> g = conv2d_backward(x, w, spec, up);
    Tensor4<double> adj = transposed_conv(up, w, spec, x.h, x.w);
    EXPECT_EQ(g.dx.data, adj.data);  // identical code path, exactly bitwise
}

TEST(Backward, MaxPoolRoutesToFirstMaxOnTies) {
    Tensor4<double> x(1, 1, 2, 2);
    x.data = {1.0, 1.0, 1.0, 1.0};  // all tied
    Tensor4<double> up(1, 1, 1, 1);
    up.data = {5.0};
    Tensor4<double> dx = pool_backward(x, PoolKind::max, 2, 2, up);
    EXPECT_DOUBLE_EQ(dx.data[0], 5.0);
    EXPECT_DOUBLE_EQ(dx.data[1], 0.0);
    EXPECT_DOUBLE_EQ(dx.data[2], 0.0);
    EXPECT_DOUBLE_EQ(dx.data[3], 0.0);
}

TEST(Gradcheck, EveryPrimitivePasses) {
    for (const auto& name : gradcheck_primitive_names()) {
        GradReport r = gradcheck_primitive(name, 1234, 1e-4);
        EXPECT_TRUE(r.passed) << name << " max_rel_err=" << r.max_rel_err;
        EXPECT_GE(r.n_probes, 16) << name;
    }
}

TEST(Gradcheck, UnsupportedOpRaisesCapabilityError) {
    EXPECT_THROW(gradcheck_primitive("fancy_op", 1, 1e-4), CapabilityError);
    EXPECT_THROW(gradcheck_block("fancy_block", 1, 1e-4), CapabilityError);
}

TEST(Gradcheck, ReportInvariants) {
    GradReport r = gradcheck_primitive("silu", 99, 1e-4);
    EXPECT_EQ(r.passed, r.max_rel_err <= 1e-4);
    EXPECT_GE(r.n_probes, 1);
}

TEST(Gradcheck, DetectsInjectedWrongBackward) {
    Rng rng(77);
    CheckTarget<double> t;
    t.name = "broken";
    t.input = random_tensor<double>(rng, 1, 2, 3, 3);
    t.forward = [&t]() { return activation(t.input, Act::silu); };
    t.backward = [&t](const Tensor4<double>& up) {
        Tensor4<double> dx = activation_backward(t.input, Act::silu, up);
        for (auto& v : dx.data) v *= 1.5;  // deliberately wrong by 50%
        return std::make_pair(std::move(dx), GradMap<double>());
    };
    GradReport r = run_gradcheck(t, 1, 1e-4);
    EXPECT_FALSE(r.passed);
    EXPECT_GT(r.max_rel_err, 0.1);
}

TEST(Gradcheck, TightToleranceFails) {
    // finite differences cannot reach 1e-12 agreement at h=1e-5
    bool any_fail = false;
    for (const auto& name : gradcheck_block_names()) {
        GradReport r = gradcheck_block(name, 7, 1e-14);
        any_fail = any_fail || !r.passed;
    }
    EXPECT_TRUE(any_fail);
}
