#include <gtest/gtest.h>

#include "antnet/gradcheck.hpp"
#include "antnet/ops.hpp"

using namespace antnet;

namespace {

// Independent oracle: direct nested summation over the zero-padded window,
// no shared code with conv2d.
template <typename T>
T conv_oracle_at(const Tensor4<T>& x, const Tensor4<T>& w, i64 co, i64 oy, i64 ox, i64 stride,
                 i64 padding, i64 groups) {
    const i64 cin_g = x.c / groups;
    const i64 cout_g = w.n / groups;
    const i64 g = co / cout_g;
    T acc = 0;
    for (i64 ic = 0; ic < cin_g; ++ic)
        for (i64 kh = 0; kh < w.h; ++kh)
            for (i64 kw = 0; kw < w.w; ++kw) {
                const i64 iy = oy * stride + kh - padding;
                const i64 ix = ox * stride + kw - padding;
                T v = 0;
                if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w) v = x.at(0, g * cin_g + ic, iy, ix);
                acc += v * w.at(co, ic, kh, kw);
            }
    return acc;
}

}  // namespace

TEST(Conv2d, AllOnesKernelOnPaddedWindow) {
    // x = 1x1x2x2 [[1,2],[3,4]], 3x3 ones, p=1, s=1: every output is 10.
    Tensor4<double> x(1, 1, 2, 2);
    x.data = {1, 2, 3, 4};
    Tensor4<double> w = Tensor4<double>::full(1, 1, 3, 3, 1.0);
    Tensor4<double> y = conv2d(x, w, nullptr, ConvSpec{3, 1, 1, 1, 1, 1, false});
    ASSERT_TRUE(y.same_shape(x));
    for (i64 oy = 0; oy < 2; ++oy)
        for (i64 ox = 0; ox < 2; ++ox) {
            EXPECT_DOUBLE_EQ(y.at(0, 0, oy, ox), 10.0);
            EXPECT_DOUBLE_EQ(y.at(0, 0, oy, ox), conv_oracle_at(x, w, 0, oy, ox, 1, 1, 1));
        }
}

TEST(Conv2d, IdentityKernelIsBitwiseIdentity) {
    Rng rng(3);
    Tensor4<float> x = random_tensor<float>(rng, 2, 4, 5, 5);
    Tensor4<float> w(4, 4, 1, 1);
    for (i64 i = 0; i < 4; ++i) w.at(i, i, 0, 0) = 1.0f;
    Tensor4<float> y = conv2d(x, w, nullptr, ConvSpec{1, 4, 4, 1, 0, 1, false});
    EXPECT_EQ(x.data, y.data);
}

TEST(Conv2d, DepthwiseZeroKernels) {
    Rng rng(4);
    Tensor4<float> x = random_tensor<float>(rng, 1, 2, 4, 4);
    Tensor4<float> w(2, 1, 3, 3);
    Tensor4<float> y = conv2d(x, w, nullptr, ConvSpec{3, 2, 2, 1, 1, 2, false});
    for (const float v : y.data) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, RandomAgainstOracle) {
    Rng rng(5);
    Tensor4<double> x = random_tensor<double>(rng, 1, 4, 7, 6);
    Tensor4<double> w = random_tensor<double>(rng, 6, 2, 3, 3);
    const ConvSpec spec{3, 4, 6, 2, 1, 2, false};
    Tensor4<double> y = conv2d(x, w, nullptr, spec);
    for (i64 co = 0; co < y.c; ++co)
        for (i64 oy = 0; oy < y.h; ++oy)
            for (i64 ox = 0; ox < y.w; ++ox)
                EXPECT_NEAR(y.at(0, co, oy, ox), conv_oracle_at(x, w, co, oy, ox, 2, 1, 2), 1e-12);
}

TEST(Conv2d, ErrorsOnShapeAndGeometry) {
    Tensor4<float> x(1, 3, 4, 4);
    Tensor4<float> w(8, 3, 3, 3);
    EXPECT_THROW(conv2d(x, w, nullptr, ConvSpec{3, 4, 8, 1, 1, 1, false}), DimensionError);
    Tensor4<float> small(1, 3, 2, 2);
    EXPECT_THROW(conv2d(small, w, nullptr, ConvSpec{3, 3, 8, 1, 0, 1, false}), GeometryError);
    Tensor4<float> tiny(1, 3, 1, 1);
    EXPECT_THROW(conv2d(tiny, w, nullptr, ConvSpec{3, 3, 8, 4, 0, 1, false}), GeometryError);
}

TEST(Conv2d, LinearityProperty) {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor4<double> a = random_tensor<double>(rng, 1, 3, 6, 6);
        Tensor4<double> b = random_tensor<double>(rng, 1, 3, 6, 6);
        Tensor4<double> w = random_tensor<double>(rng, 4, 3, 3, 3);
        const ConvSpec spec{3, 3, 4, 1, 1, 1, false};
        Tensor4<double> lhs = conv2d(add(a, b), w, nullptr, spec);
        Tensor4<double> rhs = add(conv2d(a, w, nullptr, spec), conv2d(b, w, nullptr, spec));
        for (std::size_t i = 0; i < lhs.data.size(); ++i) EXPECT_NEAR(lhs.data[i], rhs.data[i], 1e-12);
    }
}

TEST(Conv2d, PureFunction) {
    Rng rng(7);
    Tensor4<float> x = random_tensor<float>(rng, 1, 3, 8, 8);
    Tensor4<float> w = random_tensor<float>(rng, 5, 3, 3, 3);
    const ConvSpec spec{3, 3, 5, 1, 1, 1, false};
    Tensor4<float> y1 = conv2d(x, w, nullptr, spec);
    Tensor4<float> y2 = conv2d(x, w, nullptr, spec);
    EXPECT_EQ(y1.data, y2.data);
}

TEST(BatchNorm, IdentityStatistics) {
    Rng rng(8);
    Tensor4<double> x = random_tensor<double>(rng, 1, 3, 4, 4);
    Tensor4<double> y = batchnorm_infer(x, NormParams<double>::identity(3));
    EXPECT_EQ(x.data, y.data);
}

TEST(BatchNorm, ZeroScaleBroadcastsBeta) {
    Rng rng(9);
    Tensor4<double> x = random_tensor<double>(rng, 2, 2, 3, 3);
    NormParams<double> p = NormParams<double>::identity(2);
    p.gamma = {0.0, 0.0};
    p.beta = {1.5, -2.0};
    Tensor4<double> y = batchnorm_infer(x, p);
    for (i64 in = 0; in < 2; ++in)
        for (i64 iy = 0; iy < 3; ++iy)
            for (i64 ix = 0; ix < 3; ++ix) {
                EXPECT_DOUBLE_EQ(y.at(in, 0, iy, ix), 1.5);
                EXPECT_DOUBLE_EQ(y.at(in, 1, iy, ix), -2.0);
            }
}

TEST(BatchNorm, HandArithmetic) {
    // y = 2*(2-1)/sqrt(4)+1 = 2
    Tensor4<double> x(1, 1, 1, 1);
    x.data = {2.0};
    NormParams<double> p;
    p.gamma = {2.0};
    p.beta = {1.0};
    p.mean = {1.0};
    p.var = {4.0};
    p.eps = 0.0;
    EXPECT_DOUBLE_EQ(batchnorm_infer(x, p).data[0], 2.0);
}

TEST(BatchNorm, LengthMismatch) {
    Tensor4<double> x(1, 3, 2, 2);
    EXPECT_THROW(batchnorm_infer(x, NormParams<double>::identity(2)), DimensionError);
}

TEST(Activation, OddPointZero) {
    EXPECT_DOUBLE_EQ(silu_scalar(0.0), 0.0);
    EXPECT_DOUBLE_EQ(gelu_scalar(0.0), 0.0);
}

TEST(Activation, SiluAsymptote) {
    EXPECT_NEAR(silu_scalar(20.0), 20.0, 1e-6);
}

TEST(Activation, SiluScalarOracle) {
    const double expected = 1.0 * (1.0 / (1.0 + std::exp(-1.0)));
    EXPECT_NEAR(silu_scalar(1.0), expected, 1e-15);
}

TEST(Activation, GeluMatchesErfForm) {
    const double v = 0.7;
    const double expected = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    EXPECT_NEAR(gelu_scalar(v), expected, 1e-15);
}

TEST(Pool, AvgAndMaxTwoByTwo) {
    Tensor4<double> x(1, 1, 2, 2);
    x.data = {1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(pool(x, PoolKind::avg, 2, 2).data[0], 2.5);
    EXPECT_DOUBLE_EQ(pool(x, PoolKind::max, 2, 2).data[0], 4.0);
}

TEST(Pool, UnitWindowIsIdentity) {
    Rng rng(10);
    Tensor4<float> x = random_tensor<float>(rng, 1, 2, 3, 3);
    EXPECT_EQ(pool(x, PoolKind::avg, 1, 1).data, x.data);
}

TEST(Pool, GeometryError) {
    Tensor4<float> x(1, 1, 2, 2);
    EXPECT_THROW(pool(x, PoolKind::avg, 4, 1), GeometryError);
}

TEST(TransposedConv, BroadcastBlock) {
    Tensor4<double> x(1, 1, 1, 1);
    x.data = {3.5};
    Tensor4<double> w = Tensor4<double>::full(1, 1, 2, 2, 1.0);
    Tensor4<double> y = transposed_conv(x, w, ConvSpec{2, 1, 1, 2, 0, 1, false});
    ASSERT_EQ(y.h, 2);
    ASSERT_EQ(y.w, 2);
    for (const double v : y.data) EXPECT_DOUBLE_EQ(v, 3.5);
}

TEST(TransposedConv, ZeroInputZeroOutput) {
    Tensor4<double> x(1, 2, 3, 3);
    Tensor4<double> w = Tensor4<double>::full(2, 2, 2, 2, 0.7);
    Tensor4<double> y = transposed_conv(x, w, ConvSpec{2, 2, 2, 2, 0, 1, false});
    for (const double v : y.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

// <conv2d(a,W), b> == <a, transposed_conv(b,W)> over random geometries;
// strided cases pass the original input dims so the adjoint spans the grid.
TEST(TransposedConv, AdjointOfConv2d) {
    Rng rng(11);
    for (int trial = 0; trial < 8; ++trial) {
        const ConvSpec spec{3, 4, 6, 1 + static_cast<i64>(trial % 2), 1, 2, false};
        Tensor4<double> a = random_tensor<double>(rng, 1, spec.c_in, 4, 4);
        Tensor4<double> w =
            random_tensor<double>(rng, spec.c_out, spec.c_in / spec.groups, spec.kernel, spec.kernel);
        Tensor4<double> conv_a = conv2d(a, w, nullptr, spec);
        Tensor4<double> b = random_tensor<double>(rng, 1, conv_a.c, conv_a.h, conv_a.w);
        Tensor4<double> adj_b = transposed_conv(b, w, spec, a.h, a.w);
        ASSERT_TRUE(adj_b.same_shape(a));
        double lhs = 0, rhs = 0;
        for (std::size_t i = 0; i < conv_a.data.size(); ++i) lhs += conv_a.data[i] * b.data[i];
        for (std::size_t i = 0; i < a.data.size(); ++i) rhs += a.data[i] * adj_b.data[i];
        EXPECT_NEAR(lhs, rhs, 1e-5 * std::max(1.0, std::abs(lhs)));
    }
}

TEST(Upsample, BlockReplication) {
    Tensor4<double> x(1, 1, 2, 2);
    x.data = {1, 2, 3, 4};
    Tensor4<double> y = upsample_nearest(x, 2);
    ASSERT_EQ(y.h, 4);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 1);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 1);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 1);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 3, 3), 4);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 3), 2);
}

TEST(Upsample, FactorOneIsIdentity) {
    Rng rng(12);
    Tensor4<float> x = random_tensor<float>(rng, 1, 2, 3, 3);
    EXPECT_EQ(upsample_nearest(x, 1).data, x.data);
}

TEST(Concat, SingleInputIdentityAndShapeLaw) {
    Rng rng(13);
    Tensor4<float> a = random_tensor<float>(rng, 2, 3, 4, 4);
    Tensor4<float> b = random_tensor<float>(rng, 2, 5, 4, 4);
    EXPECT_EQ(concat_channels<float>({&a}).data, a.data);
    Tensor4<float> cat = concat_channels<float>({&a, &b});
    EXPECT_EQ(cat.c, a.c + b.c);
    // first a.c channels equal a
    for (i64 in = 0; in < 2; ++in)
        for (i64 ic = 0; ic < a.c; ++ic)
            for (i64 iy = 0; iy < 4; ++iy)
                for (i64 ix = 0; ix < 4; ++ix) EXPECT_EQ(cat.at(in, ic, iy, ix), a.at(in, ic, iy, ix));
    Tensor4<float> mismatched(2, 3, 5, 4);
    EXPECT_THROW(concat_channels<float>({&a, &mismatched}), DimensionError);
}

TEST(Add, BasicLaws) {
    Rng rng(14);
    Tensor4<double> x = random_tensor<double>(rng, 1, 3, 4, 4);
    Tensor4<double> zero(1, 3, 4, 4);
    EXPECT_EQ(add(x, zero).data, x.data);
    Tensor4<double> neg = x;
    for (auto& v : neg.data) v = -v;
    for (const double v : add(x, neg).data) EXPECT_DOUBLE_EQ(v, 0.0);
    Tensor4<double> y = random_tensor<double>(rng, 1, 3, 4, 4);
    EXPECT_EQ(add(x, y).data, add(y, x).data);
    Tensor4<double> bad(1, 3, 4, 5);
    EXPECT_THROW(add(x, bad), DimensionError);
}

TEST(Linear, IdentityZeroAndDotProduct) {
    Mat<double> x(1, 2);
    x.data = {1.0, 2.0};
    Mat<double> eye(2, 2);
    eye.at(0, 0) = eye.at(1, 1) = 1.0;
    EXPECT_EQ(linear(x, eye).data, x.data);

    Mat<double> zeros(2, 3);
    std::vector<double> bias = {4.0, 5.0, 6.0};
    Mat<double> y = linear(x, zeros, &bias);
    EXPECT_EQ(y.data, bias);

    Mat<double> col(2, 1);
    col.data = {1.0, 1.0};
    EXPECT_DOUBLE_EQ(linear(x, col).data[0], 3.0);  // dot-product oracle

    Mat<double> bad(3, 1);
    EXPECT_THROW(linear(x, bad), DimensionError);
}

TEST(Softmax, SymmetryStabilizationAndOracle) {
    Mat<double> x(1, 2);
    x.data = {0.0, 0.0};
    Mat<double> y = softmax_rows(x);
    EXPECT_DOUBLE_EQ(y.data[0], 0.5);
    EXPECT_DOUBLE_EQ(y.data[1], 0.5);

    x.data = {1000.0, 0.0};
    y = softmax_rows(x);
    EXPECT_TRUE(std::isfinite(y.data[0]));
    EXPECT_NEAR(y.data[0], 1.0, 1e-12);
    EXPECT_NEAR(y.data[1], 0.0, 1e-12);

    x.data = {std::log(2.0), 0.0};
    y = softmax_rows(x);
    EXPECT_NEAR(y.data[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(y.data[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    Rng rng(15);
    Mat<double> x(6, 9);
    for (auto& v : x.data) v = rng.uniform(-5.0, 5.0);
    Mat<double> y = softmax_rows(x);
    for (i64 r = 0; r < y.rows; ++r) {
        double sum = 0;
        for (i64 c = 0; c < y.cols; ++c) {
            sum += y.at(r, c);
            EXPECT_GE(y.at(r, c), 0.0);
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
    Mat<double> shifted = x;
    for (i64 r = 0; r < x.rows; ++r)
        for (i64 c = 0; c < x.cols; ++c) shifted.at(r, c) += 3.25;
    Mat<double> ys = softmax_rows(shifted);
    for (std::size_t i = 0; i < y.data.size(); ++i) EXPECT_NEAR(y.data[i], ys.data[i], 1e-12);
}
