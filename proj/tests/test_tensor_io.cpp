#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "antnet/gradcheck.hpp"
#include "antnet/io.hpp"

using namespace antnet;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(Tensor4, ShapeAndIndexing) {
    Tensor4<float> t(2, 3, 4, 5);
    EXPECT_EQ(t.numel(), 120);
    EXPECT_EQ(t.data.size(), 120u);
    t.at(1, 2, 3, 4) = 7.0f;
    EXPECT_EQ(t.data.back(), 7.0f);
    EXPECT_EQ(t.shape_str(), "2x3x4x5");
}

TEST(Tensor4, RejectsNonPositiveDims) {
    EXPECT_THROW(Tensor4<float>(0, 1, 1, 1), DimensionError);
    EXPECT_THROW(Tensor4<float>(1, 1, -2, 1), DimensionError);
}

TEST(Tensor4, FiniteCheck) {
    Tensor4<double> t(1, 1, 2, 2);
    EXPECT_TRUE(t.all_finite());
    t.data[2] = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(t.all_finite());
}

TEST(Atf, RoundTripFloatBitExact) {
    Rng rng(7);
    Tensor4<float> t = random_tensor<float>(rng, 2, 3, 5, 4);
    const auto path = temp_file("antnet_atf_f32.atf");
    write_atf(path.string(), t);
    Tensor4<float> back = read_atf<float>(path.string());
    ASSERT_TRUE(back.same_shape(t));
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        EXPECT_EQ(std::memcmp(&t.data[i], &back.data[i], sizeof(float)), 0);
    }
    std::filesystem::remove(path);
}

TEST(Atf, RoundTripDoubleBitExact) {
    Rng rng(8);
    Tensor4<double> t = random_tensor<double>(rng, 1, 2, 3, 3);
    const auto path = temp_file("antnet_atf_f64.atf");
    write_atf(path.string(), t);
    Tensor4<double> back = read_atf<double>(path.string());
    ASSERT_TRUE(back.same_shape(t));
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        EXPECT_EQ(std::memcmp(&t.data[i], &back.data[i], sizeof(double)), 0);
    }
    std::filesystem::remove(path);
}

TEST(Atf, HeaderLayout) {
    Tensor4<float> t(1, 2, 1, 1);
    t.data = {1.0f, 2.0f};
    std::ostringstream os(std::ios::binary);
    write_atf(os, {t.n, t.c, t.h, t.w}, t.data.data(), t.numel());
    const std::string bytes = os.str();
    ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 4 * 8 + 2 * 4);
    EXPECT_EQ(bytes.substr(0, 4), "ATF1");
    EXPECT_EQ(bytes[4], 0);  // dtype binary32
    EXPECT_EQ(bytes[5], 4);  // ndim
    EXPECT_EQ(bytes[6], 1);  // n, little-endian low byte
    EXPECT_EQ(bytes[14], 2); // c
}

TEST(Atf, RejectsBadMagic) {
    std::istringstream is(std::string("NOPE") + std::string(64, '\0'), std::ios::binary);
    EXPECT_THROW(read_atf<float>(is), ParseError);
}

TEST(Rng, DeterministicStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.uniform(), b.uniform());
    }
    Rng c(43);
    EXPECT_NE(Rng(42).uniform(), c.uniform());
}

TEST(DetectionText, ParsesAndValidates) {
    std::istringstream gt("img1 0 10 10 20 20\nimg1 1 5 5 8 9\n");
    auto gts = read_ground_truth(gt);
    ASSERT_EQ(gts.size(), 2u);
    EXPECT_EQ(gts[1].class_id, 1);
    EXPECT_DOUBLE_EQ(gts[1].y2, 9.0);

    std::istringstream det("img1 0 10 10 20 20 0.9\n");
    auto dets = read_detections(det);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_DOUBLE_EQ(dets[0].score, 0.9);
}

TEST(DetectionText, ReportsLineNumbers) {
    std::istringstream bad("img1 0 10 10 20 20\nimg1 0 oops\n");
    try {
        read_ground_truth(bad);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
    }
    std::istringstream inverted("img1 0 10 10 5 20 0.5\n");
    EXPECT_THROW(read_detections(inverted), ParseError);
}
