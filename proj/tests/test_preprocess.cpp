#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "inkpipe/preprocess.hpp"
#include "support/test_util.hpp"

#ifdef INKPIPE_HAVE_OPENCV
#include <opencv2/imgproc.hpp>
#endif

using namespace inkpipe;

TEST(Greyscale, GreyInputUnchanged) {
  std::mt19937_64 rng(1);
  const auto img = testutil::random_image(13, 7, rng);
  EXPECT_EQ(to_greyscale(img), img);
}

TEST(Greyscale, Bt709Luma) {
  ImageBuffer rgb(3, 1, 3, std::vector<Sample>{255, 255, 255, 0, 0, 0, 100, 150, 200});
  const auto g = to_greyscale(rgb);
  EXPECT_EQ(g.channels(), 1);
  EXPECT_EQ(g.at(0, 0), 255);
  EXPECT_EQ(g.at(1, 0), 0);
  EXPECT_EQ(g.at(2, 0), 143);
}

TEST(Greyscale, Idempotent) {
  std::mt19937_64 rng(2);
  const auto g = to_greyscale(testutil::random_image(20, 20, rng, 3));
  EXPECT_EQ(to_greyscale(g), g);
}

TEST(FitToSquare, AlreadySquare) {
  std::mt19937_64 rng(5);
  const auto img = testutil::random_image(512, 512, rng);
  const auto fit = fit_to_square(img, 512);
  EXPECT_EQ(fit.placement, (Rect{0, 0, 512, 512}));
  EXPECT_EQ(fit.image, img);
}

TEST(FitToSquare, WideScanLetterboxed) {
  const auto fit = fit_to_square(ImageBuffer(1832, 885, 1, 0), 512);
  EXPECT_EQ(fit.placement, (Rect{0, 132, 512, 247}));
  EXPECT_EQ(fit.image.at(0, 131), 255);
  EXPECT_EQ(fit.image.at(0, 132), 0);
  EXPECT_EQ(fit.image.at(511, 378), 0);
  EXPECT_EQ(fit.image.at(511, 379), 255);
}

TEST(FitToSquare, TallScanPillarboxed) {
  const auto fit = fit_to_square(ImageBuffer(100, 400, 1, 0), 512);
  EXPECT_EQ(fit.placement, (Rect{192, 0, 128, 512}));
}

TEST(FitToSquare, InverseRestoresDimensions) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> d(1, 900);
  for (int i = 0; i < 25; ++i) {
    const int w = d(rng), h = d(rng);
    const auto src = testutil::gradient_image(w, h);
    const auto fit = fit_to_square(src, 256);
    const auto back = unfit_from_square(fit.image, fit.placement, w, h);
    EXPECT_EQ(back.width(), w);
    EXPECT_EQ(back.height(), h);
  }
}

TEST(Resize, SameSizeIsCopy) {
  std::mt19937_64 rng(9);
  const auto img = testutil::random_image(10, 6, rng);
  EXPECT_EQ(resize_bilinear(img, 10, 6), img);
}

// On a linear ramp, pixel-centre bilinear sampling reproduces the ramp at the
// mapped source coordinate (clamped at the borders).
TEST(Resize, MatchesAnalyticRampWithinTolerance) {
  for (auto [sw, dw] : {std::pair{256, 97}, std::pair{97, 256}, std::pair{300, 512}, std::pair{1832, 512}}) {
    ImageBuffer src(sw, 3, 1);
    auto value = [&](double x) { return 255.0 * x / (sw - 1); };
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < sw; ++x) src.row(y)[static_cast<std::size_t>(x)] = round_to_sample(value(x));
    const auto out = resize_bilinear(src, dw, 5);
    for (int x = 0; x < dw; ++x) {
      const double sx = std::clamp((x + 0.5) * sw / dw - 0.5, 0.0, sw - 1.0);
      EXPECT_NEAR(out.at(x, 2), value(sx), 2.0) << sw << "->" << dw << " at " << x;
    }
  }
}

#ifdef INKPIPE_HAVE_OPENCV
TEST(Resize, AgreesWithOpenCvOnSmoothGradients) {
  for (auto [w, h, dw, dh] : {std::array{640, 480, 512, 384}, std::array{300, 900, 171, 512},
                              std::array{64, 64, 200, 150}}) {
    const auto src = testutil::gradient_image(w, h);
    cv::Mat m(h, w, CV_8UC1, const_cast<Sample*>(src.data().data()));
    cv::Mat ref;
    cv::resize(m, ref, cv::Size(dw, dh), 0, 0, cv::INTER_LINEAR);
    const auto out = resize_bilinear(src, dw, dh);
    int worst = 0;
    for (int y = 0; y < dh; ++y)
      for (int x = 0; x < dw; ++x) worst = std::max(worst, std::abs(int(out.at(x, y)) - int(ref.at<Sample>(y, x))));
    EXPECT_LE(worst, 2) << w << "x" << h << " -> " << dw << "x" << dh;
  }
}
#endif

TEST(Diagnostics, UniformWhite) {
  const auto d = diagnostics(ImageBuffer(16, 16, 1, 255));
  EXPECT_EQ(d.min, 255);
  EXPECT_EQ(d.max, 255);
  EXPECT_DOUBLE_EQ(d.mean, 255.0);
  EXPECT_DOUBLE_EQ(d.background_fraction, 1.0);
  EXPECT_EQ(d.contrast_span, 0);
}

TEST(Diagnostics, HalfBlackHalfWhite) {
  ImageBuffer img(8, 8, 1, 255);
  for (int y = 0; y < 4; ++y)
    for (auto& v : img.row(y)) v = 0;
  const auto d = diagnostics(img);
  EXPECT_DOUBLE_EQ(d.mean, 127.5);
  EXPECT_DOUBLE_EQ(d.background_fraction, 0.5);
  EXPECT_EQ(d.contrast_span, 255);
}

TEST(Diagnostics, EveryValueOnce) {
  ImageBuffer img(256, 1, 1);
  for (int x = 0; x < 256; ++x) img.row(0)[static_cast<std::size_t>(x)] = static_cast<Sample>(x);
  const auto d = diagnostics(img);
  for (auto c : d.histogram) EXPECT_EQ(c, 1u);
  EXPECT_EQ(d.min, 0);
  EXPECT_EQ(d.max, 255);
}

TEST(Diagnostics, Invariants) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    const auto img = testutil::random_image(1 + i, 1 + (i * 7) % 31, rng);
    const auto d = diagnostics(img, static_cast<Sample>(i * 5));
    std::uint64_t total = 0;
    for (auto c : d.histogram) total += c;
    EXPECT_EQ(total, img.size());
    EXPECT_GE(d.background_fraction, 0.0);
    EXPECT_LE(d.background_fraction, 1.0);
    EXPECT_LE(d.min, d.mean);
    EXPECT_LE(d.mean, d.max);
    EXPECT_LE(d.p1, d.p99);
  }
}

TEST(Percentile, NearestRank) {
  std::array<std::uint64_t, 256> h{};
  for (int v = 1; v <= 100; ++v) h[static_cast<std::size_t>(v)] = 1;
  EXPECT_EQ(percentile(h, 0.0), 1);
  EXPECT_EQ(percentile(h, 1.0), 1);
  EXPECT_EQ(percentile(h, 50.0), 50);
  EXPECT_EQ(percentile(h, 99.0), 99);
  EXPECT_EQ(percentile(h, 100.0), 100);
}

TEST(Levels, FullRangeUnchanged) {
  ImageBuffer img(256, 1, 1);
  for (int x = 0; x < 256; ++x) img.row(0)[static_cast<std::size_t>(x)] = static_cast<Sample>(x);
  const auto r = apply_levels(img, 0, 100);
  EXPECT_FALSE(r.degenerate);
  EXPECT_EQ(r.image, img);
}

TEST(Levels, StretchesNarrowRange) {
  ImageBuffer img(3, 1, 1, std::vector<Sample>{64, 128, 191});
  const auto r = apply_levels(img, 0, 100);
  EXPECT_EQ(r.low_value, 64);
  EXPECT_EQ(r.high_value, 191);
  EXPECT_EQ(r.image.at(0, 0), 0);
  EXPECT_EQ(r.image.at(1, 0), 129);  // (128-64)*255/127 = 128.50 rounds up
  EXPECT_EQ(r.image.at(2, 0), 255);
}

TEST(Levels, ConstantImageIsDegenerate) {
  const ImageBuffer img(5, 5, 1, 77);
  const auto r = apply_levels(img, 1, 99);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.image, img);
}

TEST(Levels, RejectsBadPercentiles) {
  const ImageBuffer img(2, 2, 1, 0);
  EXPECT_THROW((void)apply_levels(img, 50, 50), Error);
  EXPECT_THROW((void)apply_levels(img, -1, 50), Error);
  EXPECT_THROW((void)apply_levels(img, 10, 101), Error);
}

TEST(Levels, Monotone) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 40; ++i) {
    auto img = testutil::random_image(64, 4, rng);
    for (auto& v : img.data()) v = static_cast<Sample>(40 + v / 3);
    const auto out = apply_levels(img, 2.0 + i % 5, 95.0 - i % 7).image;
    for (std::size_t a = 0; a < img.size(); ++a)
      for (std::size_t b = 0; b < img.size(); b += 17)
        if (img.data()[a] <= img.data()[b]) EXPECT_LE(out.data()[a], out.data()[b]);
  }
}

TEST(Bilevel, Thresholds) {
  ImageBuffer img(4, 1, 1, std::vector<Sample>{0, 127, 128, 255});
  const auto out = apply_bilevel(img, 128);
  EXPECT_EQ(std::vector<Sample>(out.data().begin(), out.data().end()), (std::vector<Sample>{0, 0, 255, 255}));
}
