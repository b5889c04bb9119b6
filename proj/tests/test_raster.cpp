#include <gtest/gtest.h>

#include <random>

#include "inkpipe/raster.hpp"
#include "support/test_util.hpp"

using namespace inkpipe;

namespace {

ImageBuffer counting_image(int w, int h) {
  ImageBuffer img(w, h, 1);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = static_cast<Sample>(i);
  return img;
}

}  // namespace

TEST(ImageBuffer, RejectsBadShapes) {
  EXPECT_THROW(ImageBuffer(0, 4, 1), Error);
  EXPECT_THROW(ImageBuffer(4, 0, 1), Error);
  EXPECT_THROW(ImageBuffer(4, 4, 2), Error);
  EXPECT_THROW(ImageBuffer(2, 2, 1, std::vector<Sample>(3)), Error);
  EXPECT_NO_THROW(ImageBuffer(2, 2, 3, std::vector<Sample>(12)));
}

TEST(ImageBuffer, RowMajorInterleavedLayout) {
  ImageBuffer rgb(2, 1, 3, std::vector<Sample>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(rgb.stride(), 6u);
  EXPECT_EQ(rgb.at(1, 0, 0), 4);
  EXPECT_EQ(rgb.at(1, 0, 2), 6);
}

TEST(Crop, FullRectIsIdentity) {
  ImageBuffer ramp(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ramp.row(y)[static_cast<std::size_t>(x)] = static_cast<Sample>(x * 64);
  EXPECT_EQ(crop(ramp, Rect{0, 0, 4, 4}), ramp);
}

TEST(Crop, InteriorOfCountingImage) {
  const auto out = crop(counting_image(4, 4), Rect{1, 1, 2, 2});
  EXPECT_EQ(std::vector<Sample>(out.data().begin(), out.data().end()), (std::vector<Sample>{5, 6, 9, 10}));
}

TEST(Crop, BottomRightPatchOfLargeScan) {
  ImageBuffer scan(1832, 885, 1, 200);
  scan.row(884)[1831] = 7;
  const auto patch = crop(scan, Rect{1320, 373, 512, 512});
  EXPECT_EQ(patch.width(), 512);
  EXPECT_EQ(patch.height(), 512);
  EXPECT_EQ(patch.at(511, 511), 7);
}

TEST(Crop, OutOfBoundsThrows) {
  const auto img = counting_image(4, 4);
  try {
    (void)crop(img, Rect{3, 0, 2, 1});
    FAIL() << "expected OutOfBounds";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfBounds);
  }
  EXPECT_THROW((void)crop(img, Rect{-1, 0, 1, 1}), Error);
  EXPECT_THROW((void)crop(img, Rect{0, 0, 0, 1}), Error);
}

TEST(Crop, Composes) {
  std::mt19937_64 rng(11);
  const auto img = testutil::random_image(37, 23, rng, 3);
  std::uniform_int_distribution<int> d(0, 1000);
  for (int trial = 0; trial < 200; ++trial) {
    const int w1 = 1 + d(rng) % 37, h1 = 1 + d(rng) % 23;
    const Rect r1{d(rng) % (37 - w1 + 1), d(rng) % (23 - h1 + 1), w1, h1};
    const int w2 = 1 + d(rng) % w1, h2 = 1 + d(rng) % h1;
    const Rect r2{d(rng) % (w1 - w2 + 1), d(rng) % (h1 - h2 + 1), w2, h2};
    EXPECT_EQ(crop(crop(img, r1), r2), crop(img, Rect{r1.x + r2.x, r1.y + r2.y, w2, h2}));
  }
}

TEST(Paste, WritesAndValidates) {
  ImageBuffer dst(4, 4, 1, 0);
  paste(dst, ImageBuffer(2, 2, 1, 9), 2, 1);
  EXPECT_EQ(dst.at(2, 1), 9);
  EXPECT_EQ(dst.at(3, 2), 9);
  EXPECT_EQ(dst.at(1, 1), 0);
  EXPECT_THROW(paste(dst, ImageBuffer(2, 2, 1), 3, 3), Error);
  EXPECT_THROW(paste(dst, ImageBuffer(1, 1, 3), 0, 0), Error);
}

TEST(RequireGreyscale, NamesTheChannelMismatch) {
  try {
    require_greyscale(ImageBuffer(1, 1, 3), "backend");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ChannelMismatch);
  }
}
