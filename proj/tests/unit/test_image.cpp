#include <fstream>

#include "patchlikely/error.hpp"
#include "patchlikely/image.hpp"
#include "test_util.hpp"

using namespace patchlikely;
using testutil::TempDir;

namespace {

std::filesystem::path fixture(const std::string& name) { return testutil::data_dir() / "fixtures" / name; }

Image8 expected_rgb_fixture() {
  Image8 img(4, 3);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<uint8_t>(i * 7);
  return img;
}

}  // namespace

TEST(ImageIo, PpmRoundTrip) {
  TempDir dir;
  Rng rng(1);
  Image8 img = testutil::random_image(rng, 17, 9);
  save_image(img, dir / "a.ppm");
  EXPECT_EQ(load_image(dir / "a.ppm"), img);
}

TEST(ImageIo, PngRoundTrip) {
  TempDir dir;
  Rng rng(2);
  Image8 img = testutil::random_image(rng, 13, 21);
  save_image(img, dir / "a.png");
  EXPECT_EQ(load_image(dir / "a.png"), img);
}

TEST(ImageIo, OneByOneRoundTrip) {
  TempDir dir;
  Image8 img(1, 1);
  img.pixels = {10, 200, 33};
  save_image(img, dir / "p.png");
  save_image(img, dir / "p.ppm");
  EXPECT_EQ(load_image(dir / "p.png"), img);
  EXPECT_EQ(load_image(dir / "p.ppm"), img);
}

TEST(ImageIo, DecodesFixtureVariants) {
  const Image8 rgb = expected_rgb_fixture();
  EXPECT_EQ(load_image(fixture("rgb_4x3.png")), rgb);
  EXPECT_EQ(load_image(fixture("palette_4x3.png")), rgb);

  const int64_t before = warning_count();
  set_warnings_enabled(false);
  EXPECT_EQ(load_image(fixture("rgba_4x3.png")), rgb);
  set_warnings_enabled(true);
  EXPECT_GT(warning_count(), before);

  Image8 gray = load_image(fixture("gray_4x3.png"));
  ASSERT_EQ(gray.width, 4);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(gray.at(x, y, c), rgb.at(x, y, 0));
}

TEST(ImageIo, SixteenBitRejected) {
  try {
    load_image(fixture("gray16_4x3.png"));
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupported);
    EXPECT_NE(std::string(e.what()).find("unsupported bit depth"), std::string::npos);
  }
}

TEST(ImageIo, CorruptAndMissingFilesNameThePath) {
  for (const auto& p : {fixture("corrupt.png"), fixture("does_not_exist.png")}) {
    try {
      load_image(p);
      FAIL() << "expected an error for " << p;
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(p.filename().string()), std::string::npos) << e.what();
    }
  }
  TempDir dir;
  std::ofstream(dir / "bad.ppm") << "P6\n4 4\n65535\n";
  EXPECT_THROW(load_image(dir / "bad.ppm"), Error);
  std::ofstream(dir / "short.ppm") << "P6\n4 4\n255\nabc";
  EXPECT_THROW(load_image(dir / "short.ppm"), Error);
  EXPECT_THROW(load_image(dir / "x.jpg"), Error);
  EXPECT_THROW(save_image(Image8(2, 2), dir / "x.bmp"), Error);
}

TEST(ImageIo, CropBounds) {
  Rng rng(3);
  Image8 img = testutil::random_image(rng, 8, 6);
  Image8 c = img.crop(2, 1, 3, 4);
  EXPECT_EQ(c.width, 3);
  EXPECT_EQ(c.at(0, 0, 1), img.at(2, 1, 1));
  EXPECT_EQ(c.at(2, 3, 2), img.at(4, 4, 2));
  EXPECT_THROW(img.crop(6, 0, 3, 1), Error);
}

TEST(Hsv, PrimaryAndAchromaticColors) {
  Hsv red = rgb_to_hsv({255, 0, 0});
  EXPECT_DOUBLE_EQ(red.h, 0.0);
  EXPECT_DOUBLE_EQ(red.s, 1.0);
  EXPECT_DOUBLE_EQ(red.v, 1.0);
  Hsv cyan = rgb_to_hsv({0, 255, 255});
  EXPECT_DOUBLE_EQ(cyan.h, 180.0);
  EXPECT_DOUBLE_EQ(cyan.s, 1.0);
  EXPECT_DOUBLE_EQ(cyan.v, 1.0);
  for (int g : {0, 1, 77, 255}) {
    Hsv gray = rgb_to_hsv({static_cast<uint8_t>(g), static_cast<uint8_t>(g), static_cast<uint8_t>(g)});
    EXPECT_EQ(gray.s, 0.0);
    EXPECT_DOUBLE_EQ(gray.v, g / 255.0);
  }
}

TEST(Hsv, RoundTripsEveryColor) {
  int64_t mismatches = 0;
  for (int r = 0; r < 256; ++r)
    for (int g = 0; g < 256; ++g)
      for (int b = 0; b < 256; ++b) {
        const Rgb8 p{static_cast<uint8_t>(r), static_cast<uint8_t>(g), static_cast<uint8_t>(b)};
        if (!(hsv_to_rgb(rgb_to_hsv(p)) == p)) ++mismatches;
      }
  EXPECT_EQ(mismatches, 0);
}

TEST(Corpus, ScanFindsNestedImagesSorted) {
  TempDir dir;
  std::filesystem::create_directories(dir / "b" / "c");
  save_image(Image8(2, 2), dir / "b" / "c" / "z.png");
  save_image(Image8(2, 2), dir / "a.PPM");
  save_image(Image8(2, 2), dir / "b" / "m.png");
  std::ofstream(dir / "notes.txt") << "x";
  auto files = scan_corpus(dir.path());
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0].filename(), "a.PPM");
  EXPECT_EQ(files[1].filename(), "z.png");  // b/c/z.png sorts before b/m.png
  EXPECT_EQ(files[2].filename(), "m.png");
}

TEST(Corpus, EmptyAndMissingDirectories) {
  TempDir dir;
  EXPECT_TRUE(scan_corpus(dir.path()).empty());
  try {
    scan_corpus(dir / "missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
}

TEST(Corpus, BundledCorpusIsLargeEnough) {
  EXPECT_GE(scan_corpus(testutil::data_dir() / "corpus").size(), 100u);
}
