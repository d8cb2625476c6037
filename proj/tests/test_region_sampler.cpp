#include "oracles.hpp"

#include "personmae/region_sampler.hpp"

#include <doctest.h>

using namespace personmae;

TEST_CASE("zero shift gives identical regions") {
  Rng rng(1);
  const Image image = testing::random_image(300, 150, rng);
  const RegionPair pair = sample_cross_region(image, 256, 128, 0, rng);
  CHECK(pair.pad == 0);
  CHECK(pair.region_a == pair.region_b);
  CHECK(pair.region_a == resize_bilinear(image, 256, 128));
}

TEST_CASE("canvas geometry") {
  Rng rng(2);
  const Image image = testing::random_image(256, 128, rng);
  SUBCASE("p = 32 resizes to 288 x 144") {
    const RegionPair pair = make_region_pair(image, 256, 128, 32, 0, 0);
    CHECK(pair.region_a == crop(resize_bilinear(image, 288, 144), 0, 0, 256, 128));
  }
  SUBCASE("maximal shift takes the lower-right window") {
    const RegionPair pair = make_region_pair(image, 256, 128, 64, 64, 32);
    const Image canvas = resize_bilinear(image, 320, 160);
    CHECK(pair.region_b == crop(canvas, 64, 32, 256, 128));
    CHECK(pair.region_b.at(255, 127, 0) == canvas.at(319, 159, 0));
  }
  SUBCASE("invalid shifts are rejected") {
    CHECK_THROWS(make_region_pair(image, 256, 128, 8, 9, 0));
    CHECK_THROWS(make_region_pair(image, 256, 128, 8, 0, 5));
    CHECK_THROWS(sample_cross_region(image, 256, 128, -1, rng));
  }
}

TEST_CASE("sampled shifts always stay inside the canvas") {
  Rng rng(3);
  const Image image = testing::random_image(40, 20, rng);
  for (int i = 0; i < 500; ++i) {
    const RegionPair pair = sample_cross_region(image, 32, 16, 16, rng);
    CHECK(pair.pad >= 0);
    CHECK(pair.pad <= 16);
    CHECK(pair.shift_h <= pair.pad);
    CHECK(pair.shift_w <= pair.pad / 2);
    CHECK(pair.region_b.height == 32);
    CHECK(pair.region_b.width == 16);
  }
}

TEST_CASE("patchify") {
  Rng rng(4);
  SUBCASE("token count and width") {
    const TokenSequence tokens = patchify(testing::random_image(256, 128, rng), 16);
    CHECK(tokens.size() == 128);
    CHECK(tokens.tokens.cols() == 768);
    CHECK(tokens.grid_h == 16);
    CHECK(tokens.grid_w == 8);
  }
  SUBCASE("constant image gives constant tokens") {
    Image image(32, 16);
    image.data.setConstant(0.25);
    CHECK((patchify(image, 16).tokens.array() == 0.25).all());
  }
  SUBCASE("2x2 patches of a 4x4 single-channel image") {
    Image image(4, 4, 1);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) image.at(y, x, 0) = 10 * y + x;
    }
    const TokenSequence tokens = patchify(image, 2);
    MatrixXd expected(4, 4);
    expected << 0, 1, 10, 11,  //
        2, 3, 12, 13,          //
        20, 21, 30, 31,        //
        22, 23, 32, 33;
    CHECK(tokens.tokens == expected);
    CoordsXd coords(4, 2);
    coords << 0, 0, 0, 1, 1, 0, 1, 1;
    CHECK(tokens.coords == coords);
  }
  SUBCASE("unpatchify inverts patchify") {
    const Image image = testing::random_image(48, 32, rng);
    CHECK(unpatchify(patchify(image, 16)) == image);
  }
  SUBCASE("sizes must be divisible by the patch size") {
    CHECK_THROWS_AS(patchify(testing::random_image(250, 128, rng), 16), std::invalid_argument);
  }
}

TEST_CASE("relation coordinates") {
  const CoordsXd grid = grid_coords(16, 8);
  CHECK(relation_coords(0, 0, 16, 16, 8) == grid);
  CHECK((relation_coords(16, 16, 16, 16, 8).array() - grid.array() == 1.0).all());
  const CoordsXd half = relation_coords(8, 4, 16, 16, 8);
  CHECK((half.col(0) - grid.col(0)).isConstant(0.5));
  CHECK((half.col(1) - grid.col(1)).isConstant(0.25));
}
