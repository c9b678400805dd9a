#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "calica/image.hpp"

using namespace calica;

TEST_CASE("ppm encode/decode round-trips bit-exactly on random images") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        int w = 1 + static_cast<int>(rng.below(16));
        int h = 1 + static_cast<int>(rng.below(16));
        std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
        std::vector<std::uint8_t> bytes(header.begin(), header.end());
        for (int i = 0; i < w * h * 3; ++i)
            bytes.push_back(static_cast<std::uint8_t>(rng.below(256)));
        Image img = decode_ppm(bytes);
        CHECK(encode_ppm(img) == bytes);
    }
}

TEST_CASE("ppm decode rejects malformed input") {
    CHECK_THROWS_AS(decode_ppm({'P', '5', '\n'}), ParseError);
    CHECK_THROWS_AS(decode_ppm({}), ParseError);
    std::string truncated = "P6\n4 4\n255\nab";
    CHECK_THROWS_AS(decode_ppm(std::vector<std::uint8_t>(truncated.begin(), truncated.end())),
                    ParseError);
    std::string maxval = "P6\n1 1\n65535\nxxxxxx";
    CHECK_THROWS_AS(decode_ppm(std::vector<std::uint8_t>(maxval.begin(), maxval.end())),
                    ParseError);
    std::string zero_dim = "P6\n0 3\n255\n";
    CHECK_THROWS_AS(decode_ppm(std::vector<std::uint8_t>(zero_dim.begin(), zero_dim.end())),
                    ParseError);
}

TEST_CASE("ppm decode accepts comments and whitespace") {
    std::string text = "P6 # comment\n# another\n 2\t1 \n255\nabcdef";
    Image img = decode_ppm(std::vector<std::uint8_t>(text.begin(), text.end()));
    CHECK(img.width == 2);
    CHECK(img.height == 1);
    CHECK(img.at(0, 0, 0) == doctest::Approx('a' / 255.0));
}

TEST_CASE("grayscale uses the 0.299/0.587/0.114 weights") {
    Image img = Image::zeros(1, 1, 3);
    img.at(0, 0, 0) = 1.0f;
    img.at(0, 0, 1) = 0.5f;
    img.at(0, 0, 2) = 0.25f;
    Image g = grayscale(img);
    CHECK(g.channels == 1);
    CHECK(g.at(0, 0, 0) == doctest::Approx(0.299 + 0.587 * 0.5 + 0.114 * 0.25));
}

TEST_CASE("bilinear sampling is exact on the lattice and interpolates between") {
    Image img = Image::zeros(2, 2, 1);
    img.at(0, 0, 0) = 1.0f;
    img.at(0, 1, 0) = 3.0f;
    img.at(1, 0, 0) = 5.0f;
    img.at(1, 1, 0) = 7.0f;
    CHECK(bilinear_sample(img, 0.0, 0.0, 0) == doctest::Approx(1.0));
    CHECK(bilinear_sample(img, 1.0, 1.0, 0) == doctest::Approx(7.0));
    CHECK(bilinear_sample(img, 0.5, 0.0, 0) == doctest::Approx(2.0));
    CHECK(bilinear_sample(img, 0.5, 0.5, 0) == doctest::Approx(4.0));
}

TEST_CASE("resize enforces a uniform scale") {
    Image img = Image::zeros(100, 50, 3);
    CHECK_NOTHROW(resize_bilinear(img, 50, 25));
    CHECK_THROWS_AS(resize_bilinear(img, 50, 40), UserError);
}
