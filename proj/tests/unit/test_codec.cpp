#include <cmath>

#include "doctest.h"
#include "flowedge/errors.hpp"
#include "flowedge/patch_codec.hpp"
#include "flowedge/rng.hpp"

using namespace flowedge;

namespace {

EdgeMap random_map(Rng& rng, std::size_t h, std::size_t w) {
    EdgeMap y(h, w);
    for (double& v : y.pixels) v = rng.uniform();
    return y;
}

}  // namespace

TEST_CASE("mixing matrix is orthogonal") {
    PatchCodec codec(4, 7);
    const Tensor& m = codec.mix();
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < 16; ++k) dot += m.at(k, i) * m.at(k, j);
            CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
}

TEST_CASE("same seed gives the same codec, different seeds differ") {
    CHECK(PatchCodec(4, 3).mix() == PatchCodec(4, 3).mix());
    CHECK_FALSE(PatchCodec(4, 3).mix() == PatchCodec(4, 4).mix());
}

TEST_CASE("decode inverts encode") {
    Rng rng(1);
    PatchCodec codec(4, 11);
    for (int trial = 0; trial < 20; ++trial) {
        const EdgeMap y = random_map(rng, 16, 24);
        const EdgeMap back = codec.decode(codec.encode(y));
        REQUIRE(back.same_dims(y));
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(back.pixels[i] - y.pixels[i]) < 1e-9);
    }
}

TEST_CASE("zero map encodes to the constant shift") {
    PatchCodec codec(4, 5);
    const Latent z = codec.encode(EdgeMap(8, 8));
    CHECK(z.shape() == Shape{16, 2, 2});
    for (std::size_t k = 0; k < 16; ++k)
        for (std::size_t s = 0; s < 4; ++s) CHECK(z[k * 4 + s] == doctest::Approx(codec.shift()[k]).epsilon(1e-14));
}

TEST_CASE("mid-gray maps to the zero latent and back") {
    PatchCodec codec(4, 5);
    const Latent z = codec.encode(EdgeMap(8, 8, 1, 0.5));
    for (double v : z.data()) CHECK(std::abs(v) < 1e-12);
    const EdgeMap y = codec.decode(Latent({16, 2, 2}));
    for (double v : y.pixels) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("identity configuration leaves pixels untouched") {
    const PatchCodec codec = PatchCodec::identity(1);
    Rng rng(2);
    const EdgeMap y = random_map(rng, 5, 7);
    const Latent z = codec.encode(y);
    CHECK(z.shape() == Shape{1, 5, 7});
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(z[i] == y.pixels[i]);
}

TEST_CASE("encode is affine") {
    Rng rng(3);
    PatchCodec codec(4, 9);
    const EdgeMap y1 = random_map(rng, 8, 12), y2 = random_map(rng, 8, 12);
    const double a = 0.3;
    EdgeMap mix(8, 12);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.pixels[i] = a * y1.pixels[i] + (1 - a) * y2.pixels[i];
    const Latent z1 = codec.encode(y1), z2 = codec.encode(y2), zm = codec.encode(mix);
    for (std::size_t i = 0; i < zm.size(); ++i) CHECK(std::abs(zm[i] - (a * z1[i] + (1 - a) * z2[i])) < 1e-12);
}

TEST_CASE("decode of a random latent leaves [0,1] unless clamped") {
    Rng rng(4);
    PatchCodec codec(4, 1);
    const Latent z = randn(rng, {16, 3, 3});
    const EdgeMap raw = codec.decode(z);
    const EdgeMap clamped = codec.decode(z, true);
    bool outside = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        outside = outside || raw.pixels[i] < 0.0 || raw.pixels[i] > 1.0;
        CHECK(clamped.pixels[i] == std::clamp(raw.pixels[i], 0.0, 1.0));
    }
    CHECK(outside);

    const EdgeMap eps = clamp_probability(raw);
    for (double v : eps.pixels) {
        CHECK(v >= 1e-6);
        CHECK(v <= 1.0 - 1e-6);
    }
}

TEST_CASE("non-divisible sizes report the padding needed") {
    PatchCodec codec(4, 1);
    try {
        codec.encode(EdgeMap(10, 8));
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("pad by 2 rows and 0 columns") != std::string::npos);
        CHECK(e.code() == ErrorCode::data);
    }
    CHECK_THROWS_AS(codec.decode(Latent({9, 2, 2})), std::invalid_argument);
}

TEST_CASE("token layout round-trips") {
    Rng rng(5);
    const Latent z = randn(rng, {16, 3, 5});
    const Tensor tokens = PatchCodec::to_tokens(z);
    CHECK(tokens.shape() == Shape{15, 16});
    CHECK(tokens.at(7, 2) == z[2 * 15 + 7]);
    CHECK(PatchCodec::from_tokens(tokens, 3, 5) == z);
}

TEST_CASE("non-orthogonal mixing matrix is rejected") {
    CHECK_THROWS_AS(PatchCodec(1, Tensor({1, 1}, 2.0), false), std::invalid_argument);
}
