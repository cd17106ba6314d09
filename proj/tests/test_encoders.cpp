#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "mmm/encoders.hpp"

#include "support.hpp"

using namespace mmm;
using namespace mmm::encoders;

TEST_CASE("mock encoding is a pure function of bytes and config") {
    testsupport::TempDir tmp;
    testsupport::write_text(tmp.file("a.jpg"), "some image bytes");
    testsupport::write_text(tmp.file("b.jpg"), "some image byteX"); // one byte differs

    EncoderConfig cfg;
    MediaRef a{tmp.file("a.jpg"), MediaKind::image};
    const FeatureMatrix m1 = mock_encode_image(a, cfg);
    const FeatureMatrix m2 = mock_encode_image(a, cfg);
    REQUIRE(m1 == m2);
    REQUIRE(m1.rows == 16);
    REQUIRE(m1.cols == 32);

    MediaRef b{tmp.file("b.jpg"), MediaKind::image};
    const FeatureMatrix m3 = mock_encode_image(b, cfg);
    REQUIRE(m1.values != m3.values);
}

TEST_CASE("audio encoding defaults to 1500 positions") {
    testsupport::TempDir tmp;
    testsupport::write_text(tmp.file("x.mp3"), "audio payload");
    EncoderConfig cfg;
    MediaRef m{tmp.file("x.mp3"), MediaKind::audio};
    const FeatureMatrix fm = mock_encode_audio(m, cfg);
    REQUIRE(fm.rows == 1500);
    REQUIRE(fm.cols == 24);

    cfg.audio_dim = 7;
    const FeatureMatrix fm2 = mock_encode_audio(m, cfg);
    REQUIRE(fm2.rows == 1500);
    REQUIRE(fm2.cols == 7);
}

TEST_CASE("unreadable files raise an I/O error naming the path") {
    EncoderConfig cfg;
    MediaRef m{"/nonexistent/nowhere.bin", MediaKind::image};
    REQUIRE_THROWS_MATCHES(mock_encode_image(m, cfg), IoError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("/nonexistent/nowhere.bin")));
}

TEST_CASE("feature files round trip bit for bit") {
    testsupport::TempDir tmp;
    testsupport::write_text(tmp.file("src"), "bytes for features");
    EncoderConfig cfg;
    cfg.image_positions = 5;
    cfg.image_dim = 3;
    const FeatureMatrix m = mock_encode_image({tmp.file("src"), MediaKind::image}, cfg);
    save_features(m, tmp.file("m.mmf"));
    const FeatureMatrix back = load_features(tmp.file("m.mmf"));
    REQUIRE(back == m);
}

TEST_CASE("hand-built feature file loads to known values") {
    // 2x3 f32 matrix {1.5, -2.0, 0.25, 3.0, -0.5, 8.0}, authored byte by byte.
    const std::string bytes = {
        'M', 'M', 'M', 'F',
        1, 0, 2, 0,
        2, 0, 0, 0, // rows = 2
        3, 0, 0, 0, // cols = 3
        0, 0, '\xC0', '\x3F',  // 1.5
        0, 0, 0, '\xC0',       // -2.0
        0, 0, '\x80', '\x3E',  // 0.25
        0, 0, '\x40', '\x40',  // 3.0
        0, 0, 0, '\xBF',       // -0.5
        0, 0, 0, '\x41',       // 8.0
    };
    testsupport::TempDir tmp;
    testsupport::write_text(tmp.file("hand.mmf"), bytes);
    const FeatureMatrix m = load_features(tmp.file("hand.mmf"));
    REQUIRE(m.rows == 2);
    REQUIRE(m.cols == 3);
    REQUIRE(m.values == std::vector<double>{1.5, -2.0, 0.25, 3.0, -0.5, 8.0});
}

TEST_CASE("malformed feature files are rejected with offsets") {
    testsupport::TempDir tmp;

    testsupport::write_text(tmp.file("bad_magic"), "XXXX\x01\x00\x02\x00");
    REQUIRE_THROWS_AS(load_features(tmp.file("bad_magic")), FormatError);

    const FeatureMatrix m{1, 2, {0.5, 0.75}};
    save_features(m, tmp.file("ok.mmf"));
    std::string good = testsupport::read_text(tmp.file("ok.mmf"));

    testsupport::write_text(tmp.file("trunc.mmf"), good.substr(0, good.size() - 3));
    REQUIRE_THROWS_MATCHES(load_features(tmp.file("trunc.mmf")), FormatError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("truncated")));

    testsupport::write_text(tmp.file("trail.mmf"), good + "zz");
    REQUIRE_THROWS_MATCHES(load_features(tmp.file("trail.mmf")), FormatError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("trailing")));
}

TEST_CASE("feature tensors stay frozen") {
    const FeatureMatrix m{2, 2, {1, 2, 3, 4}};
    core::Tensor t = to_tensor(m);
    REQUIRE_FALSE(t.requires_grad());
    core::ParamRegistry reg;
    REQUIRE_THROWS_AS(reg.add("features", t), ContractError);
}
