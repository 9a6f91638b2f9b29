#include <gtest/gtest.h>

#include <filesystem>

#include "curvemark/bench.hpp"
#include "curvemark/keyfile.hpp"
#include "curvemark/pgm.hpp"
#include "test_support.hpp"

using namespace curvemark;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("curvemark_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Pgm, RoundTripIsBitExact) {
  const Image img = quantize_8bit(testing_support::natural(37, 23, 1));
  const auto enc = encode_pgm(img);
  const LoadedImage back = decode_pnm(enc);
  EXPECT_EQ(back.image, img);
  EXPECT_FALSE(back.converted_from_color);
  EXPECT_EQ(encode_pgm(back.image), enc);
}

TEST(Pgm, EncodeRoundsAndClamps) {
  Image img(1, 4);
  img[0] = -3.0;
  img[1] = 2.6;
  img[2] = 300.0;
  img[3] = 127.4;
  const auto b = decode_pnm(encode_pgm(img)).image;
  EXPECT_EQ(std::vector<double>(b.values().begin(), b.values().end()), (std::vector<double>{0, 3, 255, 127}));
}

TEST(Pgm, AsciiAndComments) {
  const auto li = decode_pnm(bytes_of("P2\n# a comment\n3 2\n# more\n15\n0 5 10\n15 1 2\n"));
  EXPECT_EQ(li.image.cols(), 3);
  EXPECT_EQ(li.image.rows(), 2);
  EXPECT_EQ(li.image(1, 0), 255.0);
  EXPECT_EQ(li.image(0, 1), 85.0);
}

TEST(Pgm, ColorIsConvertedToLuma) {
  std::string s = "P6\n2 1\n255\n";
  s += std::string{'\xff', '\x00', '\x00', '\x00', '\x00', '\xff'};
  const auto li = decode_pnm(bytes_of(s));
  EXPECT_TRUE(li.converted_from_color);
  EXPECT_EQ(li.image[0], std::nearbyint(0.299 * 255));
  EXPECT_EQ(li.image[1], std::nearbyint(0.114 * 255));
}

TEST(Pgm, MalformedInputsAreRejected) {
  for (const std::string& s : {std::string("P3\n1 1\n255\n0 0 0\n"), std::string("XX"), std::string("P5\n2 2\n255\n\x01"),
                              std::string("P5\n2 2\n65535\n"), std::string("P5\n0 2\n255\n"), std::string("P5\nab\n"),
                              std::string("P2\n2 1\n10\n3 11\n"), std::string("P2\n2 1\n10\n3\n")})
    EXPECT_THROW(decode_pnm(bytes_of(s)), IoError) << s;
  EXPECT_THROW(load_image("/nonexistent/x.pgm"), IoError);
}

TEST(KeyFile, RoundTrip) {
  KeyFile f{default_key(true, testing_support::seed(3)), {}};
  f.thresholds.direct = 0.123;
  f.thresholds.geometric = 4.5;
  const std::string text = serialize_key(f);
  EXPECT_EQ(parse_key(text), f);
  EXPECT_EQ(serialize_key(parse_key(text)), text);
  EXPECT_EQ(text.find("magnitude"), std::string::npos);
}

TEST(KeyFile, RejectsBadContent) {
  const std::string good = serialize_key({default_key(false, testing_support::seed(4)), {}});
  auto with = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    const auto at = s.find(from);
    EXPECT_NE(at, std::string::npos) << from;
    return s.replace(at, from.size(), to);
  };
  EXPECT_THROW(parse_key(with("\"version\": 1", "\"version\": 2")), KeyFileError);
  EXPECT_THROW(parse_key(with("\"seed\": \"", "\"seed\": \"zz")), KeyFileError);
  EXPECT_THROW(parse_key(with("\"alpha\"", "\"alpha_\"")), KeyFileError);
  EXPECT_THROW(parse_key(with("\"template_direction\": 9", "\"template_direction\": 99")), KeyFileError);
  EXPECT_THROW(parse_key("[1,2]"), KeyFileError);
  EXPECT_THROW(parse_key("{"), KeyFileError);
}

TEST(KeyFile, SaveAndLoad) {
  TempDir dir;
  const KeyFile f{default_key(false, testing_support::seed(5)), {}};
  const std::string p = (dir.path / "k.json").string();
  save_key(p, f);
  EXPECT_EQ(load_key(p), f);
  EXPECT_THROW(load_key((dir.path / "missing.json").string()), IoError);
}

TEST(Corpus, SortedWithHashes) {
  TempDir dir;
  save_pgm((dir.path / "b.pgm").string(), Image(16, 16, 10.0));
  save_pgm((dir.path / "a.pgm").string(), Image(8, 12, 20.0));
  std::ofstream(dir.path / "notes.txt") << "skip";
  const auto c = bench::load_corpus(dir.path.string());
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].path, "a.pgm");
  EXPECT_EQ(c[0].dims.width, 12);
  EXPECT_EQ(c[0].dims.height, 8);
  EXPECT_EQ(c[0].blake2b.size(), 64u);
  EXPECT_NE(c[0].blake2b, c[1].blake2b);
  EXPECT_EQ(c[0].blake2b, bench::blake2b_hex(read_file_bytes((dir.path / "a.pgm").string())));
  // Unkeyed BLAKE2b-256 of the empty string.
  EXPECT_EQ(bench::blake2b_hex({}), "0e5751c026e543b2e8ab2eb06099daa1d1e5df47778f7787faab45cdf12fe3a8");
}

TEST(Corpus, EmptyOrMissingDirectoryThrows) {
  TempDir dir;
  EXPECT_THROW(bench::load_corpus(dir.path.string()), IoError);
  EXPECT_THROW(bench::load_corpus((dir.path / "nope").string()), IoError);
}

TEST(BenchConfig, Parsing) {
  const auto d = bench::parse_config(nlohmann::ordered_json::object());
  EXPECT_EQ(d.attacks, default_attack_grid());
  const auto c = bench::parse_config(nlohmann::ordered_json::parse(
      R"({"attacks":[{"kind":"jpeg","quality":70}],"bits":"101","geometric":false,"fakes":5})"));
  ASSERT_EQ(c.attacks.size(), 1u);
  EXPECT_EQ(c.attacks[0].param, 70.0);
  EXPECT_EQ(*c.bits, (std::vector<bool>{true, false, true}));
  EXPECT_FALSE(c.geometric);
  EXPECT_EQ(c.fakes, 5);
  EXPECT_EQ(bench::parse_config(nlohmann::ordered_json::parse(R"({"seed":7})")).attacks, default_attack_grid(7));
  for (const char* bad : {R"({"attacks":"most"})", R"({"bits":"12"})", R"({"fakes":-1})", R"([])",
                          R"({"attacks":[{"kind":"jpeg"}]})", R"({"geometric":"yes"})"})
    EXPECT_THROW(bench::parse_config(nlohmann::ordered_json::parse(bad)), InvalidArgument) << bad;
}

TEST(BenchConfig, NumberFormatting) {
  EXPECT_EQ(bench::num(1.0 / 3.0).get<double>(), 0.333333);
  EXPECT_EQ(bench::num(123456789.0).get<double>(), 1.23457e8);
  EXPECT_EQ(bench::num(-0.0).dump(), "0.0");
  EXPECT_EQ(bench::num(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(bench::num(std::nan("")), "nan");
}
