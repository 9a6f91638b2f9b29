#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "curvemark/bench.hpp"
#include "curvemark/keyfile.hpp"
#include "curvemark/pgm.hpp"
#include "test_support.hpp"

using namespace curvemark;
namespace fs = std::filesystem;

namespace {

const std::string kSeed = "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("curvemark_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string at(const std::string& name) const { return (dir / name).string(); }

  // Exit status of the CLI; stdout lands in `last_out`.
  int run(const std::string& args) {
    const std::string out = at("stdout.txt");
    const std::string cmd = std::string(CURVEMARK_CLI_PATH) + " " + args + " >" + out + " 2>" + at("stderr.txt");
    const int status = std::system(cmd.c_str());
    last_out = slurp(out);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string image(const std::string& name, int w = 256, int h = 256, std::uint64_t idx = 1) {
    save_pgm(at(name), quantize_8bit(testing_support::natural(w, h, idx)));
    return at(name);
  }

  std::string key(const std::string& name, const std::string& extra = "") {
    EXPECT_EQ(run("keygen --seed " + kSeed + " -o " + at(name) + " " + extra), 0);
    return at(name);
  }

  std::string last_out;
};

}  // namespace

TEST_F(Cli, KeygenIsDeterministicGivenASeed) {
  key("a.json");
  key("b.json");
  EXPECT_EQ(slurp(at("a.json")), slurp(at("b.json")));
  const KeyFile kf = load_key(at("a.json"));
  EXPECT_EQ(kf.key.seed.hex(), kSeed);
  EXPECT_FALSE(kf.key.is_multibit());
  ASSERT_EQ(run("keygen -o " + at("r1.json")), 0);
  ASSERT_EQ(run("keygen -o " + at("r2.json")), 0);
  EXPECT_NE(load_key(at("r1.json")).key.seed, load_key(at("r2.json")).key.seed);
}

TEST_F(Cli, KeygenValidatesInput) {
  EXPECT_EQ(run("keygen --seed 12ab"), 64);
  EXPECT_EQ(run("keygen --mode triple"), 64);
  EXPECT_EQ(run("keygen --directions 1,17 --mode multi"), 64);
  EXPECT_EQ(run("keygen --mode multi --seed " + kSeed), 0);
  EXPECT_TRUE(parse_key(last_out).key.is_multibit());
}

TEST_F(Cli, EmbedThenDetect) {
  const std::string img = image("host.pgm");
  const std::string k = key("k.json");
  ASSERT_EQ(run("embed -i " + img + " -k " + k + " -o " + at("wm.pgm")), 0);
  const auto e = nlohmann::json::parse(last_out);
  EXPECT_GT(e["psnr"].get<double>(), 30.0);
  EXPECT_EQ(e["mode"], "zero");
  EXPECT_EQ(run("detect -i " + at("wm.pgm") + " -k " + k), 0);
  EXPECT_EQ(nlohmann::json::parse(last_out)["decision"], "present");
  EXPECT_EQ(run("detect -i " + img + " -k " + k), 4);
  EXPECT_EQ(nlohmann::json::parse(last_out)["decision"], "absent");
  ASSERT_EQ(run("keygen -o " + at("other.json")), 0);
  EXPECT_EQ(run("detect -i " + at("wm.pgm") + " -k " + at("other.json")), 4);
  EXPECT_EQ(run("detect -i " + at("wm.pgm") + " -k " + k + " --statistic raw"), 0);
}

TEST_F(Cli, MultibitRoundTrip) {
  const std::string img = image("host.pgm", 320, 256, 2);
  const std::string k = key("k.json", "--mode multi");
  EXPECT_EQ(run("embed -i " + img + " -k " + k + " -o " + at("wm.pgm")), 64);
  EXPECT_EQ(run("embed -i " + img + " -k " + k + " -o " + at("wm.pgm") + " --bits 101"), 64);
  EXPECT_EQ(run("embed -i " + img + " -k " + k + " -o " + at("wm.pgm") + " --mode zero"), 2);
  ASSERT_EQ(run("embed -i " + img + " -k " + k + " -o " + at("wm.pgm") + " --bits 100110"), 0);
  ASSERT_EQ(run("detect -i " + at("wm.pgm") + " -k " + k), 0);
  EXPECT_EQ(nlohmann::json::parse(last_out)["bits"], "100110");
}

TEST_F(Cli, ZeroStrengthLeavesPixelsUntouched) {
  const std::string img = image("host.pgm");
  const std::string k = key("k.json", "--alpha 0");
  ASSERT_EQ(run("embed -i " + img + " -k " + k + " -o " + at("wm.pgm")), 0);
  EXPECT_EQ(slurp(img), slurp(at("wm.pgm")));
}

TEST_F(Cli, VisibleStrengthIsRefused) {
  const std::string img = image("host.pgm");
  const std::string k = key("k.json", "--alpha 60");
  EXPECT_EQ(run("embed -i " + img + " -k " + k + " -o " + at("wm.pgm")), 3);
  EXPECT_FALSE(fs::exists(at("wm.pgm")));
}

TEST_F(Cli, AttackCommand) {
  const std::string img = image("host.pgm");
  ASSERT_EQ(run("attack -i " + img + " -o " + at("n.pgm") + " --kind gaussian_noise --sigma 0"), 0);
  EXPECT_EQ(slurp(img), slurp(at("n.pgm")));
  EXPECT_EQ(run("attack -i " + img + " -o " + at("x.pgm") + " --kind sharpen --param 1"), 6);
  EXPECT_EQ(run("attack -i " + img + " -o " + at("x.pgm") + " --kind jpeg --quality 500"), 6);
  EXPECT_EQ(run("attack -i " + img + " -o " + at("x.pgm") + " --kind jpeg"), 6);
  EXPECT_EQ(run("attack -i " + img + " -o " + at("x.pgm") + " --kind jpeg --sigma 3"), 6);
  ASSERT_EQ(run("attack -i " + img + " -o " + at("s.pgm") + " --kind scale --factor 0.5"), 0);
  EXPECT_EQ(load_image(at("s.pgm")).image.cols(), 128);
  ASSERT_EQ(run("attack -i " + img + " -o " + at("r.pgm") + " --kind rotate --param 90"), 0);
  ASSERT_EQ(run("attack -i " + img + " -o " + at("h.pgm") + " --kind hist_eq"), 0);
}

TEST_F(Cli, ErrorsMapToExitCodes) {
  const std::string img = image("host.pgm");
  const std::string k = key("k.json");
  EXPECT_EQ(run("detect -i " + img + " -k " + k + " --mode geometric"), 64);
  EXPECT_EQ(run("detect -i " + img + " -k " + k + " --nominal 300x256"), 64);
  EXPECT_EQ(run("detect -i " + img + " -k " + k + " --mode sideways"), 64);
  EXPECT_EQ(run("detect -i " + at("missing.pgm") + " -k " + k), 1);
  std::ofstream(at("bad.json")) << "{\"version\": 1}";
  EXPECT_EQ(run("detect -i " + img + " -k " + at("bad.json")), 2);
  std::ofstream(at("junk.pgm")) << "P5\n9 9\n255\n";
  EXPECT_EQ(run("detect -i " + at("junk.pgm") + " -k " + k), 1);
  EXPECT_EQ(run("frobnicate"), 64);
  EXPECT_EQ(run(""), 64);
}

TEST_F(Cli, GeometricWithoutTemplateReportsFive) {
  const std::string img = image("host.pgm");
  const std::string k = key("k.json");
  ASSERT_EQ(run("attack -i " + img + " -o " + at("r.pgm") + " --kind rotate --degrees 22.5"), 0);
  EXPECT_EQ(run("detect -i " + at("r.pgm") + " -k " + k + " --mode geometric --nominal 256x256"), 5);
}

TEST_F(Cli, CalibrateStoresThreshold) {
  fs::create_directories(dir / "corpus");
  image("corpus/a.pgm", 256, 256, 3);
  image("corpus/b.pgm", 192, 256, 4);
  const std::string k = key("k.json");
  EXPECT_EQ(run("calibrate --corpus " + at("corpus") + " -k " + k + " --fakes 50"), 64);
  ASSERT_EQ(run("calibrate --corpus " + at("corpus") + " -k " + k + " --fakes 200 --no-store"), 0);
  EXPECT_FALSE(load_key(k).thresholds.direct);
  const double printed = std::stod(last_out);
  ASSERT_EQ(run("calibrate --corpus " + at("corpus") + " -k " + k + " --fakes 200"), 0);
  const auto stored = load_key(k).thresholds.direct;
  ASSERT_TRUE(stored);
  EXPECT_NEAR(*stored, printed, 1e-5 * std::abs(printed));
  EXPECT_GT(*stored, 0.0);
  EXPECT_EQ(run("calibrate --corpus " + at("nope") + " -k " + k), 1);
}

TEST_F(Cli, BenchWithEmptyGridHasOnlyFidelity) {
  fs::create_directories(dir / "corpus");
  image("corpus/a.pgm", 256, 256, 5);
  const std::string k = key("k.json");
  std::ofstream(at("grid.json")) << R"({"attacks": []})";
  ASSERT_EQ(run("bench --corpus " + at("corpus") + " -k " + k + " --grid " + at("grid.json") + " -o " + at("r.json")),
            0);
  const auto r = nlohmann::json::parse(slurp(at("r.json")));
  EXPECT_TRUE(r["records"].empty());
  ASSERT_EQ(r["fidelity"].size(), 1u);
  EXPECT_GT(r["fidelity"][0]["psnr"].get<double>(), 30.0);
  EXPECT_EQ(r["corpus"][0]["blake2b"].get<std::string>().size(), 64u);
  EXPECT_TRUE(fs::exists(at("r.csv")));
  std::ofstream(at("bad.json")) << R"({"attacks": [{"kind": "jpeg", "quality": 0}]})";
  EXPECT_EQ(run("bench --corpus " + at("corpus") + " -k " + k + " --grid " + at("bad.json") + " -o " + at("r.json")),
            6);
}

TEST_F(Cli, BenchReportsAttacks) {
  fs::create_directories(dir / "corpus");
  image("corpus/a.pgm", 256, 256, 6);
  const std::string k = key("k.json");
  std::ofstream(at("grid.json")) << R"({"attacks": [{"kind": "none"}, {"kind": "jpeg", "quality": 70}], "fakes": 10})";
  ASSERT_EQ(run("bench --corpus " + at("corpus") + " -k " + k + " --grid " + at("grid.json") + " -o " + at("r.json")),
            0);
  const auto r = nlohmann::json::parse(slurp(at("r.json")));
  ASSERT_EQ(r["records"].size(), 2u);
  for (const auto& rec : r["records"]) {
    EXPECT_EQ(rec["mode"], "direct");
    EXPECT_EQ(rec["decision"], "present") << rec.dump();
    EXPECT_TRUE(rec.contains("max_fake"));
    EXPECT_FALSE(rec.contains("seconds"));
  }
  const std::string csv = slurp(at("r.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "kind,param,mode,images,detection_rate,mean_statistic,min_statistic,mean_normalized_correlation,mean_ber");
}
