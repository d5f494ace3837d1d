// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "kernsym/cli.hpp"
#include "kernsym/manifest.hpp"
#include "kernsym/report.hpp"
#include "support/fixtures.hpp"

using namespace kernsym;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "kernsym");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    fixtures::ModelBuilder b("seg", 1, 9, 9, 12);
    b.conv("conv1", 4, ConvLayerSpec::symmetric(3, 2, 1), true, true)
        .plain("relu1", LayerKind::kRelu)
        .conv("head", 3, ConvLayerSpec::symmetric(1, 1, 0));
    std::ofstream(dir / "seg.json") << manifest_to_json(b.manifest);
    save_safetensors(dir / "seg.safetensors", b.store);

    std::filesystem::create_directories(dir / "images");
    SplitMix64 rng(3);
    for (int i = 0; i < 3; ++i) {
      TensorStore s;
      s.add_f32("img", {1, 9, 9}, fixtures::random_image(rng, 1, 9, 9).data);
      save_safetensors(dir / "images" / ("im" + std::to_string(i) + ".safetensors"), s);
    }
    std::filesystem::create_directories(dir / "empty");

    std::ofstream(dir / "stem.json") << R"({"model":"stem","input":{"h":224,"w":224,"c":3},"layers":[
      {"name":"conv1","kind":"conv2d","kernel":[3,3],"stride":[2,2],"padding":[1,1,1,1],"weight":"conv1.weight"}]})";
  }

  std::string p(const std::string& name) const { return (dir / name).string(); }

  fixtures::TempDir dir;
};

}  // namespace

TEST_F(CliTest, AnalyzeFormats) {
  const Outcome csv = run({"analyze", "--weights", p("seg.safetensors"), "--manifest", p("seg.json")});
  ASSERT_EQ(csv.code, 0) << csv.err;
  const SymmetryProfile prof = profile_from_csv(csv.out);
  ASSERT_EQ(prof.layers.size(), 2u);
  EXPECT_TRUE(prof.layers[0].strided);
  EXPECT_TRUE(prof.layers[1].score.trivial || prof.layers[1].score.kernel_side == 1);

  const Outcome js = run({"analyze", "--weights", p("seg.safetensors"), "--manifest", p("seg.json"), "--format", "json"});
  ASSERT_EQ(js.code, 0);
  const auto doc = nlohmann::json::parse(js.out);
  EXPECT_EQ(doc["generator"]["inputs"].size(), 2u);
  EXPECT_EQ(doc["generator"]["inputs"][0]["sha256"].get<std::string>().size(), 64u);

  const Outcome svg = run({"analyze", "--weights", p("seg.safetensors"), "--manifest", p("seg.json"), "--format", "svg",
                       "--out", p("out.svg")});
  ASSERT_EQ(svg.code, 0);
  EXPECT_TRUE(svg.out.empty());
  EXPECT_NE(read_text(dir / "out.svg").find("<rect class=\"bar\""), std::string::npos);
}

TEST_F(CliTest, AnalyzeFilter) {
  const Outcome one = run({"analyze", "--weights", p("seg.safetensors"), "--manifest", p("seg.json"), "--filter", "conv*"});
  EXPECT_EQ(profile_from_csv(one.out).layers.size(), 1u);
  const Outcome none = run({"analyze", "--weights", p("seg.safetensors"), "--manifest", p("seg.json"), "--filter", "zzz"});
  EXPECT_EQ(none.code, 0);
  EXPECT_NE(none.err.find("warning"), std::string::npos);
}

TEST_F(CliTest, Arith) {
  const Outcome text = run({"arith", "--manifest", p("stem.json"), "--suggest"});
  EXPECT_EQ(text.code, 0);
  EXPECT_NE(text.out.find("uneven"), std::string::npos);
  EXPECT_NE(text.out.find("suggested input: 225x225"), std::string::npos);
  EXPECT_EQ(run({"arith", "--manifest", p("stem.json"), "--strict"}).code, 1);
  EXPECT_EQ(run({"arith", "--manifest", p("stem.json"), "--strict", "--input", "225x225"}).code, 0);
  const auto doc = nlohmann::json::parse(run({"arith", "--manifest", p("stem.json"), "--format", "json", "--suggest"}).out);
  EXPECT_EQ(doc["suggested_input"][1], 225);
  EXPECT_EQ(run({"arith", "--manifest", p("stem.json"), "--input", "224"}).code, 2);
  EXPECT_EQ(run({"arith", "--manifest", p("stem.json"), "--input", "1x1"}).code, 0);
}

TEST_F(CliTest, Consistency) {
  const Outcome flip = run({"consistency", "--weights", p("seg.safetensors"), "--manifest", p("seg.json"), "--images",
                        p("images")});
  ASSERT_EQ(flip.code, 0) << flip.err;
  EXPECT_NE(flip.out.find("mean 1.000000"), std::string::npos);
  EXPECT_NE(flip.out.find("im0/img"), std::string::npos);

  const Outcome shift = run({"consistency", "--weights", p("seg.safetensors"), "--manifest", p("seg.json"), "--images",
                         p("images"), "--mode", "shift", "--shift=-1,2", "--format", "json"});
  ASSERT_EQ(shift.code, 0) << shift.err;
  EXPECT_EQ(nlohmann::json::parse(shift.out)["shift"][0], -1);

  EXPECT_EQ(run({"consistency", "--weights", p("seg.safetensors"), "--manifest", p("seg.json"), "--images",
                 p("empty")})
                .code,
            4);
  EXPECT_EQ(run({"consistency", "--weights", p("seg.safetensors"), "--manifest", p("seg.json"), "--images",
                 p("images"), "--mode", "shift", "--shift", "1;1"})
                .code,
            2);
}

TEST_F(CliTest, TrainDemo) {
  const Outcome r = run({"train-demo", "--task", "blur", "--steps", "50", "--interval", "10", "--trace", p("trace.csv"),
                     "--save-weights", p("trained.safetensors")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("initial conv1"), std::string::npos);
  const std::string trace = read_text(dir / "trace.csv");
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 7);
  EXPECT_NE(load_safetensors(dir / "trained.safetensors").find("conv1.weight"), nullptr);

  const Outcome edge = run({"train-demo", "--task", "edge", "--steps", "5", "--flip-aug"});
  EXPECT_EQ(edge.code, 0) << edge.err;
  EXPECT_NE(edge.out.find("final conv2"), std::string::npos);
  EXPECT_EQ(run({"train-demo", "--lr", "1e9", "--steps", "100"}).code, 5);
}

TEST_F(CliTest, ErrorsMapToExitCodes) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"analyze", "--manifest", p("seg.json")}).code, 2);
  EXPECT_EQ(run({"analyze", "--weights", p("missing"), "--manifest", p("seg.json")}).code, 2);

  std::ofstream(dir / "trunc.safetensors") << "abc";
  const Outcome trunc = run({"analyze", "--weights", p("trunc.safetensors"), "--manifest", p("seg.json")});
  EXPECT_EQ(trunc.code, 2);
  EXPECT_NE(trunc.err.find("TruncatedFile"), std::string::npos);

  TensorStore other;
  other.add_f64("unrelated", {1}, std::vector<double>{1.0});
  save_safetensors(dir / "other.safetensors", other);
  EXPECT_EQ(run({"analyze", "--weights", p("other.safetensors"), "--manifest", p("seg.json")}).code, 3);
  EXPECT_EQ(run({"consistency", "--weights", p("other.safetensors"), "--manifest", p("seg.json"), "--images",
                 p("images")})
                .code,
            3);

  const Outcome help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("arith"), std::string::npos);
  EXPECT_EQ(run({"--version"}).out, "0.1.0\n");
}
