#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dagl/cli.hpp"
#include "dagl/image_io.hpp"
#include "dagl/metrics.hpp"
#include "dagl/visualize.hpp"
#include "support/synthetic.hpp"

using namespace dagl;
using namespace dagl::testing;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig =
    "# tiny model for fast runs\n"
    "channels = 4\n"
    "rb_per_stage = 1\n"
    "heads = 2\n"
    "stages = 1\n"
    "patch_w = 3\n"
    "patch_h = 3\n"
    "stride = 2\n"
    "lr = 0.002\n"
    "batch = 2\n"
    "crop = 12\n"
    "epochs = 2\n"
    "iters_per_epoch = 3\n"
    "seed = 5\n";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary | std::ios::trunc) << s; }

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dagl_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_ / "data" / "val");
    for (int i = 0; i < 3; ++i)
      write_pnm(dir_ / "data" / ("img" + std::to_string(i) + ".pgm"), tensor_to_image(synthetic_image(50 + i, 16, 16)));
    write_pnm(dir_ / "data" / "val" / "v0.pgm", tensor_to_image(synthetic_image(77, 16, 16)));
    spit(path("tiny.cfg"), kTinyConfig);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string train_tiny(const std::string& ckpt = "model.ckpt") {
    auto r = cli({"train", "--config", path("tiny.cfg"), "--data", path("data"), "--ckpt", path(ckpt)});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(ckpt);
  }

  fs::path dir_;
};

}  // namespace

TEST(Config, ParsesKeysAndComments) {
  RunConfig c = parse_config(kTinyConfig + std::string("mode = NO_GAT   # trailing comment\ncolor = rgb\n"));
  EXPECT_EQ(c.model.channels, 4u);
  EXPECT_EQ(c.model.patch.stride, 2u);
  EXPECT_EQ(c.model.mode, AblationMode::NoAttention);
  EXPECT_EQ(c.model.color, ColorMode::Rgb);
  EXPECT_EQ(c.train.lr, 0.002);
  EXPECT_EQ(c.train.seed, 5u);
  EXPECT_EQ(parse_config("").model.channels, ModelConfig{}.channels);
}

TEST(Config, CanonicalTextRoundTrips) {
  RunConfig c = parse_config(kTinyConfig);
  c.train.lr = 1.0 / 3.0;
  c.train.grad_clip = true;
  const std::string text = to_config_text(c);
  EXPECT_EQ(to_config_text(parse_config(text)), text);
  EXPECT_EQ(parse_config(text).train.lr, 1.0 / 3.0);
}

TEST(Config, Errors) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("channels = 4\nchanels = 5\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("channels = 4\nchanels = 5\n").find("chanels"), std::string::npos);
  EXPECT_NE(message("heads = 2\nheads = 3\n").find("repeated"), std::string::npos);
  EXPECT_NE(message("heads = two\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("heads\n").find("key=value"), std::string::npos);
  EXPECT_NE(message("heads = 0\n").find("heads"), std::string::npos);
  EXPECT_NE(message("mode = SOMETHING\n").find("SOMETHING"), std::string::npos);
  EXPECT_NE(message("lr = 1e-3x\n").find("lr"), std::string::npos);
}

TEST_F(CliTest, PnmRoundTripIsByteExact) {
  const std::string src = path("data/img0.pgm");
  write_pnm(path("copy.pgm"), read_pnm(src));
  EXPECT_EQ(slurp(src), slurp(path("copy.pgm")));

  std::mt19937_64 rng(1);
  write_pnm(path("rgb.ppm"), tensor_to_image(random_tensor({3, 5, 7}, rng, 0, 1)));
  Image rgb = read_pnm(path("rgb.ppm"));
  EXPECT_EQ(rgb.channels, 3u);
  write_pnm(path("rgb2.ppm"), rgb);
  EXPECT_EQ(slurp(path("rgb.ppm")), slurp(path("rgb2.ppm")));
  EXPECT_EQ(tensor_to_image(image_to_tensor(rgb)).pixels, rgb.pixels);
}

TEST_F(CliTest, PnmHeaderValidation) {
  spit(path("comment.pgm"), std::string("P5\n# made by hand\n2 1\n255\n") + '\x10' + '\x20');
  Image img = read_pnm(path("comment.pgm"));
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.pixels[1], 0x20);
  spit(path("short.pgm"), "P5\n4 4\n255\nabc");
  EXPECT_THROW(read_pnm(path("short.pgm")), std::runtime_error);
  spit(path("long.pgm"), "P5\n1 1\n255\nab");
  EXPECT_THROW(read_pnm(path("long.pgm")), std::runtime_error);
  spit(path("ascii.pgm"), "P2\n1 1\n255\n7\n");
  EXPECT_THROW(read_pnm(path("ascii.pgm")), std::runtime_error);
  spit(path("deep.pgm"), "P5\n1 1\n65535\nab");
  EXPECT_THROW(read_pnm(path("deep.pgm")), std::runtime_error);
}

TEST(ImageIo, TensorConversionClampsAndRounds) {
  Tensor t({1, 1, 4}, std::vector<Real>{-0.5, 0.5, 1.0 / 255.0 * 7.4, 3});
  EXPECT_EQ(tensor_to_image(t).pixels, (std::vector<std::uint8_t>{0, 128, 7, 255}));
  EXPECT_THROW(tensor_to_image(Tensor({2, 3, 3})), DimensionError);
}

TEST(Visualize, HeatmapAndNeighborMap) {
  auto m = Tensor::matrix({{0, 0, 0}, {1, 2, 3}, {5, 0, 10}});
  Image h = heatmap(m);
  EXPECT_EQ(h.width, 3u);
  EXPECT_EQ(h.height, 3u);
  EXPECT_EQ(h.pixels, (std::vector<std::uint8_t>{0, 0, 0, 26, 51, 77, 128, 0, 255}));
  EXPECT_EQ(heatmap(Tensor::full({2, 2}, 4)).pixels, std::vector<std::uint8_t>(4, 0));

  GraphState s;
  s.geometry = {3, 3, 3, 9, 6, 1};  // 3 x 2 grid of origins
  s.neighbor_count = {0, 2, 4, 1, 3, 4};
  Image counts = neighbor_count_map(s);
  EXPECT_EQ(counts.width, 3u);
  EXPECT_EQ(counts.height, 2u);
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_EQ(counts.pixels[i], std::lround(255.0 * s.neighbor_count[i] / 4.0));
}

TEST(Visualize, TopNeighbors) {
  GraphState s;
  s.geometry = {3, 3, 3, 6, 6, 1};
  s.attention = Tensor::matrix({{0.2, 0.5, 0, 0.3}, {0, 0, 0, 0}, {0.25, 0.25, 0.25, 0.25}, {0, 0, 0, 1}});
  s.similarity = Tensor::full({4, 4}, 2);
  auto top = top_neighbors(s, 0, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].index, 1u);
  EXPECT_EQ(top[0].origin_x, 3u);
  EXPECT_EQ(top[1].index, 3u);
  EXPECT_EQ(top[1].origin_y, 3u);
  EXPECT_TRUE(top_neighbors(s, 1, 5).empty());
  EXPECT_EQ(top_neighbors(s, 2, 10).size(), 4u);
  EXPECT_THROW(top_neighbors(s, 4, 1), ContractError);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"bogus"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"train", "--config", path("tiny.cfg")}).code, 2);

  auto missing = cli({"train", "--config", path("tiny.cfg"), "--data", path("nope"), "--ckpt", path("x.ckpt")});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find(path("nope")), std::string::npos);

  spit(path("typo.cfg"), "channels = 4\nchannel = 4\n");
  auto typo = cli({"train", "--config", path("typo.cfg"), "--data", path("data"), "--ckpt", path("x.ckpt")});
  EXPECT_EQ(typo.code, 2);
  EXPECT_NE(typo.err.find("channel"), std::string::npos);

  fs::create_directories(dir_ / "empty");
  EXPECT_EQ(cli({"train", "--config", path("tiny.cfg"), "--data", path("empty"), "--ckpt", path("x.ckpt")}).code, 2);
  EXPECT_EQ(cli({"denoise", "--ckpt", path("none.ckpt"), path("data/img0.pgm"), path("o.pgm")}).code, 2);

  spit(path("garbage.ckpt"), "not a checkpoint");
  EXPECT_EQ(cli({"denoise", "--ckpt", path("garbage.ckpt"), path("data/img0.pgm"), path("o.pgm")}).code, 1);
}

TEST_F(CliTest, TrainWritesCheckpointAndLog) {
  auto r = cli({"train", "--config", path("tiny.cfg"), "--data", path("data"), "--ckpt", path("m.ckpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("final_loss"), std::string::npos);
  const std::string log = slurp(path("m.ckpt.log"));
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch\tlr\tmean_loss\tval_psnr");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);

  // The same seed reproduces the checkpoint byte for byte; another seed does not.
  train_tiny("again.ckpt");
  EXPECT_EQ(slurp(path("m.ckpt")), slurp(path("again.ckpt")));
  ASSERT_EQ(cli({"train", "--config", path("tiny.cfg"), "--data", path("data"), "--ckpt", path("s9.ckpt"), "--seed",
                 "9", "--deterministic"})
                .code,
            0);
  EXPECT_NE(slurp(path("m.ckpt")), slurp(path("s9.ckpt")));

  Model loaded = load_model(path("m.ckpt"));
  EXPECT_EQ(loaded.config().channels, 4u);
  auto img = image_to_tensor(read_pnm(path("data/img1.pgm")));
  Model twice = load_model(path("m.ckpt"));
  EXPECT_EQ(loaded.infer(img), twice.infer(img));
}

TEST_F(CliTest, DenoiseZeroCheckpointIsIdentity) {
  RunConfig cfg = parse_config(kTinyConfig);
  Model zero(cfg.model);
  save_checkpoint(path("zero.ckpt"), zero.params(), to_config_text(cfg));
  auto r = cli({"denoise", "--ckpt", path("zero.ckpt"), path("data/img2.pgm"), path("out.pgm")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("out.pgm")), slurp(path("data/img2.pgm")));
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, DenoiseWithSigmaReportsMetrics) {
  const std::string ckpt = train_tiny();
  auto clean = cli({"denoise", "--ckpt", ckpt, path("data/img0.pgm"), path("o0.pgm"), "--sigma", "0"});
  ASSERT_EQ(clean.code, 0) << clean.err;
  EXPECT_NE(clean.out.find("noisy\tpsnr\tinf\tssim\t1.0000"), std::string::npos) << clean.out;
  const auto restored_line = clean.out.substr(clean.out.find("restored"));
  const double restored_psnr = std::stod(restored_line.substr(restored_line.find("psnr\t") + 5));
  EXPECT_TRUE(std::isfinite(restored_psnr));

  auto noisy = cli({"denoise", "--ckpt", ckpt, path("data/img0.pgm"), path("o1.pgm"), "--sigma", "25", "--seed", "3"});
  ASSERT_EQ(noisy.code, 0) << noisy.err;
  EXPECT_EQ(std::count(noisy.out.begin(), noisy.out.end(), '\n'), 2);
  auto again = cli({"denoise", "--ckpt", ckpt, path("data/img0.pgm"), path("o2.pgm"), "--sigma", "25", "--seed", "3"});
  EXPECT_EQ(noisy.out, again.out);
  EXPECT_EQ(slurp(path("o1.pgm")), slurp(path("o2.pgm")));

  write_pnm(path("small.pgm"), tensor_to_image(Tensor({1, 2, 8})));
  auto small = cli({"denoise", "--ckpt", ckpt, path("small.pgm"), path("o3.pgm")});
  EXPECT_EQ(small.code, 2);
  EXPECT_NE(small.err.find("minimum 3x3"), std::string::npos) << small.err;

  write_pnm(path("tiny.pgm"), tensor_to_image(synthetic_image(1, 8, 8)));
  auto no_ssim = cli({"denoise", "--ckpt", ckpt, path("tiny.pgm"), path("o4.pgm"), "--sigma", "15"});
  EXPECT_EQ(no_ssim.code, 0);
  EXPECT_NE(no_ssim.out.find("ssim\tn/a"), std::string::npos);
}

TEST_F(CliTest, VisualizeWritesHeatmaps) {
  const std::string ckpt = train_tiny();
  auto r = cli({"visualize", "--ckpt", ckpt, path("data/img0.pgm"), path("vis"), "--query-index", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::size_t n = 64;  // origins 0,2,...,12 and 13 per axis
  EXPECT_NE(r.out.find("patches\t64"), std::string::npos);

  Model model = load_model(ckpt);
  ForwardTrace trace;
  trace.keep_first_stage_matrices = true;
  model.infer(image_to_tensor(read_pnm(path("data/img0.pgm"))), &trace);
  for (int k = 0; k < 2; ++k) {
    const std::string base = path("vis_head" + std::to_string(k));
    Image sim = read_pnm(base + "_similarity.pgm"), adj = read_pnm(base + "_adjacency.pgm");
    EXPECT_EQ(sim.width, n);
    EXPECT_EQ(sim.height, n);
    EXPECT_EQ(adj.width, n);
    const GraphState& s = trace.stages[0][k];
    for (std::size_t i = 0; i < n; ++i)
      if (s.neighbor_count[i] == 0)
        for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(adj.pixels[i * n + j], 0);
    Image counts = read_pnm(base + "_neighbor_count.pgm");
    EXPECT_EQ(counts.width, 8u);
    EXPECT_EQ(counts.pixels, neighbor_count_map(s).pixels);
  }
  const std::string listing = slurp(path("vis_neighbors.txt"));
  EXPECT_EQ(listing.substr(0, listing.find('\n')), "head\trank\tindex\torigin_y\torigin_x\tattention\tsimilarity");

  auto bad = cli({"visualize", "--ckpt", ckpt, path("data/img0.pgm"), path("vis"), "--query-index", "64"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("out of range"), std::string::npos);
}

TEST_F(CliTest, AblateTableIsCompleteAndRepeatable) {
  auto a = cli({"ablate", "--config", path("tiny.cfg"), "--data", path("data")});
  ASSERT_EQ(a.code, 0) << a.err;
  std::istringstream lines(a.out);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "mode\tval_psnr\tneighbors_mean\tneighbors_std");
  const char* modes[] = {"FULL\t", "NO_THD\t", "NO_GAT\t", "PIXEL_NL\t"};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(rows[i + 1].rfind(modes[i], 0), 0u) << rows[i + 1];
  auto stats = [](const std::string& row) { return row.substr(row.find('\t', row.find('\t') + 1)); };
  EXPECT_NE(stats(rows[1]), stats(rows[2]));

  auto b = cli({"ablate", "--config", path("tiny.cfg"), "--data", path("data")});
  EXPECT_EQ(a.out, b.out);
}

#ifdef DAGL_CLI_PATH
TEST_F(CliTest, ExecutableExitCodes) {
  auto run = [&](const std::string& args) {
    const int status = std::system((std::string(DAGL_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("train --config " + path("tiny.cfg") + " --data " + path("missing") + " --ckpt " + path("c")), 2);
  EXPECT_EQ(run("train --config " + path("tiny.cfg") + " --data " + path("data") + " --ckpt " + path("c")), 0);
  EXPECT_EQ(run("denoise --ckpt " + path("c") + " " + path("data/img0.pgm") + " " + path("o.pgm")), 0);
  EXPECT_EQ(run("denoise --ckpt " + path("c") + " " + path("data/absent.pgm") + " " + path("o.pgm")), 2);
}
#endif
