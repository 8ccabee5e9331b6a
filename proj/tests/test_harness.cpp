#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "selftune/config.hpp"
#include "selftune/error.hpp"
#include "selftune/harness.hpp"
#include "selftune/png_io.hpp"
#include "selftune/weights_io.hpp"
#include "support.hpp"

using namespace selftune;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.input_size = 16;
  s.base_channels = 4;
  s.depth = 1;
  s.dilations = {2};
  return s;
}

FreeformSpec small_holes() {
  FreeformSpec f;
  f.width_min = 2;
  f.width_max = 4;
  f.length_min = 2;
  f.length_max = 5;
  return f;
}

// Weights, spec sidecar and a two-image experiment in a temp directory.
struct Setup {
  testing::TempDir dir{"harness"};
  ExperimentConfig config;

  Setup() {
    const Generator gen(tiny_spec());
    save_weights(gen.init_params(3), dir / "w.bin");
    write_json(to_json(tiny_spec()), spec_sidecar(dir / "w.bin"));
    config.weights = dir / "w.bin";
    config.dataset.image_size = 16;
    config.dataset.period_min = 2;
    config.dataset.period_max = 6;
    config.dataset.count = 2;
    config.holes = small_holes();
    config.finetune.batch = 2;
    config.finetune.lr = 1e-3;
    config.finetune.mask_spec = small_holes();
    config.finetune.eval_every = 0;
    config.checkpoints = {0, 10};
    config.output_dir = dir / "out";
  }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Command {
  int status = 0;
  std::string out;
};

Command run(const std::string& args) {
  const std::string cmd = std::string(SELFTUNE_CLI) + " " + args + " 2>&1";
  Command r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 256> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

}  // namespace

TEST_CASE("experiment config JSON round trip") {
  ExperimentConfig c;
  c.weights = "w.bin";
  c.checkpoints = {0, 5, 50};
  c.metrics = {Metric::psnr};
  c.finetune.auto_stop = StopPolicy{2, 3, 4};
  c.finetune.eval_every = 5;
  c.finetune.mask_spec = RectSpec{8, 8, RectOrigin{1, 2}};
  c.seed = 42;
  c.timing = true;
  c.workers = 3;
  const ExperimentConfig back = experiment_config_from_json(to_json(c));
  CHECK(back == c);

  PretrainConfig p;
  p.train.epochs = 7;
  p.dataset.families = {PatternFamily::bricks, PatternFamily::noise};
  CHECK(pretrain_config_from_json(to_json(p)) == p);
  CHECK(model_spec_from_json(to_json(tiny_spec())) == tiny_spec());
}

TEST_CASE("config readers reject bad input") {
  Json j = to_json(ExperimentConfig{});
  j["weights"] = "w.bin";
  j["colour"] = 1;
  CHECK_THROWS_AS(experiment_config_from_json(j), ConfigError);
  j.erase("colour");
  j["workers"] = "two";
  CHECK_THROWS_AS(experiment_config_from_json(j), ConfigError);
  j["workers"] = 1;
  j["checkpoints"] = Json::array({10, 20});
  CHECK_THROWS_AS(experiment_config_from_json(j), ConfigError);
  j["checkpoints"] = Json::array({0, 20});
  j["finetune"]["iterations"] = 5;
  CHECK_THROWS_AS(experiment_config_from_json(j), ConfigError);

  Json m = to_json(ModelSpec{});
  m["depth"] = -1;
  CHECK_THROWS_AS(model_spec_from_json(m), ConfigError);

  testing::TempDir dir("cfg");
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(read_json(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config(dir / "missing.json"), IoError);

  Json e = to_json(ExperimentConfig{});
  e["weights"] = "nowhere.bin";
  write_json(e, dir / "e.json");
  CHECK_THROWS_AS(load_experiment_config(dir / "e.json"), ConfigError);
}

TEST_CASE("relative paths resolve against the config file") {
  Setup s;
  std::filesystem::create_directories(s.dir / "sub");
  Json j = to_json(s.config);
  j["weights"] = "../w.bin";
  j["output_dir"] = "res";
  write_json(j, s.dir / "sub" / "exp.json");
  const auto c = load_experiment_config(s.dir / "sub" / "exp.json");
  CHECK(std::filesystem::equivalent(c.weights, s.dir / "w.bin"));
  CHECK(c.output_dir == s.dir / "sub" / "res");
}

TEST_CASE("experiment report") {
  Setup s;
  std::vector<std::size_t> progress;
  const auto report = run_experiment(s.config, [&](std::size_t done, std::size_t, const ImageOutcome&) {
    progress.push_back(done);
  });
  CHECK(progress == std::vector<std::size_t>{1, 2});
  REQUIRE(report.rows.size() == 6);
  REQUIRE(report.images.size() == 2);
  for (int i = 0; i < 4; ++i) {
    const auto& r = report.rows[i];
    CHECK(r.image_id == report.images[i / 2].image_id);
    CHECK(r.T == (i % 2 ? 10 : 0));
    CHECK(r.psnr.has_value());
    CHECK(r.ssim.has_value());
    CHECK_FALSE(r.seconds.has_value());
    CHECK(r.stop_reason == "budget");
  }
  CHECK(report.rows[4].image_id == kMeanId);
  CHECK(report.rows[4].T == 0);
  CHECK(*report.rows[4].psnr == doctest::Approx((*report.rows[0].psnr + *report.rows[2].psnr) / 2));
  CHECK(report.rows[5].T == 10);

  const std::string id = report.images[0].image_id;
  CHECK(id.starts_with("000_"));
  for (const char* f : {"baseline.png", "final.png", "mask.png", "input.png", "run_log.csv"})
    CHECK(std::filesystem::exists(s.config.output_dir / id / f));

  const std::string text = format_report(report.rows);
  CHECK(text.rfind(std::string(kReportHeader) + "\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);

  // a second run writes the identical report
  write_report(report.rows, s.dir / "a.csv");
  write_report(run_experiment(s.config).rows, s.dir / "b.csv");
  CHECK(slurp(s.dir / "a.csv") == slurp(s.dir / "b.csv"));

  // and so does a multi-threaded one
  s.config.workers = 2;
  write_report(run_experiment(s.config).rows, s.dir / "c.csv");
  CHECK(slurp(s.dir / "a.csv") == slurp(s.dir / "c.csv"));
}

TEST_CASE("zero budget returns the baseline") {
  Setup s;
  s.config.checkpoints = {0};
  const auto report = run_experiment(s.config);
  REQUIRE(report.rows.size() == 3);
  for (const auto& img : report.images) {
    const auto dir = s.config.output_dir / img.image_id;
    CHECK(load_image(dir / "final.png") == load_image(dir / "baseline.png"));
  }
}

TEST_CASE("image folders, mask folders and failures") {
  Setup s;
  std::filesystem::create_directories(s.dir / "imgs");
  std::filesystem::create_directories(s.dir / "masks");
  save_image(testing::random_image(16, 16, 3, 1), s.dir / "imgs" / "good.png");
  save_image(testing::random_image(20, 16, 3, 2), s.dir / "imgs" / "bad_mask.png");
  save_image(testing::random_image(16, 16, 3, 3), s.dir / "imgs" / "no_mask.png");
  save_mask(gen_freeform(16, 16, small_holes(), 4), s.dir / "masks" / "good.png");
  save_mask(Mask(8, 8, 1), s.dir / "masks" / "bad_mask.png");
  s.config.image_folder = s.dir / "imgs";
  s.config.mask_folder = s.dir / "masks";
  const auto report = run_experiment(s.config);
  std::vector<std::string> ids;
  for (const auto& r : report.rows) ids.push_back(r.image_id + ":" + (r.T ? std::to_string(*r.T) : "-"));
  INFO(fmt::format("{}", fmt::join(ids, " ")));
  CHECK(ids == std::vector<std::string>{"bad_mask:-", "good:0", "good:10", "no_mask:-", "mean:0", "mean:10"});
  CHECK(report.rows[0].stop_reason.starts_with("error: "));
  CHECK(report.rows[3].stop_reason.starts_with("error: "));
  CHECK(report.rows[3].stop_reason.find('\n') == std::string::npos);
  CHECK(*report.rows[4].psnr == *report.rows[1].psnr);
  CHECK(std::filesystem::exists(s.config.output_dir / "good" / "final.png"));
}

TEST_CASE("command line") {
  testing::TempDir dir("cli");
  const auto img = dir / "a.png";
  save_image(testing::random_image(16, 16, 3, 1), img);

  auto r = run("metrics --a " + img.string() + " --b " + img.string());
  CHECK(r.status == 0);
  CHECK(r.out == "psnr=100.00 ssim=1.0000\n");

  CHECK(run("metrics --a " + img.string() + " --b " + img.string() + " --bogus").status == 1);
  CHECK(run("").status == 1);
  CHECK(run("--help").status == 0);
  r = run("metrics --a " + img.string() + " --b " + (dir / "missing.png").string());
  CHECK(r.status == 2);
  CHECK(r.out.rfind("error: ", 0) == 0);

  r = run("maskgen --height 32 --width 32 --seed 3 --out " + (dir / "m.png").string());
  CHECK(r.status == 0);
  const Mask m = load_mask(dir / "m.png");
  CHECK(m.height() == 32);
  CHECK(r.out.find("coverage=") != std::string::npos);

  r = run("config --kind experiment --out " + (dir / "exp.json").string());
  CHECK(r.status == 0);
  Json j = read_json(dir / "exp.json");
  j["weights"] = "w.bin";
  CHECK_NOTHROW(experiment_config_from_json(j));
}

TEST_CASE("command line fine-tuning") {
  Setup s;
  const auto img = s.dir / "img.png";
  save_image(testing::random_image(16, 16, 3, 7), img);
  save_mask(gen_freeform(16, 16, small_holes(), 4), s.dir / "hole.png");
  FinetuneConfig ft;
  ft.batch = 2;
  ft.mask_spec = small_holes();
  ft.eval_every = 0;
  write_json(to_json(ft), s.dir / "ft.json");
  const std::string base = "finetune --weights " + (s.dir / "w.bin").string() + " --image " + img.string() +
                           " --mask " + (s.dir / "hole.png").string() + " --config " + (s.dir / "ft.json").string() +
                           " --seed 4 --baseline " + (s.dir / "base.png").string();
  auto r = run(base + " --iters 0 --out " + (s.dir / "zero.png").string());
  REQUIRE_MESSAGE(r.status == 0, r.out);
  CHECK(load_image(s.dir / "zero.png") == load_image(s.dir / "base.png"));

  r = run(base + " --iters 3 --out " + (s.dir / "three.png").string());
  REQUIRE_MESSAGE(r.status == 0, r.out);
  CHECK(r.out.find("stop=budget") != std::string::npos);

  CHECK(run(base + " --iters 3 --auto-stop --out x.png").status == 1);
  save_image(testing::random_image(8, 8, 3, 7), s.dir / "small.png");
  CHECK(run("finetune --weights " + (s.dir / "w.bin").string() + " --image " + (s.dir / "small.png").string() +
            " --mask gen --out " + (s.dir / "o.png").string())
            .status == 2);
}
