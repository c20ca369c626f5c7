#include <doctest.h>

#include <set>

#include "dynanet/config.hpp"

using namespace dynanet;

TEST_CASE("defaults are valid and dump in documented order") {
  const RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const std::string dump = dump_config(cfg);
  std::size_t pos = 0;
  for (const auto& key : config_keys()) {
    const auto at = dump.find(key.name + " = ", pos);
    REQUIRE_MESSAGE(at != std::string::npos, key.name);
    CHECK(!key.doc.empty());
    pos = at;
  }
  CHECK(dump.find("task = stylize\n") != std::string::npos);
  CHECK(dump.find("sweep_alphas = [0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1]\n") != std::string::npos);
  CHECK(dump.find("data_dir = \"data\"\n") != std::string::npos);
  CHECK(dump.find("adam_eps = 1e-08\n") != std::string::npos);

  std::set<std::string> names;
  for (const auto& key : config_keys()) names.insert(key.name);
  CHECK(names.size() == config_keys().size());
}

TEST_CASE("parsing applies every value type") {
  const auto cfg = parse_config(R"(
# comment line
task = two-scales
image_size = 32   # trailing comment
lambda1 = 2.5e2
sweep_alphas = [ -1, 0.5 ,2 ]
out_dir = "results # not a comment"
model_dir = plain
style_kind = "noise"
regress_kind = sine-pair
threads = 3
)");
  CHECK(cfg.task == Task::TwoScales);
  CHECK(cfg.image_size == 32);
  CHECK(cfg.lambda1 == 250.0);
  CHECK(cfg.sweep_alphas == std::vector<double>{-1, 0.5, 2});
  CHECK(cfg.out_dir == "results # not a comment");
  CHECK(cfg.model_dir == "plain");
  CHECK(cfg.style_kind == TextureKind::Noise);
  CHECK(cfg.regress_kind == RegressionKind::SinePair);
  CHECK(cfg.threads == 3);
  CHECK(cfg.n_train == RunConfig{}.n_train);
}

TEST_CASE("dump round trips exactly") {
  RunConfig cfg;
  cfg.task = Task::Regress1d;
  cfg.lambda0 = 0.1 + 0.2;
  cfg.learning_rate = 1.0 / 3.0;
  cfg.fixed_lambdas = {1e-300, 12345.678901234567};
  cfg.data_dir = "some dir";
  cfg.style2_kind = TextureKind::Blobs;
  CHECK(parse_config(dump_config(cfg)) == cfg);
  CHECK(read_config_value(cfg, "task") == "regress1d");
  CHECK(read_config_value(cfg, "learning_rate") == "0.3333333333333333");
}

TEST_CASE("base configuration is overlaid") {
  RunConfig base;
  base.seed = 42;
  const auto cfg = parse_config("steps_main = 5\n", base);
  CHECK(cfg.seed == 42);
  CHECK(cfg.steps_main == 5);
}

TEST_CASE("errors carry line numbers") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("\n\nbogus = 1\n").find("line 3") != std::string::npos);
  CHECK(message("bogus = 1").find("unknown config key 'bogus'") != std::string::npos);
  CHECK(message("task\n").find("line 1") != std::string::npos);
  CHECK_FALSE(message("seed = -1").empty());
  CHECK_FALSE(message("seed = 1.5").empty());
  CHECK_FALSE(message("seed = ").empty());
  CHECK_FALSE(message("lambda0 = abc").empty());
  CHECK_FALSE(message("lambda0 = 1x").empty());
  CHECK_FALSE(message("lambda0 = nan").empty());
  CHECK_FALSE(message("lambda0 = inf").empty());
  CHECK_FALSE(message("sweep_alphas = 1, 2").empty());
  CHECK_FALSE(message("sweep_alphas = [1, , 2]").empty());
  CHECK_FALSE(message("task = painting").empty());
  CHECK_FALSE(message("style_kind = plaid").empty());
  CHECK_FALSE(message("out_dir = \"a").empty());
}

TEST_CASE("validation") {
  auto invalid = [](auto mutate) {
    RunConfig cfg;
    mutate(cfg);
    return [cfg] { cfg.validate(); };
  };
  CHECK_THROWS_AS(invalid([](RunConfig& c) { c.image_size = 30; })(), ConfigError);
  CHECK_THROWS_AS(invalid([](RunConfig& c) { c.image_size = 12; })(), ConfigError);
  CHECK_THROWS_AS(invalid([](RunConfig& c) { c.n_val = 0; })(), ConfigError);
  CHECK_THROWS_AS(invalid([](RunConfig& c) { c.sweep_alphas.clear(); })(), ConfigError);
  CHECK_THROWS_AS(invalid([](RunConfig& c) { c.grid_values.clear(); })(), ConfigError);
  CHECK_THROWS_AS(invalid([](RunConfig& c) { c.threads = 0; })(), ConfigError);
  CHECK_THROWS_AS(invalid([](RunConfig& c) { c.batch_size = 0; })(), ConfigError);
  CHECK_THROWS_AS(invalid([](RunConfig& c) { c.beta2 = 1; })(), ConfigError);
  CHECK_THROWS_AS(invalid([](RunConfig& c) { c.content_weight = -1; })(), ConfigError);
  CHECK_THROWS_AS(invalid([](RunConfig& c) {
                    c.task = Task::Regress1d;
                    c.regress_points = 8;
                  })(),
                  ConfigError);
  // Image size is irrelevant to the 1D task.
  CHECK_NOTHROW(invalid([](RunConfig& c) {
    c.task = Task::Regress1d;
    c.image_size = 3;
  })());
  CHECK_THROWS_AS(parse_config("image_size = 30"), ConfigError);
}

TEST_CASE("task defaults") {
  struct Row {
    Task task;
    double l0, l1, ref;
  };
  for (const auto& r : {Row{Task::Stylize, 1, 100, 1}, Row{Task::FailureCase, 100, 0, 100},
                        Row{Task::TwoStyles, 100, 100, 100}, Row{Task::TwoScales, 100, 100, 100},
                        Row{Task::Regress1d, 0, 1, 1}}) {
    RunConfig cfg;
    cfg.task = r.task;
    INFO(task_name(r.task));
    CHECK(cfg.effective_lambda0() == r.l0);
    CHECK(cfg.effective_lambda1() == r.l1);
    CHECK(cfg.effective_lambda_ref() == r.ref);
    CHECK(parse_task(task_name(r.task)) == r.task);
  }
  RunConfig cfg;
  cfg.lambda0 = 3;
  cfg.lambda1 = 0;
  cfg.lambda_ref = 7;
  CHECK(cfg.effective_lambda0() == 3);
  CHECK(cfg.effective_lambda1() == 0);
  CHECK(cfg.effective_lambda_ref() == 7);

  cfg = {};
  cfg.style_scale = 4;
  CHECK(cfg.effective_style2_scale() == 4);
  cfg.task = Task::TwoScales;
  CHECK(cfg.effective_style2_scale() == 8);
  cfg.style2_scale = 2;
  CHECK(cfg.effective_style2_scale() == 2);
}

TEST_CASE("training settings are forwarded") {
  RunConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.beta1 = 0.5;
  cfg.beta2 = 0.9;
  cfg.adam_eps = 1e-6;
  cfg.batch_size = 2;
  cfg.seed = 9;
  const auto t = cfg.train_config(17);
  CHECK(t.learning_rate == 0.01);
  CHECK(t.beta1 == 0.5);
  CHECK(t.beta2 == 0.9);
  CHECK(t.eps == 1e-6);
  CHECK(t.batch_size == 2);
  CHECK(t.seed == 9);
  CHECK(t.steps == 17);
}
