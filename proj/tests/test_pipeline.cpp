#include <doctest.h>

#include <filesystem>

#include "dynanet/pipeline.hpp"

using namespace dynanet;
namespace fs = std::filesystem;

namespace {

RunConfig small(Task task) {
  RunConfig cfg;
  cfg.task = task;
  cfg.image_size = 16;
  cfg.n_train = 3;
  cfg.n_val = 2;
  cfg.regress_points = 16;
  cfg.steps_main = 4;
  cfg.steps_tuning = 3;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const { return sub.empty() ? path.string() : (path / sub).string(); }
};

Tensor<Real> from_rows(const std::vector<std::vector<double>>& lum) {
  const auto h = static_cast<Index>(lum.size()), w = static_cast<Index>(lum[0].size());
  Tensor<Real> img({3, h, w});
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        img.at(c, y, x) = static_cast<Real>(lum[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)]);
  return img;
}

Tensor<Real> texture(TextureKind kind, Index scale) {
  TextureSpec spec;
  spec.kind = kind;
  spec.scale = scale;
  spec.seed = 7;
  return quantize(gen_texture<Real>(spec, 16));
}

}  // namespace

TEST_CASE("image task assets") {
  const auto cfg = small(Task::Stylize);
  const auto a = generate_assets(cfg);
  CHECK(a.train_ids == std::vector<std::string>{"train-000", "train-001", "train-002"});
  CHECK(a.val_ids == std::vector<std::string>{"val-000", "val-001"});
  for (const auto& img : a.train) {
    CHECK(img.shape() == Shape{3, 16, 16});
    CHECK(quantize(img).bit_equal(img));
  }
  CHECK_FALSE(a.train[0].bit_equal(a.val[0]));
  CHECK(a.style.bit_equal(texture(TextureKind::Stripes, 4)));
  CHECK(a.style2.bit_equal(texture(TextureKind::Checker, 4)));

  const auto b = generate_assets(cfg);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].bit_equal(b.train[i]));

  auto scales = small(Task::TwoScales);
  const auto s = generate_assets(scales);
  CHECK(s.style2.bit_equal(texture(TextureKind::Stripes, 8)));
  const auto two = generate_assets(small(Task::TwoStyles));
  CHECK(two.style2.bit_equal(texture(TextureKind::Checker, 4)));
}

TEST_CASE("assets round trip through disk") {
  TempDir dir("dynanet_pipeline_assets");
  const auto cfg = small(Task::TwoStyles);
  const auto a = generate_assets(cfg);
  write_assets(a, cfg, dir.str());
  CHECK(fs::exists(dir.path / "train-002.ppm"));
  CHECK(fs::exists(dir.path / "style2.ppm"));
  const auto b = read_assets(cfg, dir.str());
  CHECK(b.train_ids == a.train_ids);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(b.train[i].bit_equal(a.train[i]));
  for (std::size_t i = 0; i < a.val.size(); ++i) CHECK(b.val[i].bit_equal(a.val[i]));
  CHECK(b.style.bit_equal(a.style));
  CHECK(b.style2.bit_equal(a.style2));

  auto bigger = cfg;
  bigger.image_size = 32;
  CHECK_THROWS_AS(read_assets(bigger, dir.str()), ConfigError);
  auto more = cfg;
  more.n_train = 9;
  CHECK_THROWS_AS(read_assets(more, dir.str()), IoError);

  const auto rcfg = small(Task::Regress1d);
  const auto r = generate_assets(rcfg);
  CHECK(r.train_ids == std::vector<std::string>{"grid"});
  write_assets(r, rcfg, dir.str());
  const auto text = read_file(dir.str("regress1d.csv"));
  CHECK(text.rfind("x,t0,t1\n0,0.20000000298023224,0.80000001192092896\n", 0) == 0);
  const auto rb = read_assets(rcfg, dir.str());
  CHECK(rb.regression.grid.bit_equal(r.regression.grid));
  CHECK(rb.regression.target1.bit_equal(r.regression.target1));
  write_file(dir.str("regress1d.csv"), "x,t0,t1\n1,2\n");
  CHECK_THROWS_AS(read_assets(rcfg, dir.str()), FormatError);
}

TEST_CASE("task objectives") {
  const auto st = small(Task::Stylize);
  CHECK(task_objective(st, 5, false) ==
        Objective{{{TermKind::Content, 1.0, "input"}, {TermKind::Style, 5.0, "style"}}});
  CHECK(task_objective(st, 5, true) == task_objective(st, 5, false));
  auto two = small(Task::TwoScales);
  two.content_weight = 2;
  CHECK(task_objective(two, 3, true) ==
        Objective{{{TermKind::Content, 2.0, "input"}, {TermKind::Style, 3.0, "style2"}}});
  CHECK(task_objective(two, 3, false).terms[1].target == "style");
  CHECK(task_objective(small(Task::Regress1d), 0.25, false) ==
        Objective{{{TermKind::MSEPixel, 0.75, "t0"}, {TermKind::MSEPixel, 0.25, "t1"}}});
}

TEST_CASE("task data") {
  const FeatureExtractor<Real> fx;
  const auto cfg = small(Task::TwoStyles);
  const auto d = build_task(cfg, generate_assets(cfg), fx);
  CHECK(d.backbone == image_backbone());
  CHECK(d.train.size() == 3);
  CHECK(d.val[1].id == "val-001");
  CHECK(d.train[0].context.styles.count("style2") == 1);
  CHECK(d.train[0].context.contents.at("input").features.bit_equal(
      make_content_target(fx, d.train[0].input).features));
  CHECK(d.eval.terms.terms.size() == 3);
  CHECK(d.eval.terms.terms[1].target == "style2");
  CHECK(d.eval.lambda_ref == 100);
  CHECK(d.o1.terms[1].weight == 100);

  const auto rcfg = small(Task::Regress1d);
  const auto r = build_task(rcfg, generate_assets(rcfg), fx);
  CHECK(r.backbone == regression_backbone());
  CHECK(r.train[0].context.pixels.at("t1")[0] == Real(0.8));
  CHECK(r.o0 == Objective{{{TermKind::MSEPixel, 1.0, "t0"}, {TermKind::MSEPixel, 0.0, "t1"}}});
  CHECK(r.eval.lambda_ref == 1);
}

TEST_CASE("row transition metric") {
  CHECK(row_transitions(from_rows({{0, 0, 1, 1, 0, 0, 1, 1}, {0, 0, 0, 0, 0, 0, 0, 0}})) == 1.5);
  CHECK(row_transitions(from_rows({{0.2, 0.9, 0.2, 0.9}})) == 3);
  TextureSpec spec;
  for (Index s : {2, 4, 8}) {
    spec.scale = s;
    CHECK(row_transitions(gen_texture<Real>(spec, 32)) == 32 / s - 1);
  }
  CHECK_THROWS_AS(row_transitions(Tensor<Real>({1, 4, 4})), ShapeError);
}

TEST_CASE("training log CSV") {
  TrainLog log{{StepRecord{1.5, {0.5, 0.01}}, StepRecord{0.25, {0.125, 0.00125}}}};
  CHECK(format_log_csv(log, style_transfer_objective(100)) ==
        "step,total,content:input,style:style\n0,1.5,0.5,0.01\n1,0.25,0.125,0.00125\n");
}

TEST_CASE("phase drivers, model files and the interpolation baseline") {
  TempDir dir("dynanet_pipeline_model");
  const FeatureExtractor<Real> fx;
  const auto cfg = small(Task::Stylize);
  const auto data = build_task(cfg, generate_assets(cfg), fx);
  TrainLog log;
  auto net = run_train_main(cfg, data, &log);
  CHECK(log.steps.size() == 4);
  const auto theta = net.theta;
  const auto tlog = run_train_tuning(net, cfg, data);
  CHECK(tlog.steps.size() == 3);
  CHECK(net.theta == theta);

  TrainLog again_log;
  auto again = run_train_main(cfg, data, &again_log);
  CHECK(again_log == log);
  CHECK(again.theta == theta);

  save_model(net, cfg, dir.str("m"));
  const auto loaded = load_model(dir.str("m"));
  CHECK(loaded.cfg == cfg);
  CHECK(loaded.net.theta == net.theta);
  CHECK(loaded.net.psi == net.psi);

  const auto recs = interp_baseline(net, data, {0.0, 0.5, 1.0}, data.eval);
  REQUIRE(recs.size() == 6);
  const auto zero = AlphaVector::uniform(3, 0), one = AlphaVector::uniform(3, 1);
  const auto at0 = evaluate_net(net, {data.val[0]}, data.eval.terms, &zero);
  const auto at1 = evaluate_net(net, {data.val[0]}, data.eval.terms, &one);
  CHECK(recs[0].losses == at0.terms);
  CHECK(recs[2].losses[1] == doctest::Approx(at1.terms[1]));
  CHECK(recs[3].image_id == "val-001");
  const auto mid = image_interp(forward(net, data.val[0].input, zero), forward(net, data.val[0].input, one), 0.5);
  CHECK(recs[1].losses == score_output(net, mid, data.val[0], data.eval.terms).terms);

  // A psi file from a different architecture is rejected.
  save_weights(init_tuning_params<Real>(regression_backbone(), 1), dir.str("m/psi.dynw"));
  CHECK_THROWS_AS(load_model(dir.str("m")), FormatError);
  CHECK_THROWS_AS(load_model(dir.str("missing")), IoError);

  const auto fixed = run_train_fixed(cfg, data, 10);
  CHECK(fixed.log.steps.size() == 4);
  // At the main objective's λ the fixed net is the phase-1 network.
  const auto same = run_train_fixed(cfg, data, cfg.effective_lambda0());
  CHECK(same.net.theta == theta);
  CHECK(same.log == log);
  CHECK(fixed.record.losses.size() == 2);
  const auto rcfg = small(Task::Regress1d);
  const auto rdata = build_task(rcfg, generate_assets(rcfg), fx);
  CHECK_THROWS_AS(run_train_fixed(rcfg, rdata, 10), UsageError);
}

TEST_CASE("path helpers") {
  CHECK(join_path("a", "b.txt") == (fs::path("a") / "b.txt").string());
  CHECK(join_path("a", "/abs") == "/abs");
  CHECK(join_path("", "b") == "b");
  TempDir dir("dynanet_pipeline_paths");
  ensure_dir(dir.str("x/y/z"));
  CHECK(fs::is_directory(dir.path / "x/y/z"));
  write_file(dir.str("file"), "x");
  CHECK_THROWS_AS(ensure_dir(dir.str("file/sub")), IoError);
}
