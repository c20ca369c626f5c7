#include "dynanet/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

namespace dynanet {

std::string join_path(const std::string& a, const std::string& b) {
  if (a.empty() || std::filesystem::path(b).is_absolute()) return b;
  return (std::filesystem::path(a) / b).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

namespace {

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%03zu", prefix, i);
  return buf;
}

TextureSpec style_spec(const RunConfig& cfg, bool second) {
  TextureSpec spec;
  spec.seed = cfg.style_seed;
  if (!second) {
    spec.kind = cfg.style_kind;
    spec.scale = cfg.style_scale;
  } else {
    spec.kind = cfg.task == Task::TwoScales ? cfg.style_kind : cfg.style2_kind;
    spec.scale = cfg.effective_style2_scale();
  }
  return spec;
}

bool is_image_task(Task task) { return task != Task::Regress1d; }

std::string regression_csv(const Regression1DTask<Real>& r) {
  std::string out = "x,t0,t1\n";
  char buf[96];
  for (Index i = 0; i < r.grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", static_cast<double>(r.grid[i]),
                  static_cast<double>(r.target0[i]), static_cast<double>(r.target1[i]));
    out += buf;
  }
  return out;
}

Regression1DTask<Real> parse_regression_csv(const std::string& text, const std::string& path) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "x,t0,t1") throw FormatError(path + ": missing 'x,t0,t1' header", 0);
  std::vector<double> x, t0, t1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double a = 0, b = 0, c = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &a, &b, &c) != 3) {
      throw FormatError(path + ": malformed row '" + line + "'", static_cast<std::size_t>(in.tellg()));
    }
    x.push_back(a);
    t0.push_back(b);
    t1.push_back(c);
  }
  const auto n = static_cast<Index>(x.size());
  if (n < 16) throw FormatError(path + ": regression task needs at least 16 rows", text.size());
  Regression1DTask<Real> r{Tensor<Real>({1, 1, n}), Tensor<Real>({1, 1, n}), Tensor<Real>({1, 1, n})};
  for (Index i = 0; i < n; ++i) {
    r.grid[i] = static_cast<Real>(x[static_cast<std::size_t>(i)]);
    r.target0[i] = static_cast<Real>(t0[static_cast<std::size_t>(i)]);
    r.target1[i] = static_cast<Real>(t1[static_cast<std::size_t>(i)]);
  }
  return r;
}

}  // namespace

TaskAssets generate_assets(const RunConfig& cfg) {
  cfg.validate();
  TaskAssets a;
  if (!is_image_task(cfg.task)) {
    a.regression = make_regression_task<Real>(cfg.regress_kind, cfg.regress_points);
    a.train_ids = {"grid"};
    a.val_ids = {"grid"};
    a.train = {a.regression.grid};
    a.val = {a.regression.grid};
    return a;
  }
  for (auto& img : gen_content<Real>(cfg.n_train, cfg.image_size, cfg.data_seed)) a.train.push_back(quantize(img));
  for (auto& img : gen_content<Real>(cfg.n_val, cfg.image_size, mix_seed(cfg.data_seed, 0x7A1)))
    a.val.push_back(quantize(img));
  for (std::size_t i = 0; i < a.train.size(); ++i) a.train_ids.push_back(numbered("train", i));
  for (std::size_t i = 0; i < a.val.size(); ++i) a.val_ids.push_back(numbered("val", i));
  a.style = quantize(gen_texture<Real>(style_spec(cfg, false), cfg.image_size));
  a.style2 = quantize(gen_texture<Real>(style_spec(cfg, true), cfg.image_size));
  return a;
}

void write_assets(const TaskAssets& assets, const RunConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  if (!is_image_task(cfg.task)) {
    write_file(join_path(dir, "regress1d.csv"), regression_csv(assets.regression));
    return;
  }
  for (std::size_t i = 0; i < assets.train.size(); ++i)
    save_ppm(assets.train[i], join_path(dir, assets.train_ids[i] + ".ppm"));
  for (std::size_t i = 0; i < assets.val.size(); ++i)
    save_ppm(assets.val[i], join_path(dir, assets.val_ids[i] + ".ppm"));
  save_ppm(assets.style, join_path(dir, "style.ppm"));
  save_ppm(assets.style2, join_path(dir, "style2.ppm"));
}

TaskAssets read_assets(const RunConfig& cfg, const std::string& dir) {
  cfg.validate();
  TaskAssets a;
  if (!is_image_task(cfg.task)) {
    const auto path = join_path(dir, "regress1d.csv");
    a.regression = parse_regression_csv(read_file(path), path);
    a.train_ids = {"grid"};
    a.val_ids = {"grid"};
    a.train = {a.regression.grid};
    a.val = {a.regression.grid};
    return a;
  }
  auto load = [&](const std::string& name) {
    auto img = load_ppm<Real>(join_path(dir, name + ".ppm"));
    if (img.dim(1) != cfg.image_size || img.dim(2) != cfg.image_size) {
      throw ConfigError(name + ".ppm is " + std::to_string(img.dim(2)) + "x" + std::to_string(img.dim(1)) +
                        " but image_size is " + std::to_string(cfg.image_size));
    }
    return img;
  };
  for (std::size_t i = 0; i < cfg.n_train; ++i) {
    a.train_ids.push_back(numbered("train", i));
    a.train.push_back(load(a.train_ids.back()));
  }
  for (std::size_t i = 0; i < cfg.n_val; ++i) {
    a.val_ids.push_back(numbered("val", i));
    a.val.push_back(load(a.val_ids.back()));
  }
  a.style = load("style");
  a.style2 = load("style2");
  return a;
}

BackboneSpec task_backbone(Task task) {
  return task == Task::Regress1d ? regression_backbone() : image_backbone();
}

Objective task_objective(const RunConfig& cfg, double lambda, bool tuning) {
  Objective o;
  if (cfg.task == Task::Regress1d) {
    o.terms = {Term{TermKind::MSEPixel, 1.0 - lambda, "t0"}, Term{TermKind::MSEPixel, lambda, "t1"}};
  } else {
    const bool disjoint = cfg.task == Task::TwoStyles || cfg.task == Task::TwoScales;
    o.terms = {Term{TermKind::Content, cfg.content_weight, "input"},
               Term{TermKind::Style, lambda, tuning && disjoint ? "style2" : "style"}};
  }
  o.validate();
  return o;
}

namespace {

Objective eval_terms(const RunConfig& cfg) {
  switch (cfg.task) {
    case Task::Regress1d:
      return Objective{{Term{TermKind::MSEPixel, 1.0, "t0"}, Term{TermKind::MSEPixel, 1.0, "t1"}}};
    case Task::TwoStyles:
    case Task::TwoScales:
      // The style column tracks the tuning target; the main target is an extra term.
      return Objective{{Term{TermKind::Content, 1.0, "input"}, Term{TermKind::Style, 1.0, "style2"},
                        Term{TermKind::Style, 1.0, "style"}}};
    default:
      return Objective{{Term{TermKind::Content, 1.0, "input"}, Term{TermKind::Style, 1.0, "style"}}};
  }
}

}  // namespace

TaskData build_task(const RunConfig& cfg, const TaskAssets& assets, const FeatureExtractor<Real>& extractor) {
  cfg.validate();
  TaskData d;
  d.backbone = task_backbone(cfg.task);
  d.o0 = task_objective(cfg, cfg.effective_lambda0(), false);
  d.o1 = task_objective(cfg, cfg.effective_lambda1(), true);
  d.eval = EvalSetup{eval_terms(cfg), cfg.effective_lambda_ref()};

  Context<Real> shared;
  if (is_image_task(cfg.task)) {
    shared.styles["style"] = make_style_target(extractor, assets.style);
    shared.styles["style2"] = make_style_target(extractor, assets.style2);
  } else {
    shared.pixels["t0"] = assets.regression.target0;
    shared.pixels["t1"] = assets.regression.target1;
  }
  auto make = [&](const std::vector<Tensor<Real>>& images, const std::vector<std::string>& ids) {
    std::vector<Sample<Real>> out;
    for (std::size_t i = 0; i < images.size(); ++i) {
      Sample<Real> s{ids[i], images[i], shared};
      if (is_image_task(cfg.task)) s.context.contents["input"] = make_content_target(extractor, images[i]);
      out.push_back(std::move(s));
    }
    return out;
  };
  d.train = make(assets.train, assets.train_ids);
  d.val = make(assets.val, assets.val_ids);
  return d;
}

namespace {

std::size_t batch_for(const RunConfig& cfg, const TaskData& data) {
  return std::min(cfg.batch_size, data.train.size());
}

}  // namespace

DynamicNet<Real> run_train_main(const RunConfig& cfg, const TaskData& data, TrainLog* log,
                                const StepCallback& on_step) {
  auto net = DynamicNet<Real>::create(data.backbone, cfg.seed);
  auto stream = shuffled_batches(data.train, batch_for(cfg, data), mix_seed(cfg.seed, 10));
  auto result = train_main(net, stream, data.o0, cfg.train_config(cfg.steps_main), on_step);
  if (log) *log = std::move(result);
  return net;
}

TrainLog run_train_tuning(DynamicNet<Real>& net, const RunConfig& cfg, const TaskData& data,
                          const StepCallback& on_step) {
  auto stream = shuffled_batches(data.train, batch_for(cfg, data), mix_seed(cfg.seed, 11));
  return train_tuning(net, stream, data.o1, cfg.train_config(cfg.steps_tuning), on_step);
}

FixedNet<Real> run_train_fixed(const RunConfig& cfg, const TaskData& data, double lambda) {
  if (!is_image_task(cfg.task)) throw UsageError("fixed-net baselines need an image task");
  auto stream = shuffled_batches(data.train, batch_for(cfg, data), mix_seed(cfg.seed, 10));
  return train_fixed(lambda, data.backbone, stream, data.val, data.eval, cfg.train_config(cfg.steps_main));
}

StepRecord score_output(const DynamicNet<Real>& net, const Tensor<Real>& output, const Sample<Real>& sample,
                        const Objective& terms) {
  Tape<Real> tape;
  auto eval = evaluate(terms, *net.extractor, tape.constant(output), sample.context);
  return StepRecord{static_cast<double>(eval.total.item()), eval.term_values()};
}

std::vector<SweepRecord> interp_baseline(const DynamicNet<Real>& net, const TaskData& data,
                                         const std::vector<double>& alphas, const EvalSetup& eval) {
  std::vector<SweepRecord> out;
  const auto zero = AlphaVector::uniform(net.blocks(), 0.0), one = AlphaVector::uniform(net.blocks(), 1.0);
  for (const auto& sample : data.val) {
    const auto a = forward(net, sample.input, zero), b = forward(net, sample.input, one);
    for (double alpha : alphas) {
      const auto img = image_interp(a, b, alpha);
      out.push_back(make_record(AlphaVector::uniform(net.blocks(), alpha), score_output(net, img, sample, eval.terms),
                                eval, sample.id));
    }
  }
  return out;
}

std::string format_log_csv(const TrainLog& log, const Objective& objective) {
  std::string out = "step,total";
  for (const auto& t : objective.terms) out += "," + std::string(term_kind_name(t.kind)) + ":" + t.target;
  out += "\n";
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    out += std::to_string(i) + "," + format_number(log.steps[i].total);
    for (double v : log.steps[i].terms) out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

double row_transitions(const Tensor<Real>& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("row_transitions expects a 3xHxW image");
  const Index h = img.dim(1), w = img.dim(2);
  double total = 0.0;
  std::vector<double> lum(static_cast<std::size_t>(w));
  for (Index y = 0; y < h; ++y) {
    double mean = 0.0;
    for (Index x = 0; x < w; ++x) {
      double l = 0.0;
      for (Index c = 0; c < 3; ++c) l += static_cast<double>(img.at(c, y, x)) / 3.0;
      lum[static_cast<std::size_t>(x)] = l;
      mean += l / static_cast<double>(w);
    }
    for (Index x = 1; x < w; ++x) {
      total += (lum[static_cast<std::size_t>(x)] > mean) != (lum[static_cast<std::size_t>(x - 1)] > mean) ? 1.0 : 0.0;
    }
  }
  return total / static_cast<double>(h);
}

void save_model(const DynamicNet<Real>& net, const RunConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  save_weights(net.theta, join_path(dir, "theta.dynw"));
  save_weights(net.psi, join_path(dir, "psi.dynw"));
  write_file(join_path(dir, "model.cfg"), dump_config(cfg));
}

namespace {

void check_layout(const ParamStore<Real>& expected, const ParamStore<Real>& got, const std::string& file) {
  if (expected.size() != got.size()) {
    throw FormatError(file + ": expected " + std::to_string(expected.size()) + " tensors, found " +
                          std::to_string(got.size()),
                      0);
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != got[i].name || expected[i].value.shape() != got[i].value.shape()) {
      throw FormatError(file + ": tensor " + std::to_string(i) + " is '" + got[i].name + "' " +
                            shape_string(got[i].value.shape()) + ", architecture expects '" + expected[i].name +
                            "' " + shape_string(expected[i].value.shape()),
                        0);
    }
  }
}

}  // namespace

LoadedModel load_model(const std::string& dir) {
  LoadedModel m;
  m.cfg = parse_config(read_file(join_path(dir, "model.cfg")));
  m.net = DynamicNet<Real>::create(task_backbone(m.cfg.task), m.cfg.seed);
  auto theta = load_weights<Real>(join_path(dir, "theta.dynw"));
  auto psi = load_weights<Real>(join_path(dir, "psi.dynw"));
  check_layout(m.net.theta, theta, "theta.dynw");
  check_layout(m.net.psi, psi, "psi.dynw");
  m.net.theta = std::move(theta);
  m.net.psi = std::move(psi);
  return m;
}

}  // namespace dynanet
