// Command-line driver: data generation, both training phases, baselines,
// sweeps, inference, gradient self-check and the HTTP service.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dynanet/gradsuite.hpp"
#include "dynanet/pipeline.hpp"
#include "dynanet/service.hpp"

using namespace dynanet;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string workdir = ".";
  std::size_t threads = 0;
  bool print_config = false;

  // infer
  std::string alpha = "0";
  std::string image;
  std::string input;
  std::string output;
  // sweep
  bool interp = false;
  // gradcheck
  std::size_t grad_seeds = 10;
  bool grad_double = false;
  // serve
  std::string host = "127.0.0.1";
  int port = kDefaultPort;
};

RunConfig effective_config(const Options& opt) {
  RunConfig cfg;
  if (!opt.config_path.empty()) cfg = parse_config(read_file(opt.config_path));
  if (const char* env = std::getenv("DYNANET_SEED"); env && *env) apply_config_value(cfg, "seed", env);
  for (const auto& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opt.threads > 0) cfg.threads = opt.threads;
  cfg.validate();
  return cfg;
}

std::string path_in(const Options& opt, const std::string& dir, const std::string& file = "") {
  const auto base = join_path(opt.workdir, dir);
  return file.empty() ? base : join_path(base, file);
}

StepCallback progress(const char* phase, std::size_t steps) {
  const std::size_t every = std::max<std::size_t>(1, steps / 20);
  return [phase, steps, every](std::size_t step, const StepRecord& rec) {
    if ((step + 1) % every == 0 || step + 1 == steps) {
      std::fprintf(stderr, "%s step %zu/%zu loss %.6g\n", phase, step + 1, steps, rec.total);
    }
  };
}

TaskData load_task(const RunConfig& cfg, const Options& opt, const FeatureExtractor<Real>& extractor) {
  return build_task(cfg, read_assets(cfg, path_in(opt, cfg.data_dir)), extractor);
}

// Loads the trained model and checks that it was built for the configured task.
LoadedModel load_checked(const RunConfig& cfg, const Options& opt) {
  auto model = load_model(path_in(opt, cfg.model_dir));
  if (model.cfg.task != cfg.task) {
    throw ConfigError("model in '" + cfg.model_dir + "' was trained for task " +
                      std::string(task_name(model.cfg.task)) + ", config says " + std::string(task_name(cfg.task)));
  }
  return model;
}

void mean_table(const std::vector<SweepRecord>& records, std::size_t per_image, std::vector<double>& content,
                std::vector<double>& style) {
  content.assign(per_image, 0.0);
  style.assign(per_image, 0.0);
  const double images = static_cast<double>(records.size() / per_image);
  for (std::size_t i = 0; i < records.size(); ++i) {
    content[i % per_image] += records[i].content() / images;
    style[i % per_image] += records[i].style() / images;
  }
}

int cmd_gen_data(const RunConfig& cfg, const Options& opt) {
  const auto dir = path_in(opt, cfg.data_dir);
  write_assets(generate_assets(cfg), cfg, dir);
  std::printf("wrote %s assets to %s\n", std::string(task_name(cfg.task)).c_str(), dir.c_str());
  return 0;
}

int cmd_train_main(const RunConfig& cfg, const Options& opt) {
  FeatureExtractor<Real> extractor;
  const auto data = load_task(cfg, opt, extractor);
  TrainLog log;
  auto net = run_train_main(cfg, data, &log, progress("train-main", cfg.steps_main));
  save_model(net, cfg, path_in(opt, cfg.model_dir));
  ensure_dir(path_in(opt, cfg.out_dir));
  write_file(path_in(opt, cfg.out_dir, "train_main_log.csv"), format_log_csv(log, data.o0));
  std::printf("main network saved to %s (final loss %.6g)\n", path_in(opt, cfg.model_dir).c_str(),
              log.steps.back().total);
  return 0;
}

int cmd_train_tuning(const RunConfig& cfg, const Options& opt) {
  auto model = load_checked(cfg, opt);
  const auto data = load_task(cfg, opt, *model.net.extractor);
  const auto log = run_train_tuning(model.net, cfg, data, progress("train-tuning", cfg.steps_tuning));
  save_model(model.net, cfg, path_in(opt, cfg.model_dir));
  ensure_dir(path_in(opt, cfg.out_dir));
  write_file(path_in(opt, cfg.out_dir, "train_tuning_log.csv"), format_log_csv(log, data.o1));
  std::printf("tuning-blocks saved to %s (final loss %.6g)\n", path_in(opt, cfg.model_dir).c_str(),
              log.steps.back().total);
  return 0;
}

int cmd_train_fixed(const RunConfig& cfg, const Options& opt) {
  FeatureExtractor<Real> extractor;
  const auto data = load_task(cfg, opt, extractor);
  std::vector<SweepRecord> records;
  ensure_dir(path_in(opt, cfg.model_dir, "fixed"));
  for (double lambda : cfg.fixed_lambdas) {
    auto fixed = run_train_fixed(cfg, data, lambda);
    fixed.record.image_id = "fixed@" + format_number(lambda);
    save_weights(fixed.net.theta, path_in(opt, cfg.model_dir, "fixed/lambda_" + format_number(lambda) + ".dynw"));
    std::printf("lambda %s: content %.6g style %.6g\n", format_number(lambda).c_str(), fixed.record.content(),
                fixed.record.style());
    records.push_back(fixed.record);
  }
  ensure_dir(path_in(opt, cfg.out_dir));
  export_csv(records, path_in(opt, cfg.out_dir, "fixed.csv"));
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const Options& opt) {
  auto model = load_checked(cfg, opt);
  const auto data = load_task(cfg, opt, *model.net.extractor);
  const auto records = sweep_uniform(model.net, data.val, cfg.sweep_alphas, data.eval, cfg.threads);
  ensure_dir(path_in(opt, cfg.out_dir));
  export_csv(records, path_in(opt, cfg.out_dir, "sweep.csv"));

  std::vector<double> content, style;
  mean_table(records, cfg.sweep_alphas.size(), content, style);
  std::vector<double> ic, is;
  if (opt.interp) {
    if (cfg.task == Task::Regress1d) throw UsageError("--interp needs an image task");
    const auto interp = interp_baseline(model.net, data, cfg.sweep_alphas, data.eval);
    export_csv(interp, path_in(opt, cfg.out_dir, "interp.csv"));
    mean_table(interp, cfg.sweep_alphas.size(), ic, is);
    std::printf("%8s %14s %14s %14s %14s\n", "alpha", "dyn_content", "dyn_style", "interp_content", "interp_style");
  } else {
    std::printf("%8s %14s %14s\n", "alpha", "content", "style");
  }
  for (std::size_t i = 0; i < cfg.sweep_alphas.size(); ++i) {
    std::printf("%8.4g %14.6g %14.6g", cfg.sweep_alphas[i], content[i], style[i]);
    if (opt.interp) std::printf(" %14.6g %14.6g", ic[i], is[i]);
    std::printf("\n");
  }
  return 0;
}

int cmd_grid(const RunConfig& cfg, const Options& opt) {
  auto model = load_checked(cfg, opt);
  const auto data = load_task(cfg, opt, *model.net.extractor);
  GridSpec grid{std::vector<std::vector<double>>(model.net.blocks(), cfg.grid_values)};
  const auto records = grid_search(model.net, data.val, grid, data.eval, cfg.grid_cap, cfg.threads);
  const auto front = pareto_front(records);
  ensure_dir(path_in(opt, cfg.out_dir));
  export_csv(records, path_in(opt, cfg.out_dir, "grid.csv"));
  export_csv(front, path_in(opt, cfg.out_dir, "grid_front.csv"));
  std::printf("%zu grid points, %zu on the Pareto front\n", records.size(), front.size());
  return 0;
}

AlphaVector parse_alpha(const std::string& text, std::size_t blocks) {
  AlphaVector alpha;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError("--alpha: '" + item + "' is not a number");
    alpha.values.push_back(v);
  }
  if (alpha.values.size() == 1) alpha = AlphaVector::uniform(blocks, alpha.values[0]);
  alpha.validate(blocks);
  return alpha;
}

int cmd_infer(const RunConfig& cfg, const Options& opt) {
  auto model = load_checked(cfg, opt);
  if (cfg.task == Task::Regress1d) throw UsageError("infer needs an image task");
  const auto alpha = parse_alpha(opt.alpha, model.net.blocks());
  const auto data = load_task(cfg, opt, *model.net.extractor);
  if (!opt.image.empty() && !opt.input.empty()) throw UsageError("use either --image or --input");

  Sample<Real> sample;
  if (!opt.input.empty()) {
    auto img = load_ppm<Real>(join_path(opt.workdir, opt.input));
    sample = Sample<Real>{opt.input, img, data.val.front().context};
    sample.context.contents["input"] = make_content_target(*model.net.extractor, img);
  } else {
    const std::string id = opt.image.empty() ? data.val.front().id : opt.image;
    auto it = std::find_if(data.val.begin(), data.val.end(), [&](const auto& s) { return s.id == id; });
    if (it == data.val.end()) throw UsageError("unknown image id '" + id + "'");
    sample = *it;
  }
  const auto output = forward(model.net, sample.input, alpha);
  const auto scores = score_output(model.net, output, sample, data.eval.terms);
  const auto out = opt.output.empty() ? path_in(opt, cfg.out_dir, "infer.ppm") : join_path(opt.workdir, opt.output);
  if (opt.output.empty()) ensure_dir(path_in(opt, cfg.out_dir));
  save_ppm(output, out);
  std::printf("wrote %s content_loss %s style_loss %s\n", out.c_str(), format_number(scores.terms.at(0)).c_str(),
              format_number(scores.terms.at(1)).c_str());
  return 0;
}

template <class Scalar>
int report_grad_suite(std::size_t seeds) {
  const auto start = std::chrono::steady_clock::now();
  const auto result = run_grad_suite<Scalar>(seeds);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& c : result.cases) {
    std::printf("%-36s max_rel_error %.3e  %s\n", c.name.c_str(), c.max_rel_error,
                c.max_rel_error < result.tolerance ? "ok" : "FAIL");
  }
  std::printf("%zu cases x %zu seeds, tolerance %.0e, %.1f s: %s\n", result.cases.size(), seeds, result.tolerance,
              secs, result.passed() ? "PASS" : "FAIL");
  return result.passed() ? 0 : 2;
}

int cmd_gradcheck(const Options& opt) {
  return opt.grad_double ? report_grad_suite<double>(opt.grad_seeds) : report_grad_suite<Real>(opt.grad_seeds);
}

int cmd_serve(const RunConfig& cfg, const Options& opt) {
  const auto service = Service::from_workdir(cfg, opt.workdir);
  HttpServer server(service);
  const int port = server.start(opt.host, opt.port);
  std::printf("serving %zu images on http://%s:%d\n", service.data().val.size(), opt.host.c_str(), port);
  std::fflush(stdout);
  server.wait();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic-Net toolkit: train a main network and tuning-blocks, then explore the objective space"};
  app.fallthrough();
  app.require_subcommand(0, 1);
  Options opt;
  app.add_option("-c,--config", opt.config_path, "Config file (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("-s,--set", opt.overrides, "Override a config key: key=value (repeatable)");
  app.add_option("-w,--workdir", opt.workdir, "Directory that data/model/out paths are relative to");
  app.add_option("-t,--threads", opt.threads, "Worker threads for sweep/grid (overrides config)");
  app.add_flag("--print-config", opt.print_config, "Print the effective configuration and exit");

  auto* gen = app.add_subcommand("gen-data", "Generate content/style images or the 1D task");
  auto* tmain = app.add_subcommand("train-main", "Phase 1: train the main network on O0");
  auto* ttune = app.add_subcommand("train-tuning", "Phase 2: train tuning-blocks on O1 with the main network frozen");
  auto* tfixed = app.add_subcommand("train-fixed", "Train fixed baseline networks for each fixed_lambdas value");
  auto* sweep = app.add_subcommand("sweep", "Uniform-alpha sweep over the validation images");
  sweep->add_flag("--interp", opt.interp, "Also score the image-interpolation baseline");
  auto* grid = app.add_subcommand("grid", "Per-block alpha grid search and its Pareto front");
  auto* infer = app.add_subcommand("infer", "Run the network on one image at a given alpha");
  infer->add_option("-a,--alpha", opt.alpha, "One value for every block, or a comma-separated list");
  infer->add_option("-i,--image", opt.image, "Validation image id (default: first)");
  infer->add_option("--input", opt.input, "PPM input image instead of a validation image");
  infer->add_option("-o,--out", opt.output, "Output PPM path (default: <out_dir>/infer.ppm)");
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every op and loss");
  grad->add_option("--seeds", opt.grad_seeds, "Random inputs per case")->check(CLI::PositiveNumber);
  grad->add_flag("--double", opt.grad_double, "Check 64-bit gradients (tolerance 1e-6)");
  auto* serve = app.add_subcommand("serve", "Start the HTTP inference service");
  serve->add_option("--port", opt.port, "TCP port")->check(CLI::Range(0, 65535));
  serve->add_option("--host", opt.host, "Bind address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const RunConfig cfg = effective_config(opt);
    if (opt.print_config) {
      std::cout << dump_config(cfg);
      return 0;
    }
    if (*gen) return cmd_gen_data(cfg, opt);
    if (*tmain) return cmd_train_main(cfg, opt);
    if (*ttune) return cmd_train_tuning(cfg, opt);
    if (*tfixed) return cmd_train_fixed(cfg, opt);
    if (*sweep) return cmd_sweep(cfg, opt);
    if (*grid) return cmd_grid(cfg, opt);
    if (*infer) return cmd_infer(cfg, opt);
    if (*grad) return cmd_gradcheck(opt);
    if (*serve) return cmd_serve(cfg, opt);
    std::cerr << app.help();
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
