#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dynanet/data.hpp"
#include "dynanet/dynet.hpp"

namespace dynanet {

enum class Task { Stylize, TwoStyles, TwoScales, Regress1d, FailureCase };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

// Every knob of a pipeline run. Defaults are listed in docs/config.md and
// printed by `dynanet <cmd> --print-config`.
struct RunConfig {
  Task task = Task::Stylize;

  // Data
  Index image_size = 64;
  std::uint64_t data_seed = 1;
  std::size_t n_train = 32;
  std::size_t n_val = 8;
  TextureKind style_kind = TextureKind::Stripes;
  Index style_scale = 4;
  TextureKind style2_kind = TextureKind::Checker;
  // 0 means "twice style_scale" for two-scales and "style_scale" otherwise.
  Index style2_scale = 0;
  std::uint64_t style_seed = 7;
  RegressionKind regress_kind = RegressionKind::ConstantPair;
  Index regress_points = 64;

  // Objectives. Negative λ values mean "task default".
  double content_weight = 1.0;
  double lambda0 = -1.0;
  double lambda1 = -1.0;
  double lambda_ref = -1.0;

  // Training
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 4;
  std::size_t steps_main = 2000;
  std::size_t steps_tuning = 1000;

  // Evaluation
  std::vector<double> sweep_alphas{0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0};
  std::vector<double> grid_values{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t grid_cap = 10000;
  std::vector<double> fixed_lambdas{3.0, 10.0, 30.0};
  std::size_t threads = 1;

  // Paths, relative to the working directory
  std::string data_dir = "data";
  std::string model_dir = "model";
  std::string out_dir = "out";

  // Resolved task defaults.
  double effective_lambda0() const;
  double effective_lambda1() const;
  double effective_lambda_ref() const;
  Index effective_style2_scale() const;

  TrainConfig train_config(std::size_t steps) const;

  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

// Documented keys in dump order.
const std::vector<ConfigKey>& config_keys();

// Applies one `key = value` assignment; unknown keys and malformed values
// raise ConfigError.
void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// Parses a config document on top of `base`.
RunConfig parse_config(std::string_view text, RunConfig base = {});

// Canonical dump: every key in documented order, one per line. Parsing the
// dump yields the same configuration.
std::string dump_config(const RunConfig& cfg);

std::string read_config_value(const RunConfig& cfg, std::string_view key);

}  // namespace dynanet
